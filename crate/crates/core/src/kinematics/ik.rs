use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::jacobian::stacked_jacobian;
use super::{forward_kinematics_with, FkLayout, JointConfig, Kinematics, KinematicsError};
use crate::scene::KinematicTree;
use crate::se3::{Pose, Twist};

/// Pin a site's world pose to a target, with separate weights on the
/// position (m) and rotation (rad) error.
#[derive(Debug, Clone, PartialEq)]
pub struct WeldTarget {
    pub site: String,
    pub target: Pose,
    pub pos_weight: f64,
    pub rot_weight: f64,
}

impl WeldTarget {
    pub fn new(site: impl Into<String>, target: Pose, pos_weight: f64, rot_weight: f64) -> Self {
        Self {
            site: site.into(),
            target,
            pos_weight,
            rot_weight,
        }
    }

    /// Position-only weld.
    pub fn position(site: impl Into<String>, target: Pose) -> Self {
        Self::new(site, target, 1.0, 0.0)
    }

    fn check(&self) -> Result<(), KinematicsError> {
        let ok = self.pos_weight >= 0.0
            && self.rot_weight >= 0.0
            && self.pos_weight + self.rot_weight > 0.0
            && self.pos_weight.is_finite()
            && self.rot_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(KinematicsError::InvalidWeights(self.site.clone()))
        }
    }
}

/// Floor of the adaptive damping relative to [`IkOptions::damping`].
pub const MIN_DAMPING_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    /// Initial DLS damping λ. Adapts per iteration: halved after an
    /// accepted step (down to `damping · MIN_DAMPING_RATIO`), doubled on
    /// each rejected one.
    pub damping: f64,
    pub max_iters: usize,
    /// Convergence threshold on the weighted residual norm.
    pub tol: f64,
    /// Largest per-joint change in one iteration (rad or m).
    pub step_clamp: f64,
    /// Step halvings tried before an iteration is declared stalled.
    pub max_halvings: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iters: 200,
            tol: 1e-4,
            step_clamp: 0.2,
            max_halvings: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub residual: f64,
    pub iters: usize,
}

/// Reusable solver bound to one tree; holds the FK layout and the world
/// poses of externally driven bodies.
#[derive(Debug, Clone)]
pub struct IkSolver {
    layout: FkLayout,
    overrides: BTreeMap<usize, Pose>,
}

struct Resolved {
    sites: Vec<usize>,
    weights: Vec<(f64, f64)>,
}

impl IkSolver {
    pub fn new(tree: &KinematicTree) -> Self {
        Self {
            layout: FkLayout::new(tree),
            overrides: BTreeMap::new(),
        }
    }

    pub fn set_overrides(&mut self, overrides: BTreeMap<usize, Pose>) {
        self.overrides = overrides;
    }

    pub fn layout(&self) -> &FkLayout {
        &self.layout
    }

    pub fn fk(&self, tree: &KinematicTree, q: &JointConfig) -> Result<Kinematics, KinematicsError> {
        forward_kinematics_with(tree, &self.layout, q, &self.overrides)
    }

    fn error(&self, fk: &Kinematics, targets: &[WeldTarget], r: &Resolved) -> DVector<f64> {
        let mut e = DVector::zeros(6 * targets.len());
        for (k, t) in targets.iter().enumerate() {
            let tw = Twist::between(&fk.sites[r.sites[k]], &t.target);
            let (wp, wr) = r.weights[k];
            e.fixed_view_mut::<3, 1>(6 * k, 0).copy_from(&(tw.linear * wp));
            e.fixed_view_mut::<3, 1>(6 * k + 3, 0)
                .copy_from(&(tw.angular * wr));
        }
        e
    }

    /// Damped least squares: `Δq = Jᵀ(JJᵀ + λ²I)⁻¹ e`, each component clamped
    /// to `step_clamp`, halved while the residual would grow, and joints
    /// clamped to their ranges.
    pub fn solve(
        &self,
        tree: &KinematicTree,
        q0: &JointConfig,
        targets: &[WeldTarget],
        opts: &IkOptions,
    ) -> Result<IkSolution, KinematicsError> {
        if targets.is_empty() {
            return Err(KinematicsError::NoTargets);
        }
        q0.check(tree)?;
        let mut resolved = Resolved {
            sites: Vec::with_capacity(targets.len()),
            weights: Vec::with_capacity(targets.len()),
        };
        for t in targets {
            t.check()?;
            let s = tree
                .site_index(&t.site)
                .ok_or_else(|| KinematicsError::UnknownSite(t.site.clone()))?;
            resolved.sites.push(s);
            resolved.weights.push((t.pos_weight, t.rot_weight));
        }

        let mut q = q0.clone();
        q.clamp_to(tree);
        let mut fk = self.fk(tree, &q)?;
        let mut e = self.error(&fk, targets, &resolved);
        let mut residual = e.norm();
        if !residual.is_finite() {
            return Err(KinematicsError::NonFiniteResidual);
        }
        if residual <= opts.tol {
            return Ok(IkSolution { q, residual, iters: 0 });
        }

        let n = q.len();
        let m = e.len();
        let mut lambda = opts.damping;
        for iter in 1..=opts.max_iters {
            let mut jac = stacked_jacobian(tree, &self.layout, &q, &self.overrides, &resolved.sites, &fk)?;
            for (k, &(wp, wr)) in resolved.weights.iter().enumerate() {
                jac.rows_mut(6 * k, 3).scale_mut(wp);
                jac.rows_mut(6 * k + 3, 3).scale_mut(wr);
            }

            // Each rejected attempt halves the step and doubles the damping,
            // which bends the step toward the gradient direction.
            let mut accepted = false;
            let mut alpha = 1.0;
            let mut damping = lambda;
            for _ in 0..=opts.max_halvings {
                let Some(mut dq) = dls_step(&jac, &e, damping * damping, m, n) else {
                    return Err(KinematicsError::NonFiniteResidual);
                };
                let largest = dq.amax();
                if !largest.is_finite() {
                    return Err(KinematicsError::NonFiniteResidual);
                }
                if largest > opts.step_clamp {
                    dq *= opts.step_clamp / largest;
                }
                let mut candidate = JointConfig(
                    q.0.iter().zip(dq.iter()).map(|(a, d)| a + alpha * d).collect(),
                );
                candidate.clamp_to(tree);
                let cand_fk = self.fk(tree, &candidate)?;
                let cand_e = self.error(&cand_fk, targets, &resolved);
                let cand_r = cand_e.norm();
                if !cand_r.is_finite() {
                    return Err(KinematicsError::NonFiniteResidual);
                }
                if cand_r < residual {
                    accepted = true;
                    q = candidate;
                    fk = cand_fk;
                    e = cand_e;
                    residual = cand_r;
                    break;
                }
                alpha *= 0.5;
                damping *= 2.0;
            }
            lambda = if accepted {
                (damping * 0.5).max(opts.damping * MIN_DAMPING_RATIO)
            } else {
                damping
            };
            if residual <= opts.tol {
                return Ok(IkSolution { q, residual, iters: iter });
            }
            if !accepted {
                break;
            }
        }
        Ok(IkSolution {
            q,
            residual,
            iters: opts.max_iters,
        })
    }
}

fn dls_step(
    jac: &DMatrix<f64>,
    e: &DVector<f64>,
    lambda2: f64,
    m: usize,
    n: usize,
) -> Option<DVector<f64>> {
    // Both forms are algebraically identical; factor the smaller system.
    if m <= n {
        let mut a = jac * jac.transpose();
        for i in 0..m {
            a[(i, i)] += lambda2;
        }
        let y = match a.clone().cholesky() {
            Some(c) => c.solve(e),
            None => a.lu().solve(e)?,
        };
        Some(jac.transpose() * y)
    } else {
        let mut a = jac.transpose() * jac;
        for i in 0..n {
            a[(i, i)] += lambda2;
        }
        let rhs = jac.transpose() * e;
        match a.clone().cholesky() {
            Some(c) => Some(c.solve(&rhs)),
            None => a.lu().solve(&rhs),
        }
    }
}

/// One-shot solve with a fresh [`IkSolver`].
pub fn solve_ik(
    tree: &KinematicTree,
    q0: &JointConfig,
    targets: &[WeldTarget],
    opts: &IkOptions,
) -> Result<IkSolution, KinematicsError> {
    IkSolver::new(tree).solve(tree, q0, targets, opts)
}
