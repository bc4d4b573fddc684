use std::collections::BTreeMap;

use nalgebra::{DMatrix, Vector3};

use super::{forward_kinematics_with, FkLayout, JointConfig, Kinematics, KinematicsError};
use crate::scene::KinematicTree;
use crate::se3::{Pose, Twist};

/// Central-difference step on each joint coordinate.
pub const FD_STEP: f64 = 1e-6;

/// Finite-difference columns for several sites at once: rows `6k..6k+3`
/// hold site `k`'s world linear velocity, rows `6k+3..6k+6` its angular
/// velocity in the site's own frame.
pub(crate) fn stacked_jacobian(
    tree: &KinematicTree,
    layout: &FkLayout,
    q: &JointConfig,
    overrides: &BTreeMap<usize, Pose>,
    sites: &[usize],
    base: &Kinematics,
) -> Result<DMatrix<f64>, KinematicsError> {
    let n = layout.dof();
    let mut jac = DMatrix::zeros(6 * sites.len(), n);
    let mut work = q.clone();
    for col in 0..n {
        let orig = work.0[col];
        work.0[col] = orig + FD_STEP;
        let plus = forward_kinematics_with(tree, layout, &work, overrides)?;
        work.0[col] = orig - FD_STEP;
        let minus = forward_kinematics_with(tree, layout, &work, overrides)?;
        work.0[col] = orig;
        for (k, &s) in sites.iter().enumerate() {
            let here = &base.sites[s];
            let (p, m) = (&plus.sites[s], &minus.sites[s]);
            let lin = (p.position() - m.position()) / (2.0 * FD_STEP);
            let ang_p = Twist::between(here, p).angular;
            let ang_m = Twist::between(here, m).angular;
            let ang: Vector3<f64> = (ang_p - ang_m) / (2.0 * FD_STEP);
            jac.fixed_view_mut::<3, 1>(6 * k, col).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(6 * k + 3, col).copy_from(&ang);
        }
    }
    Ok(jac)
}

/// 6×n Jacobian of `site` by central differences on `q`.
pub fn site_jacobian(
    tree: &KinematicTree,
    q: &JointConfig,
    site: usize,
) -> Result<DMatrix<f64>, KinematicsError> {
    let layout = FkLayout::new(tree);
    let none = BTreeMap::new();
    let base = forward_kinematics_with(tree, &layout, q, &none)?;
    stacked_jacobian(tree, &layout, q, &none, &[site], &base)
}

/// 6×n Jacobian of a named site (rows: linear xyz, angular xyz).
pub fn jacobian(
    tree: &KinematicTree,
    q: &JointConfig,
    site: &str,
) -> Result<DMatrix<f64>, KinematicsError> {
    let idx = tree
        .site_index(site)
        .ok_or_else(|| KinematicsError::UnknownSite(site.to_string()))?;
    q.check(tree)?;
    site_jacobian(tree, q, idx)
}
