use std::collections::BTreeMap;

use thiserror::Error;

use super::protocol::{ClientMsg, ErrorCode, ServerMsg, StateMsg};
use crate::episode::{Episode, EpisodeMeta, Frame};
use crate::hitchhike::{Anchor, GestureParams, Hitchhiker};
use crate::kinematics::{
    retarget, HandFrame, IkOptions, IkSolver, JointConfig, Kinematics, RetargetMap, WeldTarget,
};
use crate::scene::KinematicTree;
use crate::se3::Pose;

pub const MIN_DECIMATION: u32 = 5;
pub const MAX_DECIMATION: u32 = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("decimation {0} outside [{MIN_DECIMATION}, {MAX_DECIMATION}]")]
    Decimation(u32),
    #[error("record rate {record} Hz must be positive and not exceed input rate {input} Hz")]
    Rates { input: f64, record: f64 },
    #[error("grasp radius must be non-negative and finite")]
    GraspRadius,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickConfig {
    pub input_rate_hz: f64,
    pub record_rate_hz: f64,
    /// IK iterations per tick.
    pub decimation: u32,
    pub grasp_radius: f64,
}

impl Default for TickConfig {
    fn default() -> Self {
        Self {
            input_rate_hz: 90.0,
            record_rate_hz: 25.0,
            decimation: 10,
            grasp_radius: 0.05,
        }
    }
}

impl TickConfig {
    pub fn new(
        input_rate_hz: f64,
        record_rate_hz: f64,
        decimation: u32,
        grasp_radius: f64,
    ) -> Result<Self, ConfigError> {
        if !(MIN_DECIMATION..=MAX_DECIMATION).contains(&decimation) {
            return Err(ConfigError::Decimation(decimation));
        }
        if !(record_rate_hz > 0.0 && record_rate_hz <= input_rate_hz && input_rate_hz.is_finite()) {
            return Err(ConfigError::Rates {
                input: input_rate_hz,
                record: record_rate_hz,
            });
        }
        if !(grasp_radius >= 0.0 && grasp_radius.is_finite()) {
            return Err(ConfigError::GraspRadius);
        }
        Ok(Self {
            input_rate_hz,
            record_rate_hz,
            decimation,
            grasp_radius,
        })
    }

    pub fn with_decimation(decimation: u32) -> Result<Self, ConfigError> {
        let d = Self::default();
        Self::new(d.input_rate_hz, d.record_rate_hz, decimation, d.grasp_radius)
    }

    pub fn tick_period(&self) -> f64 {
        1.0 / self.input_rate_hz
    }
}

/// Rigid weld of a free object to a site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub object: usize,
    pub site: usize,
    /// Object pose in the site frame, captured at engage time.
    pub local: Pose,
}

/// Everything that reset restores.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub q: JointConfig,
    /// World poses of free and mocap bodies.
    pub overrides: BTreeMap<usize, Pose>,
    pub targets: BTreeMap<String, WeldTarget>,
    pub anchor: Option<Anchor>,
    pub attachments: Vec<Attachment>,
}

struct Recording {
    episode: Episode,
    start_t: f64,
    next_t: f64,
}

pub struct Session {
    pub id: String,
    pub tree: KinematicTree,
    cfg: TickConfig,
    solver: IkSolver,
    ik: IkOptions,
    initial: SessionState,
    state: SessionState,
    hitch: Hitchhiker,
    retarget_map: Option<RetargetMap>,
    last_hand: Option<HandFrame>,
    recording: Option<Recording>,
    finished: Vec<Episode>,
    fk: Kinematics,
    scene_hash: String,
    model_hash: String,
    tick: u64,
    t: f64,
    wall_clock: bool,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        tree: KinematicTree,
        cfg: TickConfig,
        scene_hash: impl Into<String>,
        model_hash: impl Into<String>,
    ) -> Self {
        let solver = IkSolver::new(&tree);
        let q = JointConfig::zeros(&tree);
        let rest = solver
            .fk(&tree, &q)
            .expect("rest configuration matches the tree");
        let mut overrides = BTreeMap::new();
        for b in tree.free_bodies() {
            overrides.insert(b, rest.bodies[b]);
        }
        for m in &tree.mocap_bodies {
            overrides.insert(m.body, rest.bodies[m.body]);
        }
        let initial = SessionState {
            q,
            overrides,
            targets: BTreeMap::new(),
            anchor: None,
            attachments: Vec::new(),
        };
        let mut s = Self {
            id: id.into(),
            cfg,
            solver,
            ik: IkOptions {
                max_iters: cfg.decimation as usize,
                ..IkOptions::default()
            },
            state: initial.clone(),
            initial,
            hitch: Hitchhiker::new(GestureParams::default()),
            retarget_map: None,
            last_hand: None,
            recording: None,
            finished: Vec::new(),
            fk: rest,
            scene_hash: scene_hash.into(),
            model_hash: model_hash.into(),
            tick: 0,
            t: 0.0,
            wall_clock: false,
            tree,
        };
        s.refresh_fk();
        s
    }

    /// Drive the fingers of a hand model from hand frames while engaged on
    /// the map's wrist site.
    pub fn with_retarget(mut self, map: RetargetMap) -> Self {
        self.retarget_map = Some(map);
        self
    }

    /// Stamp recordings with the wall-clock creation time.
    pub fn with_wall_clock(mut self) -> Self {
        self.wall_clock = true;
        self
    }

    pub fn config(&self) -> &TickConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn initial_state(&self) -> &SessionState {
        &self.initial
    }

    pub fn kinematics(&self) -> &Kinematics {
        &self.fk
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn engaged(&self) -> bool {
        self.hitch.engaged()
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    pub fn hello(&self) -> ServerMsg {
        ServerMsg::Hello {
            model_hash: self.model_hash.clone(),
            rate_hz: self.cfg.record_rate_hz,
        }
    }

    /// Episodes completed since the last call.
    pub fn take_finished(&mut self) -> Vec<Episode> {
        std::mem::take(&mut self.finished)
    }

    /// Stop any active recording and return everything not yet taken.
    pub fn close(&mut self) -> Vec<Episode> {
        if let Some(r) = self.recording.take() {
            if !r.episode.is_empty() {
                self.finished.push(r.episode);
            }
        }
        self.take_finished()
    }

    fn refresh_fk(&mut self) {
        self.solver.set_overrides(self.state.overrides.clone());
        if let Ok(fk) = self.solver.fk(&self.tree, &self.state.q) {
            self.fk = fk;
        }
    }

    fn site_pose(&self, site: usize) -> Pose {
        self.fk.sites[site]
    }

    /// Apply one client message; returns the replies (errors only).
    pub fn handle_message(&mut self, msg: &ClientMsg) -> Vec<ServerMsg> {
        match msg {
            ClientMsg::HandFrame {
                wrist, tips, curl, ..
            } => {
                let hand = HandFrame {
                    wrist: *wrist,
                    fingertips: *tips,
                    curl: *curl,
                };
                if !hand.is_valid() {
                    return vec![ServerMsg::error(
                        ErrorCode::InvalidHandFrame,
                        "hand frame is not finite or curls leave [0, 1]",
                    )];
                }
                self.on_hand(&hand);
            }
            ClientMsg::SelectSite { site } => {
                let Some(idx) = self.tree.site_index(site) else {
                    return vec![ServerMsg::error(ErrorCode::UnknownSite, site.clone())];
                };
                let grip = self.site_pose(idx);
                let hand = self.last_hand.map(|h| h.wrist).unwrap_or_default();
                self.hitch
                    .select(&self.tree, site, hand, grip)
                    .expect("site exists");
                self.state.anchor = self.hitch.anchor.clone();
            }
            ClientMsg::Reset => self.reset(),
            ClientMsg::RecordStart => {
                if self.recording.is_some() {
                    return vec![ServerMsg::error(ErrorCode::AlreadyRecording, "")];
                }
                let mut meta = EpisodeMeta::new(self.scene_hash.clone(), self.model_hash.clone());
                meta.rate_hz = self.cfg.record_rate_hz;
                if self.wall_clock {
                    meta.created = std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .ok()
                        .map(|d| d.as_secs());
                }
                self.recording = Some(Recording {
                    episode: Episode::new(meta),
                    start_t: self.t,
                    next_t: self.t,
                });
            }
            ClientMsg::RecordStop => match self.recording.take() {
                Some(r) => {
                    if !r.episode.is_empty() {
                        self.finished.push(r.episode);
                    }
                }
                None => return vec![ServerMsg::error(ErrorCode::NotRecording, "")],
            },
        }
        Vec::new()
    }

    fn on_hand(&mut self, hand: &HandFrame) {
        self.last_hand = Some(*hand);
        let (before, now) = self.hitch.update_gesture(hand);
        if !before && now {
            // Clutch: motion counts from where the hand is when the grasp
            // closes, so re-engaging never makes the gripper jump.
            let anchor = self.hitch.anchor.as_mut().expect("engaged implies anchor");
            let site = self.tree.site_index(&anchor.site).expect("validated on select");
            anchor.hand0 = hand.wrist;
            anchor.grip0 = self.fk.sites[site];
            self.attach(site);
        } else if before && !now {
            let site = self
                .hitch
                .anchor
                .as_ref()
                .and_then(|a| self.tree.site_index(&a.site));
            self.state.attachments.retain(|a| Some(a.site) != site);
        }
        if let Some((site, target)) = self.hitch.target(&hand.wrist) {
            let site = site.to_string();
            if let Some(map) = &self.retarget_map {
                if map.wrist_site() == Some(site.as_str()) {
                    for w in retarget(hand, map, &target) {
                        self.state.targets.insert(w.site.clone(), w);
                    }
                }
            }
            let (pw, rw) = self
                .state
                .targets
                .get(&site)
                .map(|w| (w.pos_weight, w.rot_weight))
                .unwrap_or((1.0, 1.0));
            self.state
                .targets
                .insert(site.clone(), WeldTarget::new(site, target, pw, rw));
        }
        self.state.anchor = self.hitch.anchor.clone();
    }

    /// Weld the nearest unattached free object within the grasp radius.
    fn attach(&mut self, site: usize) {
        let sp = self.site_pose(site);
        let taken: Vec<usize> = self.state.attachments.iter().map(|a| a.object).collect();
        let nearest = self
            .tree
            .free_bodies()
            .into_iter()
            .filter(|b| !taken.contains(b) && Some(*b) != self.tree.sites[site].body)
            .map(|b| (b, (self.fk.bodies[b].position() - sp.position()).norm()))
            .filter(|(_, d)| *d <= self.cfg.grasp_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((object, _)) = nearest {
            self.state.attachments.push(Attachment {
                object,
                site,
                local: sp.inverse().compose(&self.fk.bodies[object]),
            });
        }
    }

    /// Restore the freshly loaded state. Recording and time are untouched.
    pub fn reset(&mut self) {
        self.state = self.initial.clone();
        self.hitch.clear();
        self.last_hand = None;
        self.refresh_fk();
    }

    /// Advance one tick: move mocap bodies onto their targets, run
    /// `decimation` IK iterations for the remaining targets, carry welded
    /// objects, record when due, and report the state.
    pub fn tick(&mut self) -> Vec<ServerMsg> {
        self.tick += 1;
        self.t = self.tick as f64 * self.cfg.tick_period();
        let mut out = Vec::new();

        let mut ik_targets = Vec::new();
        for w in self.state.targets.values() {
            let Some(si) = self.tree.site_index(&w.site) else { continue };
            let site = &self.tree.sites[si];
            match site.body {
                Some(b) if self.tree.is_mocap(b) => {
                    self.state
                        .overrides
                        .insert(b, w.target.compose(&site.local.inverse()));
                }
                Some(_) => ik_targets.push(w.clone()),
                None => {}
            }
        }
        self.solver.set_overrides(self.state.overrides.clone());
        if !ik_targets.is_empty() && !self.state.q.is_empty() {
            if let Ok(sol) = self.solver.solve(&self.tree, &self.state.q, &ik_targets, &self.ik) {
                self.state.q = sol.q;
            }
        }
        self.refresh_fk();
        if !self.state.attachments.is_empty() {
            for a in &self.state.attachments {
                let p = self.fk.sites[a.site].compose(&a.local);
                self.state.overrides.insert(a.object, p);
            }
            self.refresh_fk();
        }

        let finite = self.state.q.is_finite()
            && self.fk.bodies.iter().all(Pose::is_finite)
            && self.fk.sites.iter().all(Pose::is_finite);
        if !finite {
            self.reset();
            out.push(ServerMsg::error(
                ErrorCode::NonFiniteState,
                format!("state became non-finite at tick {}; reset", self.tick),
            ));
        }

        self.record();
        out.push(ServerMsg::State(self.state_msg()));
        out
    }

    fn record(&mut self) {
        let due = matches!(&self.recording, Some(r) if self.t >= r.next_t - 1e-9);
        if !due {
            return;
        }
        let frame = self.frame();
        let r = self.recording.as_mut().expect("checked");
        let mut frame = frame;
        frame.t = self.t - r.start_t;
        // Pacing is guaranteed by construction; a failure here is a bug.
        r.episode
            .append_frame(frame)
            .expect("recorded frames satisfy episode invariants");
        r.next_t += 1.0 / self.cfg.record_rate_hz;
    }

    /// Observation and action at the current instant.
    pub fn frame(&self) -> Frame {
        let mut f = Frame::new(self.t);
        for (s, p) in self.tree.sites.iter().zip(&self.fk.sites) {
            f.mocap.insert(s.name.clone(), *p);
            let action = self.state.targets.get(&s.name).map_or(*p, |w| w.target);
            f.action.insert(s.name.clone(), action);
        }
        for b in self.tree.free_bodies() {
            f.mocap.insert(self.tree.bodies[b].name.clone(), self.fk.bodies[b]);
        }
        f.q = self.state.q.clone();
        f.attachments = self
            .state
            .attachments
            .iter()
            .map(|a| {
                (
                    self.tree.bodies[a.object].name.clone(),
                    self.tree.sites[a.site].name.clone(),
                )
            })
            .collect();
        f
    }

    pub fn state_msg(&self) -> StateMsg {
        StateMsg {
            tick: self.tick,
            t: self.t,
            q: self.state.q.0.clone(),
            bodies: self
                .tree
                .bodies
                .iter()
                .zip(&self.fk.bodies)
                .map(|(b, p)| (b.name.clone(), *p))
                .collect(),
            sites: self
                .tree
                .sites
                .iter()
                .zip(&self.fk.sites)
                .map(|(s, p)| (s.name.clone(), *p))
                .collect(),
            engaged: self.hitch.engaged(),
            recording: self.recording.is_some(),
        }
    }

    /// Run ticks until the next tick would pass `t`.
    pub fn advance_to(&mut self, t: f64) -> Vec<ServerMsg> {
        let mut out = Vec::new();
        while (self.tick + 1) as f64 * self.cfg.tick_period() <= t + 1e-12 {
            out.extend(self.tick());
        }
        out
    }
}
