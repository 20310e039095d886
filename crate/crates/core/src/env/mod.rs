//! The navigation MDP.
//!
//! The agent views one tile-sized window of one selected pyramid level.
//! Every step re-measures overlap between the viewport's base rectangle
//! and the annotation polygons; success is detected automatically once the
//! agent sits on the finest selected level with overlap at or above the
//! configured threshold.

mod action;
mod config;
mod returns;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use action::{Action, ActionSpace, DiscreteAction, ObservationSpace};
pub use config::{ActionMode, Complexity, EnvConfig, ObservationMode, RewardMode};
pub use returns::EpisodeReturn;

use crate::annotations::AnnotationSet;
use crate::error::{Error, Result};
use crate::featurepack::{FeatureLookup, FeaturePack};
use crate::geometry::{
    check_overlap, reparent, tile_containing, viewport_to_base, AgentPos, BaseRect, OverlapReport,
    ZoomDirection,
};
use crate::pyramid::{PyramidGeometry, RgbTile, TileAddress, VirtualSlide};

pub const STATE_VERSION: u32 = 1;

/// `K` raw levels spread evenly (rounded half up) from the coarsest usable level to the finest.
pub fn select_levels(geom: &PyramidGeometry, k: u32) -> Result<Vec<u32>> {
    let coarsest = geom.coarsest_usable_level();
    let finest = geom.finest_level();
    let usable = finest - coarsest + 1;
    if k == 0 || k > usable {
        return Err(Error::config(format!(
            "{k} navigable levels requested but the slide has {usable} usable levels"
        )));
    }
    if k == 1 {
        return Ok(vec![finest]);
    }
    let span = (finest - coarsest) as u64;
    let steps = (k - 1) as u64;
    Ok((0..k as u64)
        .map(|i| coarsest + ((2 * i * span + steps) / (2 * steps)) as u32)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Pixels(RgbTile),
    Features(FeatureLookup),
}

impl Observation {
    /// Values fed to a learner: bytes divided by 255, or the raw embedding.
    pub fn normalized(&self) -> Vec<f32> {
        match self {
            Observation::Pixels(t) => t.bytes().iter().map(|&b| b as f32 / 255.0).collect(),
            Observation::Features(f) => f.vector.clone(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Observation::Pixels(t) => vec![t.size() as usize, t.size() as usize, 3],
            Observation::Features(f) => vec![f.vector.len()],
        }
    }

    pub fn missing_feature(&self) -> bool {
        matches!(self, Observation::Features(f) if f.missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub agent_pos: AgentPos,
    pub if_overlap: bool,
    pub overlap_seg_index: Option<usize>,
    pub overlap_ratio: f64,
    pub bumped: bool,
    pub missing_feature: bool,
    pub count: u32,
    pub level: u32,
    pub base_rect: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Serializable episode bookkeeping; restoring it resumes the episode exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub version: u32,
    pub agent_pos: AgentPos,
    /// Viewport top-left in pixels of the current level (tile-aligned in discrete mode).
    pub origin: [i64; 2],
    pub count: u32,
    pub done: bool,
    pub truncated: bool,
    pub last_report: OverlapReport,
    pub selected_levels: Vec<u32>,
    pub rng: ChaCha8Rng,
}

impl EnvState {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: EnvState =
            serde_json::from_str(text).map_err(|e| Error::format(format!("EnvState JSON: {e}")))?;
        if state.version != STATE_VERSION {
            return Err(Error::format(format!("unsupported EnvState version {}", state.version)));
        }
        Ok(state)
    }
}

#[derive(Debug)]
pub struct Env {
    slide: Arc<VirtualSlide>,
    annotations: Arc<AnnotationSet>,
    pack: Option<Arc<FeaturePack>>,
    config: EnvConfig,
    selected_levels: Vec<u32>,
    state: EnvState,
}

/// Build an environment; in feature mode the pack is loaded from `config.feature_pack`.
pub fn make_env(
    slide: Arc<VirtualSlide>,
    annotations: Arc<AnnotationSet>,
    config: EnvConfig,
) -> Result<Env> {
    let pack = match (config.observation_mode, &config.feature_pack) {
        (ObservationMode::Features, Some(path)) => Some(Arc::new(FeaturePack::open(path)?)),
        (ObservationMode::Features, None) => {
            return Err(Error::config("features observation mode needs a feature_pack"))
        }
        (ObservationMode::Pixels, _) => None,
    };
    Env::new(slide, annotations, pack, config)
}

impl Env {
    pub fn new(
        slide: Arc<VirtualSlide>,
        annotations: Arc<AnnotationSet>,
        pack: Option<Arc<FeaturePack>>,
        config: EnvConfig,
    ) -> Result<Self> {
        config.validate()?;
        let geom = *slide.geometry();
        if config.tile_size != geom.tile_size {
            return Err(Error::config(format!(
                "config tile_size {} differs from slide tile size {}",
                config.tile_size, geom.tile_size
            )));
        }
        let selected_levels = select_levels(&geom, config.complexity.levels())?;
        let pack = match config.observation_mode {
            ObservationMode::Pixels => None,
            ObservationMode::Features => {
                let pack = pack.ok_or_else(|| Error::config("features observation mode needs a feature pack"))?;
                let hash = slide.identity_hash()?;
                if pack.manifest().slide_hash != hash {
                    return Err(Error::config(format!(
                        "feature pack was built for slide {} but this slide is {hash}",
                        pack.manifest().slide_hash
                    )));
                }
                Some(pack)
            }
        };
        let bounds = BaseRect::full(&geom);
        for (i, p) in annotations.polygons.iter().enumerate() {
            if bounds.intersect(&p.bbox()).is_none() {
                log::warn!("annotation {i} ('{}') lies outside the slide", p.label);
            }
        }
        let state = EnvState {
            version: STATE_VERSION,
            agent_pos: AgentPos::new(0, 0, 0),
            origin: [0, 0],
            count: 0,
            done: false,
            truncated: false,
            last_report: OverlapReport::NONE,
            selected_levels: selected_levels.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let mut env = Self {
            slide,
            annotations,
            pack,
            config,
            selected_levels,
            state,
        };
        env.state.last_report = env.measure()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn slide(&self) -> &Arc<VirtualSlide> {
        &self.slide
    }

    pub fn annotations(&self) -> &Arc<AnnotationSet> {
        &self.annotations
    }

    pub fn geometry(&self) -> &PyramidGeometry {
        self.slide.geometry()
    }

    pub fn selected_levels(&self) -> &[u32] {
        &self.selected_levels
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn agent_pos(&self) -> AgentPos {
        self.state.agent_pos
    }

    pub fn is_over(&self) -> bool {
        self.state.done || self.state.truncated
    }

    pub fn action_space(&self) -> ActionSpace {
        match self.config.action_mode {
            ActionMode::Discrete => ActionSpace::Discrete {
                n: DiscreteAction::COUNT,
            },
            ActionMode::Continuous => ActionSpace::Box {
                shape: vec![3],
                low: -1.0,
                high: 1.0,
            },
        }
    }

    pub fn observation_space(&self) -> ObservationSpace {
        match &self.pack {
            None => {
                let t = self.geometry().tile_size as usize;
                ObservationSpace {
                    shape: vec![t, t, 3],
                    low: Some(0.0),
                    high: Some(1.0),
                    dtype: "float32".into(),
                }
            }
            Some(pack) => ObservationSpace {
                shape: vec![pack.dim()],
                low: None,
                high: None,
                dtype: "float32".into(),
            },
        }
    }

    fn level(&self) -> u32 {
        self.selected_levels[self.state.agent_pos.z as usize]
    }

    /// Base rectangle of the current viewport.
    pub fn viewport(&self) -> BaseRect {
        let geom = self.geometry();
        match self.config.action_mode {
            ActionMode::Discrete => viewport_to_base(geom, &self.selected_levels, self.state.agent_pos)
                .expect("state invariant: position in bounds"),
            ActionMode::Continuous => {
                let s = geom.scale(self.level()) as f64;
                let t = geom.tile_size as f64;
                let [ox, oy] = self.state.origin;
                BaseRect::new(ox as f64 * s, oy as f64 * s, (ox as f64 + t) * s, (oy as f64 + t) * s)
                    .intersect(&BaseRect::full(geom))
                    .expect("state invariant: viewport overlaps slide")
            }
        }
    }

    fn measure(&self) -> Result<OverlapReport> {
        Ok(check_overlap(&self.viewport(), &self.annotations, self.config.normalize))
    }

    fn observe(&self) -> Result<Observation> {
        let level = self.level();
        let pos = self.state.agent_pos;
        if let Some(pack) = &self.pack {
            return Ok(Observation::Features(pack.lookup(TileAddress::new(level, pos.x, pos.y))));
        }
        let t = self.geometry().tile_size;
        match self.config.action_mode {
            ActionMode::Discrete => Ok(Observation::Pixels(
                self.slide.read_tile(TileAddress::new(level, pos.x, pos.y))?,
            )),
            ActionMode::Continuous => {
                let [ox, oy] = self.state.origin;
                let window = self.slide.read_window(level, ox, oy, t, t)?;
                Ok(Observation::Pixels(RgbTile::from_bytes(t, window)))
            }
        }
    }

    fn info(&self, bumped: bool, observation: &Observation) -> StepInfo {
        let r = &self.state.last_report;
        StepInfo {
            agent_pos: self.state.agent_pos,
            if_overlap: r.if_overlap,
            overlap_seg_index: r.overlap_seg_index,
            overlap_ratio: r.overlap_ratio,
            bumped,
            missing_feature: observation.missing_feature(),
            count: self.state.count,
            level: self.level(),
            base_rect: self.viewport().as_array(),
        }
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<(Observation, StepInfo)> {
        if let Some(seed) = seed {
            self.state.rng = ChaCha8Rng::seed_from_u64(seed);
        }
        let (x, y) = if self.config.random_start {
            let (cols, rows) = self.geometry().level_tiles(self.selected_levels[0]);
            (self.state.rng.random_range(0..cols), self.state.rng.random_range(0..rows))
        } else {
            (0, 0)
        };
        let t = self.geometry().tile_size as i64;
        self.state.agent_pos = AgentPos::new(0, x, y);
        self.state.origin = [x as i64 * t, y as i64 * t];
        self.state.count = 0;
        self.state.done = false;
        self.state.truncated = false;
        self.state.last_report = self.measure()?;
        let obs = self.observe()?;
        let info = self.info(false, &obs);
        Ok((obs, info))
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.is_over() {
            return Err(Error::EpisodeOver);
        }
        let bumped = match (self.config.action_mode, action) {
            (ActionMode::Discrete, Action::Discrete(a)) => self.apply_discrete(a),
            (ActionMode::Continuous, Action::Continuous(c)) => self.apply_continuous(c)?,
            (ActionMode::Continuous, Action::Discrete(a)) => {
                self.apply_continuous(Action::Discrete(a).to_continuous())?
            }
            (ActionMode::Discrete, Action::Continuous(_)) => {
                return Err(Error::IllegalAction(
                    "continuous action sent to a discrete environment".into(),
                ))
            }
        };
        self.state.count += 1;
        let report = self.measure()?;
        self.state.last_report = report;

        let cfg = &self.config;
        let mut reward = match cfg.reward_mode {
            RewardMode::Dense => report.overlap_ratio - cfg.step_penalty,
            RewardMode::Sparse => -cfg.step_penalty,
        };
        let at_finest = self.state.agent_pos.z as usize == self.selected_levels.len() - 1;
        if at_finest && report.overlap_ratio >= cfg.success_threshold {
            self.state.done = true;
            reward += cfg.success_bonus;
        }
        self.state.truncated = !self.state.done && self.state.count >= cfg.max_step;

        let observation = self.observe()?;
        let info = self.info(bumped, &observation);
        Ok(StepResult {
            observation,
            reward,
            done: self.state.done,
            truncated: self.state.truncated,
            info,
        })
    }

    /// Returns whether the move was clamped.
    fn apply_discrete(&mut self, action: DiscreteAction) -> bool {
        let geom = *self.geometry();
        let pos = self.state.agent_pos;
        let (cols, rows) = geom.level_tiles(self.level());
        let next = match action {
            DiscreteAction::Up => pos.y.checked_sub(1).map(|y| AgentPos { y, ..pos }),
            DiscreteAction::Down => (pos.y + 1 < rows).then(|| AgentPos { y: pos.y + 1, ..pos }),
            DiscreteAction::Left => pos.x.checked_sub(1).map(|x| AgentPos { x, ..pos }),
            DiscreteAction::Right => (pos.x + 1 < cols).then(|| AgentPos { x: pos.x + 1, ..pos }),
            DiscreteAction::ZoomIn => reparent(&geom, &self.selected_levels, pos, ZoomDirection::In).ok(),
            DiscreteAction::ZoomOut => reparent(&geom, &self.selected_levels, pos, ZoomDirection::Out).ok(),
            DiscreteAction::Stay => Some(pos),
        };
        let t = geom.tile_size as i64;
        match next {
            Some(p) => {
                self.state.agent_pos = p;
                self.state.origin = [p.x as i64 * t, p.y as i64 * t];
                false
            }
            None => true,
        }
    }

    fn apply_continuous(&mut self, raw: [f64; 3]) -> Result<bool> {
        if raw.iter().any(|c| !c.is_finite()) {
            return Err(Error::IllegalAction(format!("non-finite continuous action {raw:?}")));
        }
        let [dx, dy, dz] = raw.map(|c| c.clamp(-1.0, 1.0));
        let geom = *self.geometry();
        let t = geom.tile_size as i64;
        let gain = self.config.pan_gain * geom.tile_size as f64;
        let shift = [(dx * gain).round() as i64, (dy * gain).round() as i64];
        let (lw, lh) = geom.level_dimensions(self.level());
        let limit = [(lw as i64 - t).max(0), (lh as i64 - t).max(0)];
        let mut bumped = false;
        for axis in 0..2 {
            let wanted = self.state.origin[axis] + shift[axis];
            let clamped = wanted.clamp(0, limit[axis]);
            bumped |= clamped != wanted;
            self.state.origin[axis] = clamped;
        }
        let z = self.state.agent_pos.z as usize;
        let target = if dz > 0.5 {
            Some(z + 1).filter(|&z| z < self.selected_levels.len())
        } else if dz < -0.5 {
            z.checked_sub(1)
        } else {
            Some(z)
        };
        match target {
            None => bumped = true,
            Some(nz) if nz != z => {
                // re-snap onto the tile grid of the new level
                let center = self.viewport().center();
                let (x, y) = tile_containing(&geom, self.selected_levels[nz], center);
                self.state.agent_pos = AgentPos::new(nz as u32, x, y);
                self.state.origin = [x as i64 * t, y as i64 * t];
                return Ok(bumped);
            }
            Some(_) => {}
        }
        let center = self.viewport().center();
        let (x, y) = tile_containing(&geom, self.level(), center);
        self.state.agent_pos = AgentPos::new(z as u32, x, y);
        Ok(bumped)
    }

    pub fn snapshot(&self) -> EnvState {
        self.state.clone()
    }

    /// Resume from a snapshot taken on an environment with the same slide and config.
    pub fn restore(&mut self, state: EnvState) -> Result<()> {
        if state.selected_levels != self.selected_levels {
            return Err(Error::config("snapshot was taken with different selected levels"));
        }
        if state.version != STATE_VERSION {
            return Err(Error::config(format!("unsupported EnvState version {}", state.version)));
        }
        let pos = state.agent_pos;
        let level = *self
            .selected_levels
            .get(pos.z as usize)
            .ok_or_else(|| Error::config("snapshot z outside selected levels"))?;
        let (cols, rows) = self.geometry().level_tiles(level);
        if pos.x >= cols || pos.y >= rows || state.count > self.config.max_step {
            return Err(Error::config("snapshot violates state invariants"));
        }
        self.state = state;
        Ok(())
    }

    /// Observation and info for the current state without stepping.
    pub fn current(&self) -> Result<(Observation, StepInfo)> {
        let obs = self.observe()?;
        let info = self.info(false, &obs);
        Ok((obs, info))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn easy_env(reward_mode: RewardMode) -> Env {
        let (slide, ann) = VirtualSlide::generate_synthetic(42, 4096, 128, 1).unwrap();
        let config = EnvConfig {
            reward_mode,
            ..EnvConfig::default()
        };
        Env::new(Arc::new(slide), Arc::new(ann), None, config).unwrap()
    }

    #[test]
    fn level_selection() {
        let g = PyramidGeometry::new(1024, 1024, 128).unwrap();
        assert_eq!(g.level_count, 11);
        assert_eq!(select_levels(&g, 3).unwrap(), vec![7, 9, 10]);
        let g = PyramidGeometry::new(4096, 4096, 128).unwrap();
        assert_eq!(select_levels(&g, 3).unwrap(), vec![7, 10, 12]);
        assert_eq!(select_levels(&g, 5).unwrap(), vec![7, 8, 10, 11, 12]);
        assert_eq!(select_levels(&g, 6).unwrap(), vec![7, 8, 9, 10, 11, 12]);
        assert_eq!(select_levels(&g, 1).unwrap(), vec![12]);
        assert!(matches!(select_levels(&g, 7), Err(Error::Config(_))));
        let g = PyramidGeometry::new(8192, 8192, 128).unwrap();
        assert_eq!(select_levels(&g, 7).unwrap(), (7..=13).collect::<Vec<_>>());
    }

    #[test]
    fn reset_and_bump() {
        let mut env = easy_env(RewardMode::Dense);
        let (_, info) = env.reset(None).unwrap();
        assert_eq!(info.agent_pos, AgentPos::new(0, 0, 0));
        let r = env.step(DiscreteAction::Right.into()).unwrap();
        assert!(r.info.bumped);
        assert_eq!(r.info.agent_pos, AgentPos::new(0, 0, 0));
        assert_eq!(r.reward, r.info.overlap_ratio - 0.01);

        let mut env = easy_env(RewardMode::Sparse);
        env.reset(None).unwrap();
        let r = env.step(DiscreteAction::Right.into()).unwrap();
        assert!(r.info.bumped);
        assert_eq!(r.reward, -0.01);
    }

    #[test]
    fn zoom_out_at_top_bumps() {
        let mut env = easy_env(RewardMode::Dense);
        let r = env.step(DiscreteAction::ZoomOut.into()).unwrap();
        assert!(r.info.bumped);
        let r = env.step(DiscreteAction::ZoomIn.into()).unwrap();
        assert!(!r.info.bumped);
        assert_eq!(r.info.agent_pos, AgentPos::new(1, 4, 4));
    }

    #[test]
    fn truncation_then_episode_over() {
        let mut env = easy_env(RewardMode::Sparse);
        let mut ret = EpisodeReturn::new();
        for i in 1..=100 {
            let r = env.step(DiscreteAction::Stay.into()).unwrap();
            ret.add(r.reward);
            assert_eq!(r.truncated, i == 100);
            assert!(!r.done);
        }
        assert_eq!(ret.total(), -1.0);
        assert!(matches!(env.step(DiscreteAction::Stay.into()), Err(Error::EpisodeOver)));
        env.reset(None).unwrap();
        assert_eq!(env.state().count, 0);
        assert!(!env.is_over());
    }

    #[test]
    fn continuous_rejects_nan_and_discrete_rejects_box() {
        let mut env = easy_env(RewardMode::Dense);
        assert!(matches!(
            env.step(Action::Continuous([0.0, 0.0, 0.0])),
            Err(Error::IllegalAction(_))
        ));
        let (slide, ann) = VirtualSlide::generate_synthetic(42, 4096, 128, 1).unwrap();
        let config = EnvConfig {
            action_mode: ActionMode::Continuous,
            ..EnvConfig::default()
        };
        let mut env = Env::new(Arc::new(slide), Arc::new(ann), None, config).unwrap();
        assert!(matches!(
            env.step(Action::Continuous([f64::NAN, 0.0, 0.0])),
            Err(Error::IllegalAction(_))
        ));
        assert_eq!(env.action_space(), ActionSpace::Box { shape: vec![3], low: -1.0, high: 1.0 });
    }

    #[test]
    fn continuous_pan_and_snap() {
        let (slide, ann) = VirtualSlide::generate_synthetic(42, 4096, 128, 1).unwrap();
        let config = EnvConfig {
            action_mode: ActionMode::Continuous,
            ..EnvConfig::default()
        };
        let mut env = Env::new(Arc::new(slide), Arc::new(ann), None, config).unwrap();
        let r = env.step(Action::Continuous([0.0, 0.0, 0.9])).unwrap();
        assert_eq!(r.info.agent_pos, AgentPos::new(1, 4, 4));
        assert_eq!(env.state().origin, [512, 512]);
        let r = env.step(Action::Continuous([0.25, -0.5, 0.0])).unwrap();
        assert_eq!(env.state().origin, [544, 448]);
        assert!(!r.info.bumped);
        // level 10 is 1024 px wide: origin clamps at 896
        let r = env.step(Action::Continuous([5.0, 0.0, 0.0])).unwrap();
        assert_eq!(env.state().origin, [672, 448]);
        assert!(!r.info.bumped);
        for _ in 0..2 {
            env.step(Action::Continuous([1.0, 0.0, 0.0])).unwrap();
        }
        assert_eq!(env.state().origin, [896, 448]);
        assert_eq!(r.observation.shape(), vec![128, 128, 3]);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut env = easy_env(RewardMode::Dense);
        env.step(DiscreteAction::ZoomIn.into()).unwrap();
        let snap = env.snapshot();
        let json = snap.to_json();
        let back = EnvState::from_json(&json).unwrap();
        assert_eq!(back, snap);
        let a = env.step(DiscreteAction::Left.into()).unwrap();
        env.restore(back).unwrap();
        let b = env.step(DiscreteAction::Left.into()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observation_is_normalized() {
        let env = easy_env(RewardMode::Dense);
        let (obs, _) = env.current().unwrap();
        let Observation::Pixels(tile) = &obs else { panic!() };
        let norm = obs.normalized();
        assert_eq!(norm.len(), 128 * 128 * 3);
        for (v, b) in norm.iter().zip(tile.bytes()) {
            assert_eq!(*v, *b as f32 / 255.0);
        }
        assert_eq!(env.observation_space().shape, vec![128, 128, 3]);
        assert_eq!(env.action_space().size(), 7);
    }
}
