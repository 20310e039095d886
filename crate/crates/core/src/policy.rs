//! Scripted policies used by the rollout command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::AnnotationSet;
use crate::env::{Action, ActionMode, DiscreteAction, Env};
use crate::error::{Error, Result};
use crate::geometry::tile_containing;

pub trait Policy {
    fn act(&mut self, env: &Env) -> Action;
}

/// Uniform over the env's action space.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &Env) -> Action {
        match env.config().action_mode {
            ActionMode::Discrete => {
                Action::Discrete(DiscreteAction::ALL[self.rng.random_range(0..DiscreteAction::COUNT)])
            }
            ActionMode::Continuous => {
                Action::Continuous(std::array::from_fn(|_| self.rng.random_range(-1.0..=1.0)))
            }
        }
    }
}

/// Ground-truth lesion seeker: at every selected level it pans onto the tile
/// holding the target centroid, then zooms in. Targets the largest polygon.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    target: (f64, f64),
}

impl OraclePolicy {
    pub fn new(annotations: &AnnotationSet) -> Result<Self> {
        let polygon = annotations
            .polygons
            .iter()
            .max_by(|a, b| a.area().total_cmp(&b.area()))
            .ok_or_else(|| Error::config("oracle policy needs at least one annotation"))?;
        Ok(Self {
            target: polygon.centroid(),
        })
    }

    pub fn target(&self) -> (f64, f64) {
        self.target
    }
}

impl Policy for OraclePolicy {
    fn act(&mut self, env: &Env) -> Action {
        let pos = env.agent_pos();
        let levels = env.selected_levels();
        let (tx, ty) = tile_containing(env.geometry(), levels[pos.z as usize], self.target);
        let a = if pos.x < tx {
            DiscreteAction::Right
        } else if pos.x > tx {
            DiscreteAction::Left
        } else if pos.y < ty {
            DiscreteAction::Down
        } else if pos.y > ty {
            DiscreteAction::Up
        } else if (pos.z as usize) + 1 < levels.len() {
            DiscreteAction::ZoomIn
        } else {
            DiscreteAction::Stay
        };
        Action::Discrete(a)
    }
}
