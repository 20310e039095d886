use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Normalize;

/// Number of navigable pyramid levels in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ComplexityRepr", into = "ComplexityRepr")]
pub enum Complexity {
    Easy,
    Medium,
    Hard,
    Custom(u32),
}

impl Complexity {
    pub fn levels(self) -> u32 {
        match self {
            Complexity::Easy => 3,
            Complexity::Medium => 5,
            Complexity::Hard => 7,
            Complexity::Custom(k) => k,
        }
    }
}

impl std::str::FromStr for Complexity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Complexity::Easy),
            "medium" => Ok(Complexity::Medium),
            "hard" => Ok(Complexity::Hard),
            other => other
                .parse::<u32>()
                .map(Complexity::Custom)
                .map_err(|_| Error::config(format!("unknown complexity '{s}'"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ComplexityRepr {
    Named(String),
    Levels(u32),
    Custom { custom: u32 },
}

impl TryFrom<ComplexityRepr> for Complexity {
    type Error = Error;

    fn try_from(r: ComplexityRepr) -> Result<Self> {
        match r {
            ComplexityRepr::Named(s) => s.parse(),
            ComplexityRepr::Levels(k) | ComplexityRepr::Custom { custom: k } => Ok(Complexity::Custom(k)),
        }
    }
}

impl From<Complexity> for ComplexityRepr {
    fn from(c: Complexity) -> Self {
        match c {
            Complexity::Easy => ComplexityRepr::Named("easy".into()),
            Complexity::Medium => ComplexityRepr::Named("medium".into()),
            Complexity::Hard => ComplexityRepr::Named("hard".into()),
            Complexity::Custom(k) => ComplexityRepr::Custom { custom: k },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    #[default]
    Pixels,
    Features,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Sparse,
    #[default]
    Dense,
}

/// Scenario parameters. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub complexity: Complexity,
    pub tile_size: u32,
    pub observation_mode: ObservationMode,
    pub feature_pack: Option<PathBuf>,
    pub action_mode: ActionMode,
    pub reward_mode: RewardMode,
    pub success_threshold: f64,
    pub step_penalty: f64,
    pub success_bonus: f64,
    pub max_step: u32,
    pub normalize: Normalize,
    pub seed: u64,
    /// Continuous pans move `dx · tile_size · pan_gain` level pixels.
    pub pan_gain: f64,
    /// Start each episode on a random tile of the coarsest selected level.
    pub random_start: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            complexity: Complexity::Easy,
            tile_size: 128,
            observation_mode: ObservationMode::Pixels,
            feature_pack: None,
            action_mode: ActionMode::Discrete,
            reward_mode: RewardMode::Dense,
            success_threshold: 0.5,
            step_penalty: 0.01,
            success_bonus: 10.0,
            max_step: 100,
            normalize: Normalize::Viewport,
            seed: 0,
            pan_gain: 1.0,
            random_start: false,
        }
    }
}

impl EnvConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: EnvConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("EnvConfig JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.success_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(format!("success_threshold {t} outside (0, 1]")));
        }
        if self.max_step == 0 {
            return Err(Error::config("max_step must be at least 1"));
        }
        if !self.step_penalty.is_finite() || self.step_penalty < 0.0 {
            return Err(Error::config("step_penalty must be a finite value >= 0"));
        }
        if !self.success_bonus.is_finite() {
            return Err(Error::config("success_bonus must be finite"));
        }
        if self.complexity.levels() == 0 {
            return Err(Error::config("complexity must select at least one level"));
        }
        if self.tile_size == 0 {
            return Err(Error::config("tile_size must be positive"));
        }
        if !self.pan_gain.is_finite() || self.pan_gain <= 0.0 {
            return Err(Error::config("pan_gain must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_json() {
        let c = EnvConfig::from_json("{}").unwrap();
        assert_eq!(c, EnvConfig::default());
        assert_eq!(c.complexity.levels(), 3);
        assert_eq!(c.tile_size, 128);
        assert_eq!(c.max_step, 100);
    }

    #[test]
    fn complexity_forms() {
        for (json, k) in [(r#""easy""#, 3), (r#""hard""#, 7), ("4", 4), (r#"{"custom":2}"#, 2)] {
            let c: Complexity = serde_json::from_str(json).unwrap();
            assert_eq!(c.levels(), k);
        }
        let back = serde_json::to_string(&Complexity::Custom(4)).unwrap();
        assert_eq!(back, r#"{"custom":4}"#);
        assert!(serde_json::from_str::<Complexity>(r#""insane""#).is_err());
    }

    #[test]
    fn round_trip_and_validation() {
        let c = EnvConfig {
            reward_mode: RewardMode::Sparse,
            normalize: Normalize::Polygon,
            ..EnvConfig::default()
        };
        assert_eq!(EnvConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(EnvConfig::from_json(r#"{"success_threshold":0}"#).is_err());
        assert!(EnvConfig::from_json(r#"{"success_threshold":1.5}"#).is_err());
        assert!(EnvConfig::from_json(r#"{"max_step":0}"#).is_err());
        assert!(EnvConfig::from_json(r#"{"gamma":0.9}"#).is_err());
        assert!(EnvConfig::from_json(r#"{"success_threshold":1.0}"#).is_ok());
    }
}
