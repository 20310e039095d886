use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum DiscreteAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    ZoomIn = 4,
    ZoomOut = 5,
    Stay = 6,
}

impl DiscreteAction {
    pub const COUNT: usize = 7;
    pub const ALL: [DiscreteAction; 7] = [
        DiscreteAction::Up,
        DiscreteAction::Down,
        DiscreteAction::Left,
        DiscreteAction::Right,
        DiscreteAction::ZoomIn,
        DiscreteAction::ZoomOut,
        DiscreteAction::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<u8> for DiscreteAction {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        DiscreteAction::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| Error::IllegalAction(format!("discrete action {v} not in 0..=6")))
    }
}

impl From<DiscreteAction> for u8 {
    fn from(a: DiscreteAction) -> u8 {
        a as u8
    }
}

/// Either a discrete code or a continuous `(dx, dy, dz)` triple.
/// On the wire: an integer, or an array of three numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(DiscreteAction),
    Continuous([f64; 3]),
}

impl Action {
    pub fn from_index(i: i64) -> Result<Self> {
        u8::try_from(i)
            .map_err(|_| Error::IllegalAction(format!("discrete action {i} not in 0..=6")))
            .and_then(DiscreteAction::try_from)
            .map(Action::Discrete)
    }

    /// Parse a wire value: integer → discrete, 3-array → continuous.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        if let Some(i) = v.as_i64() {
            return Self::from_index(i);
        }
        if let Some(arr) = v.as_array() {
            let comps: Option<Vec<f64>> = arr.iter().map(|c| c.as_f64()).collect();
            if let Some(c) = comps.filter(|c| c.len() == 3) {
                return Ok(Action::Continuous([c[0], c[1], c[2]]));
            }
        }
        Err(Error::IllegalAction(format!("malformed action {v}")))
    }

    /// Continuous translation of a discrete move: one full tile pan or a full zoom.
    pub fn to_continuous(self) -> [f64; 3] {
        match self {
            Action::Continuous(c) => c,
            Action::Discrete(d) => match d {
                DiscreteAction::Up => [0.0, -1.0, 0.0],
                DiscreteAction::Down => [0.0, 1.0, 0.0],
                DiscreteAction::Left => [-1.0, 0.0, 0.0],
                DiscreteAction::Right => [1.0, 0.0, 0.0],
                DiscreteAction::ZoomIn => [0.0, 0.0, 1.0],
                DiscreteAction::ZoomOut => [0.0, 0.0, -1.0],
                DiscreteAction::Stay => [0.0, 0.0, 0.0],
            },
        }
    }
}

impl From<DiscreteAction> for Action {
    fn from(a: DiscreteAction) -> Self {
        Action::Discrete(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Box { shape: Vec<usize>, low: f64, high: f64 },
}

impl ActionSpace {
    pub fn size(&self) -> usize {
        match self {
            ActionSpace::Discrete { n } => *n,
            ActionSpace::Box { shape, .. } => shape.iter().product(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpace {
    pub shape: Vec<usize>,
    /// `None` means unbounded.
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub dtype: String,
}
