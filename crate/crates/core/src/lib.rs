//! Reinforcement-learning environment for whole-slide-image navigation.
//!
//! An agent pans and zooms a one-tile viewport over a multi-resolution tile
//! pyramid and is rewarded by the geometric overlap between its viewport
//! and annotated target polygons.
//!
//! - [`pyramid`]: slide geometry and the DZI / synthetic tile backends
//! - [`annotations`]: ASAP XML polygons in base-level pixels
//! - [`geometry`]: viewport transforms and exact overlap
//! - [`featurepack`]: precomputed per-tile embeddings
//! - [`env`]: the MDP (`reset` / `step`)
//! - [`trace`]: JSONL trajectory logs and PNG renders
//! - [`protocol`]: line-delimited JSON server for out-of-process clients
//!
//! ```no_run
//! use std::sync::Arc;
//! use histogym::{env::{Env, EnvConfig, DiscreteAction}, pyramid::VirtualSlide};
//!
//! let (slide, lesions) = VirtualSlide::generate_synthetic(42, 4096, 128, 1)?;
//! let mut env = Env::new(Arc::new(slide), Arc::new(lesions), None, EnvConfig::default())?;
//! let (_obs, info) = env.reset(None)?;
//! let step = env.step(DiscreteAction::ZoomIn.into())?;
//! println!("{:?} reward={}", info.agent_pos, step.reward);
//! # Ok::<(), histogym::Error>(())
//! ```

pub mod annotations;
pub mod env;
pub mod error;
pub mod featurepack;
pub mod geometry;
pub mod policy;
pub mod protocol;
pub mod pyramid;
pub mod rollout;
pub mod trace;

pub use error::{Error, Result};
