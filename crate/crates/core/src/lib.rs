//! Model-based reinforcement learning with optimistic exploration driven by a
//! joint Gaussian-process belief over transition dynamics and reward.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`], [`linalg`], [`gaussian`]: seeded random streams, dense linear
//!   algebra, multivariate-Gaussian conditioning and truncated-normal draws.
//! - [`nn`]: small feed-forward networks with hand-written reverse mode and Adam.
//! - [`model`]: the joint reward-dynamics belief (coregionalized GP with an MLP
//!   mean, or a probabilistic ensemble).
//! - [`strategy`]: hallucination rules that turn a joint prediction into a
//!   simulated next state and reward.
//! - [`envs`]: native sparse-reward control tasks.
//! - [`policy`]: replay buffers, SAC and a probabilistic-actor DDPG.
//! - [`trainer`] and [`config`]: the outer model-based loop and its run
//!   configuration.
//! - [`selftest`]: independent numerical oracles used by the `selftest` command
//!   and the acceptance suite.

// Index loops read closer to the maths; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod envs;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod selftest;
pub mod strategy;
pub mod trainer;

pub use config::RunConfig;
pub use envs::EnvName;
pub use error::{Error, Result};
pub use gaussian::MvNormal;
pub use linalg::Matrix;
pub use model::{JointModel, JointPrediction};
pub use policy::Transition;
pub use rng::Rng;
pub use strategy::{OptimismSchedule, StrategyKind};
