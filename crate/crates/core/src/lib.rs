//! Lipschitz constant estimation and certified robustness analysis for
//! multilayer perceptrons.
//!
//! The crate connects three things: how a feedforward network is built
//! (depth, width, activation, initialization variance), how large its
//! Lipschitz constant is, and how robust its predictions are to bounded
//! input perturbations. It provides:
//!
//! - a seeded dense linear-algebra kernel ([`linalg`], [`rng`]) so every
//!   experiment replays bit-identically from a 64-bit seed;
//! - network construction, exact Jacobians, and weight-file round trips
//!   ([`network`]);
//! - four Lipschitz estimation routes with different trust levels
//!   ([`lipschitz`]);
//! - margins, certified radii, and interval bound propagation
//!   ([`robustness`]);
//! - mini-batch SGD with per-epoch metric capture ([`training`]);
//! - IDX dataset loading and synthetic tasks ([`data`]).
//!
//! All arithmetic is f64. Analysis functions are pure: networks are
//! immutable once built, and anything random takes an explicit [`rng::Pcg32`].

pub mod data;
pub mod error;
pub mod linalg;
pub mod lipschitz;
pub mod network;
pub mod robustness;
pub mod rng;
pub mod training;

pub use data::Dataset;
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lipschitz::{EstimationMethod, LipschitzEstimate};
pub use network::{ActivationKind, MlpNetwork, NetworkSpec};
pub use robustness::{NormOrder, PerturbationSpec, RobustnessReport};
pub use rng::Pcg32;
pub use training::{EpochMetrics, TrainConfig};
