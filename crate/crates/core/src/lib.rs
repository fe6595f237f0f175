//! Structured prediction with hidden variables on pairwise discrete factor
//! graphs.
//!
//! The crate implements a temperature-parameterized family of training
//! objectives for log-linear models `p(y, h | x; w) ∝ exp(w·φ(x, y, h))`
//! where a subset of the non-observed variables (`h`) is never labeled.
//! A pair of temperatures `(ε_y, ε_h)` selects the family member: marginal
//! structured SVM (`ε_y→0, ε_h=1`), latent structured SVM (`ε_y→0, ε_h→0`),
//! hidden CRF (`ε_y=ε_h=1`, no loss) and the ε-interpolations in between.
//!
//! Modules:
//! - [`model`]: factor graphs, feature templates, instances, conditioning.
//! - [`inference`]: belief propagation (sum / max / mixed / weighted) and an
//!   exhaustive enumeration oracle.
//! - [`objectives`]: the unified objective, its (sub-)gradient, predictors.
//! - [`training`]: sub-gradient descent and CCCP trainers.
//! - [`simulation`]: synthetic hidden-chain / grid generators and the noisy
//!   weak-label image generator.
//! - [`eval`]: held-out accuracy and test log-likelihood.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod inference;
pub mod math;
pub mod model;
pub mod objectives;
pub mod simulation;
pub mod training;

pub use error::Error;
pub use model::{
    FactorGraph, FeatureGroup, FeatureTemplate, Instance, Labels, LogPotentials, Node,
    ObservedValue, Role, WeightVector,
};
pub use objectives::{Backend, FamilyPreset, ObjectiveConfig, TemperaturePair};
pub use training::{TrainerKind, TrainingConfig, TrainingTrace};
