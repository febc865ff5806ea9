//! Numerical laboratory for feature-based student-teacher learning from
//! clean to noisy inputs.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense kernels and seeded sampling
//! - [`datagen`]: datasets, sparse ground truths and pooled teachers
//! - [`linear_net`]: deep linear networks, base / student-teacher losses and
//!   a full-batch gradient-descent trainer
//! - [`oracles`]: closed-form minimizers and test-error formulas
//! - [`lasso`]: coordinate-descent LASSO and the decomposed student-teacher fit
//! - [`relu_net`]: shallow ReLU students and oracle early stopping
//! - [`experiments`]: config-driven sweeps that emit CSV, SVG and a manifest

pub mod container;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod lasso;
pub mod linear_net;
pub mod numerics;
pub mod oracles;
pub mod par;
pub mod relu_net;

pub use error::{Error, Result};
pub use numerics::{Mat, SeededRng, Vector};
