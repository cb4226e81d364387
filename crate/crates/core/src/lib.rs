//! Clothes-based adversarial training for clothes-changing re-identification.
//!
//! The crate bundles everything needed to study the clothes-based adversarial
//! loss (CAL) at desk scale:
//!
//! * [`data`]: samples, the identity ↔ clothes registry and PK batch sampling
//! * [`numerics`]: dense kernels, stable softmax, gradient checking
//! * [`losses`]: clothes CE, CAL, the negative-CE ablation, identity CE, label
//!   smoothing and batch-hard triplet, all with analytic gradients
//! * [`model`]: the embedding model, Adam and the two-step training loop
//! * [`datagen`]: a synthetic clothes-entangled benchmark and its file format
//! * [`eval`]: general / clothes-changing / same-clothes ranking evaluation
//!   and classifier convergence statistics

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
