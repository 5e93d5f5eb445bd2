//! First-passage reliability and reliability sensitivity for linear dynamical
//! systems driven by Gaussian excitation.
//!
//! The pipeline is:
//!
//! 1. [`model`] assembles `M`, `C`, `K`, `L` and their parameter derivatives.
//! 2. [`excitation`] represents the excitation samples as `F_i = psi_i . x`
//!    with `x` standard Gaussian.
//! 3. [`etdm`] runs one unit-impulse time history (plus one per structural
//!    parameter) and turns the stored first columns into coefficient maps, so
//!    every response is an explicit linear function `a_i . x`.
//! 4. [`reliability`] builds the closed-form component table and estimates
//!    the system failure probability with a component-mixture importance
//!    sampler.
//! 5. [`sdm`] estimates the failure-probability gradient by decomposing the
//!    system limit-state surface into constrained component hyperplanes.
//! 6. [`fdmis`] is the finite-difference importance-sampling reference.
//! 7. [`cli`] holds configuration, presets, orchestration and output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod etdm;
pub mod excitation;
pub mod fdmis;
pub mod model;
pub mod reliability;
pub mod sampling;
pub mod sdm;

pub use error::{Error, Result};
