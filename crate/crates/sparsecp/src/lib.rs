//! Mirror-corrected Mallows's Cp model selection for estimators without
//! shrinkage.
//!
//! When a model is chosen by optimising a criterion over noisy data, the
//! selection interacts with the noise and the classical `nu = kappa` penalty
//! underestimates the effective degrees of freedom, favouring overgrown
//! models. This crate estimates the generalised degrees of freedom of a
//! selection procedure by Monte-Carlo simulation and plugs them into a
//! corrected Cp, for two structured settings:
//!
//! * change-point detection via best-subtree selection on the adaptive
//!   unbalanced Haar transform of a (Poisson) count signal
//!   ([`auht`], [`treeselect`]);
//! * sparse Gaussian graphical model selection via nodewise lasso
//!   regression followed by constrained maximum-likelihood refinement
//!   ([`graph`], [`lasso`]).
//!
//! See the crate examples for end-to-end runs of each capability, and the
//! `sparsecp` binary for replayable experiments with CSV/JSON outputs.

pub mod auht;
pub mod criteria;
pub mod error;
pub mod graph;
pub mod lasso;
pub mod simulate;
pub mod treeselect;

pub use error::{Error, Result};
