//! Prediction-sensitivity audits for counterfactual fairness.
//!
//! A classifier `F` and a protected-status model `A` are small feed-forward
//! networks over the same encoded feature vector. For an input `x` the
//! prediction sensitivity is
//!
//! ```text
//! ps(x) = |∇A(x)| · |∇F(x)|
//! ```
//!
//! where both gradients are taken of the post-sigmoid probability with
//! respect to the input. High values flag predictions that would likely
//! change had the individual's protected status been different.
//!
//! The crate is organized as:
//!
//! - [`nn`]: network initialization, forward pass, Adam/BCE training and
//!   exact input gradients.
//! - [`sensitivity`]: protected-status feature weights, prediction
//!   sensitivity and feature-wise attribution.
//! - [`data`]: CSV ingestion and encoding, synthetic causal-model data,
//!   label-conditioned bias injection, counterfactual augmentation, splits.
//! - [`audit`]: match sets, the threshold distinguisher, ROC/AUC, group
//!   fairness metrics and the audit report.
//! - [`monitor`]: baselines and the deployment-time alarm stream.
//! - [`experiment`]: the seeded multi-trial evaluation protocol.

pub mod audit;
pub mod data;
pub mod digest;
pub mod error;
pub mod experiment;
pub mod monitor;
pub mod nn;
pub mod sensitivity;
pub mod stats;

pub use error::{Error, Result};
