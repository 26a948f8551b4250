//! Single-hidden-layer MLP forecasters with the Aranda-Ordaz asymmetric
//! activation family, trained by a hybrid simulated-annealing / tabu search
//! over weights and λ, then refined by backpropagation with momentum or
//! Levenberg-Marquardt.

// `!(x > y)` is used on purpose to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod ar;
pub mod dataprep;
pub mod error;
pub mod experiment;
pub mod global_opt;
pub mod local_opt;
pub mod metrics;
pub mod network;

pub use activation::{ActivationKind, ActivationSpec};
pub use error::{Error, Result};
pub use network::{MlpParams, Solution, Topology};
