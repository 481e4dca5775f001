//! Streaming clustering of timestamped bag-of-words documents under a
//! powered Dirichlet-Hawkes prior, with particle-filter inference, a
//! synthetic corpus generator with controlled overlaps, and evaluation
//! tooling.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32`, `f64`); the overlap
//! statistic also accepts exact rationals. The streaming engine, corpus
//! lab and sweeps run in `f64`, and the aliases below name the concrete
//! types they use.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clusters;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod point_process;
pub mod prior;
pub mod rng;
pub mod scalar;
pub mod smc;
pub mod text_model;

pub use error::{PdhpError, Result};
pub use scalar::{Field, Scalar};

pub type KernelBank = point_process::KernelBank<f64>;
pub type KernelBank32 = point_process::KernelBank<f32>;
pub type EventHistory = point_process::EventHistory<f64>;
pub type EventHistory32 = point_process::EventHistory<f32>;
pub type HawkesParams = point_process::HawkesParams<f64>;
pub type PdhpConfig = prior::PdhpConfig<f64>;
pub type ClusterTable = clusters::ClusterTable<f64>;
/// Exact rational used for overlap checks on uniform vocabularies.
pub type Exact = num_rational::Ratio<i64>;

pub use clusters::ClusterId;
pub use corpus::{CorpusSpec, LabeledDocument};
pub use smc::{run_stream, SmcConfig, StreamResult};
pub use text_model::{ClusterWordCounts, WordId};

/// Library version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
