#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

//! Few-shot clustering of fixed embeddings.
//!
//! The pipeline trains a small classifier/projector head on top of
//! precomputed embeddings. Each iteration turns classifier outputs on the
//! unlabeled part of a mini-batch into pseudo-labels by solving an
//! interaction-enhanced entropic optimal transport problem ([`ieot`]),
//! maintains a bank of normalized pseudo-centers ([`centers`]) and
//! optimizes four losses with exact analytic gradients ([`losses`],
//! [`model`]). Clustering quality is measured with Hungarian-matched
//! accuracy and NMI ([`eval`]).

pub mod centers;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod ieot;
pub mod losses;
pub mod model;
pub mod parallel;
pub mod trainer;

mod binio;

pub use centers::CenterBank;
pub use data::{Batch, EmbeddingDataset, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::MetricsRecord;
pub use ieot::{SolverOptions, TransportPlan, TransportProblem};
pub use losses::{InstanceDenominator, LossOutput, Temperatures};
pub use model::{AdamState, ModelParams, ParamGrads};
pub use trainer::{TrainConfig, TrainState};
