//! Automated descriptor generation for tabular regression.
//!
//! Descriptors are clustered into information-coherent groups; three
//! cascading Q-learning agents pick a head group, an operation, and a tail
//! group; the chosen operation is applied group-wise and the resulting
//! descriptor set is filtered and scored by a downstream regressor.

pub mod agents;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod expr;
pub mod generation;
pub mod info;
pub mod ops;
pub mod pipeline;
pub mod state;

pub use dataset::{evaluate_expression, export_dataset, load_csv, Dataset, Descriptor};
pub use error::{Error, Result};
pub use expr::Expr;
pub use ops::{BinaryOp, Operation, OperationSet, UnaryOp};
