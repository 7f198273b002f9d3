//! Linear SVM classification: SMO binary solver, one-vs-one multiclass
//! voting, evaluation reports and stratified cross-validation.

mod eval;
mod multiclass;
mod smo;

pub use eval::{cross_validate, stratified_folds, CategoryScore, EvalReport};
pub use multiclass::{predict, train_multiclass, MulticlassModel, PairMachine};
pub use smo::{train_binary, train_binary_traced, BinarySvmModel, SmoParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training vector {0} has a non-finite component")]
    NonFinite(usize),
    #[error("binary training needs at least one point of each sign")]
    SingleClass,
    #[error("category {0:?} has no training vectors")]
    EmptyCategory(String),
    #[error("category {category:?} has {count} vector(s); cross-validation needs at least 2")]
    TooFewVectors { category: String, count: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{0}")]
    InvalidParams(String),
}
