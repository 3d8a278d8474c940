use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid class index {class} for a model with {num_classes} classes")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("adversarial attack failed: {0}")]
    Attack(String),

    #[error("epsilon calibration failed: no grid point reached accuracy <= {target:.4}")]
    Calibration { target: f64, trace: Vec<(f64, f64)> },

    #[error("imputation failed: {0}")]
    Imputation(String),

    #[error("spectral fit failed: {0}")]
    Fit(String),

    #[error("feature selection failed: {0}")]
    Selection(String),

    #[error("stochastic process error: {0}")]
    Process(String),

    #[error("degenerate normalisation: acc0 = {acc0:.6}, acc_full = {acc_full:.6}; the masking operator did not remove the predictive information")]
    DegenerateDenominator { acc0: f64, acc_full: f64 },

    #[error("operator {operator} is not compatible with domain {domain}")]
    Incompatible { operator: String, domain: String },

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
