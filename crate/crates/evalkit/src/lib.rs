//! Evaluation kit: classification/regression metrics (macro one-vs-rest with
//! micro averages emitted alongside), interpretability extraction from the
//! fusion model's diagnostics, imputed-only filtering, and paired-bootstrap
//! dependency analyses.

pub mod bootstrap;
pub mod confusion;
pub mod dependency;
pub mod error;
pub mod filter;
pub mod interpret;
pub mod metrics;
pub mod report;

pub use bootstrap::{paired_bootstrap_p, PairedScores};
pub use confusion::ConfusionMatrix;
pub use dependency::{dependency_analysis, DependencyReport, TargetBenefit};
pub use error::EvalError;
pub use filter::{imputed_only_indices, imputation_percentages};
pub use interpret::{interpretability_report, InterpretabilityReport};
pub use metrics::{classification_metrics, regression_metrics, MetricBundle, MicroAverages};

pub type Result<T> = std::result::Result<T, EvalError>;
