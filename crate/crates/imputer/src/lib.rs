//! Curriculum-learning imputation of missing clinical targets from notes.
//!
//! Token-level masking is domain-aware (clinical terms masked at a higher
//! rate); target-level masking follows a four-phase curriculum whose rate
//! ramps linearly and plateaus at 100% for the final epochs. A compact
//! trainable transformer encoder (the stand-in for a pretrained biomedical
//! encoder, same interface) feeds an MLM head and a shared trunk; per-target
//! embeddings interact through the clinical dependency graph before seven
//! prediction heads.

pub mod error;
pub mod graph;
pub mod impute;
pub mod masking;
pub mod model;
pub mod schedule;
pub mod train;

pub use error::ImputerError;
pub use graph::DependencyGraph;
pub use impute::{impute_record, CompletedRecord, FilledValue};
pub use masking::{mask_targets, mask_tokens, MaskPlan, TargetInput, TokenMask};
pub use model::{total_loss, ImputerArch, ImputerConfig, ImputerModel, NoteForward};
pub use schedule::{CurriculumSchedule, Phase};
pub use train::{train_imputer, ImputerDataset, ImputerEpochStats, ImputerHistory, ImputerTrainConfig, NoteExample};

pub type Result<T> = std::result::Result<T, ImputerError>;
