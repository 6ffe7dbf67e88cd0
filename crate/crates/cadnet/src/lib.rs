//! AHP-CADNet: a three-level attention fusion network over eye geometry,
//! head-pose landmarks, and structured clinical features, with seven task
//! heads (five classification, two regression) trained jointly.
//!
//! Level 1 encodes each modality as a short token sequence with intra-modal
//! self-attention and a sigmoid feature-importance gate. Level 2 runs gated
//! cross-modal attention along the clinical-to-eye, clinical-to-head, and
//! eye-to-head pathways. Level 3 projects all streams into a shared space,
//! weights them with a learned softmax, and enhances the fused vector with
//! the clinical context. Early/late fusion and attention ablations are
//! configuration variants, not code forks.

pub mod config;
pub mod error;
pub mod model;
pub mod train;

pub use config::{FusionConfig, FusionMode, IntraDims, TokensPerModality};
pub use error::CadnetError;
pub use model::{
    BatchTargets, CadnetArch, CadnetModel, CasePrediction, Diagnostics, Modality, StreamKind,
    CLINICAL_RAW_LEN, EYE_RAW_LEN, HEAD_RAW_LEN,
};
pub use train::{
    predict_cases, train_cadnet, CaseFeatures, EpochStats, InputStats, LabeledCase, SplitDataset,
    TrainConfig, TrainHistory,
};

pub type Result<T> = std::result::Result<T, CadnetError>;
