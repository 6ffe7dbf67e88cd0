//! Clinical note processing.
//!
//! Structured feature extraction from free-text notes with pre-compiled
//! regular expressions (32 named features with presence indicators),
//! label-preserving domain augmentation, a word-level tokenizer with a
//! clinical-term flag, and encoding of the seven diagnostic targets.

pub mod augment;
pub mod error;
pub mod features;
pub mod lexicon;
pub mod note;
pub mod targets;
pub mod vocab;

pub use augment::{augment_note, augment_note_with_stats, AugmentConfig, AugmentStats};
pub use error::ClinicalError;
pub use features::{extract_features, FeatureKind, FeatureValue, FeatureVector32, FEATURE_COUNT};
pub use lexicon::{AugmentationLexicon, ClinicalTermSet};
pub use note::{ClinicalNote, NoteSource};
pub use targets::{
    encode_targets, CaseRecord, CategoryTable, EncodedTargets, ImputedFlags, TargetKind,
    TargetStats,
};
pub use vocab::{build_vocab, tokenize, TokenSeq, Vocabulary, CLS_ID, MASK_ID, PAD_ID, UNK_ID};

pub type Result<T> = std::result::Result<T, ClinicalError>;
