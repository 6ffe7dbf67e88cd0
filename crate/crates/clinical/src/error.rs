use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClinicalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown category `{label}` for target {target}")]
    UnknownCategory { target: String, label: String },
    #[error("record `{case_id}` is invalid: {reason}")]
    InvalidRecord { case_id: String, reason: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("json: {0}")]
    Json(String),
}
