use thiserror::Error;

#[derive(Debug, Error)]
pub enum CadnetError {
    #[error(transparent)]
    Nn(#[from] ahp_nn::NnError),
    #[error(transparent)]
    Clinical(#[from] ahp_clinical::ClinicalError),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("case `{case_id}` is missing target {target} (the dataset must be fully labeled)")]
    MissingTarget { case_id: String, target: &'static str },
    #[error("feature vector for {modality} has length {got}, expected {expected}")]
    BadFeatureLength {
        modality: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model has not been trained")]
    Untrained,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
