use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImputerError {
    #[error(transparent)]
    Nn(#[from] ahp_nn::NnError),
    #[error(transparent)]
    Clinical(#[from] ahp_clinical::ClinicalError),
    #[error("epoch {epoch} out of range for a {total}-epoch schedule")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("invalid curriculum schedule: {0}")]
    InvalidSchedule(String),
    #[error("dependency graph contains a cycle")]
    CyclicGraph,
    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("record `{0}` has no Diagnose value")]
    MissingDiagnose(String),
    #[error("invalid imputer config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
