use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {lhs} predictions vs {rhs} labels")]
    LengthMismatch { lhs: usize, rhs: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("regression metrics need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("target variance is zero; R^2 and correlation are undefined")]
    ZeroVariance,
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("evaluation sets do not match: {0}")]
    MismatchedEvalSets(String),
    #[error(transparent)]
    Cadnet(#[from] ahp_cadnet::CadnetError),
    #[error(transparent)]
    Imputer(#[from] ahp_imputer::ImputerError),
}
