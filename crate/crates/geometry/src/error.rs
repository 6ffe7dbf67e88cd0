use thiserror::Error;

use crate::landmark::View;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("circle fit needs at least 3 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("circle fit is singular: points are collinear or coincident")]
    CollinearPoints,
    #[error("landmark set does not satisfy the index table: expected {expected} landmarks, got {got}")]
    MissingLandmarks { expected: usize, got: usize },
    #[error("eye landmarks have zero spatial extent")]
    ZeroExtent,
    #[error("no pixel lies strictly inside the iris circle")]
    EmptyIrisInterior,
    #[error("missing head-pose views: {missing:?}")]
    MissingView { missing: Vec<View> },
    #[error("duplicate head-pose view: {0:?}")]
    DuplicateView(View),
    #[error("invalid face-mesh index table: {0}")]
    InvalidIndexTable(String),
    #[error("{what}: expected {expected}, got {got}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown view name `{0}`")]
    UnknownView(String),
    #[error("landmark JSON: {0}")]
    Json(String),
}
