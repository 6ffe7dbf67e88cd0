//! Ocular and head-pose geometry.
//!
//! Everything needed to go from raw facial landmarks to the numeric feature
//! vectors consumed by the fusion network: eye-region segmentation with an
//! adaptive bounding box, least-squares iris circle fitting (algebraic
//! initialization refined by Gauss-Newton), intensity-minimum pupil detection
//! with sub-pixel refinement, misalignment magnitude/angle, and the fixed
//! layouts of the 94-entry eye vector and the 630-entry head vector.
//!
//! All operations are pure functions of their inputs; there is no shared
//! mutable state.

pub mod circle;
pub mod error;
pub mod eye;
pub mod landmark;
pub mod misalign;
pub mod pupil;
pub mod vectors;

pub use circle::{fit_circle, CircleFit};
pub use error::GeometryError;
pub use eye::{segment_eye_region, BBox, EyeRegion, EyeSide};
pub use landmark::{
    AnatomicalGroup, FaceMeshIndexTable, GroupedLandmark, HeadPoseFeatureSet, Landmark,
    LandmarkDocument, View,
};
pub use misalign::{compute_misalignment, Misalignment};
pub use pupil::{detect_pupil, IntensityGrid};
pub use vectors::{
    assemble_eye_vector, assemble_head_vector, eye_feature_names, head_feature_names, EyeFeatures,
    EYE_VECTOR_LEN, HEAD_VECTOR_LEN,
};

pub type Result<T> = std::result::Result<T, GeometryError>;

/// The per-eye pipeline: fit the iris circle from the four perimeter
/// landmarks, detect the pupil inside it, and quantify the misalignment of
/// pupil against fitted iris center.
pub fn analyze_eye(region: &EyeRegion, grid: &pupil::IntensityGrid) -> Result<EyeFeatures> {
    let perimeter: Vec<(f64, f64)> = region.iris[1..]
        .iter()
        .map(|lm| (lm.x_px, lm.y_px))
        .collect();
    let circle = fit_circle(&perimeter)?;
    let pupil = detect_pupil(grid, &circle)?;
    let misalignment = compute_misalignment(pupil, (circle.cx, circle.cy));
    Ok(EyeFeatures {
        region: region.clone(),
        circle,
        misalignment,
    })
}
