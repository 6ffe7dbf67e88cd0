//! Flat feature-vector layouts feeding the fusion network.
//!
//! Eye vector (94 entries): per eye, 21 local landmark (x, y) pairs, the
//! fitted circle (cx, cy, r), and the misalignment (magnitude, angle) —
//! 47 entries per eye, left half then right half.
//!
//! Head vector (630 entries): 7 views x 18 landmarks x 5 values
//! (x_norm, y_norm, x_px, y_px, z), views in enum order, landmarks in index
//! table order.

use crate::circle::CircleFit;
use crate::error::GeometryError;
use crate::eye::EyeRegion;
use crate::landmark::{FaceMeshIndexTable, HeadPoseFeatureSet, View, HEAD_LANDMARK_COUNT};
use crate::misalign::Misalignment;
use crate::Result;

pub const EYE_VECTOR_LEN: usize = 94;
pub const HEAD_VECTOR_LEN: usize = 630;

/// Everything the eye half-vector needs for one side.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeFeatures {
    pub region: EyeRegion,
    pub circle: CircleFit,
    pub misalignment: Misalignment,
}

pub fn assemble_eye_vector(left: &EyeFeatures, right: &EyeFeatures) -> Vec<f64> {
    let mut out = Vec::with_capacity(EYE_VECTOR_LEN);
    for side in [left, right] {
        for lm in side.region.eyelid.iter().chain(side.region.iris.iter()) {
            out.push(lm.x_px);
            out.push(lm.y_px);
        }
        out.push(side.circle.cx);
        out.push(side.circle.cy);
        out.push(side.circle.r);
        out.push(side.misalignment.magnitude);
        out.push(side.misalignment.angle);
    }
    debug_assert_eq!(out.len(), EYE_VECTOR_LEN);
    out
}

/// Keyed assembly over the seven views; order of the input slice does not
/// matter. Errors list every absent view.
pub fn assemble_head_vector(views: &[HeadPoseFeatureSet]) -> Result<Vec<f64>> {
    let mut by_view: std::collections::BTreeMap<View, &HeadPoseFeatureSet> =
        std::collections::BTreeMap::new();
    for set in views {
        if by_view.insert(set.view, set).is_some() {
            return Err(GeometryError::DuplicateView(set.view));
        }
    }
    let missing: Vec<View> = View::ALL
        .iter()
        .copied()
        .filter(|v| !by_view.contains_key(v))
        .collect();
    if !missing.is_empty() {
        return Err(GeometryError::MissingView { missing });
    }
    let mut out = Vec::with_capacity(HEAD_VECTOR_LEN);
    for view in View::ALL {
        let set = by_view[&view];
        if set.landmarks.len() != HEAD_LANDMARK_COUNT {
            return Err(GeometryError::WrongCount {
                what: "head landmarks per view",
                expected: HEAD_LANDMARK_COUNT,
                got: set.landmarks.len(),
            });
        }
        for lm in &set.landmarks {
            out.push(lm.x_norm);
            out.push(lm.y_norm);
            out.push(lm.x_px);
            out.push(lm.y_px);
            out.push(lm.z);
        }
    }
    debug_assert_eq!(out.len(), HEAD_VECTOR_LEN);
    Ok(out)
}

const EYELID_NAMES: [&str; 16] = [
    "corner_outer",
    "eyelid_lower_1",
    "eyelid_lower_2",
    "eyelid_lower_3",
    "eyelid_lower_4",
    "eyelid_lower_5",
    "eyelid_lower_6",
    "eyelid_lower_7",
    "corner_inner",
    "eyelid_upper_1",
    "eyelid_upper_2",
    "eyelid_upper_3",
    "eyelid_upper_4",
    "eyelid_upper_5",
    "eyelid_upper_6",
    "eyelid_upper_7",
];

const IRIS_NAMES: [&str; 5] = [
    "iris_center",
    "iris_superior",
    "iris_inferior",
    "iris_nasal",
    "iris_temporal",
];

/// Names of the 94 eye-vector entries, aligned with [`assemble_eye_vector`].
pub fn eye_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(EYE_VECTOR_LEN);
    for side in ["left", "right"] {
        for n in EYELID_NAMES.iter().chain(IRIS_NAMES.iter()) {
            names.push(format!("{side}_{n}_x"));
            names.push(format!("{side}_{n}_y"));
        }
        names.push(format!("{side}_iris_cx"));
        names.push(format!("{side}_iris_cy"));
        names.push(format!("{side}_iris_r"));
        names.push(format!("{side}_misalign_magnitude"));
        names.push(format!("{side}_misalign_angle"));
    }
    names
}

/// Names of the 630 head-vector entries, aligned with [`assemble_head_vector`].
pub fn head_feature_names(table: &FaceMeshIndexTable) -> Vec<String> {
    let mut names = Vec::with_capacity(HEAD_VECTOR_LEN);
    for view in View::ALL {
        for entry in &table.head {
            for field in ["x_norm", "y_norm", "x", "y", "z"] {
                names.push(format!("{}_{}_{}", view.name(), entry.name, field));
            }
        }
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eye::{BBox, EyeSide};
    use crate::landmark::Landmark;

    fn zero_eye(side: EyeSide) -> EyeFeatures {
        let zero = Landmark {
            x_norm: 0.0,
            y_norm: 0.0,
            x_px: 0.0,
            y_px: 0.0,
            z: 0.0,
        };
        EyeFeatures {
            region: EyeRegion {
                side,
                bbox: BBox {
                    x0: 0.0,
                    y0: 0.0,
                    width: 1.0,
                    height: 1.0,
                },
                eyelid: vec![zero; 16],
                iris: vec![zero; 5],
            },
            circle: CircleFit {
                cx: 0.0,
                cy: 0.0,
                r: 0.0,
                rms_residual: 0.0,
            },
            misalignment: Misalignment {
                magnitude: 0.0,
                angle: 0.0,
            },
        }
    }

    #[test]
    fn zero_inputs_give_zero_vector_of_fixed_length() {
        let v = assemble_eye_vector(&zero_eye(EyeSide::Left), &zero_eye(EyeSide::Right));
        assert_eq!(v.len(), 94);
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(eye_feature_names().len(), 94);
    }

    #[test]
    fn swapping_sides_permutes_halves() {
        let mut left = zero_eye(EyeSide::Left);
        left.circle.r = 7.0;
        left.misalignment.magnitude = 2.0;
        let mut right = zero_eye(EyeSide::Right);
        right.circle.r = 9.0;
        let a = assemble_eye_vector(&left, &right);
        let b = assemble_eye_vector(&right, &left);
        assert_eq!(&a[..47], &b[47..]);
        assert_eq!(&a[47..], &b[..47]);
    }

    #[test]
    fn head_vector_is_keyed_not_positional() {
        let zero = Landmark {
            x_norm: 0.0,
            y_norm: 0.0,
            x_px: 0.0,
            y_px: 0.0,
            z: 0.0,
        };
        let mut sets: Vec<HeadPoseFeatureSet> = View::ALL
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut lms = vec![zero; 18];
                lms[0].x_px = i as f64;
                HeadPoseFeatureSet::new(v, lms).unwrap()
            })
            .collect();
        let a = assemble_head_vector(&sets).unwrap();
        assert_eq!(a.len(), 630);
        sets.reverse();
        let b = assemble_head_vector(&sets).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_views_are_listed() {
        let zero = Landmark {
            x_norm: 0.0,
            y_norm: 0.0,
            x_px: 0.0,
            y_px: 0.0,
            z: 0.0,
        };
        let sets = vec![HeadPoseFeatureSet::new(View::Frontal, vec![zero; 18]).unwrap()];
        match assemble_head_vector(&sets) {
            Err(GeometryError::MissingView { missing }) => {
                assert_eq!(missing.len(), 6);
                assert!(!missing.contains(&View::Frontal));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_zero_head_vector() {
        let zero = Landmark {
            x_norm: 0.0,
            y_norm: 0.0,
            x_px: 0.0,
            y_px: 0.0,
            z: 0.0,
        };
        let sets: Vec<HeadPoseFeatureSet> = View::ALL
            .iter()
            .map(|&v| HeadPoseFeatureSet::new(v, vec![zero; 18]).unwrap())
            .collect();
        let v = assemble_head_vector(&sets).unwrap();
        assert_eq!(v.len(), 630);
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(
            head_feature_names(&FaceMeshIndexTable::bundled()).len(),
            630
        );
    }
}
