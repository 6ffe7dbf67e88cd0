//! Eye-region segmentation with an adaptive, size-proportional bounding box.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::landmark::{FaceMeshIndexTable, Landmark};
use crate::Result;

/// Fraction of the eye's own width/height added as padding on each side.
pub const ADAPTIVE_PADDING: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeSide {
    Left,
    Right,
}

impl EyeSide {
    pub fn name(&self) -> &'static str {
        match self {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

/// A segmented eye: bounding box in image pixels, landmarks re-expressed in
/// local (crop) coordinates. Iris order is
/// `[center, superior, inferior, nasal, temporal]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeRegion {
    pub side: EyeSide,
    pub bbox: BBox,
    pub eyelid: Vec<Landmark>,
    pub iris: Vec<Landmark>,
}

impl EyeRegion {
    /// Map a local landmark position back to global image coordinates.
    pub fn to_global(&self, local: (f64, f64)) -> (f64, f64) {
        (local.0 + self.bbox.x0, local.1 + self.bbox.y0)
    }
}

/// Segment one eye from a full face mesh. The bounding box encloses all 21
/// eye landmarks of the requested side, expanded by [`ADAPTIVE_PADDING`]
/// times the eye's width/height on each side.
pub fn segment_eye_region(
    face_landmarks: &[Landmark],
    side: EyeSide,
    table: &FaceMeshIndexTable,
) -> Result<EyeRegion> {
    if face_landmarks.len() != table.mesh_size {
        return Err(GeometryError::MissingLandmarks {
            expected: table.mesh_size,
            got: face_landmarks.len(),
        });
    }
    let indices = table.eye(side);
    let selected: Vec<Landmark> = indices
        .eyelid
        .iter()
        .chain(indices.iris.iter())
        .map(|&i| face_landmarks[i])
        .collect();

    let min_x = selected.iter().map(|l| l.x_px).fold(f64::INFINITY, f64::min);
    let max_x = selected
        .iter()
        .map(|l| l.x_px)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_y = selected.iter().map(|l| l.y_px).fold(f64::INFINITY, f64::min);
    let max_y = selected
        .iter()
        .map(|l| l.y_px)
        .fold(f64::NEG_INFINITY, f64::max);

    let w = max_x - min_x;
    let h = max_y - min_y;
    if w <= 0.0 || h <= 0.0 {
        return Err(GeometryError::ZeroExtent);
    }

    let bbox = BBox {
        x0: min_x - ADAPTIVE_PADDING * w,
        y0: min_y - ADAPTIVE_PADDING * h,
        width: w * (1.0 + 2.0 * ADAPTIVE_PADDING),
        height: h * (1.0 + 2.0 * ADAPTIVE_PADDING),
    };

    let to_local = |lm: &Landmark| -> Landmark {
        let lx = lm.x_px - bbox.x0;
        let ly = lm.y_px - bbox.y0;
        Landmark {
            x_norm: lx / bbox.width,
            y_norm: ly / bbox.height,
            x_px: lx,
            y_px: ly,
            z: lm.z,
        }
    };

    Ok(EyeRegion {
        side,
        bbox,
        eyelid: selected[..indices.eyelid.len()].iter().map(to_local).collect(),
        iris: selected[indices.eyelid.len()..].iter().map(to_local).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::FaceMeshIndexTable;

    fn face_with_left_eye_span() -> Vec<Landmark> {
        let table = FaceMeshIndexTable::bundled();
        let mut face = vec![Landmark::from_pixels(480.0, 360.0, 0.0, 960.0, 720.0); 478];
        // spread the 21 left-eye landmarks across x in [100, 140], y in [200, 220]
        let all: Vec<usize> = table
            .left_eye
            .eyelid
            .iter()
            .chain(table.left_eye.iris.iter())
            .copied()
            .collect();
        for (k, &i) in all.iter().enumerate() {
            let t = k as f64 / (all.len() - 1) as f64;
            face[i] = Landmark::from_pixels(100.0 + 40.0 * t, 200.0 + 20.0 * t, 0.0, 960.0, 720.0);
        }
        face
    }

    #[test]
    fn padding_rule_forces_width() {
        let table = FaceMeshIndexTable::bundled();
        let face = face_with_left_eye_span();
        let region = segment_eye_region(&face, EyeSide::Left, &table).unwrap();
        assert!((region.bbox.width - 64.0).abs() < 1e-9);
        assert!((region.bbox.height - 32.0).abs() < 1e-9);
        assert_eq!(region.eyelid.len(), 16);
        assert_eq!(region.iris.len(), 5);
        // all local coordinates inside the crop
        for lm in region.eyelid.iter().chain(region.iris.iter()) {
            assert!(lm.x_px >= 0.0 && lm.x_px <= region.bbox.width);
            assert!(lm.y_px >= 0.0 && lm.y_px <= region.bbox.height);
        }
    }

    #[test]
    fn degenerate_eye_is_zero_extent() {
        let table = FaceMeshIndexTable::bundled();
        let face = vec![Landmark::from_pixels(480.0, 360.0, 0.0, 960.0, 720.0); 478];
        assert!(matches!(
            segment_eye_region(&face, EyeSide::Right, &table),
            Err(GeometryError::ZeroExtent)
        ));
    }

    #[test]
    fn wrong_mesh_size_is_missing_landmarks() {
        let table = FaceMeshIndexTable::bundled();
        let face = vec![Landmark::from_pixels(1.0, 1.0, 0.0, 960.0, 720.0); 100];
        assert!(matches!(
            segment_eye_region(&face, EyeSide::Left, &table),
            Err(GeometryError::MissingLandmarks { expected: 478, got: 100 })
        ));
    }

    #[test]
    fn local_global_round_trip() {
        let table = FaceMeshIndexTable::bundled();
        let face = face_with_left_eye_span();
        let region = segment_eye_region(&face, EyeSide::Left, &table).unwrap();
        let all_idx: Vec<usize> = table
            .left_eye
            .eyelid
            .iter()
            .chain(table.left_eye.iris.iter())
            .copied()
            .collect();
        for (local, &i) in region.eyelid.iter().chain(region.iris.iter()).zip(&all_idx) {
            let (gx, gy) = region.to_global((local.x_px, local.y_px));
            assert_eq!(gx, face[i].x_px);
            assert_eq!(gy, face[i].y_px);
        }
    }
}
