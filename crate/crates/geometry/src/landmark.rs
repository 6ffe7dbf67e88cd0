//! Landmark primitives, the seven standardized head-pose views, the
//! versioned face-mesh index table, and the per-case landmark JSON document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::Result;

/// One landmark in the three coordinate formats: normalized to `[0, 1]`,
/// absolute pixels, and a relative depth estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub x_norm: f64,
    pub y_norm: f64,
    pub x_px: f64,
    pub y_px: f64,
    pub z: f64,
}

impl Landmark {
    pub fn from_pixels(x_px: f64, y_px: f64, z: f64, image_w: f64, image_h: f64) -> Self {
        Landmark {
            x_norm: x_px / image_w,
            y_norm: y_px / image_h,
            x_px,
            y_px,
            z,
        }
    }

    /// Normalized and pixel coordinates must describe the same point within
    /// half a pixel.
    pub fn is_consistent(&self, image_w: f64, image_h: f64) -> bool {
        (self.x_norm * image_w - self.x_px).abs() <= 0.5
            && (self.y_norm * image_h - self.y_px).abs() <= 0.5
    }
}

/// A landmark as serialized in the per-case JSON documents, tagged with the
/// anatomical group it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedLandmark {
    pub x_norm: f64,
    pub y_norm: f64,
    pub x_px: f64,
    pub y_px: f64,
    pub z: f64,
    pub group: String,
}

impl GroupedLandmark {
    pub fn new(lm: Landmark, group: &str) -> Self {
        GroupedLandmark {
            x_norm: lm.x_norm,
            y_norm: lm.y_norm,
            x_px: lm.x_px,
            y_px: lm.y_px,
            z: lm.z,
            group: group.to_string(),
        }
    }

    pub fn landmark(&self) -> Landmark {
        Landmark {
            x_norm: self.x_norm,
            y_norm: self.y_norm,
            x_px: self.x_px,
            y_px: self.y_px,
            z: self.z,
        }
    }
}

/// The seven standardized head-pose views, in the fixed assembly order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    Frontal,
    Up,
    Down,
    Left,
    MiddleLeft,
    Right,
    MiddleRight,
}

impl View {
    pub const ALL: [View; 7] = [
        View::Frontal,
        View::Up,
        View::Down,
        View::Left,
        View::MiddleLeft,
        View::Right,
        View::MiddleRight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            View::Frontal => "Frontal",
            View::Up => "Up",
            View::Down => "Down",
            View::Left => "Left",
            View::MiddleLeft => "MiddleLeft",
            View::Right => "Right",
            View::MiddleRight => "MiddleRight",
        }
    }

    pub fn from_name(name: &str) -> Result<View> {
        View::ALL
            .iter()
            .copied()
            .find(|v| v.name() == name)
            .ok_or_else(|| GeometryError::UnknownView(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnatomicalGroup {
    Ocular,
    Nasal,
    Oral,
    Craniofacial,
}

impl AnatomicalGroup {
    pub fn name(&self) -> &'static str {
        match self {
            AnatomicalGroup::Ocular => "ocular",
            AnatomicalGroup::Nasal => "nasal",
            AnatomicalGroup::Oral => "oral",
            AnatomicalGroup::Craniofacial => "craniofacial",
        }
    }
}

/// The 18 head landmarks of one view, ordered per the index table.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPoseFeatureSet {
    pub view: View,
    pub landmarks: Vec<Landmark>,
}

impl HeadPoseFeatureSet {
    pub fn new(view: View, landmarks: Vec<Landmark>) -> Result<Self> {
        if landmarks.len() != HEAD_LANDMARK_COUNT {
            return Err(GeometryError::WrongCount {
                what: "head landmarks per view",
                expected: HEAD_LANDMARK_COUNT,
                got: landmarks.len(),
            });
        }
        Ok(HeadPoseFeatureSet { view, landmarks })
    }
}

pub const EYELID_LANDMARK_COUNT: usize = 16;
pub const IRIS_LANDMARK_COUNT: usize = 5;
pub const EYE_LANDMARK_COUNT: usize = EYELID_LANDMARK_COUNT + IRIS_LANDMARK_COUNT;
pub const HEAD_LANDMARK_COUNT: usize = 18;

/// Mesh indices of the per-eye landmark sets. Iris order is
/// `[center, superior, inferior, nasal, temporal]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EyeIndices {
    pub eyelid: Vec<usize>,
    pub iris: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadIndexEntry {
    pub index: usize,
    pub name: String,
    pub group: AnatomicalGroup,
}

/// Versioned static table mapping face-mesh indices to the landmark roles
/// used here, so synthetic and real landmark JSON share one contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceMeshIndexTable {
    pub version: u32,
    pub mesh_size: usize,
    pub left_eye: EyeIndices,
    pub right_eye: EyeIndices,
    pub head: Vec<HeadIndexEntry>,
}

pub const INDEX_TABLE_VERSION: u32 = 1;

impl FaceMeshIndexTable {
    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        let table: FaceMeshIndexTable =
            serde_json::from_str(include_str!("../data/face_mesh_indices.json"))
                .expect("bundled index table parses");
        table.validate().expect("bundled index table is valid");
        table
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let table: FaceMeshIndexTable =
            serde_json::from_str(json).map_err(|e| GeometryError::InvalidIndexTable(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != INDEX_TABLE_VERSION {
            return Err(GeometryError::InvalidIndexTable(format!(
                "version {} (expected {})",
                self.version, INDEX_TABLE_VERSION
            )));
        }
        for (label, eye) in [("left", &self.left_eye), ("right", &self.right_eye)] {
            if eye.eyelid.len() != EYELID_LANDMARK_COUNT {
                return Err(GeometryError::InvalidIndexTable(format!(
                    "{label} eyelid count {}",
                    eye.eyelid.len()
                )));
            }
            if eye.iris.len() != IRIS_LANDMARK_COUNT {
                return Err(GeometryError::InvalidIndexTable(format!(
                    "{label} iris count {}",
                    eye.iris.len()
                )));
            }
            for &i in eye.eyelid.iter().chain(eye.iris.iter()) {
                if i >= self.mesh_size {
                    return Err(GeometryError::InvalidIndexTable(format!(
                        "index {i} out of mesh range"
                    )));
                }
            }
        }
        if self.head.len() != HEAD_LANDMARK_COUNT {
            return Err(GeometryError::InvalidIndexTable(format!(
                "head count {}",
                self.head.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.head {
            if entry.index >= self.mesh_size {
                return Err(GeometryError::InvalidIndexTable(format!(
                    "head index {} out of mesh range",
                    entry.index
                )));
            }
            if !seen.insert(entry.name.clone()) {
                return Err(GeometryError::InvalidIndexTable(format!(
                    "duplicate head landmark name {}",
                    entry.name
                )));
            }
        }
        Ok(())
    }

    pub fn eye(&self, side: crate::eye::EyeSide) -> &EyeIndices {
        match side {
            crate::eye::EyeSide::Left => &self.left_eye,
            crate::eye::EyeSide::Right => &self.right_eye,
        }
    }
}

/// The per-case landmark document (the JSON interchange format).
///
/// `face` carries the full mesh of the primary-position image; `eyes` holds
/// the 21 selected landmarks per side (16 eyelid then 5 iris, global
/// coordinates); `views` holds the 18 head landmarks per standardized view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkDocument {
    pub case_id: String,
    pub image_width: f64,
    pub image_height: f64,
    pub eyes: BTreeMap<String, Vec<GroupedLandmark>>,
    pub views: BTreeMap<String, Vec<GroupedLandmark>>,
    pub face: Vec<GroupedLandmark>,
}

impl LandmarkDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("landmark document serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| GeometryError::Json(e.to_string()))
    }

    pub fn face_landmarks(&self) -> Vec<Landmark> {
        self.face.iter().map(|g| g.landmark()).collect()
    }

    /// Head-pose sets for all seven views, erroring on any absent view.
    pub fn head_pose_sets(&self) -> Result<Vec<HeadPoseFeatureSet>> {
        let missing: Vec<View> = View::ALL
            .iter()
            .copied()
            .filter(|v| !self.views.contains_key(v.name()))
            .collect();
        if !missing.is_empty() {
            return Err(GeometryError::MissingView { missing });
        }
        View::ALL
            .iter()
            .map(|v| {
                let lms = self.views[v.name()].iter().map(|g| g.landmark()).collect();
                HeadPoseFeatureSet::new(*v, lms)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_is_valid() {
        let table = FaceMeshIndexTable::bundled();
        assert_eq!(table.mesh_size, 478);
        assert_eq!(table.head.len(), 18);
        let groups: Vec<usize> = [
            AnatomicalGroup::Ocular,
            AnatomicalGroup::Nasal,
            AnatomicalGroup::Oral,
            AnatomicalGroup::Craniofacial,
        ]
        .iter()
        .map(|g| table.head.iter().filter(|e| e.group == *g).count())
        .collect();
        assert_eq!(groups.iter().sum::<usize>(), 18);
        assert!(groups.iter().all(|&c| c > 0));
    }

    #[test]
    fn view_names_round_trip() {
        for v in View::ALL {
            assert_eq!(View::from_name(v.name()).unwrap(), v);
        }
        assert!(View::from_name("Sideways").is_err());
    }

    #[test]
    fn bad_version_rejected() {
        let mut table = FaceMeshIndexTable::bundled();
        table.version = 2;
        assert!(table.validate().is_err());
    }
}
