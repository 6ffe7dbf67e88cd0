//! The seven diagnostic targets: category tables, case records with
//! imputation indicators, label encoding, and standardization of the two
//! continuous targets with training-split statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ClinicalError;
use crate::Result;

/// The five categorical and two continuous prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetKind {
    Diagnose,
    AhpType,
    AhpDirection,
    Eye,
    EyeMisalignment,
    AhpDegree,
    Pd,
}

impl TargetKind {
    pub const ALL: [TargetKind; 7] = [
        TargetKind::Diagnose,
        TargetKind::AhpType,
        TargetKind::AhpDirection,
        TargetKind::Eye,
        TargetKind::EyeMisalignment,
        TargetKind::AhpDegree,
        TargetKind::Pd,
    ];

    pub const CATEGORICAL: [TargetKind; 5] = [
        TargetKind::Diagnose,
        TargetKind::AhpType,
        TargetKind::AhpDirection,
        TargetKind::Eye,
        TargetKind::EyeMisalignment,
    ];

    pub const CONTINUOUS: [TargetKind; 2] = [TargetKind::AhpDegree, TargetKind::Pd];

    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Diagnose => "Diagnose",
            TargetKind::AhpType => "AHPType",
            TargetKind::AhpDirection => "AHPDirection",
            TargetKind::Eye => "Eye",
            TargetKind::EyeMisalignment => "EyeMisalignment",
            TargetKind::AhpDegree => "AHPDegree",
            TargetKind::Pd => "PD",
        }
    }

    pub fn from_name(name: &str) -> Option<TargetKind> {
        TargetKind::ALL.iter().copied().find(|t| t.name() == name)
    }

    pub fn is_categorical(&self) -> bool {
        !matches!(self, TargetKind::AhpDegree | TargetKind::Pd)
    }

    pub fn index(&self) -> usize {
        TargetKind::ALL.iter().position(|t| t == self).unwrap()
    }
}

/// Frozen class inventories for the categorical targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryTable {
    pub diagnose: Vec<String>,
    pub ahp_type: Vec<String>,
    pub ahp_direction: Vec<String>,
    pub eye: Vec<String>,
    pub eye_misalignment: Vec<String>,
}

impl Default for CategoryTable {
    fn default() -> Self {
        let v = |items: &[&str]| items.iter().map(|s| s.to_string()).collect();
        CategoryTable {
            diagnose: v(&[
                "Duane syndrome",
                "superior oblique palsy",
                "Brown syndrome",
                "nystagmus",
            ]),
            ahp_type: v(&["turn", "tilt", "chin-up", "chin-down"]),
            ahp_direction: v(&["left", "right"]),
            eye: v(&["left", "right"]),
            eye_misalignment: v(&["esotropia", "exotropia", "hypertropia", "hypotropia"]),
        }
    }
}

impl CategoryTable {
    pub fn classes(&self, kind: TargetKind) -> &[String] {
        match kind {
            TargetKind::Diagnose => &self.diagnose,
            TargetKind::AhpType => &self.ahp_type,
            TargetKind::AhpDirection => &self.ahp_direction,
            TargetKind::Eye => &self.eye,
            TargetKind::EyeMisalignment => &self.eye_misalignment,
            _ => panic!("{kind:?} is continuous"),
        }
    }

    pub fn class_count(&self, kind: TargetKind) -> usize {
        self.classes(kind).len()
    }

    pub fn encode(&self, kind: TargetKind, label: &str) -> Result<usize> {
        self.classes(kind)
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ClinicalError::UnknownCategory {
                target: kind.name().to_string(),
                label: label.to_string(),
            })
    }

    pub fn decode(&self, kind: TargetKind, index: usize) -> &str {
        &self.classes(kind)[index]
    }
}

/// Per-target imputation indicators. Diagnose is never imputed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputedFlags {
    #[serde(rename = "AHPType")]
    pub ahp_type: bool,
    #[serde(rename = "AHPDirection")]
    pub ahp_direction: bool,
    #[serde(rename = "Eye")]
    pub eye: bool,
    #[serde(rename = "EyeMisalignment")]
    pub eye_misalignment: bool,
    #[serde(rename = "AHPDegree")]
    pub ahp_degree: bool,
    #[serde(rename = "PD")]
    pub pd: bool,
}

impl ImputedFlags {
    pub fn get(&self, kind: TargetKind) -> bool {
        match kind {
            TargetKind::Diagnose => false,
            TargetKind::AhpType => self.ahp_type,
            TargetKind::AhpDirection => self.ahp_direction,
            TargetKind::Eye => self.eye,
            TargetKind::EyeMisalignment => self.eye_misalignment,
            TargetKind::AhpDegree => self.ahp_degree,
            TargetKind::Pd => self.pd,
        }
    }

    pub fn set(&mut self, kind: TargetKind, value: bool) {
        match kind {
            TargetKind::Diagnose => {}
            TargetKind::AhpType => self.ahp_type = value,
            TargetKind::AhpDirection => self.ahp_direction = value,
            TargetKind::Eye => self.eye = value,
            TargetKind::EyeMisalignment => self.eye_misalignment = value,
            TargetKind::AhpDegree => self.ahp_degree = value,
            TargetKind::Pd => self.pd = value,
        }
    }
}

/// One clinical case: the seven targets plus per-target imputation
/// indicators. Diagnose is always present and never imputed; optional values
/// only occur in deployment records awaiting imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    #[serde(rename = "Diagnose")]
    pub diagnose: String,
    #[serde(rename = "AHPType")]
    pub ahp_type: Option<String>,
    #[serde(rename = "AHPDirection")]
    pub ahp_direction: Option<String>,
    #[serde(rename = "Eye")]
    pub eye: Option<String>,
    #[serde(rename = "EyeMisalignment")]
    pub eye_misalignment: Option<String>,
    #[serde(rename = "AHPDegree")]
    pub ahp_degree: Option<f64>,
    #[serde(rename = "PD")]
    pub pd: Option<f64>,
    pub imputed: ImputedFlags,
}

impl CaseRecord {
    pub fn categorical_value(&self, kind: TargetKind) -> Option<&str> {
        match kind {
            TargetKind::Diagnose => Some(&self.diagnose),
            TargetKind::AhpType => self.ahp_type.as_deref(),
            TargetKind::AhpDirection => self.ahp_direction.as_deref(),
            TargetKind::Eye => self.eye.as_deref(),
            TargetKind::EyeMisalignment => self.eye_misalignment.as_deref(),
            _ => None,
        }
    }

    pub fn continuous_value(&self, kind: TargetKind) -> Option<f64> {
        match kind {
            TargetKind::AhpDegree => self.ahp_degree,
            TargetKind::Pd => self.pd,
            _ => None,
        }
    }

    pub fn has_value(&self, kind: TargetKind) -> bool {
        if kind.is_categorical() {
            self.categorical_value(kind).is_some()
        } else {
            self.continuous_value(kind).is_some()
        }
    }

    pub fn is_imputed(&self, kind: TargetKind) -> bool {
        self.imputed.get(kind)
    }

    pub fn validate(&self, table: &CategoryTable) -> Result<()> {
        let err = |reason: String| ClinicalError::InvalidRecord {
            case_id: self.case_id.clone(),
            reason,
        };
        if self.diagnose.is_empty() {
            return Err(err("empty Diagnose".into()));
        }
        for kind in TargetKind::CATEGORICAL {
            if let Some(label) = self.categorical_value(kind) {
                table.encode(kind, label)?;
            }
        }
        for kind in TargetKind::CONTINUOUS {
            if let Some(v) = self.continuous_value(kind) {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(err(format!("{} must be finite and >= 0", kind.name())));
                }
            }
        }
        Ok(())
    }
}

/// Training-split statistics for the continuous targets (population std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub means: BTreeMap<TargetKind, f64>,
    pub stds: BTreeMap<TargetKind, f64>,
}

impl TargetStats {
    /// Fit on the training split only. A zero std falls back to 1 so encoding
    /// stays finite.
    pub fn fit(records: &[&CaseRecord]) -> Self {
        let mut means = BTreeMap::new();
        let mut stds = BTreeMap::new();
        for kind in TargetKind::CONTINUOUS {
            let values: Vec<f64> = records
                .iter()
                .filter_map(|r| r.continuous_value(kind))
                .collect();
            let n = values.len() as f64;
            let mean = if values.is_empty() {
                0.0
            } else {
                values.iter().sum::<f64>() / n
            };
            let var = if values.is_empty() {
                0.0
            } else {
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
            };
            let std = var.sqrt();
            means.insert(kind, mean);
            stds.insert(kind, if std > 0.0 { std } else { 1.0 });
        }
        TargetStats { means, stds }
    }

    pub fn standardize(&self, kind: TargetKind, value: f64) -> f64 {
        (value - self.means[&kind]) / self.stds[&kind]
    }

    pub fn destandardize(&self, kind: TargetKind, encoded: f64) -> f64 {
        encoded * self.stds[&kind] + self.means[&kind]
    }
}

/// Encoded targets: integer labels for the categoricals under the frozen
/// table, standardized values for the continuous targets. `None` marks a
/// value absent from the record.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTargets {
    pub classes: [Option<usize>; 5],
    pub continuous: [Option<f64>; 2],
}

impl EncodedTargets {
    pub fn class(&self, kind: TargetKind) -> Option<usize> {
        TargetKind::CATEGORICAL
            .iter()
            .position(|t| t == &kind)
            .and_then(|i| self.classes[i])
    }

    pub fn cont(&self, kind: TargetKind) -> Option<f64> {
        TargetKind::CONTINUOUS
            .iter()
            .position(|t| t == &kind)
            .and_then(|i| self.continuous[i])
    }
}

/// Label-encode categoricals and standardize continuous targets.
pub fn encode_targets(
    record: &CaseRecord,
    table: &CategoryTable,
    stats: &TargetStats,
) -> Result<EncodedTargets> {
    let mut classes = [None; 5];
    for (i, kind) in TargetKind::CATEGORICAL.iter().enumerate() {
        if let Some(label) = record.categorical_value(*kind) {
            classes[i] = Some(table.encode(*kind, label)?);
        }
    }
    let mut continuous = [None; 2];
    for (i, kind) in TargetKind::CONTINUOUS.iter().enumerate() {
        if let Some(v) = record.continuous_value(*kind) {
            continuous[i] = Some(stats.standardize(*kind, v));
        }
    }
    Ok(EncodedTargets {
        classes,
        continuous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(degree: f64) -> CaseRecord {
        CaseRecord {
            case_id: "c".into(),
            diagnose: "Duane syndrome".into(),
            ahp_type: Some("tilt".into()),
            ahp_direction: Some("right".into()),
            eye: Some("left".into()),
            eye_misalignment: Some("esotropia".into()),
            ahp_degree: Some(degree),
            pd: Some(10.0),
            imputed: ImputedFlags::default(),
        }
    }

    #[test]
    fn categorical_round_trip() {
        let table = CategoryTable::default();
        for kind in TargetKind::CATEGORICAL {
            for (i, label) in table.classes(kind).to_vec().iter().enumerate() {
                assert_eq!(table.encode(kind, label).unwrap(), i);
                assert_eq!(table.decode(kind, i), label);
            }
        }
    }

    #[test]
    fn unknown_category_is_an_error() {
        let table = CategoryTable::default();
        assert!(matches!(
            table.encode(TargetKind::Eye, "middle"),
            Err(ClinicalError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn standardization_uses_population_std() {
        let records = [record(10.0), record(20.0), record(30.0)];
        let refs: Vec<&CaseRecord> = records.iter().collect();
        let stats = TargetStats::fit(&refs);
        let encoded: Vec<f64> = records
            .iter()
            .map(|r| stats.standardize(TargetKind::AhpDegree, r.ahp_degree.unwrap()))
            .collect();
        assert!((encoded[0] + 1.224744871391589).abs() < 1e-12);
        assert!(encoded[1].abs() < 1e-12);
        assert!((encoded[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn training_mean_maps_to_zero() {
        let records = [record(10.0), record(20.0), record(30.0)];
        let refs: Vec<&CaseRecord> = records.iter().collect();
        let stats = TargetStats::fit(&refs);
        assert_eq!(stats.standardize(TargetKind::AhpDegree, 20.0), 0.0);
    }

    #[test]
    fn standardized_training_split_has_zero_mean_unit_std() {
        let records: Vec<CaseRecord> = (0..50).map(|i| record(5.0 + 0.7 * i as f64)).collect();
        let refs: Vec<&CaseRecord> = records.iter().collect();
        let stats = TargetStats::fit(&refs);
        let z: Vec<f64> = records
            .iter()
            .map(|r| stats.standardize(TargetKind::AhpDegree, r.ahp_degree.unwrap()))
            .collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn record_json_uses_exact_target_keys() {
        let r = record(25.0);
        let json = serde_json::to_string(&r).unwrap();
        for key in [
            "\"Diagnose\"",
            "\"AHPType\"",
            "\"AHPDirection\"",
            "\"Eye\"",
            "\"EyeMisalignment\"",
            "\"AHPDegree\"",
            "\"PD\"",
            "\"imputed\"",
        ] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: CaseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn diagnose_is_never_imputed() {
        let mut flags = ImputedFlags::default();
        flags.set(TargetKind::Diagnose, true);
        assert!(!flags.get(TargetKind::Diagnose));
    }

    #[test]
    fn negative_degree_fails_validation() {
        let mut r = record(25.0);
        r.ahp_degree = Some(-1.0);
        assert!(r.validate(&CategoryTable::default()).is_err());
    }

    #[test]
    fn encode_targets_full_record() {
        let table = CategoryTable::default();
        let records = [record(10.0), record(20.0), record(30.0)];
        let refs: Vec<&CaseRecord> = records.iter().collect();
        let stats = TargetStats::fit(&refs);
        let enc = encode_targets(&records[1], &table, &stats).unwrap();
        assert_eq!(enc.class(TargetKind::Diagnose), Some(0));
        assert_eq!(enc.class(TargetKind::AhpType), Some(1));
        assert_eq!(enc.cont(TargetKind::AhpDegree), Some(0.0));
    }
}
