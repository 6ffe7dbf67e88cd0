//! Deployment-time record completion.

use std::collections::BTreeMap;

use ahp_clinical::{CaseRecord, ClinicalNote, TargetKind};
use serde::{Deserialize, Serialize};

use crate::error::ImputerError;
use crate::model::ImputerModel;
use crate::train::tokenize_for;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilledValue {
    pub filled_by: String,
    pub confidence: f64,
}

/// A completed record: missing targets filled by the model, present targets
/// passed through unchanged, with per-filled-field provenance and confidence
/// plus the dependency attention trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedRecord {
    pub record: CaseRecord,
    pub filled: BTreeMap<String, FilledValue>,
    pub alpha_trace: Vec<(String, f64)>,
    /// Model predictions for every target, reported alongside even when the
    /// field was already present.
    pub predictions: BTreeMap<String, serde_json::Value>,
}

/// Fill every missing target of `partial` from the note. Present targets are
/// never altered. Confidences are softmax probabilities for classes and the
/// training-split residual standard deviation for regressions.
pub fn impute_record(
    note: &ClinicalNote,
    partial: &CaseRecord,
    model: &ImputerModel,
) -> Result<CompletedRecord> {
    if partial.diagnose.trim().is_empty() {
        return Err(ImputerError::MissingDiagnose(partial.case_id.clone()));
    }
    let seq = tokenize_for(model, note);
    let prediction = model.predict(&seq, partial, true)?;

    let mut record = partial.clone();
    let mut filled = BTreeMap::new();
    let mut predictions = BTreeMap::new();

    for kind in TargetKind::ALL {
        if kind.is_categorical() {
            let Some(class) = prediction.class(kind) else {
                continue;
            };
            let label = model.arch.table.decode(kind, class).to_string();
            let confidence = prediction.class_probs(kind).map(|p| p[class]).unwrap_or(0.0);
            predictions.insert(
                kind.name().to_string(),
                serde_json::json!({ "label": label, "probability": confidence }),
            );
            if record.categorical_value(kind).is_none() {
                match kind {
                    TargetKind::AhpType => record.ahp_type = Some(label.clone()),
                    TargetKind::AhpDirection => record.ahp_direction = Some(label.clone()),
                    TargetKind::Eye => record.eye = Some(label.clone()),
                    TargetKind::EyeMisalignment => record.eye_misalignment = Some(label.clone()),
                    _ => {}
                }
                filled.insert(
                    kind.name().to_string(),
                    FilledValue {
                        filled_by: "model".into(),
                        confidence,
                    },
                );
            }
        } else {
            let Some(value) = prediction.regression_value(kind) else {
                continue;
            };
            let residual = model
                .arch
                .residual_std
                .as_ref()
                .and_then(|m| m.get(&kind).copied())
                .unwrap_or(0.0);
            predictions.insert(
                kind.name().to_string(),
                serde_json::json!({ "value": value, "residual_std": residual }),
            );
            if record.continuous_value(kind).is_none() {
                match kind {
                    TargetKind::AhpDegree => record.ahp_degree = Some(value),
                    TargetKind::Pd => record.pd = Some(value),
                    _ => {}
                }
                filled.insert(
                    kind.name().to_string(),
                    FilledValue {
                        filled_by: "model".into(),
                        confidence: residual,
                    },
                );
            }
        }
    }

    let alpha_trace = prediction
        .alpha
        .iter()
        .map(|((src, dst), a)| (format!("{}->{}", src.name(), dst.name()), *a))
        .collect();

    Ok(CompletedRecord {
        record,
        filled,
        alpha_trace,
        predictions,
    })
}
