//! Domain-aware token masking and curriculum-controlled target masking.

use ahp_clinical::{CaseRecord, TargetKind, TokenSeq, MASK_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::schedule::Phase;

/// Token-level mask: input ids with masked positions replaced by the MASK id,
/// originals retained as reconstruction labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMask {
    pub input_ids: Vec<u32>,
    pub masked: Vec<bool>,
    pub original_ids: Vec<u32>,
}

impl TokenMask {
    pub fn masked_positions(&self) -> Vec<usize> {
        self.masked
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect()
    }
}

/// What the model sees for one target at the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetInput {
    /// Hidden: curriculum-masked or genuinely missing.
    Masked,
    /// Observed categorical label (encoded class index).
    Class(usize),
    /// Observed continuous value (standardized).
    Value(f64),
}

/// Mask plan for one example: the token part and the target part.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub tokens: TokenMask,
    pub target_masked: [bool; 7],
    pub phase: Phase,
}

impl MaskPlan {
    pub fn is_target_masked(&self, kind: TargetKind) -> bool {
        self.target_masked[kind.index()]
    }
}

/// Mask each clinical-term token with `clinical_rate` and every other token
/// with `general_rate`, independently. Masked positions are replaced by the
/// MASK id; the originals stay available as labels.
pub fn mask_tokens(
    seq: &TokenSeq,
    clinical_rate: f64,
    general_rate: f64,
    seed: u64,
) -> TokenMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input_ids = seq.ids.clone();
    let mut masked = vec![false; seq.ids.len()];
    for (i, flag) in masked.iter_mut().enumerate() {
        let p = if seq.is_clinical[i] {
            clinical_rate
        } else {
            general_rate
        };
        if rng.gen::<f64>() < p {
            *flag = true;
            input_ids[i] = MASK_ID;
        }
    }
    TokenMask {
        input_ids,
        masked,
        original_ids: seq.ids.clone(),
    }
}

/// Mask each originally-imputed target independently with `mask_rate`.
/// Diagnose and non-imputed targets are never masked.
pub fn mask_targets(record: &CaseRecord, mask_rate: f64, seed: u64) -> [bool; 7] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [false; 7];
    for kind in TargetKind::ALL {
        if kind == TargetKind::Diagnose || !record.is_imputed(kind) {
            continue;
        }
        if rng.gen::<f64>() < mask_rate {
            out[kind.index()] = true;
        }
    }
    out
}
