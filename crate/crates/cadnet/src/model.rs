//! Model construction and the three fusion levels.
//!
//! The architecture ([`CadnetArch`]) is separated from the parameter values
//! ([`ParamStore`]): every forward method borrows the store explicitly, which
//! lets training own the store mutably and lets the finite-difference checker
//! perturb parameters while the architecture stays shared.

use ahp_clinical::{CategoryTable, TargetKind, TargetStats};
use ahp_nn::layers::{dropout, BatchNorm1d, LayerNorm, Linear, MultiHeadAttention, TrainCtx};
use ahp_nn::{Matrix, ParamId, ParamStore, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{FusionConfig, FusionMode};
use crate::error::CadnetError;
use crate::train::InputStats;
use crate::Result;

pub const EYE_RAW_LEN: usize = 94;
pub const HEAD_RAW_LEN: usize = 630;
pub const CLINICAL_RAW_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Eye,
    Head,
    Clinical,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Eye, Modality::Head, Modality::Clinical];

    pub fn name(&self) -> &'static str {
        match self {
            Modality::Eye => "eye",
            Modality::Head => "head",
            Modality::Clinical => "clinical",
        }
    }

    pub fn raw_len(&self) -> usize {
        match self {
            Modality::Eye => EYE_RAW_LEN,
            Modality::Head => HEAD_RAW_LEN,
            Modality::Clinical => CLINICAL_RAW_LEN,
        }
    }

    /// Anatomically meaningful token segments `(start, len)` of the raw
    /// vector: eye = per-side lids / iris+circle / misalignment, head = one
    /// per view, clinical = the five schema segments.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        match self {
            Modality::Eye => vec![(0, 32), (32, 13), (45, 2), (47, 32), (79, 13), (92, 2)],
            Modality::Head => (0..7).map(|i| (i * 90, 90)).collect(),
            Modality::Clinical => ahp_clinical::features::CLINICAL_SEGMENTS
                .iter()
                .map(|(_, start, end)| (*start, end - start))
                .collect(),
        }
    }

    pub fn intra_dim(&self, cfg: &FusionConfig) -> usize {
        match self {
            Modality::Eye => cfg.intra_dims.eye,
            Modality::Head => cfg.intra_dims.head,
            Modality::Clinical => cfg.intra_dims.clinical,
        }
    }

    fn enabled(&self, cfg: &FusionConfig) -> bool {
        match self {
            Modality::Eye => cfg.use_eye,
            Modality::Head => cfg.use_head,
            Modality::Clinical => cfg.use_clinical,
        }
    }
}

/// The streams entering global fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    ClinicalToEye,
    ClinicalToHead,
    EyeToHead,
    PureClinical,
    PureEye,
    PureHead,
}

impl StreamKind {
    pub fn name(&self) -> &'static str {
        match self {
            StreamKind::ClinicalToEye => "clinical_to_eye",
            StreamKind::ClinicalToHead => "clinical_to_head",
            StreamKind::EyeToHead => "eye_to_head",
            StreamKind::PureClinical => "pure_clinical",
            StreamKind::PureEye => "pure_eye",
            StreamKind::PureHead => "pure_head",
        }
    }

    pub fn is_cross(&self) -> bool {
        matches!(
            self,
            StreamKind::ClinicalToEye | StreamKind::ClinicalToHead | StreamKind::EyeToHead
        )
    }
}

struct IntraBlock {
    modality: Modality,
    segments: Vec<Linear>,
    positional: ParamId,
    attention: Option<MultiHeadAttention>,
    feedforward: Option<Linear>,
    norm: LayerNorm,
    gate_hidden: Linear,
    gate_out: Linear,
}

struct CrossBlock {
    kind: StreamKind,
    attention: MultiHeadAttention,
    relevance_hidden: Linear,
    relevance_out: Linear,
}

struct GlobalBlock {
    projections: Vec<(StreamKind, Linear)>,
    attention: MultiHeadAttention,
    attn_norm: LayerNorm,
    modality_weights: Linear,
    mlp_hidden: Linear,
    mlp_out: Linear,
    out_norm: LayerNorm,
}

struct TaskHead {
    kind: TargetKind,
    fc_in: Linear,
    bn: BatchNorm1d,
    fc_out: Linear,
}

enum Trunk {
    MultiLevel {
        intra: Vec<IntraBlock>,
        cross: Vec<CrossBlock>,
        global: GlobalBlock,
    },
    Early {
        fc1: Linear,
        fc2: Linear,
    },
    Late {
        per_modality: Vec<(Modality, Linear, Linear)>,
        merge: Linear,
    },
}

/// Tape handles for one encoded modality (Level 1 output).
pub struct ModalityStreamVars {
    pub modality: Modality,
    pub tokens: Var,
    pub pooled_pregate: Var,
    pub gate: Var,
    pub pooled: Var,
    pub attention_weights: Vec<Var>,
}

/// Tape handles for one cross-modal pathway (Level 2 output).
pub struct CrossStreamVars {
    pub kind: StreamKind,
    pub attended: Var,
    pub relevance: Var,
    pub pooled: Var,
}

/// Tape handles for global fusion (Level 3 output).
pub struct GlobalFusionVars {
    pub stream_kinds: Vec<StreamKind>,
    pub stream_projections: Vec<Var>,
    pub attended_streams: Var,
    pub alpha: Var,
    pub f_global: Var,
    pub f_enhanced: Var,
}

/// Trunk output for one case plus the diagnostic handles.
pub struct TrunkVars {
    pub f_enhanced: Var,
    pub alpha: Option<Var>,
    pub alpha_kinds: Vec<StreamKind>,
    pub relevance: Vec<(StreamKind, Var)>,
    pub gates: Vec<(Modality, Var)>,
    pub token_attention: Vec<(Modality, Vec<Var>)>,
}

/// Interpretability values captured during an eval forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub alpha: Vec<(StreamKind, f64)>,
    pub relevance: Vec<(StreamKind, f64)>,
    pub gates: Vec<(Modality, Vec<f64>)>,
    /// Mean attention weight received per token, per modality.
    pub token_attention: Vec<(Modality, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePrediction {
    pub case_id: String,
    /// `(target, argmax class index, class probabilities)`.
    pub classes: Vec<(TargetKind, usize, Vec<f64>)>,
    /// `(target, standardized prediction, de-standardized value)`.
    pub regressions: Vec<(TargetKind, f64, f64)>,
    pub diagnostics: Diagnostics,
}

impl CasePrediction {
    pub fn class(&self, kind: TargetKind) -> Option<usize> {
        self.classes
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|(_, c, _)| *c)
    }

    pub fn regression_std(&self, kind: TargetKind) -> Option<f64> {
        self.regressions
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|(_, s, _)| *s)
    }

    pub fn regression_value(&self, kind: TargetKind) -> Option<f64> {
        self.regressions
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|(_, _, v)| *v)
    }
}

/// Per-batch encoded targets for the multi-task loss.
#[derive(Debug, Clone, Default)]
pub struct BatchTargets {
    pub classes: Vec<(TargetKind, Vec<usize>)>,
    pub continuous: Vec<(TargetKind, Vec<f64>)>,
}

/// Architecture: layers and frozen preprocessing statistics. Parameter
/// values live in a separate [`ParamStore`].
pub struct CadnetArch {
    cfg: FusionConfig,
    table: CategoryTable,
    trunk: Trunk,
    heads: Vec<TaskHead>,
    pub input_stats: Option<InputStats>,
    pub target_stats: Option<TargetStats>,
}

impl CadnetArch {
    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn category_table(&self) -> &CategoryTable {
        &self.table
    }

    fn check_len(modality: Modality, raw: &[f64]) -> Result<()> {
        if raw.len() != modality.raw_len() {
            return Err(CadnetError::BadFeatureLength {
                modality: modality.name(),
                expected: modality.raw_len(),
                got: raw.len(),
            });
        }
        Ok(())
    }

    fn standardize(&self, modality: Modality, raw: &[f64]) -> Vec<f64> {
        match &self.input_stats {
            Some(stats) => stats.apply(modality, raw),
            None => raw.to_vec(),
        }
    }

    /// Level 1: project a raw modality vector into tokens, run intra-modal
    /// attention (or the ablation feed-forward), pool, and gate.
    pub fn intra_modal_encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        modality: Modality,
        raw: &[f64],
        ctx: &mut Option<TrainCtx>,
    ) -> Result<ModalityStreamVars> {
        Self::check_len(modality, raw)?;
        let block = match &self.trunk {
            Trunk::MultiLevel { intra, .. } => intra
                .iter()
                .find(|b| b.modality == modality)
                .ok_or_else(|| CadnetError::InvalidConfig(format!("{} disabled", modality.name()))),
            _ => Err(CadnetError::InvalidConfig(
                "intra_modal_encode requires multi-level mode".into(),
            )),
        }?;
        let std = self.standardize(modality, raw);

        let mut token_vars = Vec::with_capacity(block.segments.len());
        for (linear, (start, len)) in block.segments.iter().zip(modality.segments()) {
            let x = tape.constant(Matrix::row_vector(std[start..start + len].to_vec()));
            token_vars.push(linear.apply(tape, store, x)?);
        }
        let stacked = tape.concat_rows(&token_vars)?;
        let pos = tape.param(store, block.positional);
        let tokens_in = tape.add(stacked, pos)?;

        let (mixed, attention_weights) = match (&block.attention, &block.feedforward) {
            (Some(attn), _) => {
                let out = attn.apply(tape, store, tokens_in, tokens_in)?;
                (out.output, out.weights)
            }
            (None, Some(ff)) => {
                let h = ff.apply(tape, store, tokens_in)?;
                (tape.relu(h), Vec::new())
            }
            _ => unreachable!("block has attention or feedforward"),
        };
        let residual = tape.add(tokens_in, mixed)?;
        let normed = block.norm.apply(tape, store, residual)?;
        let tokens = dropout(tape, normed, self.cfg.dropout, ctx.as_mut());

        let pooled_pregate = tape.mean_rows(tokens);
        let h = block.gate_hidden.apply(tape, store, pooled_pregate)?;
        let h = tape.relu(h);
        let g = block.gate_out.apply(tape, store, h)?;
        let gate = tape.sigmoid(g);
        let pooled = tape.hadamard(pooled_pregate, gate)?;

        Ok(ModalityStreamVars {
            modality,
            tokens,
            pooled_pregate,
            gate,
            pooled,
            attention_weights,
        })
    }

    /// Level 2: gated cross-modal attention. The relevance score is a
    /// sigmoid feed-forward over each query token concatenated with the mean
    /// key token; it scales the attended rows.
    pub fn cross_modal_attend(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        kind: StreamKind,
        query: &ModalityStreamVars,
        key: &ModalityStreamVars,
        ctx: &mut Option<TrainCtx>,
    ) -> Result<CrossStreamVars> {
        let block = match &self.trunk {
            Trunk::MultiLevel { cross, .. } => cross
                .iter()
                .find(|b| b.kind == kind)
                .ok_or_else(|| CadnetError::InvalidConfig(format!("no {} pathway", kind.name()))),
            _ => Err(CadnetError::InvalidConfig(
                "cross_modal_attend requires multi-level mode".into(),
            )),
        }?;
        let out = block
            .attention
            .apply(tape, store, query.tokens, key.tokens)?;

        let n_q = tape.value(query.tokens).rows();
        let mean_k = tape.mean_rows(key.tokens);
        let ones = tape.constant(Matrix::filled(n_q, 1, 1.0));
        let repeated = tape.matmul(ones, mean_k)?;
        let qk = tape.concat_cols(&[query.tokens, repeated])?;
        let h = block.relevance_hidden.apply(tape, store, qk)?;
        let h = tape.relu(h);
        let r = block.relevance_out.apply(tape, store, h)?;
        let relevance = tape.sigmoid(r);

        let scaled = tape.mul_col(out.output, relevance)?;
        let attended = dropout(tape, scaled, self.cfg.dropout, ctx.as_mut());
        let pooled = tape.mean_rows(attended);
        Ok(CrossStreamVars {
            kind,
            attended,
            relevance,
            pooled,
        })
    }

    /// Level 3: project every stream to the global dimension, model
    /// inter-stream dependencies with attention, combine with the learned
    /// softmax weights, and enhance with the clinical context.
    pub fn global_fuse(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        streams: &[(StreamKind, Var)],
        ctx: &mut Option<TrainCtx>,
    ) -> Result<GlobalFusionVars> {
        let block = match &self.trunk {
            Trunk::MultiLevel { global, .. } => global,
            _ => {
                return Err(CadnetError::InvalidConfig(
                    "global_fuse requires multi-level mode".into(),
                ))
            }
        };
        let mut kinds = Vec::new();
        let mut projected = Vec::new();
        for (kind, proj) in &block.projections {
            let (_, var) = streams
                .iter()
                .find(|(k, _)| k == kind)
                .ok_or_else(|| {
                    CadnetError::InvalidConfig(format!("missing stream {}", kind.name()))
                })?;
            kinds.push(*kind);
            projected.push(proj.apply(tape, store, *var)?);
        }

        let stacked = tape.concat_rows(&projected)?;
        let attn_out = block.attention.apply(tape, store, stacked, stacked)?;
        let residual = tape.add(stacked, attn_out.output)?;
        let attended_streams = block.attn_norm.apply(tape, store, residual)?;

        let concat = tape.concat_cols(&projected)?;
        let logits = block.modality_weights.apply(tape, store, concat)?;
        let alpha = tape.softmax_rows(logits);
        let f_global = tape.matmul(alpha, attended_streams)?;

        let clinical_idx = kinds
            .iter()
            .position(|k| *k == StreamKind::PureClinical)
            .unwrap_or(0);
        let f_clinical = projected[clinical_idx];
        let cat = tape.concat_cols(&[f_global, f_clinical])?;
        let h = block.mlp_hidden.apply(tape, store, cat)?;
        let h = tape.relu(h);
        let h = dropout(tape, h, self.cfg.dropout, ctx.as_mut());
        let m = block.mlp_out.apply(tape, store, h)?;
        let pre_norm = tape.add(m, f_global)?;
        let f_enhanced = block.out_norm.apply(tape, store, pre_norm)?;

        Ok(GlobalFusionVars {
            stream_kinds: kinds,
            stream_projections: projected,
            attended_streams,
            alpha,
            f_global,
            f_enhanced,
        })
    }

    /// Full trunk for one case: raw modality vectors to `f_enhanced`.
    pub fn trunk_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        eye: &[f64],
        head: &[f64],
        clinical: &[f64],
        ctx: &mut Option<TrainCtx>,
    ) -> Result<TrunkVars> {
        match &self.trunk {
            Trunk::MultiLevel { cross, .. } => {
                let mut encoded: Vec<ModalityStreamVars> = Vec::new();
                for modality in Modality::ALL {
                    if !modality.enabled(&self.cfg) {
                        continue;
                    }
                    let raw = match modality {
                        Modality::Eye => eye,
                        Modality::Head => head,
                        Modality::Clinical => clinical,
                    };
                    encoded.push(self.intra_modal_encode(tape, store, modality, raw, ctx)?);
                }
                let by_modality = |m: Modality| encoded.iter().find(|e| e.modality == m);

                let mut streams: Vec<(StreamKind, Var)> = Vec::new();
                let mut relevance = Vec::new();
                let cross_kinds: Vec<StreamKind> = cross.iter().map(|c| c.kind).collect();
                for kind in cross_kinds {
                    let (qm, km) = match kind {
                        StreamKind::ClinicalToEye => (Modality::Clinical, Modality::Eye),
                        StreamKind::ClinicalToHead => (Modality::Clinical, Modality::Head),
                        StreamKind::EyeToHead => (Modality::Eye, Modality::Head),
                        _ => unreachable!(),
                    };
                    let q = by_modality(qm).expect("query modality encoded");
                    let k = by_modality(km).expect("key modality encoded");
                    let out = self.cross_modal_attend(tape, store, kind, q, k, ctx)?;
                    relevance.push((kind, out.relevance));
                    streams.push((kind, out.pooled));
                }
                if self.cfg.use_clinical {
                    let clin = by_modality(Modality::Clinical).expect("clinical encoded");
                    streams.push((StreamKind::PureClinical, clin.pooled));
                } else {
                    if let Some(e) = by_modality(Modality::Eye) {
                        streams.push((StreamKind::PureEye, e.pooled));
                    }
                    if let Some(h) = by_modality(Modality::Head) {
                        streams.push((StreamKind::PureHead, h.pooled));
                    }
                }
                let fused = self.global_fuse(tape, store, &streams, ctx)?;
                Ok(TrunkVars {
                    f_enhanced: fused.f_enhanced,
                    alpha: Some(fused.alpha),
                    alpha_kinds: fused.stream_kinds,
                    relevance,
                    gates: encoded.iter().map(|e| (e.modality, e.gate)).collect(),
                    token_attention: encoded
                        .iter()
                        .map(|e| (e.modality, e.attention_weights.clone()))
                        .collect(),
                })
            }
            Trunk::Early { fc1, fc2 } => {
                let mut raw = Vec::new();
                for modality in Modality::ALL {
                    if !modality.enabled(&self.cfg) {
                        continue;
                    }
                    let values = match modality {
                        Modality::Eye => eye,
                        Modality::Head => head,
                        Modality::Clinical => clinical,
                    };
                    Self::check_len(modality, values)?;
                    raw.extend(self.standardize(modality, values));
                }
                let x = tape.constant(Matrix::row_vector(raw));
                let h = fc1.apply(tape, store, x)?;
                let h = tape.relu(h);
                let h = dropout(tape, h, self.cfg.dropout, ctx.as_mut());
                let out = fc2.apply(tape, store, h)?;
                let f = tape.relu(out);
                Ok(TrunkVars {
                    f_enhanced: f,
                    alpha: None,
                    alpha_kinds: Vec::new(),
                    relevance: Vec::new(),
                    gates: Vec::new(),
                    token_attention: Vec::new(),
                })
            }
            Trunk::Late {
                per_modality,
                merge,
            } => {
                let mut parts = Vec::new();
                for (modality, fc1, fc2) in per_modality {
                    let values = match modality {
                        Modality::Eye => eye,
                        Modality::Head => head,
                        Modality::Clinical => clinical,
                    };
                    Self::check_len(*modality, values)?;
                    let std = self.standardize(*modality, values);
                    let x = tape.constant(Matrix::row_vector(std));
                    let h = fc1.apply(tape, store, x)?;
                    let h = tape.relu(h);
                    let h = fc2.apply(tape, store, h)?;
                    parts.push(tape.relu(h));
                }
                let cat = tape.concat_cols(&parts)?;
                let cat = dropout(tape, cat, self.cfg.dropout, ctx.as_mut());
                let f = merge.apply(tape, store, cat)?;
                Ok(TrunkVars {
                    f_enhanced: f,
                    alpha: None,
                    alpha_kinds: Vec::new(),
                    relevance: Vec::new(),
                    gates: Vec::new(),
                    token_attention: Vec::new(),
                })
            }
        }
    }

    /// Task heads over a stacked batch (rows = cases) in training mode;
    /// batch normalization uses batch statistics and may update the running
    /// buffers.
    pub fn heads_forward_train(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        batch: Var,
        update_running: bool,
        ctx: &mut Option<TrainCtx>,
    ) -> Result<Vec<(TargetKind, Var)>> {
        self.heads
            .iter()
            .map(|head| {
                let h = head.fc_in.apply(tape, store, batch)?;
                let h = head.bn.apply_train(tape, store, h, update_running)?;
                let h = tape.relu(h);
                let h = dropout(tape, h, self.cfg.dropout, ctx.as_mut());
                let logits = head.fc_out.apply(tape, store, h)?;
                Ok((head.kind, logits))
            })
            .collect()
    }

    /// Task heads in eval mode: running statistics, no dropout.
    pub fn heads_forward_eval(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: Var,
    ) -> Result<Vec<(TargetKind, Var)>> {
        self.heads
            .iter()
            .map(|head| {
                let h = head.fc_in.apply(tape, store, batch)?;
                let h = head.bn.apply_eval(tape, store, h)?;
                let h = tape.relu(h);
                let logits = head.fc_out.apply(tape, store, h)?;
                Ok((head.kind, logits))
            })
            .collect()
    }

    /// Unweighted sum of five cross-entropies and two MSE losses; also
    /// returns the per-task loss handles.
    pub fn multitask_loss(
        &self,
        tape: &mut Tape,
        preds: &[(TargetKind, Var)],
        targets: &BatchTargets,
    ) -> Result<(Var, Vec<(TargetKind, Var)>)> {
        let mut components = Vec::with_capacity(preds.len());
        let mut total: Option<Var> = None;
        for (kind, var) in preds {
            let loss = if kind.is_categorical() {
                let labels = &targets
                    .classes
                    .iter()
                    .find(|(k, _)| k == kind)
                    .ok_or(CadnetError::MissingTarget {
                        case_id: "batch".into(),
                        target: kind.name(),
                    })?
                    .1;
                tape.cross_entropy(*var, labels)?
            } else {
                let values = &targets
                    .continuous
                    .iter()
                    .find(|(k, _)| k == kind)
                    .ok_or(CadnetError::MissingTarget {
                        case_id: "batch".into(),
                        target: kind.name(),
                    })?
                    .1;
                let target =
                    Matrix::from_vec(values.len(), 1, values.clone()).map_err(CadnetError::Nn)?;
                tape.mse(*var, target)?
            };
            components.push((*kind, loss));
            total = Some(match total {
                Some(t) => tape.add(t, loss)?,
                None => loss,
            });
        }
        Ok((total.expect("at least one task"), components))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CadnetMeta {
    pub fusion: FusionConfig,
    pub table: CategoryTable,
    pub input_stats: Option<InputStats>,
    pub target_stats: Option<TargetStats>,
    pub steps_trained: u64,
    pub seed: u64,
}

pub struct CadnetModel {
    pub arch: CadnetArch,
    pub store: ParamStore,
    pub steps_trained: u64,
    seed: u64,
}

impl CadnetModel {
    pub fn new(cfg: FusionConfig, table: CategoryTable, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = build_trunk(&cfg, &mut store, &mut rng)?;
        let heads = build_heads(&cfg, &table, &mut store, &mut rng)?;
        Ok(CadnetModel {
            arch: CadnetArch {
                cfg,
                table,
                trunk,
                heads,
                input_stats: None,
                target_stats: None,
            },
            store,
            steps_trained: 0,
            seed,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        self.arch.config()
    }

    pub fn category_table(&self) -> &CategoryTable {
        self.arch.category_table()
    }

    pub fn target_stats(&self) -> Option<&TargetStats> {
        self.arch.target_stats.as_ref()
    }

    pub fn input_stats(&self) -> Option<&InputStats> {
        self.arch.input_stats.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    /// Eval-mode prediction for one case with interpretability diagnostics.
    pub fn predict(
        &self,
        case_id: &str,
        eye: &[f64],
        head: &[f64],
        clinical: &[f64],
    ) -> Result<CasePrediction> {
        let mut tape = Tape::new();
        let mut ctx = None;
        let trunk = self
            .arch
            .trunk_forward(&mut tape, &self.store, eye, head, clinical, &mut ctx)?;
        let preds = self
            .arch
            .heads_forward_eval(&mut tape, &self.store, trunk.f_enhanced)?;

        let mut classes = Vec::new();
        let mut regressions = Vec::new();
        for (kind, var) in preds {
            if kind.is_categorical() {
                let logits = tape.value(var).row(0).to_vec();
                let probs = softmax(&logits);
                let argmax = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                classes.push((kind, argmax, probs));
            } else {
                let standardized = tape.value(var).get(0, 0);
                let value = match &self.arch.target_stats {
                    Some(stats) => stats.destandardize(kind, standardized),
                    None => standardized,
                };
                regressions.push((kind, standardized, value));
            }
        }

        let alpha = match trunk.alpha {
            Some(var) => {
                let values = tape.value(var).row(0).to_vec();
                trunk.alpha_kinds.iter().copied().zip(values).collect()
            }
            None => Vec::new(),
        };
        let relevance = trunk
            .relevance
            .iter()
            .map(|(kind, var)| {
                let m = tape.value(*var);
                let mean = m.data().iter().sum::<f64>() / m.len() as f64;
                (*kind, mean)
            })
            .collect();
        let gates = trunk
            .gates
            .iter()
            .map(|(m, var)| (*m, tape.value(*var).row(0).to_vec()))
            .collect();
        let token_attention = trunk
            .token_attention
            .iter()
            .map(|(m, weight_vars)| (*m, mean_attention_received(&tape, weight_vars)))
            .collect();

        Ok(CasePrediction {
            case_id: case_id.to_string(),
            classes,
            regressions,
            diagnostics: Diagnostics {
                alpha,
                relevance,
                gates,
                token_attention,
            },
        })
    }

    /// Mean absolute projection weight per raw input feature of a modality
    /// (multi-level mode), used for attention-based feature importance.
    pub fn input_feature_weights(&self, modality: Modality) -> Result<Vec<f64>> {
        let block = match &self.arch.trunk {
            Trunk::MultiLevel { intra, .. } => intra
                .iter()
                .find(|b| b.modality == modality)
                .ok_or_else(|| CadnetError::InvalidConfig(format!("{} disabled", modality.name()))),
            _ => Err(CadnetError::InvalidConfig(
                "feature weights require multi-level mode".into(),
            )),
        }?;
        let mut out = vec![0.0; modality.raw_len()];
        for (linear, (start, len)) in block.segments.iter().zip(modality.segments()) {
            let w = self.store.value(linear.w);
            for row in 0..len {
                let sum: f64 = (0..w.cols()).map(|c| w.get(row, c).abs()).sum();
                out[start + row] = sum / w.cols() as f64;
            }
        }
        Ok(out)
    }

    pub fn save(&self) -> (String, String) {
        let params = self.store.save_checkpoint().to_json();
        let meta = CadnetMeta {
            fusion: self.arch.cfg.clone(),
            table: self.arch.table.clone(),
            input_stats: self.arch.input_stats.clone(),
            target_stats: self.arch.target_stats.clone(),
            steps_trained: self.steps_trained,
            seed: self.seed,
        };
        let meta_json = serde_json::to_string(&meta).expect("meta serializes");
        (params, meta_json)
    }

    pub fn load(params_json: &str, meta_json: &str) -> Result<Self> {
        let meta: CadnetMeta =
            serde_json::from_str(meta_json).map_err(|e| CadnetError::Checkpoint(e.to_string()))?;
        let mut model = CadnetModel::new(meta.fusion, meta.table, meta.seed)?;
        let file =
            ahp_nn::param::CheckpointFile::from_json(params_json).map_err(CadnetError::Nn)?;
        model.store.load_checkpoint(&file)?;
        model.arch.input_stats = meta.input_stats;
        model.arch.target_stats = meta.target_stats;
        model.steps_trained = meta.steps_trained;
        Ok(model)
    }
}

fn build_trunk(
    cfg: &FusionConfig,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<Trunk> {
    let enabled: Vec<Modality> = Modality::ALL
        .iter()
        .copied()
        .filter(|m| m.enabled(cfg))
        .collect();
    match cfg.mode {
        FusionMode::MultiLevel => {
            let mut intra = Vec::new();
            for &modality in &enabled {
                let dim = modality.intra_dim(cfg);
                let name = format!("intra.{}", modality.name());
                let segments = modality
                    .segments()
                    .iter()
                    .enumerate()
                    .map(|(i, (_, len))| {
                        Linear::new(store, &format!("{name}.seg{i}"), *len, dim, rng)
                    })
                    .collect::<ahp_nn::Result<Vec<_>>>()?;
                let n_tokens = modality.segments().len();
                let positional = store.add_param(
                    &format!("{name}.pos"),
                    ahp_nn::layers::xavier_uniform(n_tokens, dim, rng),
                )?;
                let (attention, feedforward) = if cfg.intra_attention {
                    (
                        Some(MultiHeadAttention::new(
                            store,
                            &format!("{name}.attn"),
                            dim,
                            dim,
                            dim,
                            cfg.heads,
                            rng,
                        )?),
                        None,
                    )
                } else {
                    (
                        None,
                        Some(Linear::new(store, &format!("{name}.ff"), dim, dim, rng)?),
                    )
                };
                intra.push(IntraBlock {
                    modality,
                    segments,
                    positional,
                    attention,
                    feedforward,
                    norm: LayerNorm::new(store, &format!("{name}.ln"), dim)?,
                    gate_hidden: Linear::new(store, &format!("{name}.gate1"), dim, dim, rng)?,
                    gate_out: Linear::new(store, &format!("{name}.gate2"), dim, dim, rng)?,
                });
            }

            let mut cross = Vec::new();
            let pairs = [
                (StreamKind::ClinicalToEye, Modality::Clinical, Modality::Eye),
                (StreamKind::ClinicalToHead, Modality::Clinical, Modality::Head),
                (StreamKind::EyeToHead, Modality::Eye, Modality::Head),
            ];
            for (kind, q, k) in pairs {
                if !(q.enabled(cfg) && k.enabled(cfg)) {
                    continue;
                }
                let name = format!("cross.{}", kind.name());
                let dq = q.intra_dim(cfg);
                let dk = k.intra_dim(cfg);
                cross.push(CrossBlock {
                    kind,
                    attention: MultiHeadAttention::new(
                        store,
                        &format!("{name}.attn"),
                        dq,
                        dk,
                        cfg.cross_dim,
                        cfg.heads,
                        rng,
                    )?,
                    relevance_hidden: Linear::new(
                        store,
                        &format!("{name}.rel1"),
                        dq + dk,
                        cfg.cross_dim,
                        rng,
                    )?,
                    relevance_out: Linear::new(
                        store,
                        &format!("{name}.rel2"),
                        cfg.cross_dim,
                        1,
                        rng,
                    )?,
                });
            }

            // streams entering global fusion: the cross pathways plus the
            // pure clinical vector (or the pure vectors of whatever remains
            // when clinical is ablated)
            let mut stream_dims: Vec<(StreamKind, usize)> =
                cross.iter().map(|c| (c.kind, cfg.cross_dim)).collect();
            if cfg.use_clinical {
                stream_dims.push((StreamKind::PureClinical, cfg.intra_dims.clinical));
            } else {
                if cfg.use_eye {
                    stream_dims.push((StreamKind::PureEye, cfg.intra_dims.eye));
                }
                if cfg.use_head {
                    stream_dims.push((StreamKind::PureHead, cfg.intra_dims.head));
                }
            }

            let projections = stream_dims
                .iter()
                .map(|(kind, dim)| {
                    Linear::new(
                        store,
                        &format!("global.proj.{}", kind.name()),
                        *dim,
                        cfg.global_dim,
                        rng,
                    )
                    .map(|l| (*kind, l))
                })
                .collect::<ahp_nn::Result<Vec<_>>>()?;
            let m = projections.len();
            let global = GlobalBlock {
                projections,
                attention: MultiHeadAttention::new(
                    store,
                    "global.attn",
                    cfg.global_dim,
                    cfg.global_dim,
                    cfg.global_dim,
                    cfg.heads,
                    rng,
                )?,
                attn_norm: LayerNorm::new(store, "global.attn_ln", cfg.global_dim)?,
                modality_weights: Linear::new(store, "global.wmod", m * cfg.global_dim, m, rng)?,
                mlp_hidden: Linear::new(store, "global.mlp1", 2 * cfg.global_dim, cfg.global_dim, rng)?,
                mlp_out: Linear::new(store, "global.mlp2", cfg.global_dim, cfg.global_dim, rng)?,
                out_norm: LayerNorm::new(store, "global.ln", cfg.global_dim)?,
            };
            Ok(Trunk::MultiLevel {
                intra,
                cross,
                global,
            })
        }
        FusionMode::EarlyFusion => {
            let raw: usize = enabled.iter().map(|m| m.raw_len()).sum();
            Ok(Trunk::Early {
                fc1: Linear::new(store, "early.fc1", raw, 2 * cfg.global_dim, rng)?,
                fc2: Linear::new(store, "early.fc2", 2 * cfg.global_dim, cfg.global_dim, rng)?,
            })
        }
        FusionMode::LateFusion => {
            let per_modality = enabled
                .iter()
                .map(|&m| {
                    let name = format!("late.{}", m.name());
                    Ok((
                        m,
                        Linear::new(store, &format!("{name}.fc1"), m.raw_len(), cfg.global_dim, rng)?,
                        Linear::new(store, &format!("{name}.fc2"), cfg.global_dim, cfg.global_dim, rng)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let merge = Linear::new(
                store,
                "late.merge",
                per_modality.len() * cfg.global_dim,
                cfg.global_dim,
                rng,
            )?;
            Ok(Trunk::Late {
                per_modality,
                merge,
            })
        }
    }
}

fn build_heads(
    cfg: &FusionConfig,
    table: &CategoryTable,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TaskHead>> {
    TargetKind::ALL
        .iter()
        .map(|&kind| {
            let out = if kind.is_categorical() {
                table.class_count(kind)
            } else {
                1
            };
            let name = format!("head.{}", kind.name());
            Ok(TaskHead {
                kind,
                fc_in: Linear::new(store, &format!("{name}.fc1"), cfg.global_dim, cfg.head_hidden, rng)?,
                bn: BatchNorm1d::new(store, &format!("{name}.bn"), cfg.head_hidden)?,
                fc_out: Linear::new(store, &format!("{name}.fc2"), cfg.head_hidden, out, rng)?,
            })
        })
        .collect()
}

/// Mean attention weight received per key token across heads and queries.
fn mean_attention_received(tape: &Tape, weight_vars: &[Var]) -> Vec<f64> {
    if weight_vars.is_empty() {
        return Vec::new();
    }
    let first = tape.value(weight_vars[0]);
    let n_keys = first.cols();
    let mut received = vec![0.0; n_keys];
    let mut count = 0usize;
    for var in weight_vars {
        let m = tape.value(*var);
        for row in 0..m.rows() {
            for (j, &w) in m.row(row).iter().enumerate() {
                received[j] += w;
            }
        }
        count += m.rows();
    }
    for r in received.iter_mut() {
        *r /= count as f64;
    }
    received
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
