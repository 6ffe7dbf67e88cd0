//! The imputation model: token+position embeddings, a compact transformer
//! encoder (drop-in stand-in for a pretrained biomedical encoder), an MLM
//! head over the vocabulary, a shared trunk, per-target embeddings with
//! dependency attention, and seven prediction heads.

use ahp_clinical::{
    CaseRecord, CategoryTable, ClinicalTermSet, TargetKind, TargetStats, TokenSeq, Vocabulary,
    CLS_ID,
};
use ahp_nn::layers::{dropout, LayerNorm, Linear, MultiHeadAttention, TrainCtx};
use ahp_nn::{Matrix, ParamId, ParamStore, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::ImputerError;
use crate::graph::DependencyGraph;
use crate::masking::{MaskPlan, TargetInput};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputerConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub trunk_dim: usize,
    pub target_dim: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub dependency_enabled: bool,
    /// Loss weight of the fully observed Diagnose target; others weigh 1.
    pub diagnose_weight: f64,
    pub clinical_mask_rate: f64,
    pub general_mask_rate: f64,
    pub mlm_weight: f64,
    pub diagnostic_weight: f64,
    pub min_count: usize,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        ImputerConfig {
            embed_dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 512,
            trunk_dim: 256,
            target_dim: 64,
            head_hidden: 32,
            dropout: 0.1,
            dependency_enabled: true,
            diagnose_weight: 2.0,
            clinical_mask_rate: 0.25,
            general_mask_rate: 0.10,
            mlm_weight: 0.2,
            diagnostic_weight: 0.8,
            min_count: 1,
        }
    }
}

impl ImputerConfig {
    /// Reduced configuration for finite-difference checks.
    pub fn tiny() -> Self {
        ImputerConfig {
            embed_dim: 8,
            layers: 1,
            heads: 2,
            ffn_dim: 16,
            max_len: 64,
            trunk_dim: 16,
            target_dim: 8,
            head_hidden: 8,
            dropout: 0.0,
            ..ImputerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ImputerError::InvalidConfig(m));
        if self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return err(format!(
                "embed_dim {} must be a positive multiple of {} heads",
                self.embed_dim, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        for (name, rate) in [
            ("clinical_mask_rate", self.clinical_mask_rate),
            ("general_mask_rate", self.general_mask_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return err(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if self.layers == 0 || self.max_len < 16 {
            return err("layers must be positive and max_len at least 16".into());
        }
        Ok(())
    }

    pub fn dep_weight(&self, kind: TargetKind) -> f64 {
        if kind == TargetKind::Diagnose {
            self.diagnose_weight
        } else {
            1.0
        }
    }
}

/// Weighted multi-objective combination of the reconstruction and diagnostic
/// losses.
pub fn total_loss(mlm: f64, diagnostic: f64, cfg: &ImputerConfig) -> f64 {
    cfg.mlm_weight * mlm + cfg.diagnostic_weight * diagnostic
}

/// The true (encoded) label of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelValue {
    Class(usize),
    Value(f64),
}

/// Everything the forward pass needs for one note.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteInput {
    /// Post-masking input ids (no CLS; it is prepended internally).
    pub token_ids: Vec<u32>,
    /// Indices into `token_ids` whose original id must be reconstructed.
    pub mlm_positions: Vec<usize>,
    pub mlm_labels: Vec<usize>,
    pub target_inputs: [TargetInput; 7],
    pub labels: [Option<LabelValue>; 7],
    pub imputed: [bool; 7],
    pub target_masked: [bool; 7],
}

struct EncoderLayer {
    attention: MultiHeadAttention,
    norm1: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    norm2: LayerNorm,
}

struct TargetBlock {
    kind: TargetKind,
    type_emb: ParamId,
    mask_emb: ParamId,
    /// Class table for categoricals, value direction for continuous.
    value_emb: ParamId,
    projection: Linear,
    head_in: Linear,
    head_out: Linear,
}

/// Architecture and frozen preprocessing state; parameters live in a
/// separate store.
pub struct ImputerArch {
    pub cfg: ImputerConfig,
    pub table: CategoryTable,
    pub graph: DependencyGraph,
    pub vocab: Vocabulary,
    pub terms: Vec<String>,
    pub target_stats: Option<TargetStats>,
    pub residual_std: Option<BTreeMap<TargetKind, f64>>,
    token_emb: ParamId,
    pos_emb: ParamId,
    encoder: Vec<EncoderLayer>,
    mlm_head: Linear,
    trunk_in: Linear,
    trunk_out: Linear,
    dependency: Linear,
    targets: Vec<TargetBlock>,
}

/// Tape handles from one forward pass.
pub struct NoteForward {
    pub pooled: Var,
    pub f_shared: Var,
    pub mlm_loss: Option<Var>,
    pub preds: Vec<(TargetKind, Var)>,
    pub target_features: Vec<(TargetKind, Var)>,
    pub alpha: Vec<((TargetKind, TargetKind), Var)>,
}

/// Eval-mode prediction with confidences and the dependency trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPrediction {
    pub case_id: String,
    pub classes: Vec<(TargetKind, usize, Vec<f64>)>,
    pub regressions: Vec<(TargetKind, f64, f64)>,
    pub alpha: Vec<((TargetKind, TargetKind), f64)>,
}

impl RecordPrediction {
    pub fn class(&self, kind: TargetKind) -> Option<usize> {
        self.classes
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|(_, c, _)| *c)
    }

    pub fn class_probs(&self, kind: TargetKind) -> Option<&[f64]> {
        self.classes
            .iter()
            .find(|(k, _, _)| *k == kind)
            .map(|(_, _, p)| p.as_slice())
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

impl ImputerArch {
    fn build(
        cfg: ImputerConfig,
        table: CategoryTable,
        graph: DependencyGraph,
        vocab: Vocabulary,
        terms: Vec<String>,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        graph.check_acyclic()?;
        let d = cfg.embed_dim;
        let token_emb = store.add_param(
            "embed.token",
            ahp_nn::layers::xavier_uniform(vocab.len(), d, rng),
        )?;
        let pos_emb = store.add_param(
            "embed.position",
            ahp_nn::layers::xavier_uniform(cfg.max_len, d, rng),
        )?;
        let encoder = (0..cfg.layers)
            .map(|i| {
                let name = format!("encoder.{i}");
                Ok(EncoderLayer {
                    attention: MultiHeadAttention::new(
                        store,
                        &format!("{name}.attn"),
                        d,
                        d,
                        d,
                        cfg.heads,
                        rng,
                    )?,
                    norm1: LayerNorm::new(store, &format!("{name}.ln1"), d)?,
                    ffn_in: Linear::new(store, &format!("{name}.ffn1"), d, cfg.ffn_dim, rng)?,
                    ffn_out: Linear::new(store, &format!("{name}.ffn2"), cfg.ffn_dim, d, rng)?,
                    norm2: LayerNorm::new(store, &format!("{name}.ln2"), d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mlm_head = Linear::new(store, "mlm.decoder", d, vocab.len(), rng)?;
        let trunk_in = Linear::new(store, "trunk.fc1", d, cfg.trunk_dim, rng)?;
        let trunk_out = Linear::new(store, "trunk.fc2", cfg.trunk_dim, cfg.trunk_dim, rng)?;
        let dependency = Linear::new(store, "dep.attn", 2 * cfg.target_dim, 1, rng)?;
        let targets = TargetKind::ALL
            .iter()
            .map(|&kind| {
                let name = format!("target.{}", kind.name());
                let value_rows = if kind.is_categorical() {
                    table.class_count(kind)
                } else {
                    1
                };
                let out_dim = if kind.is_categorical() {
                    table.class_count(kind)
                } else {
                    1
                };
                Ok(TargetBlock {
                    kind,
                    type_emb: store.add_param(
                        &format!("{name}.type"),
                        ahp_nn::layers::xavier_uniform(1, d, rng),
                    )?,
                    mask_emb: store.add_param(
                        &format!("{name}.mask"),
                        ahp_nn::layers::xavier_uniform(1, d, rng),
                    )?,
                    value_emb: store.add_param(
                        &format!("{name}.value"),
                        ahp_nn::layers::xavier_uniform(value_rows, d, rng),
                    )?,
                    projection: Linear::new(
                        store,
                        &format!("{name}.proj"),
                        cfg.trunk_dim,
                        cfg.target_dim,
                        rng,
                    )?,
                    head_in: Linear::new(
                        store,
                        &format!("{name}.head1"),
                        cfg.target_dim,
                        cfg.head_hidden,
                        rng,
                    )?,
                    head_out: Linear::new(
                        store,
                        &format!("{name}.head2"),
                        cfg.head_hidden,
                        out_dim,
                        rng,
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ImputerArch {
            cfg,
            table,
            graph,
            vocab,
            terms,
            target_stats: None,
            residual_std: None,
            token_emb,
            pos_emb,
            encoder,
            mlm_head,
            trunk_in,
            trunk_out,
            dependency,
            targets,
        })
    }

    pub fn term_set(&self) -> ClinicalTermSet {
        ClinicalTermSet::from_terms(&self.terms)
    }

    /// Assemble the forward input for one example under a mask plan.
    /// Observed targets enter as label embeddings; masked or missing targets
    /// enter as the per-target mask embedding.
    pub fn prepare_input(
        &self,
        plan: &MaskPlan,
        record: &CaseRecord,
    ) -> Result<NoteInput> {
        let stats = self
            .target_stats
            .as_ref()
            .ok_or_else(|| ImputerError::InvalidConfig("target stats not fitted".into()))?;
        let mut target_inputs = [TargetInput::Masked; 7];
        let mut labels: [Option<LabelValue>; 7] = [None; 7];
        let mut imputed = [false; 7];
        for kind in TargetKind::ALL {
            let i = kind.index();
            imputed[i] = record.is_imputed(kind);
            let label = if kind.is_categorical() {
                record
                    .categorical_value(kind)
                    .map(|v| self.table.encode(kind, v).map(LabelValue::Class))
                    .transpose()?
            } else {
                record
                    .continuous_value(kind)
                    .map(|v| LabelValue::Value(stats.standardize(kind, v)))
            };
            labels[i] = label;
            target_inputs[i] = if plan.target_masked[i] {
                TargetInput::Masked
            } else {
                match labels[i] {
                    Some(LabelValue::Class(c)) => TargetInput::Class(c),
                    Some(LabelValue::Value(v)) => TargetInput::Value(v),
                    None => TargetInput::Masked,
                }
            };
        }
        Ok(NoteInput {
            token_ids: plan.tokens.input_ids.clone(),
            mlm_positions: plan.tokens.masked_positions(),
            mlm_labels: plan
                .tokens
                .masked_positions()
                .iter()
                .map(|&p| plan.tokens.original_ids[p] as usize)
                .collect(),
            target_inputs,
            labels,
            imputed,
            target_masked: plan.target_masked,
        })
    }

    /// Encoder + MLM + trunk + dependency-enhanced heads for one note.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &NoteInput,
        ctx: &mut Option<TrainCtx>,
    ) -> Result<NoteForward> {
        let seq_len = 1 + input.token_ids.len() + 7;
        if seq_len > self.cfg.max_len {
            return Err(ImputerError::SequenceTooLong {
                len: seq_len,
                max: self.cfg.max_len,
            });
        }

        // [CLS] + note tokens, with positional embeddings
        let mut ids: Vec<usize> = Vec::with_capacity(1 + input.token_ids.len());
        ids.push(CLS_ID as usize);
        ids.extend(input.token_ids.iter().map(|&t| t as usize));
        let token_table = tape.param(store, self.token_emb);
        let tokens = tape.gather_rows(token_table, &ids)?;
        let pos_table = tape.param(store, self.pos_emb);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = tape.gather_rows(pos_table, &positions)?;
        let note_part = tape.add(tokens, pos)?;

        // seven target tokens: type embedding plus value/mask embedding
        let mut target_rows = Vec::with_capacity(7);
        for block in &self.targets {
            let type_emb = tape.param(store, block.type_emb);
            let value_part = match input.target_inputs[block.kind.index()] {
                TargetInput::Masked => tape.param(store, block.mask_emb),
                TargetInput::Class(c) => {
                    let table_var = tape.param(store, block.value_emb);
                    tape.gather_rows(table_var, &[c])?
                }
                TargetInput::Value(v) => {
                    let dir = tape.param(store, block.value_emb);
                    tape.scale(dir, v)
                }
            };
            target_rows.push(tape.add(type_emb, value_part)?);
        }
        let target_part = tape.concat_rows(&target_rows)?;
        let mut x = tape.concat_rows(&[note_part, target_part])?;
        x = dropout(tape, x, self.cfg.dropout, ctx.as_mut());

        for layer in &self.encoder {
            let attended = layer.attention.apply(tape, store, x, x)?;
            let a = dropout(tape, attended.output, self.cfg.dropout, ctx.as_mut());
            let res = tape.add(x, a)?;
            x = layer.norm1.apply(tape, store, res)?;
            let h = layer.ffn_in.apply(tape, store, x)?;
            let h = tape.relu(h);
            let h = dropout(tape, h, self.cfg.dropout, ctx.as_mut());
            let f = layer.ffn_out.apply(tape, store, h)?;
            let res = tape.add(x, f)?;
            x = layer.norm2.apply(tape, store, res)?;
        }

        let pooled = tape.gather_rows(x, &[0])?;

        let mlm_loss = if input.mlm_positions.is_empty() {
            None
        } else {
            let rows: Vec<usize> = input.mlm_positions.iter().map(|&p| p + 1).collect();
            let hidden = tape.gather_rows(x, &rows)?;
            let logits = self.mlm_head.apply(tape, store, hidden)?;
            Some(tape.cross_entropy(logits, &input.mlm_labels)?)
        };

        let h = self.trunk_in.apply(tape, store, pooled)?;
        let h = tape.relu(h);
        let h = dropout(tape, h, self.cfg.dropout, ctx.as_mut());
        let h = self.trunk_out.apply(tape, store, h)?;
        let h = tape.relu(h);
        let f_shared = dropout(tape, h, self.cfg.dropout, ctx.as_mut());

        let (target_features, alpha) = self.dependency_enhance(tape, store, f_shared)?;

        let mut preds = Vec::with_capacity(7);
        for (block, (_, enhanced)) in self.targets.iter().zip(target_features.iter()) {
            let h = block.head_in.apply(tape, store, *enhanced)?;
            let h = tape.relu(h);
            let h = dropout(tape, h, self.cfg.dropout, ctx.as_mut());
            let out = block.head_out.apply(tape, store, h)?;
            preds.push((block.kind, out));
        }

        Ok(NoteForward {
            pooled,
            f_shared,
            mlm_loss,
            preds,
            target_features,
            alpha,
        })
    }

    /// Per-target embeddings of the shared representation, enhanced by
    /// sigmoid-weighted contributions from their dependency sources
    /// (one hop: sources contribute their pre-enhancement embeddings).
    pub fn dependency_enhance(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        f_shared: Var,
    ) -> Result<(Vec<(TargetKind, Var)>, Vec<((TargetKind, TargetKind), Var)>)> {
        let mut base: Vec<(TargetKind, Var)> = Vec::with_capacity(7);
        for block in &self.targets {
            base.push((block.kind, block.projection.apply(tape, store, f_shared)?));
        }
        if !self.cfg.dependency_enabled {
            return Ok((base, Vec::new()));
        }
        let feature_of = |kind: TargetKind, base: &[(TargetKind, Var)]| {
            base.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
        };
        let mut alpha = Vec::new();
        let mut enhanced = Vec::with_capacity(7);
        for block in &self.targets {
            let f_i = feature_of(block.kind, &base).expect("all targets projected");
            let mut acc = f_i;
            for source in self.graph.sources_of(block.kind) {
                let f_j = feature_of(source, &base).expect("all targets projected");
                let cat = tape.concat_cols(&[f_j, f_i])?;
                let logit = self.dependency.apply(tape, store, cat)?;
                let a = tape.sigmoid(logit);
                let scaled = tape.mul_col(f_j, a)?;
                acc = tape.add(acc, scaled)?;
                alpha.push(((source, block.kind), a));
            }
            enhanced.push((block.kind, acc));
        }
        Ok((enhanced, alpha))
    }

    /// The curriculum-gated diagnostic loss: only targets that are either
    /// originally complete or not masked in the current phase contribute,
    /// each weighted by its dependency weight; the mean is over contributing
    /// targets. `None` when nothing contributes.
    pub fn diagnostic_loss(
        &self,
        tape: &mut Tape,
        preds: &[(TargetKind, Var)],
        input: &NoteInput,
    ) -> Result<Option<Var>> {
        let mut terms: Vec<Var> = Vec::new();
        for (kind, pred) in preds {
            let i = kind.index();
            let contributing = !input.imputed[i] || !input.target_masked[i];
            if !contributing {
                continue;
            }
            let Some(label) = input.labels[i] else {
                continue;
            };
            let raw = match label {
                LabelValue::Class(c) => tape.cross_entropy(*pred, &[c])?,
                LabelValue::Value(v) => tape.mse(*pred, Matrix::from_vec(1, 1, vec![v])?)?,
            };
            terms.push(tape.scale(raw, self.cfg.dep_weight(*kind)));
        }
        if terms.is_empty() {
            return Ok(None);
        }
        let n = terms.len() as f64;
        let mut total = terms[0];
        for t in &terms[1..] {
            total = tape.add(total, *t)?;
        }
        Ok(Some(tape.scale(total, 1.0 / n)))
    }

    /// Weighted total loss on the tape. `None` when neither part exists.
    pub fn combine_losses(
        &self,
        tape: &mut Tape,
        mlm: Option<Var>,
        diagnostic: Option<Var>,
    ) -> Result<Option<Var>> {
        let mlm_part = mlm.map(|v| tape.scale(v, self.cfg.mlm_weight));
        let diag_part = diagnostic.map(|v| tape.scale(v, self.cfg.diagnostic_weight));
        Ok(match (mlm_part, diag_part) {
            (Some(a), Some(b)) => Some(tape.add(a, b)?),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputerMeta {
    pub cfg: ImputerConfig,
    pub table: CategoryTable,
    pub graph: DependencyGraph,
    pub vocab_tokens: Vec<String>,
    pub terms: Vec<String>,
    pub target_stats: Option<TargetStats>,
    pub residual_std: Option<BTreeMap<TargetKind, f64>>,
    pub steps_trained: u64,
    pub seed: u64,
}

pub struct ImputerModel {
    pub arch: ImputerArch,
    pub store: ParamStore,
    pub steps_trained: u64,
    seed: u64,
}

impl ImputerModel {
    pub fn new(
        cfg: ImputerConfig,
        table: CategoryTable,
        graph: DependencyGraph,
        vocab: Vocabulary,
        terms: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = ImputerArch::build(cfg, table, graph, vocab, terms, &mut store, &mut rng)?;
        Ok(ImputerModel {
            arch,
            store,
            steps_trained: 0,
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    /// Eval-mode forward for one record. When `mask_imputed_inputs` is set,
    /// every originally-imputed target enters masked (the full-masking
    /// deployment condition); otherwise observed values are visible.
    pub fn predict(
        &self,
        seq: &TokenSeq,
        record: &CaseRecord,
        mask_imputed_inputs: bool,
    ) -> Result<RecordPrediction> {
        let mut target_masked = [false; 7];
        if mask_imputed_inputs {
            for kind in TargetKind::ALL {
                target_masked[kind.index()] = record.is_imputed(kind);
            }
        }
        let plan = MaskPlan {
            tokens: crate::masking::TokenMask {
                input_ids: seq.ids.clone(),
                masked: vec![false; seq.ids.len()],
                original_ids: seq.ids.clone(),
            },
            target_masked,
            phase: crate::schedule::Phase::FullMasking,
        };
        let input = self.arch.prepare_input(&plan, record)?;
        let mut tape = Tape::new();
        let mut ctx = None;
        let fwd = self.arch.forward(&mut tape, &self.store, &input, &mut ctx)?;

        let mut classes = Vec::new();
        let mut regressions = Vec::new();
        for (kind, var) in &fwd.preds {
            if kind.is_categorical() {
                let logits = tape.value(*var).row(0).to_vec();
                let probs = softmax(&logits);
                let argmax = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                classes.push((*kind, argmax, probs));
            } else {
                let std_pred = tape.value(*var).get(0, 0);
                let value = match &self.arch.target_stats {
                    Some(stats) => stats.destandardize(*kind, std_pred).max(0.0),
                    None => std_pred,
                };
                regressions.push((*kind, std_pred, value));
            }
        }
        let alpha = fwd
            .alpha
            .iter()
            .map(|(edge, var)| (*edge, tape.value(*var).get(0, 0)))
            .collect();
        Ok(RecordPrediction {
            case_id: record.case_id.clone(),
            classes,
            regressions,
            alpha,
        })
    }

    pub fn save(&self) -> (String, String) {
        let params = self.store.save_checkpoint().to_json();
        let meta = ImputerMeta {
            cfg: self.arch.cfg.clone(),
            table: self.arch.table.clone(),
            graph: self.arch.graph.clone(),
            vocab_tokens: self.arch.vocab.tokens().to_vec(),
            terms: self.arch.terms.clone(),
            target_stats: self.arch.target_stats.clone(),
            residual_std: self.arch.residual_std.clone(),
            steps_trained: self.steps_trained,
            seed: self.seed,
        };
        (params, serde_json::to_string(&meta).expect("meta serializes"))
    }

    pub fn load(params_json: &str, meta_json: &str) -> Result<Self> {
        let meta: ImputerMeta = serde_json::from_str(meta_json)
            .map_err(|e| ImputerError::Checkpoint(e.to_string()))?;
        let vocab = Vocabulary::from_tokens(meta.vocab_tokens);
        let mut model = ImputerModel::new(
            meta.cfg,
            meta.table,
            meta.graph,
            vocab,
            meta.terms,
            meta.seed,
        )?;
        let file = ahp_nn::param::CheckpointFile::from_json(params_json).map_err(ImputerError::Nn)?;
        model.store.load_checkpoint(&file)?;
        model.arch.target_stats = meta.target_stats;
        model.arch.residual_std = meta.residual_std;
        model.steps_trained = meta.steps_trained;
        Ok(model)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
