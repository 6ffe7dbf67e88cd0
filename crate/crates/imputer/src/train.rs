//! Curriculum training: fresh mask plans every epoch, AdamW with the plateau
//! scheduler, validation at the full-masking deployment condition, and
//! curriculum-aware early stopping that cannot fire before the guaranteed
//! full-masking phase has run.

use std::collections::BTreeMap;

use ahp_clinical::{
    build_vocab, tokenize, CaseRecord, CategoryTable, ClinicalNote, ClinicalTermSet, TargetKind,
    TargetStats, TokenSeq,
};
use ahp_nn::layers::TrainCtx;
use ahp_nn::{AdamWConfig, PlateauScheduler, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ImputerError;
use crate::graph::DependencyGraph;
use crate::masking::{mask_targets, mask_tokens, MaskPlan, TokenMask};
use crate::model::{ImputerConfig, ImputerModel};
use crate::schedule::{CurriculumSchedule, Phase};
use crate::Result;

/// One training example: a note (original or augmented) with its case record.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteExample {
    pub note: ClinicalNote,
    pub record: CaseRecord,
}

#[derive(Debug, Clone, Default)]
pub struct ImputerDataset {
    pub train: Vec<NoteExample>,
    pub val: Vec<NoteExample>,
    pub test: Vec<NoteExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputerTrainConfig {
    pub schedule: CurriculumSchedule,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optim: AdamWConfig,
}

impl Default for ImputerTrainConfig {
    fn default() -> Self {
        ImputerTrainConfig {
            schedule: CurriculumSchedule::default(),
            early_stop_patience: 15,
            batch_size: 32,
            seed: 42,
            optim: AdamWConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputerEpochStats {
    pub epoch: usize,
    pub mask_rate: f64,
    pub phase: usize,
    pub train_loss: f64,
    pub val_diagnostic_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputerHistory {
    pub epochs: Vec<ImputerEpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub full_mask_epochs_seen: usize,
}

struct PreparedExample {
    seq: TokenSeq,
    record: CaseRecord,
}

fn prepare(
    examples: &[NoteExample],
    vocab: &ahp_clinical::Vocabulary,
    terms: &ClinicalTermSet,
) -> Vec<PreparedExample> {
    examples
        .iter()
        .map(|ex| PreparedExample {
            seq: tokenize(&ex.note, vocab, terms),
            record: ex.record.clone(),
        })
        .collect()
}

/// Per-case statistics: the same record backs every augmented variant, so
/// statistics are fitted on unique cases of the training split.
fn case_level_stats(examples: &[NoteExample]) -> TargetStats {
    let mut by_case: BTreeMap<&str, &CaseRecord> = BTreeMap::new();
    for ex in examples {
        by_case.entry(ex.record.case_id.as_str()).or_insert(&ex.record);
    }
    let records: Vec<&CaseRecord> = by_case.values().copied().collect();
    TargetStats::fit(&records)
}

fn splitmix(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Validation mask plan: no token masking, every imputed target masked
/// (the deployment condition of the final curriculum phase).
fn validation_plan(seq: &TokenSeq, record: &CaseRecord) -> MaskPlan {
    let mut target_masked = [false; 7];
    for kind in TargetKind::ALL {
        target_masked[kind.index()] = record.is_imputed(kind);
    }
    MaskPlan {
        tokens: TokenMask {
            input_ids: seq.ids.clone(),
            masked: vec![false; seq.ids.len()],
            original_ids: seq.ids.clone(),
        },
        target_masked,
        phase: Phase::FullMasking,
    }
}

fn validation_loss(model: &ImputerModel, prepared: &[PreparedExample]) -> Result<f64> {
    let losses: Vec<Result<Option<f64>>> = prepared
        .par_iter()
        .map(|ex| {
            let plan = validation_plan(&ex.seq, &ex.record);
            let input = model.arch.prepare_input(&plan, &ex.record)?;
            let mut tape = Tape::new();
            let mut ctx = None;
            let fwd = model.arch.forward(&mut tape, &model.store, &input, &mut ctx)?;
            let diag = model.arch.diagnostic_loss(&mut tape, &fwd.preds, &input)?;
            Ok(diag.map(|v| tape.scalar(v)))
        })
        .collect();
    let mut total = 0.0;
    let mut n = 0usize;
    for loss in losses {
        if let Some(v) = loss? {
            total += v;
            n += 1;
        }
    }
    Ok(if n == 0 { f64::INFINITY } else { total / n as f64 })
}

/// Train the imputation model on a 60/20/20 note corpus. The vocabulary is
/// built from the training notes; target statistics come from the unique
/// training cases. Early stopping cannot take effect before the schedule's
/// full-masking epochs have all run at rate 1.0.
pub fn train_imputer(
    data: &ImputerDataset,
    model_cfg: &ImputerConfig,
    table: &CategoryTable,
    graph: &DependencyGraph,
    terms: &ClinicalTermSet,
    term_strings: &[String],
    cfg: &ImputerTrainConfig,
) -> Result<(ImputerModel, ImputerHistory)> {
    if data.train.is_empty() {
        return Err(ImputerError::EmptySplit("train"));
    }
    if data.val.is_empty() {
        return Err(ImputerError::EmptySplit("validation"));
    }
    cfg.schedule.validate()?;

    let train_notes: Vec<ClinicalNote> = data.train.iter().map(|e| e.note.clone()).collect();
    let vocab = build_vocab(&train_notes, model_cfg.min_count)?;
    let mut model = ImputerModel::new(
        model_cfg.clone(),
        table.clone(),
        graph.clone(),
        vocab,
        term_strings.to_vec(),
        cfg.seed,
    )?;
    model.arch.target_stats = Some(case_level_stats(&data.train));

    let train = prepare(&data.train, &model.arch.vocab, terms);
    let val = prepare(&data.val, &model.arch.vocab, terms);

    let mut scheduler = PlateauScheduler::from_config(&cfg.optim);
    let mut history = ImputerHistory {
        best_val_loss: f64::INFINITY,
        ..ImputerHistory::default()
    };
    let mut best: Option<(ahp_nn::param::CheckpointFile, u64)> = None;
    let mut bad_epochs = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.schedule.total_epochs {
        let rate = cfg.schedule.rate(epoch)?;
        let phase = cfg.schedule.phase(epoch)?;
        if rate >= 1.0 {
            history.full_mask_epochs_seen += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ (epoch as u64) << 1));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut contributing = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            // per-note graphs are independent; gradients merge in note order
            let results: Vec<Result<(usize, Option<(ahp_nn::Gradients, f64)>)>> = chunk
                .par_iter()
                .map(|&idx| {
                    let ex = &train[idx];
                    let plan_seed = splitmix(
                        cfg.seed ^ splitmix(epoch as u64) ^ (idx as u64).wrapping_mul(0x517c_c1b7),
                    );
                    let tokens = mask_tokens(
                        &ex.seq,
                        model.arch.cfg.clinical_mask_rate,
                        model.arch.cfg.general_mask_rate,
                        plan_seed,
                    );
                    let target_masked = mask_targets(&ex.record, rate, splitmix(plan_seed));
                    let plan = MaskPlan {
                        tokens,
                        target_masked,
                        phase,
                    };
                    let input = model.arch.prepare_input(&plan, &ex.record)?;
                    let mut tape = Tape::new();
                    let mut ctx = Some(TrainCtx::new(splitmix(plan_seed ^ 0xabcd)));
                    let fwd = model
                        .arch
                        .forward(&mut tape, &model.store, &input, &mut ctx)?;
                    let diag = model.arch.diagnostic_loss(&mut tape, &fwd.preds, &input)?;
                    let total = model.arch.combine_losses(&mut tape, fwd.mlm_loss, diag)?;
                    match total {
                        Some(loss) => {
                            let scaled = tape.scale(loss, 1.0 / chunk.len() as f64);
                            let value = tape.scalar(loss);
                            let grads = tape.backward(scaled)?;
                            Ok((idx, Some((grads, value))))
                        }
                        None => Ok((idx, None)),
                    }
                })
                .collect();

            model.store.zero_grads();
            let mut any = false;
            for result in results {
                let (_, payload) = result?;
                if let Some((grads, value)) = payload {
                    model.store.accumulate(&grads)?;
                    epoch_loss += value;
                    contributing += 1;
                    any = true;
                }
            }
            if any {
                let lr = scheduler.lr();
                model.store.adamw_step(&cfg.optim, lr);
                model.steps_trained += 1;
            }
        }
        let train_loss = epoch_loss / contributing.max(1) as f64;

        let val_loss = validation_loss(&model, &val)?;
        let lr = scheduler.step(val_loss);
        history.epochs.push(ImputerEpochStats {
            epoch,
            mask_rate: rate,
            phase: phase.index(),
            train_loss,
            val_diagnostic_loss: val_loss,
            lr,
        });

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = Some((model.store.save_checkpoint(), model.steps_trained));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
        }
        // curriculum-aware stop: patience alone is not enough, the guaranteed
        // full-masking phase must have fully elapsed
        if bad_epochs >= cfg.early_stop_patience
            && history.full_mask_epochs_seen >= cfg.schedule.final_full_epochs
        {
            history.stopped_early = true;
            break;
        }
    }

    if let Some((checkpoint, steps)) = best {
        model.store.load_checkpoint(&checkpoint)?;
        model.steps_trained = steps;
    }

    // residual std of the regression targets on the training split, for
    // confidence reporting at imputation time
    let mut residual_std = BTreeMap::new();
    for kind in TargetKind::CONTINUOUS {
        let mut sq = 0.0;
        let mut n = 0usize;
        for ex in &train {
            if let Some(actual) = ex.record.continuous_value(kind) {
                let pred = model.predict(&ex.seq, &ex.record, true)?;
                if let Some(value) = pred.regression_value(kind) {
                    sq += (value - actual) * (value - actual);
                    n += 1;
                }
            }
        }
        residual_std.insert(kind, if n > 0 { (sq / n as f64).sqrt() } else { 0.0 });
    }
    model.arch.residual_std = Some(residual_std);

    Ok((model, history))
}

/// Tokenize a note with the model's own vocabulary and term set.
pub fn tokenize_for(model: &ImputerModel, note: &ClinicalNote) -> TokenSeq {
    let terms = model.arch.term_set();
    tokenize(note, &model.arch.vocab, &terms)
}
