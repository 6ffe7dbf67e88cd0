//! Dataset plumbing and the multi-task training loop: AdamW, plateau
//! scheduler, early stopping on validation loss, best-checkpoint restore.

use ahp_clinical::{encode_targets, CaseRecord, CategoryTable, EncodedTargets, TargetKind, TargetStats};
use ahp_nn::layers::TrainCtx;
use ahp_nn::{AdamWConfig, PlateauScheduler, Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CadnetError;
use crate::model::{CadnetModel, Modality};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFeatures {
    pub case_id: String,
    pub eye: Vec<f64>,
    pub head: Vec<f64>,
    pub clinical: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCase {
    pub features: CaseFeatures,
    pub record: CaseRecord,
}

#[derive(Debug, Clone, Default)]
pub struct SplitDataset {
    pub train: Vec<LabeledCase>,
    pub val: Vec<LabeledCase>,
    pub test: Vec<LabeledCase>,
}

/// Per-feature standardization statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub eye: (Vec<f64>, Vec<f64>),
    pub head: (Vec<f64>, Vec<f64>),
    pub clinical: (Vec<f64>, Vec<f64>),
}

impl InputStats {
    pub fn fit(cases: &[LabeledCase]) -> Self {
        let fit_one = |extract: &dyn Fn(&LabeledCase) -> &[f64], len: usize| {
            let n = cases.len() as f64;
            let mut mean = vec![0.0; len];
            for case in cases {
                for (m, v) in mean.iter_mut().zip(extract(case)) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= n;
            }
            let mut var = vec![0.0; len];
            for case in cases {
                for ((s, v), m) in var.iter_mut().zip(extract(case)).zip(mean.iter()) {
                    *s += (v - m) * (v - m);
                }
            }
            let std: Vec<f64> = var
                .iter()
                .map(|s| {
                    let sd = (s / n).sqrt();
                    if sd > 0.0 {
                        sd
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, std)
        };
        InputStats {
            eye: fit_one(&|c| &c.features.eye, 94),
            head: fit_one(&|c| &c.features.head, 630),
            clinical: fit_one(&|c| &c.features.clinical, 32),
        }
    }

    pub fn apply(&self, modality: Modality, raw: &[f64]) -> Vec<f64> {
        let (mean, std) = match modality {
            Modality::Eye => &self.eye,
            Modality::Head => &self.head,
            Modality::Clinical => &self.clinical,
        };
        raw.iter()
            .zip(mean.iter().zip(std.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optim: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            early_stop_patience: 15,
            batch_size: 32,
            seed: 42,
            optim: AdamWConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

struct EncodedCase {
    features: CaseFeatures,
    targets: EncodedTargets,
}

fn encode_cases(
    cases: &[LabeledCase],
    table: &CategoryTable,
    stats: &TargetStats,
) -> Result<Vec<EncodedCase>> {
    cases
        .iter()
        .map(|case| {
            let targets = encode_targets(&case.record, table, stats)?;
            for kind in TargetKind::ALL {
                let missing = if kind.is_categorical() {
                    targets.class(kind).is_none()
                } else {
                    targets.cont(kind).is_none()
                };
                if missing {
                    return Err(CadnetError::MissingTarget {
                        case_id: case.record.case_id.clone(),
                        target: kind.name(),
                    });
                }
            }
            Ok(EncodedCase {
                features: case.features.clone(),
                targets,
            })
        })
        .collect()
}

fn batch_targets(batch: &[&EncodedCase]) -> crate::model::BatchTargets {
    let mut out = crate::model::BatchTargets::default();
    for kind in TargetKind::CATEGORICAL {
        let labels = batch
            .iter()
            .map(|c| c.targets.class(kind).expect("validated"))
            .collect();
        out.classes.push((kind, labels));
    }
    for kind in TargetKind::CONTINUOUS {
        let values = batch
            .iter()
            .map(|c| c.targets.cont(kind).expect("validated"))
            .collect();
        out.continuous.push((kind, values));
    }
    out
}

fn batch_forward_train(
    model: &mut CadnetModel,
    batch: &[&EncodedCase],
    ctx: &mut Option<TrainCtx>,
    update_running: bool,
) -> Result<(Tape, Var)> {
    let mut tape = Tape::new();
    let mut enhanced = Vec::with_capacity(batch.len());
    let arch = &model.arch;
    for case in batch {
        let trunk = arch.trunk_forward(
            &mut tape,
            &model.store,
            &case.features.eye,
            &case.features.head,
            &case.features.clinical,
            ctx,
        )?;
        enhanced.push(trunk.f_enhanced);
    }
    let stacked = tape.concat_rows(&enhanced)?;
    let preds = arch.heads_forward_train(&mut tape, &mut model.store, stacked, update_running, ctx)?;
    let targets = batch_targets(batch);
    let (total, _) = arch.multitask_loss(&mut tape, &preds, &targets)?;
    Ok((tape, total))
}

fn eval_loss(model: &CadnetModel, cases: &[EncodedCase]) -> Result<f64> {
    if cases.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mut tape = Tape::new();
    let mut ctx = None;
    let mut enhanced = Vec::with_capacity(cases.len());
    for case in cases {
        let trunk = model.arch.trunk_forward(
            &mut tape,
            &model.store,
            &case.features.eye,
            &case.features.head,
            &case.features.clinical,
            &mut ctx,
        )?;
        enhanced.push(trunk.f_enhanced);
    }
    let stacked = tape.concat_rows(&enhanced)?;
    let preds = model.arch.heads_forward_eval(&mut tape, &model.store, stacked)?;
    let refs: Vec<&EncodedCase> = cases.iter().collect();
    let targets = batch_targets(&refs);
    let (total, _) = model.arch.multitask_loss(&mut tape, &preds, &targets)?;
    Ok(tape.scalar(total))
}

/// Train AHP-CADNet on a 70/15/15 split. Standardization statistics for
/// inputs and regression targets come from the training split only. The
/// best-validation checkpoint is restored into the returned model.
pub fn train_cadnet(
    data: &SplitDataset,
    fusion: &crate::config::FusionConfig,
    table: &CategoryTable,
    cfg: &TrainConfig,
) -> Result<(CadnetModel, TrainHistory)> {
    if data.train.is_empty() {
        return Err(CadnetError::EmptySplit("train"));
    }
    if data.val.is_empty() {
        return Err(CadnetError::EmptySplit("validation"));
    }

    let records: Vec<&CaseRecord> = data.train.iter().map(|c| &c.record).collect();
    let target_stats = TargetStats::fit(&records);
    let input_stats = InputStats::fit(&data.train);

    let mut model = CadnetModel::new(fusion.clone(), table.clone(), cfg.seed)?;
    model.arch.input_stats = Some(input_stats);
    model.arch.target_stats = Some(target_stats.clone());

    let train = encode_cases(&data.train, table, &target_stats)?;
    let val = encode_cases(&data.val, table, &target_stats)?;

    let mut scheduler = PlateauScheduler::from_config(&cfg.optim);
    let mut history = TrainHistory {
        best_val_loss: f64::INFINITY,
        ..TrainHistory::default()
    };
    let mut best: Option<(ahp_nn::param::CheckpointFile, u64)> = None;
    let mut bad_epochs = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37));
        order.shuffle(&mut rng);
        let mut ctx = Some(TrainCtx::new(
            cfg.seed ^ (epoch as u64).wrapping_mul(0x85eb_ca6b),
        ));

        let mut chunks: Vec<Vec<usize>> = order
            .chunks(cfg.batch_size.max(2))
            .map(|c| c.to_vec())
            .collect();
        // batch norm needs >= 2 rows; fold a trailing singleton into its neighbor
        if let Some(last) = chunks.last() {
            if last.len() == 1 && chunks.len() > 1 {
                let single = chunks.pop().expect("checked");
                chunks.last_mut().expect("non-empty").extend(single);
            }
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in &chunks {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&EncodedCase> = chunk.iter().map(|&i| &train[i]).collect();
            model.store.zero_grads();
            let (mut tape, loss) = batch_forward_train(&mut model, &batch, &mut ctx, true)?;
            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(CadnetError::Nn(ahp_nn::NnError::NonFinite("training loss")));
            }
            let grads = tape.backward(loss)?;
            model.store.accumulate(&grads)?;
            let lr = scheduler.lr();
            model.store.adamw_step(&cfg.optim, lr);
            model.steps_trained += 1;
            epoch_loss += loss_value;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;

        let val_loss = eval_loss(&model, &val)?;
        let lr = scheduler.step(val_loss);
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = Some((model.store.save_checkpoint(), model.steps_trained));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    if let Some((checkpoint, steps)) = best {
        model.store.load_checkpoint(&checkpoint)?;
        model.steps_trained = steps;
    }
    Ok((model, history))
}

/// Eval-mode predictions over a case list.
pub fn predict_cases(
    model: &CadnetModel,
    cases: &[LabeledCase],
) -> Result<Vec<crate::model::CasePrediction>> {
    cases
        .iter()
        .map(|c| {
            model.predict(
                &c.features.case_id,
                &c.features.eye,
                &c.features.head,
                &c.features.clinical,
            )
        })
        .collect()
}
