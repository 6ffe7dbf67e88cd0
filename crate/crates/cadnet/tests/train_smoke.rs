//! Training-loop behavior on a small synthetic task with deterministic
//! feature-to-target structure.

use ahp_cadnet::{
    train_cadnet, CaseFeatures, FusionConfig, LabeledCase, SplitDataset, TrainConfig,
};
use ahp_clinical::{CaseRecord, CategoryTable, ImputedFlags, TargetKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth_case(i: usize, rng: &mut ChaCha8Rng, table: &CategoryTable) -> LabeledCase {
    let diagnose = rng.gen_range(0..4usize);
    let ahp_type = rng.gen_range(0..4usize);
    let direction = rng.gen_range(0..2usize);
    let eye_side = rng.gen_range(0..2usize);
    let misalignment = rng.gen_range(0..4usize);
    let degree = 5.0 + 40.0 * rng.gen::<f64>();
    let pd = 2.0 + 30.0 * rng.gen::<f64>();

    let noise = |rng: &mut ChaCha8Rng| rng.gen_range(-0.05..0.05);
    let mut eye = vec![0.0; 94];
    for v in eye.iter_mut() {
        *v = noise(rng);
    }
    eye[misalignment] += 1.0;
    eye[10 + eye_side] += 1.0;
    eye[20] = pd / 10.0 + noise(rng);
    let mut head = vec![0.0; 630];
    for v in head.iter_mut() {
        *v = noise(rng);
    }
    head[ahp_type] += 1.0;
    head[8 + direction] += 1.0;
    head[16] = degree / 10.0 + noise(rng);
    let mut clinical = vec![0.0; 32];
    for v in clinical.iter_mut() {
        *v = noise(rng);
    }
    clinical[diagnose] += 1.0;

    let record = CaseRecord {
        case_id: format!("case_{i:04}"),
        diagnose: table.classes(TargetKind::Diagnose)[diagnose].clone(),
        ahp_type: Some(table.classes(TargetKind::AhpType)[ahp_type].clone()),
        ahp_direction: Some(table.classes(TargetKind::AhpDirection)[direction].clone()),
        eye: Some(table.classes(TargetKind::Eye)[eye_side].clone()),
        eye_misalignment: Some(table.classes(TargetKind::EyeMisalignment)[misalignment].clone()),
        ahp_degree: Some(degree),
        pd: Some(pd),
        imputed: ImputedFlags::default(),
    };
    LabeledCase {
        features: CaseFeatures {
            case_id: record.case_id.clone(),
            eye,
            head,
            clinical,
        },
        record,
    }
}

fn synth_split(n: usize, seed: u64) -> (SplitDataset, CategoryTable) {
    let table = CategoryTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<LabeledCase> = (0..n).map(|i| synth_case(i, &mut rng, &table)).collect();
    let n_train = (n as f64 * 0.7) as usize;
    let n_val = (n as f64 * 0.15) as usize;
    let data = SplitDataset {
        train: cases[..n_train].to_vec(),
        val: cases[n_train..n_train + n_val].to_vec(),
        test: cases[n_train + n_val..].to_vec(),
    };
    (data, table)
}

#[test]
fn loss_decreases_over_first_ten_epochs() {
    let (data, table) = synth_split(80, 7);
    let cfg = TrainConfig {
        epochs: 10,
        early_stop_patience: 50,
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    };
    let (_, history) = train_cadnet(&data, &FusionConfig::tiny(), &table, &cfg).unwrap();
    assert_eq!(history.epochs.len(), 10);
    let first = history.epochs[0].train_loss;
    let last = history.epochs[9].train_loss;
    assert!(
        last < first,
        "train loss did not decrease: {first} -> {last}"
    );
    assert!(last < 0.8 * first, "weak decrease: {first} -> {last}");
}

#[test]
fn identical_seeds_give_identical_histories() {
    let (data, table) = synth_split(40, 11);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let (_, h1) = train_cadnet(&data, &FusionConfig::tiny(), &table, &cfg).unwrap();
    let (_, h2) = train_cadnet(&data, &FusionConfig::tiny(), &table, &cfg).unwrap();
    assert_eq!(h1, h2);
    for (a, b) in h1.epochs.iter().zip(h2.epochs.iter()) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
    }
}

#[test]
fn early_stopping_fires_after_patience_epochs_beyond_best() {
    let (data, table) = synth_split(40, 13);
    let cfg = TrainConfig {
        epochs: 200,
        early_stop_patience: 5,
        batch_size: 8,
        seed: 9,
        ..TrainConfig::default()
    };
    let (_, history) = train_cadnet(&data, &FusionConfig::tiny(), &table, &cfg).unwrap();
    assert!(
        history.stopped_early,
        "expected early stopping within 200 epochs"
    );
    assert_eq!(
        history.epochs.len(),
        history.best_epoch + 1 + cfg.early_stop_patience,
        "stop must come exactly patience epochs after the best"
    );
}

#[test]
fn empty_split_is_an_error() {
    let (mut data, table) = synth_split(20, 17);
    data.val.clear();
    let cfg = TrainConfig::default();
    assert!(matches!(
        train_cadnet(&data, &FusionConfig::tiny(), &table, &cfg),
        Err(ahp_cadnet::CadnetError::EmptySplit("validation"))
    ));
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (data, table) = synth_split(40, 19);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed: 21,
        ..TrainConfig::default()
    };
    let (model, _) = train_cadnet(&data, &FusionConfig::tiny(), &table, &cfg).unwrap();
    let (params, meta) = model.save();
    let restored = ahp_cadnet::CadnetModel::load(&params, &meta).unwrap();
    let case = &data.test[0];
    let a = model
        .predict(
            &case.features.case_id,
            &case.features.eye,
            &case.features.head,
            &case.features.clinical,
        )
        .unwrap();
    let b = restored
        .predict(
            &case.features.case_id,
            &case.features.eye,
            &case.features.head,
            &case.features.clinical,
        )
        .unwrap();
    assert_eq!(a, b);
}
