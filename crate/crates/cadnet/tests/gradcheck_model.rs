//! Finite-difference check of the full model at a reduced configuration.

use ahp_cadnet::{BatchTargets, CadnetModel, FusionConfig};
use ahp_clinical::{CategoryTable, TargetKind};
use ahp_nn::grad_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_raw(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn full_model_matches_finite_differences() {
    let mut model = CadnetModel::new(FusionConfig::tiny(), CategoryTable::default(), 21).unwrap();
    let cases: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..2)
        .map(|i| {
            (
                random_raw(94, i),
                random_raw(630, i + 10),
                random_raw(32, i + 20),
            )
        })
        .collect();
    let mut targets = BatchTargets::default();
    for kind in TargetKind::CATEGORICAL {
        targets.classes.push((kind, vec![0, 1]));
    }
    for kind in TargetKind::CONTINUOUS {
        targets.continuous.push((kind, vec![0.3, -0.7]));
    }

    let arch = &model.arch;
    let report = grad_check(
        &mut model.store,
        |tape, store| {
            let mut ctx = None;
            let mut enhanced = Vec::new();
            for (eye, head, clinical) in &cases {
                let trunk = arch
                    .trunk_forward(tape, store, eye, head, clinical, &mut ctx)
                    .map_err(|e| match e {
                        ahp_cadnet::CadnetError::Nn(e) => e,
                        other => ahp_nn::NnError::Checkpoint(other.to_string()),
                    })?;
                enhanced.push(trunk.f_enhanced);
            }
            let stacked = tape.concat_rows(&enhanced)?;
            // batch stats, no running update: deterministic forward
            let preds = arch
                .heads_forward_train(tape, store, stacked, false, &mut ctx)
                .map_err(|e| match e {
                    ahp_cadnet::CadnetError::Nn(e) => e,
                    other => ahp_nn::NnError::Checkpoint(other.to_string()),
                })?;
            let (total, _) = arch
                .multitask_loss(tape, &preds, &targets)
                .map_err(|e| match e {
                    ahp_cadnet::CadnetError::Nn(e) => e,
                    other => ahp_nn::NnError::Checkpoint(other.to_string()),
                })?;
            Ok(total)
        },
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_error < 1e-4,
        "rel error {} at {} over {} components",
        report.max_rel_error,
        report.worst_param,
        report.checked_components
    );
}
