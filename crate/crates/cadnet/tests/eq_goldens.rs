//! Closed-form checks of the gating, relevance, and fusion-weight equations.

use ahp_cadnet::{CadnetModel, FusionConfig, Modality, StreamKind};
use ahp_clinical::CategoryTable;
use ahp_nn::{Matrix, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_raw(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn zero_param(model: &mut CadnetModel, name: &str) {
    let id = model.store.id(name).unwrap();
    let shape = model.store.value(id).shape();
    *model.store.value_mut(id) = Matrix::zeros(shape.0, shape.1);
}

#[test]
fn zero_gate_weights_halve_the_pooled_vector() {
    let mut model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 5).unwrap();
    zero_param(&mut model, "intra.eye.gate2.w");
    zero_param(&mut model, "intra.eye.gate2.b");
    let raw = random_raw(94, 1);
    let mut tape = Tape::new();
    let mut ctx = None;
    let stream = model
        .arch
        .intra_modal_encode(&mut tape, &model.store, Modality::Eye, &raw, &mut ctx)
        .unwrap();
    let pooled_pre = tape.value(stream.pooled_pregate).row(0).to_vec();
    let gated = tape.value(stream.pooled).row(0).to_vec();
    let gates = tape.value(stream.gate).row(0).to_vec();
    for ((pre, post), gate) in pooled_pre.iter().zip(&gated).zip(&gates) {
        assert_eq!(*gate, 0.5);
        assert!((post - 0.5 * pre).abs() < 1e-15);
    }
}

#[test]
fn gate_values_stay_strictly_inside_unit_interval() {
    let model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 6).unwrap();
    for seed in 0..20u64 {
        let raw = random_raw(94, seed);
        let mut tape = Tape::new();
        let mut ctx = None;
        let stream = model
            .arch
            .intra_modal_encode(&mut tape, &model.store, Modality::Eye, &raw, &mut ctx)
            .unwrap();
        for &g in tape.value(stream.gate).data() {
            assert!(g > 0.0 && g < 1.0);
        }
    }
}

#[test]
fn zero_relevance_ffn_gives_exactly_half() {
    let mut model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 7).unwrap();
    zero_param(&mut model, "cross.clinical_to_eye.rel2.w");
    zero_param(&mut model, "cross.clinical_to_eye.rel2.b");
    let mut tape = Tape::new();
    let mut ctx = None;
    let clin = model
        .arch
        .intra_modal_encode(&mut tape, &model.store, Modality::Clinical, &random_raw(32, 2), &mut ctx)
        .unwrap();
    let eye = model
        .arch
        .intra_modal_encode(&mut tape, &model.store, Modality::Eye, &random_raw(94, 3), &mut ctx)
        .unwrap();
    let cross = model
        .arch
        .cross_modal_attend(&mut tape, &model.store, StreamKind::ClinicalToEye, &clin, &eye, &mut ctx)
        .unwrap();
    for &r in tape.value(cross.relevance).data() {
        assert_eq!(r, 0.5);
    }
}

#[test]
fn large_negative_relevance_closes_the_gate() {
    let mut model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 8).unwrap();
    zero_param(&mut model, "cross.clinical_to_eye.rel2.w");
    let bias = model.store.id("cross.clinical_to_eye.rel2.b").unwrap();
    *model.store.value_mut(bias) = Matrix::row_vector(vec![-60.0]);
    let mut tape = Tape::new();
    let mut ctx = None;
    let clin = model
        .arch
        .intra_modal_encode(&mut tape, &model.store, Modality::Clinical, &random_raw(32, 2), &mut ctx)
        .unwrap();
    let eye = model
        .arch
        .intra_modal_encode(&mut tape, &model.store, Modality::Eye, &random_raw(94, 3), &mut ctx)
        .unwrap();
    let cross = model
        .arch
        .cross_modal_attend(&mut tape, &model.store, StreamKind::ClinicalToEye, &clin, &eye, &mut ctx)
        .unwrap();
    for &v in tape.value(cross.attended).data() {
        assert!(v.abs() < 1e-12, "attended output {v} not driven to zero");
    }
}

#[test]
fn zero_modality_weight_matrix_gives_uniform_alpha() {
    let mut model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 9).unwrap();
    zero_param(&mut model, "global.wmod.w");
    zero_param(&mut model, "global.wmod.b");
    let pred = model
        .predict("c0", &random_raw(94, 4), &random_raw(630, 5), &random_raw(32, 6))
        .unwrap();
    assert_eq!(pred.diagnostics.alpha.len(), 4);
    for (_, a) in &pred.diagnostics.alpha {
        assert!((a - 0.25).abs() < 1e-12);
    }
}

#[test]
fn alpha_is_a_probability_simplex_for_random_inputs() {
    let model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 10).unwrap();
    for seed in 0..10u64 {
        let pred = model
            .predict(
                "c",
                &random_raw(94, seed),
                &random_raw(630, seed + 100),
                &random_raw(32, seed + 200),
            )
            .unwrap();
        let sum: f64 = pred.diagnostics.alpha.iter().map(|(_, a)| a).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(pred.diagnostics.alpha.iter().all(|(_, a)| *a >= 0.0));
        // relevance scores live strictly inside (0, 1)
        for (_, r) in &pred.diagnostics.relevance {
            assert!(*r > 0.0 && *r < 1.0);
        }
    }
}

#[test]
fn identical_projected_streams_make_f_global_equal_any_stream() {
    // zero projection weights with a shared bias force all four projected
    // streams to the same row; the fused vector must equal the (common)
    // post-attention row no matter what alpha is
    let mut model = CadnetModel::new(FusionConfig::default(), CategoryTable::default(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let bias: Vec<f64> = (0..64).map(|_| rng.gen_range(-0.5..0.5)).collect();
    for kind in [
        StreamKind::ClinicalToEye,
        StreamKind::ClinicalToHead,
        StreamKind::EyeToHead,
        StreamKind::PureClinical,
    ] {
        zero_param(&mut model, &format!("global.proj.{}.w", kind.name()));
        let b = model
            .store
            .id(&format!("global.proj.{}.b", kind.name()))
            .unwrap();
        *model.store.value_mut(b) = Matrix::row_vector(bias.clone());
    }
    let mut tape = Tape::new();
    let mut ctx = None;
    let trunk = model
        .arch
        .trunk_forward(
            &mut tape,
            &model.store,
            &random_raw(94, 1),
            &random_raw(630, 2),
            &random_raw(32, 3),
            &mut ctx,
        )
        .unwrap();
    // recompute the fusion pieces to compare f_global with the attended rows
    let mut tape2 = Tape::new();
    let mut ctx2 = None;
    let clin = model
        .arch
        .intra_modal_encode(&mut tape2, &model.store, Modality::Clinical, &random_raw(32, 3), &mut ctx2)
        .unwrap();
    let eye = model
        .arch
        .intra_modal_encode(&mut tape2, &model.store, Modality::Eye, &random_raw(94, 1), &mut ctx2)
        .unwrap();
    let head = model
        .arch
        .intra_modal_encode(&mut tape2, &model.store, Modality::Head, &random_raw(630, 2), &mut ctx2)
        .unwrap();
    let ce = model
        .arch
        .cross_modal_attend(&mut tape2, &model.store, StreamKind::ClinicalToEye, &clin, &eye, &mut ctx2)
        .unwrap();
    let ch = model
        .arch
        .cross_modal_attend(&mut tape2, &model.store, StreamKind::ClinicalToHead, &clin, &head, &mut ctx2)
        .unwrap();
    let eh = model
        .arch
        .cross_modal_attend(&mut tape2, &model.store, StreamKind::EyeToHead, &eye, &head, &mut ctx2)
        .unwrap();
    let fused = model
        .arch
        .global_fuse(
            &mut tape2,
            &model.store,
            &[
                (StreamKind::ClinicalToEye, ce.pooled),
                (StreamKind::ClinicalToHead, ch.pooled),
                (StreamKind::EyeToHead, eh.pooled),
                (StreamKind::PureClinical, clin.pooled),
            ],
            &mut ctx2,
        )
        .unwrap();
    let f_global = tape2.value(fused.f_global).row(0).to_vec();
    let attended = tape2.value(fused.attended_streams);
    for row in 0..attended.rows() {
        for (a, b) in attended.row(row).iter().zip(&f_global) {
            assert!((a - b).abs() < 1e-9, "row {row}: {a} vs {b}");
        }
    }
    let _ = trunk;
}

#[test]
fn eval_forward_is_deterministic_and_logits_sized_by_table() {
    let table = CategoryTable::default();
    let model = CadnetModel::new(FusionConfig::default(), table.clone(), 12).unwrap();
    let eye = random_raw(94, 7);
    let head = random_raw(630, 8);
    let clinical = random_raw(32, 9);
    let a = model.predict("c", &eye, &head, &clinical).unwrap();
    let b = model.predict("c", &eye, &head, &clinical).unwrap();
    assert_eq!(a, b);
    for (kind, _, probs) in &a.classes {
        assert_eq!(probs.len(), table.class_count(*kind));
    }
    assert_eq!(a.classes.len(), 5);
    assert_eq!(a.regressions.len(), 2);
}

#[test]
fn multitask_loss_is_additive_over_components() {
    let model = CadnetModel::new(FusionConfig::tiny(), CategoryTable::default(), 13).unwrap();
    let mut tape = Tape::new();
    let mut ctx = None;
    let mut enhanced = Vec::new();
    for seed in 0..3u64 {
        let trunk = model
            .arch
            .trunk_forward(
                &mut tape,
                &model.store,
                &random_raw(94, seed),
                &random_raw(630, seed + 50),
                &random_raw(32, seed + 90),
                &mut ctx,
            )
            .unwrap();
        enhanced.push(trunk.f_enhanced);
    }
    let stacked = tape.concat_rows(&enhanced).unwrap();
    let preds = model
        .arch
        .heads_forward_eval(&mut tape, &model.store, stacked)
        .unwrap();
    let mut targets = ahp_cadnet::BatchTargets::default();
    for kind in ahp_clinical::TargetKind::CATEGORICAL {
        targets.classes.push((kind, vec![0, 1, 0]));
    }
    for kind in ahp_clinical::TargetKind::CONTINUOUS {
        targets.continuous.push((kind, vec![0.1, -0.5, 1.0]));
    }
    let (total, components) = model.arch.multitask_loss(&mut tape, &preds, &targets).unwrap();
    let sum: f64 = components.iter().map(|(_, v)| tape.scalar(*v)).sum();
    assert!((tape.scalar(total) - sum).abs() < 1e-12);
    assert_eq!(components.len(), 7);
}
