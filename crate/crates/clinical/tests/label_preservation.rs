//! Every lexicon mapping must leave the extracted 32-feature vector
//! unchanged, feature by feature, under worst-case (every site fires)
//! substitution.

use ahp_clinical::{
    augment_note, extract_features, AugmentConfig, AugmentationLexicon, ClinicalNote,
};

/// Template-style notes exercising every feature the lexicons can touch.
fn representative_notes() -> Vec<ClinicalNote> {
    let texts = [
        "A 6-year-old boy presented with diplopia and an abnormal head posture. \
         Best-corrected visual acuity was 20/40 in the right eye and 20/60 in the left eye. \
         An esotropia of 14 prism diopters was measured in the left eye. \
         Ocular motility evaluation showed an abduction deficit of -3. \
         A right head turn of 25° was noted. \
         Grade 1 globe retraction with an upshoot was observed medially. \
         The patient was diagnosed with Duane syndrome. No prior surgery was reported.",
        "A 34-year-old woman presented to the clinic with a 2-year history of double vision. \
         Visual acuity was 20/25 in the OD and 20/30 in the OS. \
         A hypertropia of 8 prism diopters was noted in the right eye. \
         Fundus examination revealed excyclotorsion superiorly. \
         A left head tilt of 10° was noted, and fusion was demonstrated with the adopted posture. \
         Examination revealed no family history of strabismus. \
         She was diagnosed with superior oblique palsy.",
        "An 11-year-old girl presented with limited elevation in adduction for the past 3 years. \
         BCVA was 20/20 in both eyes. \
         A hypotropia of 6 prism diopters was measured in the right eye. \
         A chin-up posture of 18° with the face rotated to the left was documented. \
         There was no history of trauma; anterior segment examination was unremarkable. \
         The patient was diagnosed with Brown syndrome. No medication was being taken.",
        "A 3-year-old boy presented with INS and fine amplitude nystagmus since the child was 1. \
         Visual acuity was 20/50 in both eyes with latent ptosis laterally. \
         An exotropia of 20 prism diopters was noted in the left eye. \
         A right head turn of 30° was noted with improvement in downgaze. \
         Family history was positive for familial nystagmus. \
         The patient was diagnosed with nystagmus and observed without surgery.",
    ];
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| ClinicalNote::original(format!("case_{i:04}"), *t))
        .collect()
}

#[test]
fn forced_augmentation_preserves_every_feature() {
    let lexicon = AugmentationLexicon::bundled();
    // every candidate site fires: worst case for label preservation
    let config = AugmentConfig {
        synonym_p: 1.0,
        abbreviation_p: 1.0,
        phrase_p: 1.0,
        direction_p: 1.0,
        variants: 4,
    };
    for note in representative_notes() {
        let baseline = extract_features(&note);
        for seed in [1u64, 2, 3] {
            for variant in augment_note(&note, &lexicon, &config, seed) {
                let augmented = extract_features(&variant);
                for name in ahp_clinical::features::feature_names() {
                    assert_eq!(
                        baseline.get(name),
                        augmented.get(name),
                        "feature `{name}` changed for {}\noriginal: {}\naugmented: {}",
                        note.case_id,
                        note.text,
                        variant.text
                    );
                }
            }
        }
    }
}

#[test]
fn default_probability_augmentation_preserves_features() {
    let lexicon = AugmentationLexicon::bundled();
    let config = AugmentConfig::default();
    for note in representative_notes() {
        let baseline = extract_features(&note);
        for seed in 0..10u64 {
            for variant in augment_note(&note, &lexicon, &config, seed) {
                assert_eq!(baseline, extract_features(&variant), "case {}", note.case_id);
            }
        }
    }
}
