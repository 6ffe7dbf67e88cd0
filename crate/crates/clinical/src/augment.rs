//! Domain-specific note augmentation: four techniques applied with
//! per-candidate-site Bernoulli firing, deterministic given a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::lexicon::{AugmentationLexicon, Technique};
use crate::note::{ClinicalNote, NoteSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub synonym_p: f64,
    pub abbreviation_p: f64,
    pub phrase_p: f64,
    pub direction_p: f64,
    pub variants: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            synonym_p: 0.5,
            abbreviation_p: 0.3,
            phrase_p: 0.4,
            direction_p: 0.15,
            variants: 4,
        }
    }
}

impl AugmentConfig {
    fn probability(&self, technique: Technique) -> f64 {
        match technique {
            Technique::Synonym => self.synonym_p,
            Technique::Abbreviation => self.abbreviation_p,
            Technique::Phrase => self.phrase_p,
            Technique::Direction => self.direction_p,
        }
    }
}

/// Candidate-site and firing counts per technique, for rate verification.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugmentStats {
    pub sites: [usize; 4],
    pub fired: [usize; 4],
}

impl AugmentStats {
    pub fn sites_for(&self, t: Technique) -> usize {
        self.sites[technique_index(t)]
    }

    pub fn fired_for(&self, t: Technique) -> usize {
        self.fired[technique_index(t)]
    }

    pub fn merge(&mut self, other: &AugmentStats) {
        for i in 0..4 {
            self.sites[i] += other.sites[i];
            self.fired[i] += other.fired[i];
        }
    }
}

fn technique_index(t: Technique) -> usize {
    match t {
        Technique::Synonym => 0,
        Technique::Abbreviation => 1,
        Technique::Phrase => 2,
        Technique::Direction => 3,
    }
}

/// Stable 64-bit FNV-1a, so per-case seeds do not depend on hasher internals.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct CompiledTechnique {
    technique: Technique,
    matcher: Option<Regex>,
    replacements: Vec<(String, Vec<String>)>,
}

fn compile(lexicon: &AugmentationLexicon) -> Vec<CompiledTechnique> {
    Technique::ALL
        .iter()
        .map(|&technique| {
            let pairs = lexicon.pairs(technique);
            let matcher = if pairs.is_empty() {
                None
            } else {
                // longest key first so multiword phrases win over their prefixes
                let mut keys: Vec<&String> = pairs.iter().map(|(k, _)| k).collect();
                keys.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
                let alternation = keys
                    .iter()
                    .map(|k| regex::escape(k))
                    .collect::<Vec<_>>()
                    .join("|");
                Some(Regex::new(&format!(r"\b(?:{alternation})\b")).expect("alternation compiles"))
            };
            CompiledTechnique {
                technique,
                matcher,
                replacements: pairs,
            }
        })
        .collect()
}

fn apply_technique(
    text: &str,
    compiled: &CompiledTechnique,
    probability: f64,
    rng: &mut ChaCha8Rng,
    stats: &mut AugmentStats,
) -> String {
    let Some(matcher) = &compiled.matcher else {
        return text.to_string();
    };
    let idx = technique_index(compiled.technique);
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for m in matcher.find_iter(text) {
        out.push_str(&text[cursor..m.start()]);
        stats.sites[idx] += 1;
        let fire = rng.gen::<f64>() < probability;
        if fire {
            stats.fired[idx] += 1;
            let key = m.as_str();
            let options = compiled
                .replacements
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_slice())
                .unwrap_or(&[]);
            if options.is_empty() {
                out.push_str(key);
            } else {
                let choice = rng.gen_range(0..options.len());
                out.push_str(&options[choice]);
            }
        } else {
            out.push_str(m.as_str());
        }
        cursor = m.end();
    }
    out.push_str(&text[cursor..]);
    out
}

/// Expand one note into `config.variants` augmented variants (default 4).
/// Each candidate substitution site fires independently with its technique's
/// probability. Deterministic given `(seed, case_id, variant index)`.
pub fn augment_note(
    note: &ClinicalNote,
    lexicon: &AugmentationLexicon,
    config: &AugmentConfig,
    seed: u64,
) -> Vec<ClinicalNote> {
    augment_note_with_stats(note, lexicon, config, seed).0
}

pub fn augment_note_with_stats(
    note: &ClinicalNote,
    lexicon: &AugmentationLexicon,
    config: &AugmentConfig,
    seed: u64,
) -> (Vec<ClinicalNote>, AugmentStats) {
    let compiled = compile(lexicon);
    let mut stats = AugmentStats::default();
    let case_hash = fnv1a(note.case_id.as_bytes());
    let variants = (0..config.variants)
        .map(|v| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ case_hash.rotate_left(17) ^ ((v as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15)),
            );
            let mut text = note.text.clone();
            for technique in &compiled {
                text = apply_technique(
                    &text,
                    technique,
                    config.probability(technique.technique),
                    &mut rng,
                    &mut stats,
                );
            }
            ClinicalNote {
                case_id: note.case_id.clone(),
                text,
                source: NoteSource::Augmented(v),
            }
        })
        .collect();
    (variants, stats)
}
