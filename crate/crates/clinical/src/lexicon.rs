//! Editable lexicons: augmentation substitution maps and the clinical-term
//! vocabulary that drives the domain-aware masking flag.
//!
//! Every augmentation mapping is label-preserving by construction against the
//! feature extractor (the extractor's patterns accept both sides of each
//! mapping); the invariant is enforced by test.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ClinicalError;
use crate::vocab::word_tokens;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationLexicon {
    /// Clinical term -> medically equivalent expressions.
    pub synonym_map: BTreeMap<String, Vec<String>>,
    /// Short form <-> expansion; applied in both directions.
    pub abbreviation_map: BTreeMap<String, Vec<String>>,
    /// Reporting phrase -> rewrites.
    pub phrase_map: BTreeMap<String, Vec<String>>,
    /// Anatomical direction -> safe alternates.
    pub direction_map: BTreeMap<String, Vec<String>>,
}

impl AugmentationLexicon {
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../data/augmentation_lexicon.json"))
            .expect("bundled augmentation lexicon parses")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| ClinicalError::Lexicon(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    /// Substitution pairs for one technique. Abbreviations contribute both
    /// directions (short -> expansions and each expansion -> short).
    pub fn pairs(&self, technique: Technique) -> Vec<(String, Vec<String>)> {
        match technique {
            Technique::Synonym => map_pairs(&self.synonym_map),
            Technique::Phrase => map_pairs(&self.phrase_map),
            Technique::Direction => map_pairs(&self.direction_map),
            Technique::Abbreviation => {
                let mut out = map_pairs(&self.abbreviation_map);
                for (short, expansions) in &self.abbreviation_map {
                    for exp in expansions {
                        out.push((exp.clone(), vec![short.clone()]));
                    }
                }
                out
            }
        }
    }
}

fn map_pairs(map: &BTreeMap<String, Vec<String>>) -> Vec<(String, Vec<String>)> {
    map.iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technique {
    Synonym,
    Abbreviation,
    Phrase,
    Direction,
}

impl Technique {
    pub const ALL: [Technique; 4] = [
        Technique::Synonym,
        Technique::Abbreviation,
        Technique::Phrase,
        Technique::Direction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Technique::Synonym => "synonym",
            Technique::Abbreviation => "abbreviation",
            Technique::Phrase => "phrase",
            Technique::Direction => "direction",
        }
    }
}

/// Clinical terms (single- and multi-word) for the `is_clinical_term` token
/// flag. Matching is over lowercased word tokens, longest span first.
#[derive(Debug, Clone)]
pub struct ClinicalTermSet {
    terms: BTreeSet<Vec<String>>,
    max_len: usize,
}

#[derive(Serialize, Deserialize)]
struct TermsFile {
    terms: Vec<String>,
}

impl ClinicalTermSet {
    pub fn bundled() -> Self {
        let file: TermsFile = serde_json::from_str(include_str!("../data/clinical_terms.json"))
            .expect("bundled clinical terms parse");
        Self::from_terms(&file.terms)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: TermsFile =
            serde_json::from_str(json).map_err(|e| ClinicalError::Lexicon(e.to_string()))?;
        Ok(Self::from_terms(&file.terms))
    }

    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Self {
        let mut set = BTreeSet::new();
        let mut max_len = 1;
        for term in terms {
            let tokens = word_tokens(term.as_ref());
            if tokens.is_empty() {
                continue;
            }
            max_len = max_len.max(tokens.len());
            set.insert(tokens);
        }
        ClinicalTermSet {
            terms: set,
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Flags per token: true iff the token lies inside some matching term
    /// span (greedy, longest span first at each position).
    pub fn flag_tokens(&self, tokens: &[String]) -> Vec<bool> {
        let mut flags = vec![false; tokens.len()];
        let mut i = 0;
        while i < tokens.len() {
            let mut matched = 0;
            let top = self.max_len.min(tokens.len() - i);
            for len in (1..=top).rev() {
                if self.terms.contains(&tokens[i..i + len]) {
                    matched = len;
                    break;
                }
            }
            if matched > 0 {
                for f in flags.iter_mut().skip(i).take(matched) {
                    *f = true;
                }
                i += matched;
            } else {
                i += 1;
            }
        }
        flags
    }
}
