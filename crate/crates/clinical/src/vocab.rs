//! Word-level vocabulary and tokenizer.
//!
//! Tokens are lowercased `[a-z0-9]+` runs. The vocabulary keeps tokens with
//! frequency >= `min_count`, ordered by frequency descending then
//! lexicographically, after the four special ids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ClinicalError;
use crate::lexicon::ClinicalTermSet;
use crate::note::ClinicalNote;
use crate::Result;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const CLS_ID: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[MASK]", "[CLS]"];

/// Split into lowercased alphanumeric word tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in lower.chars() {
        if ch.is_ascii_alphanumeric() {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Rebuild a vocabulary from its serialized token list (specials first).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = Self::build_index(&tokens);
        Vocabulary { tokens, index }
    }

    fn build_index(tokens: &[String]) -> BTreeMap<String, u32> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect()
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = Self::build_index(&self.tokens);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Build the vocabulary from a corpus. Errors on an empty corpus.
pub fn build_vocab(corpus: &[ClinicalNote], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(ClinicalError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for note in corpus {
        for token in word_tokens(&note.text) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count.max(1))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().map(|(t, _)| t));
    let index = Vocabulary::build_index(&tokens);
    Ok(Vocabulary { tokens, index })
}

/// A tokenized note: ids plus the clinical-term flag per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub is_clinical: Vec<bool>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Tokenize a note. `is_clinical_term` is true iff the token (or the
/// multiword span containing it) appears in the clinical lexicon.
pub fn tokenize(note: &ClinicalNote, vocab: &Vocabulary, terms: &ClinicalTermSet) -> TokenSeq {
    let words = word_tokens(&note.text);
    let flags = terms.flag_tokens(&words);
    TokenSeq {
        ids: words.iter().map(|w| vocab.id(w)).collect(),
        is_clinical: flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(text: &str) -> ClinicalNote {
        ClinicalNote::original("t", text)
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let vocab = build_vocab(&[note("a a b")], 1).unwrap();
        assert_eq!(vocab.tokens(), &["[PAD]", "[UNK]", "[MASK]", "[CLS]", "a", "b"]);
        assert_eq!(vocab.id("a"), 4);
        assert_eq!(vocab.id("b"), 5);
    }

    #[test]
    fn min_count_excludes_rare_tokens() {
        let vocab = build_vocab(&[note("a a b")], 2).unwrap();
        assert_eq!(vocab.len(), 5);
        assert_eq!(vocab.id("b"), UNK_ID);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocab(&[], 1), Err(ClinicalError::EmptyCorpus)));
    }

    #[test]
    fn determinism() {
        let corpus = vec![note("alpha beta beta gamma"), note("beta gamma delta")];
        let a = build_vocab(&corpus, 1).unwrap();
        let b = build_vocab(&corpus, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clinical_flag_and_unk() {
        let vocab = build_vocab(&[note("left hypertropia present")], 1).unwrap();
        let terms = ClinicalTermSet::from_terms(&["hypertropia"]);
        let seq = tokenize(&note("left hypertropia."), &vocab, &terms);
        assert_eq!(seq.ids.len(), 2);
        assert_eq!(seq.is_clinical, vec![false, true]);
        let seq = tokenize(&note("unknownword"), &vocab, &terms);
        assert_eq!(seq.ids, vec![UNK_ID]);
    }

    #[test]
    fn empty_text_empty_sequence() {
        let vocab = build_vocab(&[note("x")], 1).unwrap();
        let terms = ClinicalTermSet::from_terms::<&str>(&[]);
        let seq = tokenize(&note(""), &vocab, &terms);
        assert!(seq.is_empty());
    }
}
