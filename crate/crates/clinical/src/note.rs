//! Clinical note records and their JSON-lines form.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Provenance of a note: generated directly or one of the augmentation
/// variants of an original. Augmented notes keep the parent `case_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoteSource {
    Original,
    Augmented(usize),
}

impl NoteSource {
    pub fn as_string(&self) -> String {
        match self {
            NoteSource::Original => "original".to_string(),
            NoteSource::Augmented(k) => format!("augmented:{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<NoteSource> {
        if s == "original" {
            return Some(NoteSource::Original);
        }
        s.strip_prefix("augmented:")
            .and_then(|k| k.parse().ok())
            .map(NoteSource::Augmented)
    }
}

impl Serialize for NoteSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for NoteSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        NoteSource::parse(&s).ok_or_else(|| D::Error::custom(format!("bad note source `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub case_id: String,
    pub text: String,
    pub source: NoteSource,
}

impl ClinicalNote {
    pub fn original(case_id: impl Into<String>, text: impl Into<String>) -> Self {
        ClinicalNote {
            case_id: case_id.into(),
            text: text.into(),
            source: NoteSource::Original,
        }
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_round_trips_through_json() {
        let note = ClinicalNote {
            case_id: "case_0001".into(),
            text: "A note.".into(),
            source: NoteSource::Augmented(2),
        };
        let json = serde_json::to_string(&note).unwrap();
        assert!(json.contains("\"augmented:2\""));
        let back: ClinicalNote = serde_json::from_str(&json).unwrap();
        assert_eq!(back, note);
    }
}
