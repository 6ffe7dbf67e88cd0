//! The 32 structured clinical features and their regular-expression extractor.
//!
//! Every feature carries a presence indicator; absence is a value, never an
//! error. Derived features (best VA, VA count, VA asymmetry, the motility
//! summary flag) are computed only when their inputs matched. Mention flags
//! fire on pattern hits regardless of negation — negation scope resolution is
//! out of scope.
//!
//! The feature order is load-bearing: it defines the numeric 32-vector layout
//! and the anatomical segments used by the fusion network tokens
//! (demographics [0,2), symptoms [2,9), acuity [9,14), motility [14,20),
//! posture/history [20,32)).

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::{Map, Number, Value};

use crate::error::ClinicalError;
use crate::note::ClinicalNote;
use crate::Result;

pub const FEATURE_COUNT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical(&'static [&'static str]),
    Flag,
}

pub const GENDER_OPTIONS: &[&str] = &["male", "female"];
pub const POSTURE_TYPE_OPTIONS: &[&str] = &["turn", "tilt", "chin-up", "chin-down"];
pub const DIRECTION_OPTIONS: &[&str] = &["left", "right"];
pub const DEVIATION_OPTIONS: &[&str] = &["esotropia", "exotropia", "hypertropia", "hypotropia"];
pub const AFFECTED_EYE_OPTIONS: &[&str] = &["left", "right", "both"];

/// `(name, kind)` for each of the 32 features, in vector order.
pub const FEATURE_SCHEMA: [(&str, FeatureKind); FEATURE_COUNT] = [
    // demographics
    ("age_years", FeatureKind::Numeric),
    ("gender", FeatureKind::Categorical(GENDER_OPTIONS)),
    // symptoms
    ("diplopia_mentioned", FeatureKind::Flag),
    ("fusion_mentioned", FeatureKind::Flag),
    ("nystagmus_mentioned", FeatureKind::Flag),
    ("ptosis_mentioned", FeatureKind::Flag),
    ("strabismus_mentioned", FeatureKind::Flag),
    ("symptom_duration_years", FeatureKind::Numeric),
    ("onset_age_years", FeatureKind::Numeric),
    // visual acuity
    ("va_od_logmar", FeatureKind::Numeric),
    ("va_os_logmar", FeatureKind::Numeric),
    ("best_va_logmar", FeatureKind::Numeric),
    ("va_measurement_count", FeatureKind::Numeric),
    ("va_asymmetry", FeatureKind::Numeric),
    // motility
    ("motility_deficit_grade", FeatureKind::Numeric),
    ("motility_deficit_mentioned", FeatureKind::Flag),
    ("abduction_deficit_mentioned", FeatureKind::Flag),
    ("adduction_deficit_mentioned", FeatureKind::Flag),
    ("elevation_deficit_mentioned", FeatureKind::Flag),
    ("depression_deficit_mentioned", FeatureKind::Flag),
    // posture and history
    ("head_posture_mentioned", FeatureKind::Flag),
    ("head_posture_type", FeatureKind::Categorical(POSTURE_TYPE_OPTIONS)),
    ("head_posture_direction", FeatureKind::Categorical(DIRECTION_OPTIONS)),
    ("head_posture_degree", FeatureKind::Numeric),
    ("prism_diopters", FeatureKind::Numeric),
    ("deviation_direction", FeatureKind::Categorical(DEVIATION_OPTIONS)),
    ("affected_eye", FeatureKind::Categorical(AFFECTED_EYE_OPTIONS)),
    ("surgical_history_mentioned", FeatureKind::Flag),
    ("medical_history_mentioned", FeatureKind::Flag),
    ("family_history_mentioned", FeatureKind::Flag),
    ("retraction_mentioned", FeatureKind::Flag),
    ("torsion_mentioned", FeatureKind::Flag),
];

/// Segment boundaries of the clinical vector, matching the five fusion tokens.
pub const CLINICAL_SEGMENTS: [(&str, usize, usize); 5] = [
    ("demographics", 0, 2),
    ("symptoms", 2, 9),
    ("acuity", 9, 14),
    ("motility", 14, 20),
    ("posture_history", 20, 32),
];

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
    Flag(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector32 {
    values: Vec<Option<FeatureValue>>,
}

impl Default for FeatureVector32 {
    fn default() -> Self {
        FeatureVector32 {
            values: vec![None; FEATURE_COUNT],
        }
    }
}

impl FeatureVector32 {
    pub fn index_of(name: &str) -> Option<usize> {
        FEATURE_SCHEMA.iter().position(|(n, _)| *n == name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureValue> {
        Self::index_of(name).and_then(|i| self.values[i].as_ref())
    }

    pub fn present(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn set(&mut self, name: &str, value: FeatureValue) {
        let i = Self::index_of(name).unwrap_or_else(|| panic!("unknown feature `{name}`"));
        self.values[i] = Some(value);
    }

    pub fn numeric(&self, name: &str) -> Option<f64> {
        match self.get(name) {
            Some(FeatureValue::Numeric(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn flag(&self, name: &str) -> bool {
        matches!(self.get(name), Some(FeatureValue::Flag(true)))
    }

    pub fn categorical(&self, name: &str) -> Option<&str> {
        match self.get(name) {
            Some(FeatureValue::Categorical(v)) => Some(v.as_str()),
            _ => None,
        }
    }

    /// The numeric 32-vector: numerics as-is, flags as 0/1, categoricals as
    /// 1-based option index; absent features encode as the 0.0 sentinel.
    pub fn to_numeric_vector(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(FEATURE_SCHEMA.iter())
            .map(|(v, (_, kind))| match (v, kind) {
                (None, _) => 0.0,
                (Some(FeatureValue::Numeric(x)), _) => *x,
                (Some(FeatureValue::Flag(b)), _) => {
                    if *b {
                        1.0
                    } else {
                        0.0
                    }
                }
                (Some(FeatureValue::Categorical(s)), FeatureKind::Categorical(options)) => {
                    options
                        .iter()
                        .position(|o| o == s)
                        .map(|i| (i + 1) as f64)
                        .unwrap_or(0.0)
                }
                (Some(FeatureValue::Categorical(_)), _) => 0.0,
            })
            .collect()
    }

    /// JSON object with all 32 named fields plus `<name>_present` booleans.
    pub fn to_json_value(&self) -> Value {
        let mut map = Map::new();
        for (i, (name, _)) in FEATURE_SCHEMA.iter().enumerate() {
            let (value, present) = match &self.values[i] {
                None => (Value::Null, false),
                Some(FeatureValue::Numeric(v)) => (
                    Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
                    true,
                ),
                Some(FeatureValue::Categorical(s)) => (Value::String(s.clone()), true),
                Some(FeatureValue::Flag(b)) => (Value::Bool(*b), true),
            };
            map.insert((*name).to_string(), value);
            map.insert(format!("{name}_present"), Value::Bool(present));
        }
        Value::Object(map)
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| ClinicalError::Json("feature vector must be an object".into()))?;
        let mut out = FeatureVector32::default();
        for (i, (name, kind)) in FEATURE_SCHEMA.iter().enumerate() {
            let present = obj
                .get(&format!("{name}_present"))
                .and_then(Value::as_bool)
                .unwrap_or(false);
            if !present {
                continue;
            }
            let raw = obj
                .get(*name)
                .ok_or_else(|| ClinicalError::Json(format!("missing feature `{name}`")))?;
            let parsed = match kind {
                FeatureKind::Numeric => FeatureValue::Numeric(
                    raw.as_f64()
                        .ok_or_else(|| ClinicalError::Json(format!("`{name}` must be numeric")))?,
                ),
                FeatureKind::Flag => FeatureValue::Flag(
                    raw.as_bool()
                        .ok_or_else(|| ClinicalError::Json(format!("`{name}` must be boolean")))?,
                ),
                FeatureKind::Categorical(_) => FeatureValue::Categorical(
                    raw.as_str()
                        .ok_or_else(|| ClinicalError::Json(format!("`{name}` must be a string")))?
                        .to_string(),
                ),
            };
            out.values[i] = Some(parsed);
        }
        Ok(out)
    }
}

struct Patterns {
    age: Regex,
    male: Regex,
    female: Regex,
    diplopia: Regex,
    fusion: Regex,
    nystagmus: Regex,
    ptosis: Regex,
    strabismus: Regex,
    duration: Vec<Regex>,
    onset: Regex,
    visual_acuity: Regex,
    motility_grade: Regex,
    motility_mention: Regex,
    limited_motility: Regex,
    posture_dir_first: Regex,
    posture_type_first: Regex,
    chin: Regex,
    face_rotation: Regex,
    posture_keyword: Regex,
    prism: Regex,
    deviation: Regex,
    affected: Regex,
    affected_both: Regex,
    surgical: Regex,
    medical: Regex,
    family: Regex,
    retraction: Regex,
    torsion: Regex,
}

fn patterns() -> &'static Patterns {
    static CELL: OnceLock<Patterns> = OnceLock::new();
    CELL.get_or_init(|| {
        let rx = |p: &str| Regex::new(p).expect("pattern compiles");
        Patterns {
            age: rx(r"(?i)\b(\d{1,3})[- ]year[- ]old\b"),
            male: rx(r"(?i)\b(boy|man|male|gentleman)\b"),
            female: rx(r"(?i)\b(girl|woman|female|lady)\b"),
            diplopia: rx(r"(?i)\b(diplopia|double vision)\b"),
            fusion: rx(r"(?i)\b(fusion|stereopsis|binocular single vision)\b"),
            nystagmus: rx(r"(?i)\b(nystagmus|ocular oscillation|INS)\b"),
            ptosis: rx(r"(?i)\b(ptosis|eyelid drooping|droopy eyelid)\b"),
            strabismus: rx(r"(?i)\b(strabismus|squint|ocular misalignment)\b"),
            duration: vec![
                rx(r"(?i)\b(\d+(?:\.\d+)?)[- ](year|month|week)s?\s+(?:history|duration)\b"),
                rx(r"(?i)\bfor (?:the )?(?:past|last)\s+(\d+(?:\.\d+)?)\s+(year|month|week)s?\b"),
                rx(r"(?i)\bof\s+(\d+(?:\.\d+)?)\s+(year|month|week)s?['’]?s?\s+standing\b"),
            ],
            onset: rx(
                r"(?i)\bsince (?:the )?(?:age of|he was|she was|the child was|the patient was)\s+(\d+(?:\.\d+)?)\b",
            ),
            visual_acuity: rx(
                r"(?i)\b(\d{1,3})\s*/\s*(\d{1,3})\s+(?:in\s+)?(?:the\s+)?(right eye|left eye|both eyes|OD|OS|OU)\b",
            ),
            motility_grade: rx(
                r"(?i)\b(abduction|adduction|elevation|depression)\s+(?:deficit|limitation|deficiency)\s+of\s+(?:grade\s+)?(-?[1-4])\b",
            ),
            motility_mention: rx(
                r"(?i)\b(abduction|adduction|elevation|depression)\s+(?:deficit|limitation|deficiency)\b",
            ),
            limited_motility: rx(r"(?i)\blimited\s+(abduction|adduction|elevation|depression)\b"),
            posture_dir_first: rx(
                r"(?i)\b(left|right)\s+head\s+(tilt|turn)(?:\s+of\s+(\d+(?:\.\d+)?)\s*(?:°|degrees?))?",
            ),
            posture_type_first: rx(
                r"(?i)\bhead\s+(tilt|turn)\s+(?:to\s+the\s+)?(left|right)(?:\s+of\s+(\d+(?:\.\d+)?)\s*(?:°|degrees?))?",
            ),
            chin: rx(
                r"(?i)\bchin[- ](up|down)\s*(?:posture|position)?(?:\s+of\s+(\d+(?:\.\d+)?)\s*(?:°|degrees?))?",
            ),
            face_rotation: rx(r"(?i)\bface\s+(?:rotated|turned)\s+(?:slightly\s+)?(?:to\s+the\s+)?(left|right)\b"),
            posture_keyword: rx(r"(?i)\b(head posture|head position|torticollis|abnormal head)\b"),
            prism: rx(r"(?i)\b(\d+(?:\.\d+)?)\s*(?:prism\s+diop?ters?|PDs?\b|Δ)"),
            deviation: rx(
                r"(?i)\b(esotropia|inward deviation|exotropia|outward deviation|hypertropia|vertical deviation|hypotropia|downward deviation)\b",
            ),
            affected: rx(
                r"(?i)\b(?:measured|noted|observed|documented|recorded|identified|present|seen)\s+in\s+(?:the\s+)?(?:(left|right)\s+eye|(OS|OD))\b",
            ),
            affected_both: rx(
                r"(?i)\b(?:measured|noted|observed|documented|recorded|identified|present|seen)\s+in\s+(?:both\s+eyes|OU)\b",
            ),
            surgical: rx(r"(?i)\b(surgery|surgical|operated|operation)\b"),
            medical: rx(r"(?i)\b(medical history|medication|systemic)\b"),
            family: rx(r"(?i)\b(family history|familial)\b"),
            retraction: rx(r"(?i)\b(globe retraction|retraction)\b"),
            torsion: rx(r"(?i)\b(torsion|excyclotorsion|incyclotorsion|intorsion|extorsion)\b"),
        }
    })
}

fn snellen_to_logmar(numerator: f64, denominator: f64) -> f64 {
    (denominator / numerator).log10()
}

/// Deterministic feature extraction; unmatched features are marked absent.
pub fn extract_features(note: &ClinicalNote) -> FeatureVector32 {
    let p = patterns();
    let text = &note.text;
    let mut out = FeatureVector32::default();

    if let Some(c) = p.age.captures(text) {
        if let Ok(v) = c[1].parse::<f64>() {
            out.set("age_years", FeatureValue::Numeric(v));
        }
    }

    let male_pos = p.male.find(text).map(|m| m.start());
    let female_pos = p.female.find(text).map(|m| m.start());
    match (male_pos, female_pos) {
        (Some(m), Some(f)) => {
            let g = if m <= f { "male" } else { "female" };
            out.set("gender", FeatureValue::Categorical(g.to_string()));
        }
        (Some(_), None) => out.set("gender", FeatureValue::Categorical("male".into())),
        (None, Some(_)) => out.set("gender", FeatureValue::Categorical("female".into())),
        (None, None) => {}
    }

    for (name, rx) in [
        ("diplopia_mentioned", &p.diplopia),
        ("fusion_mentioned", &p.fusion),
        ("nystagmus_mentioned", &p.nystagmus),
        ("ptosis_mentioned", &p.ptosis),
        ("strabismus_mentioned", &p.strabismus),
        ("surgical_history_mentioned", &p.surgical),
        ("medical_history_mentioned", &p.medical),
        ("family_history_mentioned", &p.family),
        ("retraction_mentioned", &p.retraction),
        ("torsion_mentioned", &p.torsion),
    ] {
        if rx.is_match(text) {
            out.set(name, FeatureValue::Flag(true));
        }
    }

    for rx in &p.duration {
        if let Some(c) = rx.captures(text) {
            if let Ok(v) = c[1].parse::<f64>() {
                let years = match c[2].to_lowercase().as_str() {
                    "month" => v / 12.0,
                    "week" => v / 52.0,
                    _ => v,
                };
                out.set("symptom_duration_years", FeatureValue::Numeric(years));
                break;
            }
        }
    }

    if let Some(c) = p.onset.captures(text) {
        if let Ok(v) = c[1].parse::<f64>() {
            out.set("onset_age_years", FeatureValue::Numeric(v));
        }
    }

    // visual acuity: first value per eye wins; "both eyes" fills both
    let mut va_od: Option<f64> = None;
    let mut va_os: Option<f64> = None;
    let mut va_count = 0usize;
    for c in p.visual_acuity.captures_iter(text) {
        let (num, den) = match (c[1].parse::<f64>(), c[2].parse::<f64>()) {
            (Ok(n), Ok(d)) if n > 0.0 && d > 0.0 => (n, d),
            _ => continue,
        };
        let logmar = snellen_to_logmar(num, den);
        match c[3].to_lowercase().as_str() {
            "right eye" | "od" => {
                va_od.get_or_insert(logmar);
                va_count += 1;
            }
            "left eye" | "os" => {
                va_os.get_or_insert(logmar);
                va_count += 1;
            }
            _ => {
                va_od.get_or_insert(logmar);
                va_os.get_or_insert(logmar);
                va_count += 2;
            }
        }
    }
    if let Some(v) = va_od {
        out.set("va_od_logmar", FeatureValue::Numeric(v));
    }
    if let Some(v) = va_os {
        out.set("va_os_logmar", FeatureValue::Numeric(v));
    }
    if va_count > 0 {
        out.set("va_measurement_count", FeatureValue::Numeric(va_count as f64));
    }
    match (va_od, va_os) {
        (Some(a), Some(b)) => {
            out.set("best_va_logmar", FeatureValue::Numeric(a.min(b)));
            out.set("va_asymmetry", FeatureValue::Numeric((a - b).abs()));
        }
        (Some(a), None) | (None, Some(a)) => {
            out.set("best_va_logmar", FeatureValue::Numeric(a));
        }
        (None, None) => {}
    }

    // motility
    let mut motility_any = false;
    if let Some(c) = p.motility_grade.captures(text) {
        if let Ok(v) = c[2].parse::<f64>() {
            out.set("motility_deficit_grade", FeatureValue::Numeric(-v.abs()));
            motility_any = true;
        }
    }
    for c in p.motility_mention.captures_iter(text) {
        let name = match c[1].to_lowercase().as_str() {
            "abduction" => "abduction_deficit_mentioned",
            "adduction" => "adduction_deficit_mentioned",
            "elevation" => "elevation_deficit_mentioned",
            _ => "depression_deficit_mentioned",
        };
        out.set(name, FeatureValue::Flag(true));
        motility_any = true;
    }
    for c in p.limited_motility.captures_iter(text) {
        let name = match c[1].to_lowercase().as_str() {
            "abduction" => "abduction_deficit_mentioned",
            "adduction" => "adduction_deficit_mentioned",
            "elevation" => "elevation_deficit_mentioned",
            _ => "depression_deficit_mentioned",
        };
        out.set(name, FeatureValue::Flag(true));
        motility_any = true;
    }
    if motility_any {
        out.set("motility_deficit_mentioned", FeatureValue::Flag(true));
    }

    // head posture: the posture may be mentioned more than once (for example
    // a history sentence without the angle, then the quantified observation);
    // type/direction come from the earliest mention, the degree from the
    // first mention that carries one
    struct PostureMention {
        start: usize,
        ptype: String,
        direction: Option<String>,
        degree: Option<f64>,
    }
    let mut mentions: Vec<PostureMention> = Vec::new();
    for c in p.posture_dir_first.captures_iter(text) {
        mentions.push(PostureMention {
            start: c.get(0).unwrap().start(),
            ptype: c[2].to_lowercase(),
            direction: Some(c[1].to_lowercase()),
            degree: c.get(3).and_then(|m| m.as_str().parse().ok()),
        });
    }
    for c in p.posture_type_first.captures_iter(text) {
        mentions.push(PostureMention {
            start: c.get(0).unwrap().start(),
            ptype: c[1].to_lowercase(),
            direction: Some(c[2].to_lowercase()),
            degree: c.get(3).and_then(|m| m.as_str().parse().ok()),
        });
    }
    for c in p.chin.captures_iter(text) {
        let ptype = if c[1].to_lowercase() == "up" {
            "chin-up"
        } else {
            "chin-down"
        };
        mentions.push(PostureMention {
            start: c.get(0).unwrap().start(),
            ptype: ptype.to_string(),
            direction: p
                .face_rotation
                .captures(text)
                .map(|fc| fc[1].to_lowercase()),
            degree: c.get(2).and_then(|m| m.as_str().parse().ok()),
        });
    }
    mentions.sort_by_key(|m| m.start);
    let mut posture_any = p.posture_keyword.is_match(text);
    if let Some(first) = mentions.first() {
        out.set(
            "head_posture_type",
            FeatureValue::Categorical(first.ptype.clone()),
        );
        if let Some(dir) = &first.direction {
            out.set(
                "head_posture_direction",
                FeatureValue::Categorical(dir.clone()),
            );
        }
        if let Some(deg) = mentions.iter().find_map(|m| m.degree) {
            out.set("head_posture_degree", FeatureValue::Numeric(deg));
        }
        posture_any = true;
    }
    if posture_any {
        out.set("head_posture_mentioned", FeatureValue::Flag(true));
    }

    if let Some(c) = p.prism.captures(text) {
        if let Ok(v) = c[1].parse::<f64>() {
            out.set("prism_diopters", FeatureValue::Numeric(v));
        }
    }

    if let Some(c) = p.deviation.captures(text) {
        let canonical = match c[1].to_lowercase().as_str() {
            "esotropia" | "inward deviation" => "esotropia",
            "exotropia" | "outward deviation" => "exotropia",
            "hypertropia" | "vertical deviation" => "hypertropia",
            _ => "hypotropia",
        };
        out.set(
            "deviation_direction",
            FeatureValue::Categorical(canonical.into()),
        );
    }

    if let Some(c) = p.affected.captures(text) {
        let side = match (c.get(1), c.get(2)) {
            (Some(m), _) => m.as_str().to_lowercase(),
            (None, Some(m)) => match m.as_str().to_uppercase().as_str() {
                "OS" => "left".to_string(),
                _ => "right".to_string(),
            },
            _ => unreachable!("pattern groups"),
        };
        out.set("affected_eye", FeatureValue::Categorical(side));
    } else if p.affected_both.is_match(text) {
        out.set("affected_eye", FeatureValue::Categorical("both".into()));
    }

    out
}

/// Per-feature map form used by reports.
pub fn feature_names() -> Vec<&'static str> {
    FEATURE_SCHEMA.iter().map(|(n, _)| *n).collect()
}

/// Names with their schema index, handy for building ordered maps.
pub fn schema_map() -> BTreeMap<&'static str, usize> {
    FEATURE_SCHEMA
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (*n, i))
        .collect()
}
