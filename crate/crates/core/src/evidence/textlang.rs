//! Language identification by character trigrams, and country evidence from
//! recognized text (spoken languages plus gazetteer hits).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvidenceScores, ProfileIoError, TEXTLANG};
use crate::knowledge::{normalize_place_name, CountryRegistry};
use crate::providers::TextObservation;
use crate::scalar::Scalar;

pub const SMOOTHING: f64 = 1e-6;
pub const MIN_TRIGRAMS: usize = 6;
pub const LANGUAGE_PROFILE_VERSION: u32 = 1;
/// Longest place name, in words, tried against the gazetteer.
pub const MAX_PLACE_WORDS: usize = 3;

const BUNDLED_CORPORA: [(&str, &str); 7] = [
    ("de", include_str!("../../data/corpora/de.txt")),
    ("en", include_str!("../../data/corpora/en.txt")),
    ("es", include_str!("../../data/corpora/es.txt")),
    ("fr", include_str!("../../data/corpora/fr.txt")),
    ("it", include_str!("../../data/corpora/it.txt")),
    ("nl", include_str!("../../data/corpora/nl.txt")),
    ("pt", include_str!("../../data/corpora/pt.txt")),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageGuess {
    pub language: String,
    pub confidence: f64,
}

/// Character trigrams of `text`: lowercased, non-letters dropped, each word
/// padded with one space on either side.
pub fn trigrams(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphabetic() { c } else { ' ' })
        .collect();
    let mut out = Vec::new();
    for word in cleaned.split_whitespace() {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(word.chars())
            .chain(std::iter::once(' '))
            .collect();
        for w in padded.windows(3) {
            out.push(w.iter().collect());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfileSet {
    profiles: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Serialize, Deserialize)]
struct LanguageProfileFile {
    version: u32,
    languages: BTreeMap<String, BTreeMap<String, f64>>,
}

impl LanguageProfileSet {
    /// Relative trigram frequencies per language sample text.
    pub fn from_corpora<'a>(corpora: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, String> {
        let mut profiles = BTreeMap::new();
        for (lang, text) in corpora {
            let grams = trigrams(text);
            if grams.is_empty() {
                return Err(format!("corpus for {lang} has no trigrams"));
            }
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for g in &grams {
                *counts.entry(g.clone()).or_default() += 1;
            }
            let n = grams.len() as f64;
            profiles.insert(lang.to_string(), counts.into_iter().map(|(g, c)| (g, c as f64 / n)).collect());
        }
        if profiles.is_empty() {
            return Err("no language corpora".into());
        }
        Ok(Self { profiles })
    }

    /// Profiles built from the sample texts shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_corpora(BUNDLED_CORPORA).expect("bundled corpora are non-empty")
    }

    pub fn bundled_corpora() -> &'static [(&'static str, &'static str)] {
        &BUNDLED_CORPORA
    }

    /// Keeps only the listed languages.
    pub fn restricted_to(&self, languages: &[&str]) -> Self {
        Self {
            profiles: self
                .profiles
                .iter()
                .filter(|(k, _)| languages.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn table(&self, language: &str) -> Option<&BTreeMap<String, f64>> {
        self.profiles.get(language)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LanguageProfileFile {
            version: LANGUAGE_PROFILE_VERSION,
            languages: self.profiles.clone(),
        })
        .expect("profiles serialize")
    }

    pub fn load(path: &Path) -> Result<Self, ProfileIoError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProfileIoError::io(path, e))?;
        let doc: LanguageProfileFile = serde_json::from_str(&text).map_err(|e| ProfileIoError::invalid(path, e))?;
        if doc.version != LANGUAGE_PROFILE_VERSION {
            return Err(ProfileIoError::invalid(path, format!("unsupported version {}", doc.version)));
        }
        if doc.languages.is_empty() {
            return Err(ProfileIoError::invalid(path, "no languages"));
        }
        for (lang, table) in &doc.languages {
            let total: f64 = table.values().sum();
            if table.is_empty() || (total - 1.0).abs() > 1e-9 || table.values().any(|v| *v < 0.0) {
                return Err(ProfileIoError::invalid(path, format!("table for {lang} is not a distribution")));
            }
        }
        Ok(Self {
            profiles: doc.languages,
        })
    }
}

/// Most likely language, or `None` below the trigram floor.
///
/// Each language is scored by the mean log of its smoothed trigram
/// frequencies; confidence is the gap between the two largest softmax
/// probabilities of those mean scores.
pub fn detect_language(text: &str, profiles: &LanguageProfileSet) -> Option<LanguageGuess> {
    let grams = trigrams(text);
    if grams.len() < MIN_TRIGRAMS || profiles.profiles.is_empty() {
        return None;
    }
    let n = grams.len() as f64;
    let scores: Vec<(&str, f64)> = profiles
        .profiles
        .iter()
        .map(|(lang, table)| {
            let sum: f64 = grams
                .iter()
                .map(|g| (table.get(g).copied().unwrap_or(0.0) + SMOOTHING).ln())
                .sum();
            (lang.as_str(), sum / n)
        })
        .collect();
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s.1 - max).exp()).sum();
    let mut probs: Vec<(&str, f64)> = scores.iter().map(|(l, s)| (*l, (s - max).exp() / z)).collect();
    // descending probability, ties by language code
    probs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let top = probs[0];
    let second = probs.get(1).map_or(0.0, |p| p.1);
    Some(LanguageGuess {
        language: top.0.to_string(),
        confidence: (top.1 - second).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextlangConfig {
    pub language_weight: f64,
    pub place_weight: f64,
}

impl Default for TextlangConfig {
    fn default() -> Self {
        Self {
            language_weight: 1.0,
            place_weight: 2.0,
        }
    }
}

/// Normalized word n-grams (1 to [`MAX_PLACE_WORDS`] words) of `text`.
pub fn place_candidates(text: &str) -> BTreeSet<String> {
    let words: Vec<String> = text
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\'' || c == '\u{2019}'))
        .map(normalize_place_name)
        .filter(|w| !w.is_empty())
        .collect();
    let mut out = BTreeSet::new();
    for len in 1..=MAX_PLACE_WORDS {
        for window in words.windows(len) {
            out.insert(window.join(" "));
        }
    }
    out
}

pub fn score_textlang<T: Scalar>(
    observations: &[TextObservation],
    registry: &CountryRegistry,
    profiles: &LanguageProfileSet,
    config: &TextlangConfig,
) -> EvidenceScores<T> {
    if observations.is_empty() {
        return EvidenceScores::abstain(TEXTLANG, "no text recognized");
    }
    // repeated reads of one sign collapse to a single text
    let texts: BTreeSet<&str> = observations.iter().map(|o| o.text.trim()).filter(|t| !t.is_empty()).collect();
    let joined = texts.iter().copied().collect::<Vec<_>>().join(" ");

    let mut raw: BTreeMap<_, f64> = registry.codes().into_iter().map(|c| (c, 0.0)).collect();
    let mut notes = Vec::new();

    if let Some(guess) = detect_language(&joined, profiles) {
        notes.push(format!("text language {} (confidence {:.3})", guess.language, guess.confidence));
        for sheet in registry.sheets() {
            let share = sheet.language_weight(&guess.language);
            *raw.get_mut(&sheet.code).expect("registry code") += config.language_weight * guess.confidence * share;
        }
    }

    let candidates: BTreeSet<String> = texts.iter().flat_map(|t| place_candidates(t)).collect();
    for phrase in &candidates {
        let hits = registry.lookup_place(phrase);
        if hits.is_empty() {
            continue;
        }
        let share = 1.0 / hits.len() as f64;
        let names: Vec<String> = hits.iter().map(|c| c.to_string()).collect();
        notes.push(format!("place name {phrase:?} found in {}", names.join(", ")));
        for code in hits {
            *raw.get_mut(&code).expect("gazetteer codes are registered") += config.place_weight * share;
        }
    }

    if raw.values().all(|v| *v <= 0.0) {
        return EvidenceScores::abstain(TEXTLANG, "text carried no language or place signal");
    }
    let raw = raw.into_iter().map(|(c, v)| (c, T::of(v))).collect();
    EvidenceScores::from_weights(TEXTLANG, raw, notes).expect("positive text weights")
}
