//! Average term lists: per-country mean occurrence of caption words or
//! detected object labels, matched by cosine similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{json_files, EvidenceError, EvidenceScores, ProfileIoError, CAPTION, OBJECT};
use crate::knowledge::CountryCode;
use crate::scalar::Scalar;

pub const FREQUENCY_PROFILE_VERSION: u32 = 1;

/// Bundled English stopword list for caption text.
pub const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKind {
    CaptionWords,
    ObjectLabels,
}

impl FrequencyKind {
    pub fn module_id(self) -> &'static str {
        match self {
            FrequencyKind::CaptionWords => CAPTION,
            FrequencyKind::ObjectLabels => OBJECT,
        }
    }
}

pub fn english_stopwords() -> BTreeSet<String> {
    ENGLISH_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCounts {
    counts: BTreeMap<String, u64>,
}

impl TermCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: &str, n: u64) {
        let term = term.to_lowercase();
        if term.is_empty() || n == 0 {
            return;
        }
        *self.counts.entry(term).or_default() += n;
    }

    pub fn merge(&mut self, other: &TermCounts) {
        for (t, n) in &other.counts {
            *self.counts.entry(t.clone()).or_default() += n;
        }
    }

    /// One count per label, lowercased; no stopword filtering.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut out = Self::new();
        for label in labels {
            out.add(label.trim(), 1);
        }
        out
    }

    pub fn get(&self, term: &str) -> u64 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(t, n)| (t.as_str(), *n))
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self {
            counts: self.counts.iter().map(|(t, n)| (t.clone(), n * k)).collect(),
        }
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for TermCounts {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut out = Self::new();
        for (t, n) in iter {
            out.add(&t.into(), n);
        }
        out
    }
}

/// Lowercases, splits on non-letters, drops short words and stopwords.
pub fn tokenize_filter(text: &str, stopwords: &BTreeSet<String>) -> TermCounts {
    let mut out = TermCounts::new();
    let lower = text.to_lowercase();
    for word in lower.split(|c: char| !c.is_alphabetic()) {
        if word.chars().count() < 2 || stopwords.contains(word) {
            continue;
        }
        out.add(word, 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FrequencyProfile<T> {
    pub country: CountryCode,
    pub kind: FrequencyKind,
    pub avg_freq: BTreeMap<String, T>,
    pub doc_count: usize,
}

/// Mean per-document count of every term seen in `docs`.
pub fn build_frequency_profile<T: Scalar>(
    country: CountryCode,
    kind: FrequencyKind,
    docs: &[TermCounts],
) -> Result<FrequencyProfile<T>, EvidenceError> {
    if docs.is_empty() {
        return Err(EvidenceError::Argument(format!("no documents for {country}")));
    }
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for doc in docs {
        for (t, n) in doc.iter() {
            *totals.entry(t.to_string()).or_default() += n;
        }
    }
    let n = T::of_count(docs.len());
    Ok(FrequencyProfile {
        country,
        kind,
        avg_freq: totals
            .into_iter()
            .map(|(t, c)| (t, T::of_count(c as usize) / n))
            .collect(),
        doc_count: docs.len(),
    })
}

/// Cosine between the observed counts and a profile, zero for a zero vector.
pub fn cosine_similarity<T: Scalar>(observed: &TermCounts, profile: &BTreeMap<String, T>) -> T {
    let mut dot = T::zero();
    let mut norm_obs = T::zero();
    for (t, n) in observed.iter() {
        let o = T::of_count(n as usize);
        norm_obs = norm_obs + o * o;
        if let Some(p) = profile.get(t) {
            dot = dot + o * *p;
        }
    }
    let norm_prof: T = profile.values().map(|p| *p * *p).sum();
    if norm_obs <= T::zero() || norm_prof <= T::zero() {
        return T::zero();
    }
    let sim = dot / (norm_obs.sqrt() * norm_prof.sqrt());
    sim.min(T::one()).max(T::zero())
}

pub fn score_frequency<T: Scalar>(
    observed: &TermCounts,
    profiles: &[FrequencyProfile<T>],
) -> Result<EvidenceScores<T>, EvidenceError> {
    let Some(first) = profiles.first() else {
        return Err(EvidenceError::Argument("no frequency profiles".into()));
    };
    let kind = first.kind;
    if profiles.iter().any(|p| p.kind != kind) {
        return Err(EvidenceError::Argument("profiles of mixed kinds".into()));
    }
    let module = kind.module_id();
    if observed.is_empty() {
        return Ok(EvidenceScores::abstain(module, "no terms observed"));
    }
    let sims: BTreeMap<CountryCode, T> = profiles
        .iter()
        .map(|p| (p.country, cosine_similarity(observed, &p.avg_freq)))
        .collect();
    if sims.values().all(|s| *s <= T::zero()) {
        return EvidenceScores::uniform(
            module,
            sims.keys().copied(),
            Some("observed terms match no profile; uniform".into()),
        );
    }
    let terms: Vec<&str> = observed.iter().map(|(t, _)| t).take(8).collect();
    EvidenceScores::from_weights(module, sims, vec![format!("observed terms: {}", terms.join(", "))])
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct FrequencyProfileFile<T> {
    version: u32,
    code: CountryCode,
    kind: FrequencyKind,
    doc_count: usize,
    terms: BTreeMap<String, T>,
}

pub fn save_frequency_profile<T: Scalar>(profile: &FrequencyProfile<T>, path: &Path) -> Result<(), ProfileIoError> {
    let doc = FrequencyProfileFile {
        version: FREQUENCY_PROFILE_VERSION,
        code: profile.country,
        kind: profile.kind,
        doc_count: profile.doc_count,
        terms: profile.avg_freq.clone(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("profile serializes");
    std::fs::write(path, text).map_err(|e| ProfileIoError::io(path, e))
}

pub fn load_frequency_profile<T: Scalar>(path: &Path) -> Result<FrequencyProfile<T>, ProfileIoError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProfileIoError::io(path, e))?;
    let doc: FrequencyProfileFile<T> = serde_json::from_str(&text).map_err(|e| ProfileIoError::invalid(path, e))?;
    if doc.version != FREQUENCY_PROFILE_VERSION {
        return Err(ProfileIoError::invalid(path, format!("unsupported version {}", doc.version)));
    }
    if doc.doc_count == 0 {
        return Err(ProfileIoError::invalid(path, "doc_count must be positive"));
    }
    if doc
        .terms
        .iter()
        .any(|(t, v)| t.is_empty() || *t != t.to_lowercase() || !(*v >= T::zero()))
    {
        return Err(ProfileIoError::invalid(path, "terms must be lowercase with non-negative averages"));
    }
    Ok(FrequencyProfile {
        country: doc.code,
        kind: doc.kind,
        avg_freq: doc.terms,
        doc_count: doc.doc_count,
    })
}

pub fn load_frequency_profiles<T: Scalar>(dir: &Path) -> Result<Vec<FrequencyProfile<T>>, ProfileIoError> {
    json_files(dir)?.iter().map(|p| load_frequency_profile(p)).collect()
}
