//! Evidence modules. Each one turns a panorama (or provider output derived
//! from it) into a per-country probability distribution, or abstains.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::knowledge::CountryCode;
use crate::scalar::{sums_to_one, Scalar};

pub mod color;
pub mod freqlist;
pub mod plate;
pub mod solar;
pub mod textlang;

pub const COLOR: &str = "color";
pub const SOLAR: &str = "solar";
pub const TEXTLANG: &str = "textlang";
pub const CAPTION: &str = "caption";
pub const OBJECT: &str = "object";
pub const PLATE: &str = "plate";

/// Every module id, in the default ablation removal order reversed.
pub const ALL_MODULES: [&str; 6] = [CAPTION, COLOR, SOLAR, OBJECT, TEXTLANG, PLATE];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvidenceError {
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileIoError {
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid profile {path}: {message}")]
    Invalid { path: String, message: String },
}

impl ProfileIoError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn invalid(path: &std::path::Path, message: impl std::fmt::Display) -> Self {
        Self::Invalid {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}

/// `*.json` files directly inside `dir`, sorted.
pub(crate) fn json_files(dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>, ProfileIoError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| ProfileIoError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// One module's verdict: a distribution over countries, or an abstention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawEvidence<T>")]
pub struct EvidenceScores<T> {
    module_id: String,
    scores: BTreeMap<CountryCode, T>,
    abstained: bool,
    notes: Vec<String>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawEvidence<T> {
    module_id: String,
    scores: BTreeMap<CountryCode, T>,
    abstained: bool,
    #[serde(default)]
    notes: Vec<String>,
}

impl<T: Scalar> TryFrom<RawEvidence<T>> for EvidenceScores<T> {
    type Error = EvidenceError;

    fn try_from(raw: RawEvidence<T>) -> Result<Self, Self::Error> {
        if raw.abstained {
            if !raw.scores.is_empty() {
                return Err(EvidenceError::Argument("abstained evidence carries scores".into()));
            }
            return Ok(Self {
                module_id: raw.module_id,
                scores: raw.scores,
                abstained: true,
                notes: raw.notes,
            });
        }
        Self::from_distribution(raw.module_id, raw.scores, raw.notes)
    }
}

impl<T: Scalar> EvidenceScores<T> {
    /// Normalizes non-negative raw weights into a distribution.
    pub fn from_weights(
        module_id: impl Into<String>,
        raw: BTreeMap<CountryCode, T>,
        notes: Vec<String>,
    ) -> Result<Self, EvidenceError> {
        if raw.is_empty() {
            return Err(EvidenceError::Argument("no countries to score".into()));
        }
        if raw.values().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(EvidenceError::Argument("raw weights must be finite and non-negative".into()));
        }
        let total: T = raw.values().copied().sum();
        if total <= T::zero() {
            return Err(EvidenceError::Argument("raw weights sum to zero".into()));
        }
        let scores = raw.into_iter().map(|(c, v)| (c, v / total)).collect();
        Ok(Self {
            module_id: module_id.into(),
            scores,
            abstained: false,
            notes,
        })
    }

    /// Wraps an already normalized distribution, checking the invariants.
    pub fn from_distribution(
        module_id: impl Into<String>,
        scores: BTreeMap<CountryCode, T>,
        notes: Vec<String>,
    ) -> Result<Self, EvidenceError> {
        if scores.is_empty() {
            return Err(EvidenceError::Argument("non-abstained evidence needs scores".into()));
        }
        if scores.values().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(EvidenceError::Argument("scores must lie in [0, 1]".into()));
        }
        if !sums_to_one(scores.values().copied()) {
            return Err(EvidenceError::Argument("scores must sum to 1".into()));
        }
        Ok(Self {
            module_id: module_id.into(),
            scores,
            abstained: false,
            notes,
        })
    }

    pub fn uniform(module_id: impl Into<String>, countries: impl IntoIterator<Item = CountryCode>, note: Option<String>) -> Result<Self, EvidenceError> {
        let raw = countries.into_iter().map(|c| (c, T::one())).collect();
        Self::from_weights(module_id, raw, note.into_iter().collect())
    }

    pub fn abstain(module_id: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            module_id: module_id.into(),
            scores: BTreeMap::new(),
            abstained: true,
            notes: vec![note.into()],
        }
    }

    pub fn module_id(&self) -> &str {
        &self.module_id
    }

    pub fn scores(&self) -> &BTreeMap<CountryCode, T> {
        &self.scores
    }

    /// Score for `code`, zero when the module did not mention it.
    pub fn score(&self, code: &CountryCode) -> T {
        self.scores.get(code).copied().unwrap_or_else(T::zero)
    }

    pub fn is_abstained(&self) -> bool {
        self.abstained
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn push_note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Countries sharing the maximum score.
    pub fn argmax_set(&self) -> BTreeSet<CountryCode> {
        let Some(best) = self.scores.values().copied().reduce(T::max) else {
            return BTreeSet::new();
        };
        self.scores
            .iter()
            .filter(|(_, v)| **v == best)
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn with_module_id(mut self, module_id: impl Into<String>) -> Self {
        self.module_id = module_id.into();
        self
    }
}
