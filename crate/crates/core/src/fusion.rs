//! Linear opinion pool over evidence modules, and coordinate-wise grid
//! refinement of the module weights against mean rank of truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evidence::EvidenceScores;
use crate::knowledge::{CountryCode, CountryRegistry};
use crate::scalar::{sums_to_one, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("no weight for module {0}")]
    MissingWeight(String),
    #[error("module {0} supplied twice")]
    DuplicateModule(String),
    #[error("module {module} scores unknown country {code}")]
    UnknownCountry { module: String, code: CountryCode },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Non-negative module weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", transparent)]
pub struct WeightVector<T> {
    weights: BTreeMap<String, T>,
}

impl<T: Scalar> WeightVector<T> {
    pub fn new(weights: BTreeMap<String, T>) -> Result<Self, FusionError> {
        if weights.values().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(FusionError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if !sums_to_one(weights.values().copied()) {
            return Err(FusionError::InvalidWeights("weights must sum to 1".into()));
        }
        Ok(Self { weights })
    }

    /// Scales non-negative raw weights to sum to one.
    pub fn normalized(raw: BTreeMap<String, T>) -> Result<Self, FusionError> {
        if raw.values().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(FusionError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        let total: T = raw.values().copied().sum();
        if total <= T::zero() {
            return Err(FusionError::InvalidWeights("weights sum to zero".into()));
        }
        Ok(Self {
            weights: raw.into_iter().map(|(k, w)| (k, w / total)).collect(),
        })
    }

    pub fn uniform<S: AsRef<str>>(modules: impl IntoIterator<Item = S>) -> Result<Self, FusionError> {
        Self::normalized(modules.into_iter().map(|m| (m.as_ref().to_string(), T::one())).collect())
    }

    /// The empty vector, used when every module abstained.
    pub fn empty() -> Self {
        Self {
            weights: BTreeMap::new(),
        }
    }

    pub fn get(&self, module: &str) -> Option<T> {
        self.weights.get(module).copied()
    }

    pub fn modules(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.weights.iter().map(|(k, w)| (k.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Renormalized over `keep`; equal shares when the kept weights are all zero.
    pub fn restricted<S: AsRef<str>>(&self, keep: &[S]) -> Result<Self, FusionError> {
        let mut kept = BTreeMap::new();
        for m in keep {
            let m = m.as_ref();
            let w = self.get(m).ok_or_else(|| FusionError::MissingWeight(m.to_string()))?;
            kept.insert(m.to_string(), w);
        }
        if kept.is_empty() {
            return Ok(Self::empty());
        }
        let total: T = kept.values().copied().sum();
        if total > T::zero() {
            Self::normalized(kept)
        } else {
            Self::uniform(kept.keys())
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    /// Reads a `{module_id: weight}` document.
    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = std::fs::read_to_string(path).map_err(|e| FusionError::Argument(format!("{}: {e}", path.display())))?;
        let raw: BTreeMap<String, T> =
            serde_json::from_str(&text).map_err(|e| FusionError::Argument(format!("{}: {e}", path.display())))?;
        Self::new(raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RankedCountry<T> {
    pub country: CountryCode,
    pub score: T,
}

/// Total order over the registry, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", transparent)]
pub struct CountryRanking<T> {
    entries: Vec<RankedCountry<T>>,
}

impl<T: Scalar> CountryRanking<T> {
    /// Sorts by score descending, ties by ascending code.
    pub fn from_scores(scores: impl IntoIterator<Item = (CountryCode, T)>) -> Self {
        let mut entries: Vec<RankedCountry<T>> = scores
            .into_iter()
            .map(|(country, score)| RankedCountry { country, score })
            .collect();
        entries.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.country.cmp(&b.country))
        });
        Self { entries }
    }

    pub fn entries(&self) -> &[RankedCountry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self) -> Option<CountryCode> {
        self.entries.first().map(|e| e.country)
    }

    /// 1-based position of `code`.
    pub fn position(&self, code: &CountryCode) -> Option<usize> {
        self.entries.iter().position(|e| e.country == *code).map(|i| i + 1)
    }

    pub fn score(&self, code: &CountryCode) -> Option<T> {
        self.entries.iter().find(|e| e.country == *code).map(|e| e.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GuessReport<T> {
    pub ranking: CountryRanking<T>,
    pub per_module: BTreeMap<String, EvidenceScores<T>>,
    /// Effective weights after abstentions were removed.
    pub weights_used: WeightVector<T>,
    pub abstentions: BTreeSet<String>,
}

impl<T: Scalar> GuessReport<T> {
    /// Weighted contribution of each module to `code`'s fused score.
    pub fn contributions(&self, code: &CountryCode) -> BTreeMap<String, T> {
        self.weights_used
            .iter()
            .map(|(m, w)| (m.to_string(), w * self.per_module.get(m).map_or(T::zero(), |e| e.score(code))))
            .collect()
    }
}

/// Fuses module evidence over the registry's countries.
pub fn fuse<T: Scalar>(
    modules: Vec<EvidenceScores<T>>,
    weights: &WeightVector<T>,
    registry: &CountryRegistry,
) -> Result<GuessReport<T>, FusionError> {
    fuse_over(modules, weights, &registry.codes())
}

/// Fuses module evidence over an explicit country universe.
///
/// Abstaining modules are dropped and the remaining weights renormalized; a
/// country a module does not mention scores zero in that module. When every
/// module abstains the result is uniform.
pub fn fuse_over<T: Scalar>(
    modules: Vec<EvidenceScores<T>>,
    weights: &WeightVector<T>,
    universe: &[CountryCode],
) -> Result<GuessReport<T>, FusionError> {
    if universe.is_empty() {
        return Err(FusionError::Argument("empty country universe".into()));
    }
    let known: BTreeSet<CountryCode> = universe.iter().copied().collect();
    let mut per_module = BTreeMap::new();
    let mut abstentions = BTreeSet::new();
    let mut active = BTreeMap::new();
    for ev in modules {
        let id = ev.module_id().to_string();
        let w = weights.get(&id).ok_or_else(|| FusionError::MissingWeight(id.clone()))?;
        if per_module.contains_key(&id) {
            return Err(FusionError::DuplicateModule(id));
        }
        if ev.is_abstained() {
            abstentions.insert(id.clone());
        } else {
            if let Some(code) = ev.scores().keys().find(|c| !known.contains(c)) {
                return Err(FusionError::UnknownCountry { module: id, code: *code });
            }
            active.insert(id.clone(), w);
        }
        per_module.insert(id, ev);
    }

    let weights_used = if active.is_empty() {
        WeightVector::empty()
    } else if active.values().copied().sum::<T>() > T::zero() {
        WeightVector::normalized(active)?
    } else {
        WeightVector::uniform(active.keys())?
    };

    let fused: Vec<(CountryCode, T)> = if weights_used.is_empty() {
        let share = T::one() / T::of_count(known.len());
        known.iter().map(|c| (*c, share)).collect()
    } else {
        known
            .iter()
            .map(|c| {
                let s = weights_used
                    .iter()
                    .map(|(m, w)| w * per_module[m].score(c))
                    .sum::<T>();
                (*c, s)
            })
            .collect()
    };

    Ok(GuessReport {
        ranking: CountryRanking::from_scores(fused),
        per_module,
        weights_used,
        abstentions,
    })
}

/// One development-set panorama: every module's evidence and the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DevItem<T> {
    pub modules: Vec<EvidenceScores<T>>,
    pub truth: CountryCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Grid points per coordinate are `0, 1/steps, ..., 1`.
    pub steps: u32,
    pub max_sweeps: u32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            max_sweeps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct OptimizedWeights<T> {
    pub weights: WeightVector<T>,
    pub objective: f64,
    pub sweeps: u32,
    pub evaluations: usize,
}

/// Mean 1-based rank of the truth under `weights`.
pub fn mean_truth_rank<T: Scalar>(
    dev: &[DevItem<T>],
    weights: &WeightVector<T>,
    universe: &[CountryCode],
) -> Result<f64, FusionError> {
    if dev.is_empty() {
        return Err(FusionError::Argument("empty development set".into()));
    }
    let mut total = 0usize;
    for item in dev {
        let report = fuse_over(item.modules.clone(), weights, universe)?;
        total += report
            .ranking
            .position(&item.truth)
            .ok_or_else(|| FusionError::Argument(format!("truth {} not in universe", item.truth)))?;
    }
    Ok(total as f64 / dev.len() as f64)
}

/// Module ids present anywhere in the development set.
pub fn dev_modules<T: Scalar>(dev: &[DevItem<T>]) -> Vec<String> {
    let ids: BTreeSet<String> = dev
        .iter()
        .flat_map(|d| d.modules.iter().map(|m| m.module_id().to_string()))
        .collect();
    ids.into_iter().collect()
}

/// Coordinate-wise grid refinement on the weight simplex.
///
/// Starts from uniform weights. Each sweep tries every grid value for each
/// module in turn, rescaling the other weights proportionally, and keeps a
/// candidate only if it strictly lowers mean rank. Stops after a sweep with
/// no improvement or `max_sweeps` sweeps.
pub fn optimize_weights<T: Scalar>(
    dev: &[DevItem<T>],
    universe: &[CountryCode],
    config: &OptimizerConfig,
) -> Result<OptimizedWeights<T>, FusionError> {
    if dev.is_empty() {
        return Err(FusionError::Argument("empty development set".into()));
    }
    if config.steps == 0 {
        return Err(FusionError::Argument("grid needs at least one step".into()));
    }
    let modules = dev_modules(dev);
    if modules.is_empty() {
        return Err(FusionError::Argument("development set has no modules".into()));
    }
    let mut best = WeightVector::uniform(&modules)?;
    let mut best_obj = mean_truth_rank(dev, &best, universe)?;
    let mut evaluations = 1;
    if modules.len() == 1 {
        return Ok(OptimizedWeights {
            weights: best,
            objective: best_obj,
            sweeps: 0,
            evaluations,
        });
    }

    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut improved = false;
        for target in &modules {
            for step in 0..=config.steps {
                let v = T::of_count(step as usize) / T::of_count(config.steps as usize);
                let candidate = rescale(&best, target, v)?;
                if candidate == best {
                    continue;
                }
                let obj = mean_truth_rank(dev, &candidate, universe)?;
                evaluations += 1;
                if obj < best_obj {
                    best = candidate;
                    best_obj = obj;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(OptimizedWeights {
        weights: best,
        objective: best_obj,
        sweeps,
        evaluations,
    })
}

/// Sets `target` to `v` and scales the others to fill `1 - v`.
fn rescale<T: Scalar>(current: &WeightVector<T>, target: &str, v: T) -> Result<WeightVector<T>, FusionError> {
    let rest: T = current.iter().filter(|(m, _)| *m != target).map(|(_, w)| w).sum();
    let others = current.len() - 1;
    let fill = T::one() - v;
    let weights = current
        .iter()
        .map(|(m, w)| {
            let nw = if m == target {
                v
            } else if rest > T::zero() {
                (w / rest) * fill
            } else {
                fill / T::of_count(others)
            };
            (m.to_string(), nw)
        })
        .collect();
    WeightVector::new(weights)
}
