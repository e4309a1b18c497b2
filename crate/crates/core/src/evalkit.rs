//! Dataset manifests, rank statistics, evaluation runs and the cumulative
//! ablation harness.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Engine, EngineError};
use crate::evidence::EvidenceScores;
use crate::fusion::{fuse, CountryRanking, DevItem, GuessReport, WeightVector};
use crate::imaging::decode_panorama;
use crate::knowledge::{CountryCode, CountryRegistry};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestItem {
    pub path: PathBuf,
    pub truth: CountryCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub north_offset_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn new(items: Vec<ManifestItem>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(&item.path) {
                return Err(EvalError::Argument(format!("duplicate path {}", item.path.display())));
            }
        }
        Ok(Self { items })
    }

    /// Reads line-delimited records. Relative paths resolve against the
    /// manifest's directory; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|message| EvalError::Manifest {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut item: ManifestItem = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if item.path.is_relative() {
                item.path = base.join(&item.path);
            }
            items.push(item);
        }
        Self::new(items).map_err(|e| e.to_string())
    }

    /// Line-delimited form with paths as stored.
    pub fn to_jsonl(&self) -> String {
        self.items
            .iter()
            .map(|i| serde_json::to_string(i).expect("manifest item serializes") + "\n")
            .collect()
    }

    pub fn validate_against(&self, registry: &CountryRegistry) -> Result<(), EvalError> {
        match self.items.iter().find(|i| !registry.contains(&i.truth)) {
            Some(item) => Err(EvalError::Argument(format!(
                "{}: truth {} is not in the registry",
                item.path.display(),
                item.truth
            ))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub n: usize,
    pub mean_rank: f64,
    pub std_rank: f64,
    pub median_rank: f64,
    pub top1_count: usize,
}

/// 1-based position of `truth`.
pub fn rank_of_truth<T: Scalar>(ranking: &CountryRanking<T>, truth: &CountryCode) -> Result<usize, EvalError> {
    ranking
        .position(truth)
        .ok_or_else(|| EvalError::Argument(format!("{truth} is not in the ranking")))
}

/// Mean, sample standard deviation, median (mean of the middle two for even
/// counts) and top-1 count.
pub fn summarize(ranks: &[usize]) -> Result<RankMetrics, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::Argument("no ranks to summarize".into()));
    }
    if ranks.contains(&0) {
        return Err(EvalError::Argument("ranks are 1-based".into()));
    }
    let n = ranks.len();
    let mean = ranks.iter().map(|r| *r as f64).sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = ranks.iter().map(|r| (*r as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Ok(RankMetrics {
        n,
        mean_rank: mean,
        std_rank: std,
        median_rank: median,
        top1_count: ranks.iter().filter(|r| **r == 1).count(),
    })
}

/// SHA-256 over the report's canonical JSON.
pub fn report_digest<T: Scalar>(report: &GuessReport<T>) -> String {
    let json = serde_json::to_vec(report).expect("report serializes");
    hex::encode(Sha256::digest(&json))
}

/// Module evidence of one manifest item, or why it could not be produced.
#[derive(Debug, Clone)]
pub struct ItemEvidence {
    pub item: ManifestItem,
    pub evidence: Result<Vec<EvidenceScores<f64>>, String>,
}

/// Runs every active module over each item. Items run in parallel; output
/// order follows the manifest.
pub fn collect_evidence(manifest: &DatasetManifest, engine: &Engine) -> Vec<ItemEvidence> {
    manifest
        .items
        .par_iter()
        .map(|item| {
            let evidence = std::fs::read(&item.path)
                .map_err(|e| format!("{}: {e}", item.path.display()))
                .and_then(|bytes| decode_panorama(&bytes, item.north_offset_deg).map_err(|e| e.to_string()))
                .map(|pano| engine.evidence(&pano));
            ItemEvidence {
                item: item.clone(),
                evidence,
            }
        })
        .collect()
}

/// Evidence of the readable items in development-set form.
pub fn dev_items(evidence: &[ItemEvidence]) -> Vec<DevItem<f64>> {
    evidence
        .iter()
        .filter_map(|e| {
            e.evidence.as_ref().ok().map(|modules| DevItem {
                modules: modules.clone(),
                truth: e.item.truth,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub path: PathBuf,
    pub truth: CountryCode,
    pub rank: usize,
    pub top1: CountryCode,
    pub truth_score: f64,
    pub abstentions: BTreeSet<String>,
    pub report_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedItem {
    pub path: PathBuf,
    pub truth: CountryCode,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Absent when every item failed.
    pub metrics: Option<RankMetrics>,
    pub weights: WeightVector<f64>,
    pub items: Vec<ItemResult>,
    pub failures: Vec<FailedItem>,
}

impl EvaluationReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<48} {:>5} {:>5} {:>5}\n", "panorama", "truth", "top1", "rank"));
        for item in &self.items {
            let name = item.path.file_name().map_or_else(|| item.path.display().to_string(), |n| n.to_string_lossy().into_owned());
            out.push_str(&format!("{:<48} {:>5} {:>5} {:>5}\n", name, item.truth, item.top1, item.rank));
        }
        for f in &self.failures {
            out.push_str(&format!("FAILED {}: {}\n", f.path.display(), f.error));
        }
        match &self.metrics {
            Some(m) => out.push_str(&format!(
                "n={} mean={:.3} std={:.3} median={:.1} top1={} failed={}\n",
                m.n,
                m.mean_rank,
                m.std_rank,
                m.median_rank,
                m.top1_count,
                self.failures.len()
            )),
            None => out.push_str(&format!("no readable items, failed={}\n", self.failures.len())),
        }
        out
    }
}

fn score_items(
    evidence: &[ItemEvidence],
    weights: &WeightVector<f64>,
    registry: &CountryRegistry,
    keep: Option<&[String]>,
) -> Result<EvaluationReport, EvalError> {
    let mut items = Vec::new();
    let mut failures = Vec::new();
    for e in evidence {
        let modules = match &e.evidence {
            Ok(m) => m,
            Err(error) => {
                failures.push(FailedItem {
                    path: e.item.path.clone(),
                    truth: e.item.truth,
                    error: error.clone(),
                });
                continue;
            }
        };
        let modules: Vec<_> = modules
            .iter()
            .filter(|m| keep.is_none_or(|k| k.iter().any(|id| id == m.module_id())))
            .cloned()
            .collect();
        let report = fuse(modules, weights, registry).map_err(EngineError::from)?;
        items.push(ItemResult {
            path: e.item.path.clone(),
            truth: e.item.truth,
            rank: rank_of_truth(&report.ranking, &e.item.truth)?,
            top1: report.ranking.top().expect("non-empty registry"),
            truth_score: report.ranking.score(&e.item.truth).unwrap_or(0.0),
            abstentions: report.abstentions.clone(),
            report_digest: report_digest(&report),
        });
    }
    let ranks: Vec<usize> = items.iter().map(|i| i.rank).collect();
    Ok(EvaluationReport {
        metrics: if ranks.is_empty() { None } else { Some(summarize(&ranks)?) },
        weights: weights.clone(),
        items,
        failures,
    })
}

/// Full pipeline over every item. Unreadable items are reported as failures
/// and left out of the metrics.
pub fn run_evaluation(manifest: &DatasetManifest, engine: &Engine) -> Result<EvaluationReport, EvalError> {
    if manifest.is_empty() {
        return Err(EvalError::Argument("empty manifest".into()));
    }
    manifest.validate_against(engine.registry())?;
    let evidence = collect_evidence(manifest, engine);
    score_items(&evidence, engine.weights(), engine.registry(), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub description: String,
    pub modules: Vec<String>,
    pub metrics: Option<RankMetrics>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<32} {:>9} {:>8} {:>7} {:>5}\n", "variant", "avg rank", "std", "median", "top1");
        for row in &self.rows {
            match &row.metrics {
                Some(m) => out.push_str(&format!(
                    "{:<32} {:>9.2} {:>8.2} {:>7.1} {:>5}\n",
                    row.description, m.mean_rank, m.std_rank, m.median_rank, m.top1_count
                )),
                None => out.push_str(&format!("{:<32} {:>9}\n", row.description, "n/a")),
            }
        }
        out
    }
}

/// Cumulative removal: row 0 is the full system, row k drops
/// `removal_order[k-1]` from row k-1 and renormalizes the weights.
pub fn run_ablation<S: AsRef<str>>(
    manifest: &DatasetManifest,
    engine: &Engine,
    removal_order: &[S],
) -> Result<AblationTable, EvalError> {
    if manifest.is_empty() {
        return Err(EvalError::Argument("empty manifest".into()));
    }
    let mut modules: Vec<String> = engine.modules().to_vec();
    let mut seen = BTreeSet::new();
    for m in removal_order {
        let m = m.as_ref();
        if !modules.iter().any(|x| x == m) {
            return Err(EvalError::Argument(format!("module {m:?} is not configured")));
        }
        if !seen.insert(m) {
            return Err(EvalError::Argument(format!("module {m:?} removed twice")));
        }
    }
    manifest.validate_against(engine.registry())?;
    let evidence = collect_evidence(manifest, engine);

    let mut rows = Vec::with_capacity(removal_order.len() + 1);
    let mut description = "full system".to_string();
    for k in 0..=removal_order.len() {
        if k > 0 {
            let gone = removal_order[k - 1].as_ref();
            modules.retain(|m| m != gone);
            description = if k == 1 {
                format!("minus {gone}")
            } else {
                format!("as above minus {gone}")
            };
        }
        let weights = if modules.is_empty() {
            WeightVector::empty()
        } else {
            engine.weights().restricted(&modules).map_err(EngineError::from)?
        };
        let report = score_items(&evidence, &weights, engine.registry(), Some(&modules))?;
        rows.push(AblationRow {
            description: description.clone(),
            modules: modules.clone(),
            metrics: report.metrics,
            failures: report.failures.len(),
        });
    }
    Ok(AblationTable { rows })
}
