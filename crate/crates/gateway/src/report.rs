//! Client-facing form of a guess report, and its text rendering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use whichcountry_core::knowledge::{CountryCode, CountryRegistry};
use whichcountry_core::GuessReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub country: CountryCode,
    pub name: String,
    pub score: f64,
    /// Weighted share of each contributing module; sums to `score`.
    pub contributions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleView {
    pub abstained: bool,
    /// Effective fusion weight; zero for abstaining modules.
    pub weight: f64,
    pub notes: Vec<String>,
    pub top: Vec<(CountryCode, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessResponse {
    pub ranking: Vec<RankingRow>,
    pub modules: BTreeMap<String, ModuleView>,
    pub abstentions: BTreeSet<String>,
}

/// Countries listed per module in [`ModuleView::top`].
pub const MODULE_TOP: usize = 5;

impl GuessResponse {
    pub fn from_report(report: &GuessReport, registry: &CountryRegistry) -> Self {
        let ranking = report
            .ranking
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| RankingRow {
                rank: i + 1,
                country: e.country,
                name: registry
                    .get(&e.country)
                    .map_or_else(|| e.country.to_string(), |s| s.display_name.clone()),
                score: e.score,
                contributions: report.contributions(&e.country),
            })
            .collect();
        let modules = report
            .per_module
            .iter()
            .map(|(id, ev)| {
                let mut top: Vec<(CountryCode, f64)> = ev.scores().iter().map(|(c, s)| (*c, *s)).collect();
                top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                top.truncate(MODULE_TOP);
                let view = ModuleView {
                    abstained: ev.is_abstained(),
                    weight: report.weights_used.get(id).unwrap_or(0.0),
                    notes: ev.notes().to_vec(),
                    top: if ev.is_abstained() { vec![] } else { top },
                };
                (id.clone(), view)
            })
            .collect();
        Self {
            ranking,
            modules,
            abstentions: report.abstentions.clone(),
        }
    }

    /// Ranked table of the first `limit` countries; with `explain`, the
    /// per-module contributions and notes.
    pub fn render(&self, limit: usize, explain: bool) -> String {
        let mut out = format!("{:>4}  {:<4} {:<28} {:>8}\n", "rank", "code", "country", "score");
        for row in self.ranking.iter().take(limit) {
            out.push_str(&format!(
                "{:>4}  {:<4} {:<28} {:>8.4}\n",
                row.rank, row.country, row.name, row.score
            ));
            if explain {
                let parts: Vec<String> = row
                    .contributions
                    .iter()
                    .map(|(m, c)| format!("{m} {c:.4}"))
                    .collect();
                if !parts.is_empty() {
                    out.push_str(&format!("{:>10}{}\n", "", parts.join(", ")));
                }
            }
        }
        if explain {
            out.push('\n');
            for (id, m) in &self.modules {
                let state = if m.abstained {
                    "abstained".to_string()
                } else {
                    format!("weight {:.3}", m.weight)
                };
                out.push_str(&format!("{id} ({state})\n"));
                for note in &m.notes {
                    out.push_str(&format!("  {note}\n"));
                }
                if !m.top.is_empty() {
                    let top: Vec<String> = m.top.iter().map(|(c, s)| format!("{c} {s:.3}")).collect();
                    out.push_str(&format!("  top: {}\n", top.join(", ")));
                }
            }
        } else if !self.abstentions.is_empty() {
            let list: Vec<&str> = self.abstentions.iter().map(String::as_str).collect();
            out.push_str(&format!("abstained: {}\n", list.join(", ")));
        }
        out
    }
}
