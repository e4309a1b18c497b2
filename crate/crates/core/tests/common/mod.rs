//! Brute-force reference computations, written independently of the library
//! code they check.

#![allow(dead_code)]

pub mod invariants;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whichcountry_core::evidence::EvidenceScores;
use whichcountry_core::knowledge::CountryCode;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Codes AA, AB, ..., in order.
pub fn codes(n: usize) -> Vec<CountryCode> {
    (0..n)
        .map(|i| {
            let s: String = [b'A' + (i / 26) as u8, b'A' + (i % 26) as u8].iter().map(|b| *b as char).collect();
            CountryCode::new(&s).unwrap()
        })
        .collect()
}

/// Per-channel intensity counts divided by pixel count, one pixel at a time.
pub fn histogram(pixels: &[[u8; 3]]) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0u64; 256]; 3];
    for p in pixels {
        counts[0][p[0] as usize] += 1;
        counts[1][p[1] as usize] += 1;
        counts[2][p[2] as usize] += 1;
    }
    counts
        .into_iter()
        .map(|ch| ch.into_iter().map(|c| c as f64 / pixels.len() as f64).collect())
        .collect()
}

/// Bin-wise mean over histograms given as 3x256 arrays.
pub fn mean_histogram(hists: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; 256]; 3];
    for h in hists {
        for c in 0..3 {
            for b in 0..256 {
                out[c][b] += h[c][b];
            }
        }
    }
    for row in &mut out {
        for v in row.iter_mut() {
            *v /= hists.len() as f64;
        }
    }
    out
}

pub fn l1_mean_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for c in 0..3 {
        for i in 0..256 {
            total += (a[c][i] - b[c][i]).abs();
        }
    }
    total / 768.0
}

/// Cosine over the explicit union vocabulary.
pub fn cosine(observed: &BTreeMap<String, u64>, profile: &BTreeMap<String, f64>) -> f64 {
    let vocab: BTreeSet<&String> = observed.keys().chain(profile.keys()).collect();
    let xs: Vec<f64> = vocab.iter().map(|t| observed.get(*t).copied().unwrap_or(0) as f64).collect();
    let ys: Vec<f64> = vocab.iter().map(|t| profile.get(*t).copied().unwrap_or(0.0)).collect();
    let dot: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let nx = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ny = ys.iter().map(|y| y * y).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx * ny)
    }
}

pub fn average_counts(docs: &[BTreeMap<String, u64>]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for d in docs {
        for (t, n) in d {
            *out.entry(t.clone()).or_default() += *n as f64;
        }
    }
    for v in out.values_mut() {
        *v /= docs.len() as f64;
    }
    out
}

/// Linear pool over `universe`: abstentions dropped, weights renormalized
/// (equal shares when they sum to zero), uniform when nothing is left.
pub fn fuse(modules: &[EvidenceScores<f64>], weights: &BTreeMap<String, f64>, universe: &[CountryCode]) -> Vec<(CountryCode, f64)> {
    let active: Vec<&EvidenceScores<f64>> = modules.iter().filter(|m| !m.is_abstained()).collect();
    let mut fused = vec![0.0; universe.len()];
    if active.is_empty() {
        fused.iter_mut().for_each(|v| *v = 1.0 / universe.len() as f64);
    } else {
        let total: f64 = active.iter().map(|m| weights[m.module_id()]).sum();
        for m in &active {
            let w = if total > 0.0 {
                weights[m.module_id()] / total
            } else {
                1.0 / active.len() as f64
            };
            for (i, c) in universe.iter().enumerate() {
                fused[i] += w * m.scores().get(c).copied().unwrap_or(0.0);
            }
        }
    }
    universe.iter().copied().zip(fused).collect()
}

/// Ranking by repeated selection of the best remaining entry: highest score,
/// then smallest code.
pub fn rank_by_selection(mut entries: Vec<(CountryCode, f64)>) -> Vec<(CountryCode, f64)> {
    let mut out = Vec::with_capacity(entries.len());
    while !entries.is_empty() {
        let mut best = 0;
        for i in 1..entries.len() {
            let (c, s) = entries[i];
            let (bc, bs) = entries[best];
            if s > bs || (s == bs && c < bc) {
                best = i;
            }
        }
        out.push(entries.swap_remove(best));
    }
    out
}

/// (mean, sample std, median, top-1 count) via exact integer sums and a
/// counting sort.
pub fn rank_statistics(ranks: &[usize]) -> (f64, f64, f64, usize) {
    let n = ranks.len() as i128;
    let sum: i128 = ranks.iter().map(|r| *r as i128).sum();
    let sum_sq: i128 = ranks.iter().map(|r| (*r as i128) * (*r as i128)).sum();
    let mean = sum as f64 / n as f64;
    let std = if n > 1 {
        // n * sum_sq - sum^2 is exact in integers
        ((n * sum_sq - sum * sum) as f64 / (n * (n - 1)) as f64).sqrt()
    } else {
        0.0
    };
    let max = *ranks.iter().max().unwrap();
    let mut counts = vec![0usize; max + 1];
    for r in ranks {
        counts[*r] += 1;
    }
    let kth = |k: usize| {
        let mut seen = 0;
        for (v, c) in counts.iter().enumerate() {
            seen += c;
            if seen > k {
                return v;
            }
        }
        unreachable!()
    };
    let len = ranks.len();
    let median = if len % 2 == 1 {
        kth(len / 2) as f64
    } else {
        (kth(len / 2 - 1) + kth(len / 2)) as f64 / 2.0
    };
    (mean, std, median, counts.get(1).copied().unwrap_or(0))
}

/// Random evidence over a subset of `universe`; abstains with probability
/// `p_abstain`.
pub fn random_evidence(id: &str, universe: &[CountryCode], p_abstain: f64, rng: &mut ChaCha8Rng) -> EvidenceScores<f64> {
    if rng.random_bool(p_abstain) {
        return EvidenceScores::abstain(id, "random abstention");
    }
    loop {
        let mut raw = BTreeMap::new();
        for c in universe {
            if rng.random_bool(0.7) {
                raw.insert(*c, if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() });
            }
        }
        if raw.values().any(|v| *v > 0.0) {
            return EvidenceScores::from_weights(id, raw, vec![]).unwrap();
        }
    }
}

/// Random point on the probability simplex (with some exact zeros).
pub fn random_simplex(ids: &[String], rng: &mut ChaCha8Rng) -> BTreeMap<String, f64> {
    loop {
        let raw: Vec<f64> = ids
            .iter()
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            return ids.iter().cloned().zip(raw.into_iter().map(|v| v / total)).collect();
        }
    }
}

/// Log-score of `text` under a trigram table, counted independently of the
/// library's extractor: words are maximal alphabetic runs, padded by one
/// space.
pub fn mean_log_score(text: &str, table: &BTreeMap<String, f64>, eps: f64) -> Option<f64> {
    let lower = text.to_lowercase();
    let mut grams = Vec::new();
    let mut word = String::new();
    for ch in lower.chars().chain(std::iter::once(' ')) {
        if ch.is_alphabetic() {
            word.push(ch);
        } else if !word.is_empty() {
            let padded: Vec<char> = format!(" {word} ").chars().collect();
            for i in 0..padded.len() - 2 {
                grams.push(padded[i..i + 3].iter().collect::<String>());
            }
            word.clear();
        }
    }
    if grams.is_empty() {
        return None;
    }
    let total: f64 = grams.iter().map(|g| (table.get(g).copied().unwrap_or(0.0) + eps).ln()).sum();
    Some(total / grams.len() as f64)
}

/// Relative trigram frequencies of a corpus, counted independently.
pub fn trigram_table(corpus: &str) -> BTreeMap<String, f64> {
    let lower = corpus.to_lowercase();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut n = 0u64;
    let mut word = String::new();
    for ch in lower.chars().chain(std::iter::once(' ')) {
        if ch.is_alphabetic() {
            word.push(ch);
        } else if !word.is_empty() {
            let padded: Vec<char> = format!(" {word} ").chars().collect();
            for i in 0..padded.len() - 2 {
                *counts.entry(padded[i..i + 3].iter().collect()).or_default() += 1;
                n += 1;
            }
            word.clear();
        }
    }
    counts.into_iter().map(|(g, c)| (g, c as f64 / n as f64)).collect()
}

pub fn perfect(id: &str, truth: CountryCode, universe: &[CountryCode]) -> EvidenceScores<f64> {
    EvidenceScores::from_weights(id, universe.iter().map(|c| (*c, if *c == truth { 1.0 } else { 0.0 })).collect(), vec![]).unwrap()
}

/// Puts the truth last: every other country shares the mass.
pub fn anti(id: &str, truth: CountryCode, universe: &[CountryCode]) -> EvidenceScores<f64> {
    EvidenceScores::from_weights(id, universe.iter().map(|c| (*c, if *c == truth { 0.0 } else { 1.0 })).collect(), vec![]).unwrap()
}

pub const GLOW_DEG: f64 = 50.0;

pub fn unit(az: f64, el: f64) -> [f64; 3] {
    let (a, e) = (az.to_radians(), el.to_radians());
    [e.cos() * a.sin(), e.cos() * a.cos(), e.sin()]
}

/// Dark sky with a saturated disc of `radius` degrees centred on (`az`, `el`),
/// both absolute, and a glow fading linearly out to 50 degrees.
pub fn sun_panorama(width: u32, az: f64, el: f64, radius: f64, north_offset: f64) -> whichcountry_core::imaging::Panorama {
    let h = width / 2;
    let sun = unit(az, el);
    whichcountry_core::imaging::Panorama::from_fn(width, h, Some(north_offset), |x, y| {
        let paz = (x as f64 + 0.5) / width as f64 * 360.0 - north_offset;
        let pel = 90.0 - (y as f64 + 0.5) / h as f64 * 180.0;
        let d = unit(paz, pel);
        let cos = d[0] * sun[0] + d[1] * sun[1] + d[2] * sun[2];
        let angle = cos.clamp(-1.0, 1.0).acos().to_degrees();
        if angle <= radius {
            [255, 255, 255]
        } else {
            let glow = (1.0 - (angle - radius) / (GLOW_DEG - radius)).max(0.0);
            let v = (30.0 + 200.0 * glow) as u8;
            [v, v, v.saturating_add(10)]
        }
    })
    .unwrap()
}
