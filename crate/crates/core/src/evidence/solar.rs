//! Sun direction from sky-pitched views, and the hemisphere rule built on it.
//!
//! Outside the tropics the sun culminates to the south in the northern
//! hemisphere and to the north in the southern one. East and west azimuths
//! carry no hemisphere signal and abstain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvidenceScores, SOLAR};
use crate::imaging::{extract_view, mean_luminance, Panorama};
use crate::knowledge::{hemisphere_class, CountryRegistry, HemisphereClass};
use crate::scalar::Scalar;

/// Raw weights before normalization.
pub const MATCH_WEIGHT: f64 = 1.0;
pub const TROPIC_WEIGHT: f64 = 0.5;
pub const OPPOSITE_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolarConfig {
    pub view_count: u32,
    pub pitch_deg: f64,
    pub fov_deg: f64,
    pub view_size: u32,
    /// Minimum brightest-minus-median luma for a confident estimate.
    pub contrast_threshold: f64,
}

impl Default for SolarConfig {
    fn default() -> Self {
        Self {
            view_count: 8,
            pitch_deg: 45.0,
            fov_deg: 90.0,
            view_size: 128,
            contrast_threshold: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SunEstimate {
    pub azimuth_deg: f64,
    pub contrast: f64,
    pub confident: bool,
    /// Mean luma per sampled heading, in heading order.
    pub luminances: Vec<(f64, f64)>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Brightest sky view over an evenly spaced ring of absolute headings.
pub fn detect_sun_azimuth(pano: &Panorama, config: &SolarConfig) -> SunEstimate {
    let n = config.view_count.max(1);
    let step = 360.0 / n as f64;
    let luminances: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let heading = i as f64 * step;
            let view = extract_view(pano, heading, config.pitch_deg, config.fov_deg, config.view_size, config.view_size)
                .expect("solar view parameters are in range");
            (heading, mean_luminance::<f64>(&view).expect("non-empty view"))
        })
        .collect();
    let (azimuth_deg, brightest) = luminances
        .iter()
        .copied()
        .fold(luminances[0], |best, cur| if cur.1 > best.1 { cur } else { best });
    let mut sorted: Vec<f64> = luminances.iter().map(|l| l.1).collect();
    sorted.sort_by(f64::total_cmp);
    let contrast = brightest - median(&sorted);
    SunEstimate {
        azimuth_deg,
        contrast,
        confident: contrast >= config.contrast_threshold && pano.has_north_offset(),
        luminances,
    }
}

/// `None` means abstain.
pub fn infer_hemisphere(est: &SunEstimate) -> Option<HemisphereClass> {
    if !est.confident {
        return None;
    }
    let az = est.azimuth_deg.rem_euclid(360.0);
    if az > 112.5 && az < 247.5 {
        Some(HemisphereClass::Northern)
    } else if !(67.5..=292.5).contains(&az) {
        Some(HemisphereClass::Southern)
    } else {
        None
    }
}

/// Soft hemisphere filter over the registry.
pub fn score_solar<T: Scalar>(hypothesis: Option<HemisphereClass>, registry: &CountryRegistry) -> EvidenceScores<T> {
    let Some(hyp) = hypothesis else {
        return EvidenceScores::abstain(SOLAR, "no usable sun direction");
    };
    let raw: BTreeMap<_, _> = registry
        .sheets()
        .map(|s| {
            let class = hemisphere_class(s);
            let w = if class == hyp {
                MATCH_WEIGHT
            } else if class == HemisphereClass::Tropic {
                TROPIC_WEIGHT
            } else {
                OPPOSITE_WEIGHT
            };
            (s.code, T::of(w))
        })
        .collect();
    if raw.is_empty() {
        return EvidenceScores::abstain(SOLAR, "empty registry");
    }
    EvidenceScores::from_weights(SOLAR, raw, vec![format!("sun position suggests {hyp:?} hemisphere")])
        .expect("solar weights are positive")
}
