//! Country color signatures: average RGB histograms compared by mean
//! absolute bin difference.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{json_files, EvidenceError, EvidenceScores, ProfileIoError, COLOR};
use crate::imaging::{RgbHistogram, HISTOGRAM_BINS};
use crate::knowledge::CountryCode;
use crate::scalar::Scalar;

pub const COLOR_PROFILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ColorProfile<T> {
    pub country: CountryCode,
    pub histogram: RgbHistogram<T>,
    pub image_count: usize,
}

impl<T: Scalar> ColorProfile<T> {
    /// Folds one more image into the running average.
    pub fn absorb(&mut self, histogram: &RgbHistogram<T>) {
        let n = T::of_count(self.image_count);
        let n1 = T::of_count(self.image_count + 1);
        let bins = std::array::from_fn(|c| {
            self.histogram
                .channel(c)
                .iter()
                .zip(histogram.channel(c))
                .map(|(&a, &b)| (a * n + b) / n1)
                .collect()
        });
        self.histogram = RgbHistogram::from_channels_unchecked(bins);
        self.image_count += 1;
    }
}

/// Bin-wise mean of the input histograms.
pub fn build_color_profile<T: Scalar>(
    country: CountryCode,
    histograms: &[RgbHistogram<T>],
) -> Result<ColorProfile<T>, EvidenceError> {
    if histograms.is_empty() {
        return Err(EvidenceError::Argument(format!("no histograms for {country}")));
    }
    let n = T::of_count(histograms.len());
    let bins = std::array::from_fn(|c| {
        (0..HISTOGRAM_BINS)
            .map(|b| histograms.iter().map(|h| h.channel(c)[b]).sum::<T>() / n)
            .collect()
    });
    Ok(ColorProfile {
        country,
        histogram: RgbHistogram::from_channels_unchecked(bins),
        image_count: histograms.len(),
    })
}

/// Mean over all 3x256 positions of the absolute bin difference.
pub fn histogram_distance<T: Scalar>(a: &RgbHistogram<T>, b: &RgbHistogram<T>) -> T {
    let total: T = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum();
    total / T::of_count(3 * HISTOGRAM_BINS)
}

pub fn color_distance<T: Scalar>(query: &RgbHistogram<T>, profile: &ColorProfile<T>) -> T {
    histogram_distance(query, &profile.histogram)
}

/// Min-max inverted distances, normalized. Never abstains.
pub fn score_colors<T: Scalar>(
    query: &RgbHistogram<T>,
    profiles: &[ColorProfile<T>],
) -> Result<EvidenceScores<T>, EvidenceError> {
    if profiles.is_empty() {
        return Err(EvidenceError::Argument("no color profiles".into()));
    }
    let distances: Vec<(CountryCode, T)> = profiles
        .iter()
        .map(|p| (p.country, color_distance(query, p)))
        .collect();
    let d_min = distances.iter().map(|d| d.1).fold(T::infinity(), T::min);
    let d_max = distances.iter().map(|d| d.1).fold(T::neg_infinity(), T::max);
    if d_max > d_min {
        let span = d_max - d_min;
        let raw: BTreeMap<_, _> = distances.iter().map(|&(c, d)| (c, (d_max - d) / span)).collect();
        let (closest, _) = distances
            .iter()
            .copied()
            .fold(distances[0], |best, cur| if cur.1 < best.1 { cur } else { best });
        let note = format!("closest palette {closest} (distance {:.6})", d_min.as_f64());
        EvidenceScores::from_weights(COLOR, raw, vec![note])
    } else {
        EvidenceScores::uniform(
            COLOR,
            distances.iter().map(|d| d.0),
            Some("all color profiles equidistant".into()),
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ColorProfileFile<T> {
    version: u32,
    code: CountryCode,
    image_count: usize,
    histogram: [Vec<T>; 3],
}

pub fn save_color_profile<T: Scalar>(profile: &ColorProfile<T>, path: &Path) -> Result<(), ProfileIoError> {
    let doc = ColorProfileFile {
        version: COLOR_PROFILE_VERSION,
        code: profile.country,
        image_count: profile.image_count,
        histogram: profile.histogram.channels().clone(),
    };
    let text = serde_json::to_string(&doc).expect("profile serializes");
    std::fs::write(path, text).map_err(|e| ProfileIoError::io(path, e))
}

pub fn load_color_profile<T: Scalar>(path: &Path) -> Result<ColorProfile<T>, ProfileIoError> {
    let invalid = |message: String| ProfileIoError::invalid(path, message);
    let text = std::fs::read_to_string(path).map_err(|e| ProfileIoError::io(path, e))?;
    let doc: ColorProfileFile<T> = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
    if doc.version != COLOR_PROFILE_VERSION {
        return Err(invalid(format!("unsupported version {}", doc.version)));
    }
    if doc.image_count == 0 {
        return Err(invalid("image_count must be positive".into()));
    }
    let histogram = RgbHistogram::from_channels(doc.histogram).map_err(|e| invalid(e.to_string()))?;
    Ok(ColorProfile {
        country: doc.code,
        histogram,
        image_count: doc.image_count,
    })
}

/// Loads every `*.json` color profile in `dir`, sorted by file name.
pub fn load_color_profiles<T: Scalar>(dir: &Path) -> Result<Vec<ColorProfile<T>>, ProfileIoError> {
    let paths = json_files(dir)?;
    paths.iter().map(|p| load_color_profile(p)).collect()
}
