//! Country ranking for 360° street-level panoramas.
//!
//! Independent evidence modules (color statistics, sun position, sign text,
//! captions, detected objects, license plates) each produce a distribution
//! over countries; a weighted linear pool fuses them into one ranking.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, with `*F32` variants for single precision.

pub mod engine;
pub mod evalkit;
pub mod evidence;
pub mod fusion;
pub mod imaging;
pub mod knowledge;
pub mod providers;
pub mod scalar;
pub mod synth;
pub mod training;

pub use scalar::Scalar;

pub type RgbHistogram = imaging::RgbHistogram<f64>;
pub type EvidenceScores = evidence::EvidenceScores<f64>;
pub type ColorProfile = evidence::color::ColorProfile<f64>;
pub type FrequencyProfile = evidence::freqlist::FrequencyProfile<f64>;
pub type WeightVector = fusion::WeightVector<f64>;
pub type CountryRanking = fusion::CountryRanking<f64>;
pub type GuessReport = fusion::GuessReport<f64>;

pub type RgbHistogramF32 = imaging::RgbHistogram<f32>;
pub type EvidenceScoresF32 = evidence::EvidenceScores<f32>;
pub type ColorProfileF32 = evidence::color::ColorProfile<f32>;
pub type FrequencyProfileF32 = evidence::freqlist::FrequencyProfile<f32>;
pub type WeightVectorF32 = fusion::WeightVector<f32>;
pub type CountryRankingF32 = fusion::CountryRanking<f32>;
pub type GuessReportF32 = fusion::GuessReport<f32>;
