//! Offline construction of per-country profiles from a labelled manifest.

use std::collections::BTreeMap;
use std::path::Path;

use crate::engine::{Engine, EngineConfig, EngineError};
use crate::evalkit::{DatasetManifest, FailedItem};
use crate::evidence::color::{build_color_profile, save_color_profile, ColorProfile};
use crate::evidence::freqlist::{build_frequency_profile, save_frequency_profile, FrequencyKind, FrequencyProfile, TermCounts};
use crate::evidence::textlang::LanguageProfileSet;
use crate::evidence::{json_files, ProfileIoError};
use crate::imaging::{channel_histogram, decode_panorama, Panorama, RgbHistogram};
use crate::knowledge::CountryCode;
use crate::providers::ProviderError;

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error(transparent)]
    Profile(#[from] ProfileIoError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Argument(String),
}

/// Profiles plus the manifest items that could not be used.
#[derive(Debug, Clone)]
pub struct Built<P> {
    pub profiles: Vec<P>,
    pub failures: Vec<FailedItem>,
}

fn read_panorama(path: &Path, north: Option<f64>) -> Result<Panorama, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    decode_panorama(&bytes, north).map_err(|e| e.to_string())
}

fn for_each_item<D>(
    manifest: &DatasetManifest,
    mut f: impl FnMut(&Panorama) -> Result<D, TrainingError>,
) -> Result<(BTreeMap<CountryCode, Vec<D>>, Vec<FailedItem>), TrainingError> {
    if manifest.is_empty() {
        return Err(TrainingError::Argument("empty manifest".into()));
    }
    let mut groups: BTreeMap<CountryCode, Vec<D>> = BTreeMap::new();
    let mut failures = Vec::new();
    for item in &manifest.items {
        match read_panorama(&item.path, item.north_offset_deg) {
            Ok(pano) => groups.entry(item.truth).or_default().push(f(&pano)?),
            Err(error) => failures.push(FailedItem {
                path: item.path.clone(),
                truth: item.truth,
                error,
            }),
        }
    }
    Ok((groups, failures))
}

pub fn build_color_profiles(manifest: &DatasetManifest) -> Result<Built<ColorProfile<f64>>, TrainingError> {
    let (groups, failures) = for_each_item(manifest, |pano| {
        Ok(channel_histogram::<f64>(pano).expect("panoramas are non-empty"))
    })?;
    let profiles = groups
        .into_iter()
        .map(|(code, hists): (CountryCode, Vec<RgbHistogram<f64>>)| {
            build_color_profile(code, &hists).expect("group is non-empty")
        })
        .collect();
    Ok(Built { profiles, failures })
}

/// Runs the engine's caption or object provider over each training
/// panorama's view ring and averages the resulting term counts per country.
pub fn build_frequency_profiles(
    manifest: &DatasetManifest,
    kind: FrequencyKind,
    engine: &Engine,
) -> Result<Built<FrequencyProfile<f64>>, TrainingError> {
    let (groups, failures) = for_each_item(manifest, |pano| {
        let views = engine
            .view_grid()
            .views(pano)
            .map_err(|e| TrainingError::Argument(e.to_string()))?;
        Ok(match kind {
            FrequencyKind::CaptionWords => engine.caption_terms(&views)?,
            FrequencyKind::ObjectLabels => {
                let objects = engine.detect_objects(&views)?;
                TermCounts::from_labels(objects.iter().flatten().map(|o| o.label.as_str()))
            }
        })
    })?;
    let profiles = groups
        .into_iter()
        .map(|(code, docs)| build_frequency_profile(code, kind, &docs).expect("group is non-empty"))
        .collect();
    Ok(Built { profiles, failures })
}

/// Language profiles from a directory of `<lang>.txt` sample texts.
pub fn build_language_profiles(corpus_dir: &Path) -> Result<LanguageProfileSet, TrainingError> {
    let mut corpora = Vec::new();
    let entries = std::fs::read_dir(corpus_dir).map_err(|e| ProfileIoError::io(corpus_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| ProfileIoError::io(corpus_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let lang = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| ProfileIoError::invalid(&path, "file name is not UTF-8"))?
            .to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| ProfileIoError::io(&path, e))?;
        corpora.push((lang, text));
    }
    corpora.sort();
    LanguageProfileSet::from_corpora(corpora.iter().map(|(l, t)| (l.as_str(), t.as_str())))
        .map_err(|e| ProfileIoError::invalid(corpus_dir, e).into())
}

/// Writes `<CODE>.json` per profile, replacing any profile documents already
/// in `dir`.
pub fn write_color_profiles(profiles: &[ColorProfile<f64>], dir: &Path) -> Result<(), TrainingError> {
    prepare_dir(dir)?;
    for p in profiles {
        save_color_profile(p, &dir.join(format!("{}.json", p.country)))?;
    }
    Ok(())
}

pub fn write_frequency_profiles(profiles: &[FrequencyProfile<f64>], dir: &Path) -> Result<(), TrainingError> {
    prepare_dir(dir)?;
    for p in profiles {
        save_frequency_profile(p, &dir.join(format!("{}.json", p.country)))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct BuildSummary {
    pub color: usize,
    pub caption: usize,
    pub object: usize,
    pub failures: usize,
}

/// Builds every profile kind whose output directory is configured, using the
/// configured providers for the caption and object kinds.
pub fn build_configured_profiles(config: &EngineConfig, manifest: &DatasetManifest) -> Result<BuildSummary, TrainingError> {
    let mut summary = BuildSummary::default();
    if let Some(dir) = &config.profiles.color {
        let built = build_color_profiles(manifest)?;
        write_color_profiles(&built.profiles, dir)?;
        summary.color = built.profiles.len();
        summary.failures = summary.failures.max(built.failures.len());
    }
    let engine = Engine::from_config(config)?;
    let kinds = [
        (FrequencyKind::CaptionWords, &config.profiles.caption, engine.captioner().is_some()),
        (FrequencyKind::ObjectLabels, &config.profiles.object, engine.detector().is_some()),
    ];
    for (kind, dir, available) in kinds {
        let (Some(dir), true) = (dir, available) else {
            continue;
        };
        let built = build_frequency_profiles(manifest, kind, &engine)?;
        write_frequency_profiles(&built.profiles, dir)?;
        match kind {
            FrequencyKind::CaptionWords => summary.caption = built.profiles.len(),
            FrequencyKind::ObjectLabels => summary.object = built.profiles.len(),
        }
        summary.failures = summary.failures.max(built.failures.len());
    }
    Ok(summary)
}

fn prepare_dir(dir: &Path) -> Result<(), TrainingError> {
    std::fs::create_dir_all(dir).map_err(|e| ProfileIoError::io(dir, e))?;
    for old in json_files(dir)? {
        std::fs::remove_file(&old).map_err(|e| ProfileIoError::io(&old, e))?;
    }
    Ok(())
}
