//! The guessing pipeline: configuration, resources, and the concurrent run
//! of every active evidence module over one panorama.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::evidence::color::{load_color_profiles, score_colors, ColorProfile};
use crate::evidence::freqlist::{
    english_stopwords, load_frequency_profiles, score_frequency, tokenize_filter, FrequencyProfile,
    TermCounts,
};
use crate::evidence::plate::score_plates;
use crate::evidence::solar::{detect_sun_azimuth, infer_hemisphere, score_solar, SolarConfig};
use crate::evidence::textlang::{score_textlang, LanguageProfileSet, TextlangConfig};
use crate::evidence::{self, EvidenceScores, ProfileIoError};
use crate::fusion::{fuse, FusionError, GuessReport, WeightVector};
use crate::imaging::{channel_histogram, decode_panorama, extract_view, ImagingError, Panorama, View};
use crate::knowledge::{load_registry, CountryRegistry, KnowledgeError};
use crate::providers::{
    extract_plate_colors, run_caption, run_objects, run_ocr, FixtureProvider, InferenceProvider, ObjectObservation,
    ProviderError, SubprocessProvider, DEFAULT_OBJECT_FLOOR, DEFAULT_OCR_FLOOR,
};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Profile(#[from] ProfileIoError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Views handed to the external providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewGrid {
    pub headings_deg: Vec<f64>,
    pub pitch_deg: f64,
    pub fov_deg: f64,
    pub size: u32,
}

impl Default for ViewGrid {
    fn default() -> Self {
        Self {
            headings_deg: vec![0.0, 90.0, 180.0, 270.0],
            pitch_deg: 0.0,
            fov_deg: 90.0,
            size: 256,
        }
    }
}

impl ViewGrid {
    pub fn views(&self, pano: &Panorama) -> Result<Vec<View>, ImagingError> {
        self.headings_deg
            .iter()
            .map(|h| extract_view(pano, *h, self.pitch_deg, self.fov_deg, self.size, self.size))
            .collect()
    }
}

/// How to reach one provider: a worker command or a fixture directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProviderSpec {
    Command { command: Vec<String> },
    Fixtures { fixtures: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub ocr: Option<ProviderSpec>,
    pub caption: Option<ProviderSpec>,
    pub objects: Option<ProviderSpec>,
    pub deadline_secs: f64,
    pub ocr_floor: f64,
    pub object_floor: f64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            ocr: None,
            caption: None,
            objects: None,
            deadline_secs: crate::providers::DEFAULT_DEADLINE.as_secs_f64(),
            ocr_floor: DEFAULT_OCR_FLOOR,
            object_floor: DEFAULT_OBJECT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfilePaths {
    /// Directory of color profile documents.
    pub color: Option<PathBuf>,
    pub caption: Option<PathBuf>,
    pub object: Option<PathBuf>,
    /// Language profile document; bundled profiles when absent.
    pub language: Option<PathBuf>,
}

/// Engine configuration file (TOML). Relative paths resolve against the
/// directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub factsheets: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub modules: Vec<String>,
    pub profiles: ProfilePaths,
    pub providers: ProviderSettings,
    pub views: ViewGrid,
    pub solar: SolarConfig,
    pub textlang: TextlangConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            factsheets: None,
            boundaries: None,
            weights: None,
            stopwords: None,
            modules: evidence::ALL_MODULES.iter().map(|m| m.to_string()).collect(),
            profiles: ProfilePaths::default(),
            providers: ProviderSettings::default(),
            views: ViewGrid::default(),
            solar: SolarConfig::default(),
            textlang: TextlangConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn resolve_spec(base: &Path, spec: &mut Option<ProviderSpec>) {
    if let Some(ProviderSpec::Fixtures { fixtures }) = spec {
        if fixtures.is_relative() {
            *fixtures = base.join(&*fixtures);
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: EngineConfig =
            toml::from_str(&text).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.factsheets);
        resolve(base, &mut self.boundaries);
        resolve(base, &mut self.weights);
        resolve(base, &mut self.stopwords);
        resolve(base, &mut self.profiles.color);
        resolve(base, &mut self.profiles.caption);
        resolve(base, &mut self.profiles.object);
        resolve(base, &mut self.profiles.language);
        resolve_spec(base, &mut self.providers.ocr);
        resolve_spec(base, &mut self.providers.caption);
        resolve_spec(base, &mut self.providers.objects);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

pub fn build_provider(spec: &ProviderSpec, deadline: Duration) -> Result<Arc<dyn InferenceProvider>, ProviderError> {
    Ok(match spec {
        ProviderSpec::Command { command } => Arc::new(SubprocessProvider::new(command.clone(), deadline)?),
        ProviderSpec::Fixtures { fixtures } => Arc::new(FixtureProvider::load(fixtures)?),
    })
}

/// Ready-to-run pipeline. Immutable once built; share it behind an `Arc`.
pub struct Engine {
    registry: CountryRegistry,
    modules: Vec<String>,
    weights: WeightVector<f64>,
    color_profiles: Option<Vec<ColorProfile<f64>>>,
    caption_profiles: Option<Vec<FrequencyProfile<f64>>>,
    object_profiles: Option<Vec<FrequencyProfile<f64>>>,
    languages: LanguageProfileSet,
    stopwords: BTreeSet<String>,
    ocr: Option<Arc<dyn InferenceProvider>>,
    captioner: Option<Arc<dyn InferenceProvider>>,
    detector: Option<Arc<dyn InferenceProvider>>,
    providers: ProviderSettings,
    views: ViewGrid,
    solar: SolarConfig,
    textlang: TextlangConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("countries", &self.registry.len())
            .field("modules", &self.modules)
            .field("weights", &self.weights)
            .finish_non_exhaustive()
    }
}

pub struct EngineBuilder {
    registry: CountryRegistry,
    modules: Vec<String>,
    weights: Option<WeightVector<f64>>,
    color_profiles: Option<Vec<ColorProfile<f64>>>,
    caption_profiles: Option<Vec<FrequencyProfile<f64>>>,
    object_profiles: Option<Vec<FrequencyProfile<f64>>>,
    languages: Option<LanguageProfileSet>,
    stopwords: Option<BTreeSet<String>>,
    ocr: Option<Arc<dyn InferenceProvider>>,
    captioner: Option<Arc<dyn InferenceProvider>>,
    detector: Option<Arc<dyn InferenceProvider>>,
    providers: ProviderSettings,
    views: ViewGrid,
    solar: SolarConfig,
    textlang: TextlangConfig,
}

impl EngineBuilder {
    pub fn modules<S: AsRef<str>>(mut self, modules: &[S]) -> Self {
        self.modules = modules.iter().map(|m| m.as_ref().to_string()).collect();
        self
    }
    pub fn weights(mut self, weights: WeightVector<f64>) -> Self {
        self.weights = Some(weights);
        self
    }
    pub fn color_profiles(mut self, profiles: Vec<ColorProfile<f64>>) -> Self {
        self.color_profiles = Some(profiles);
        self
    }
    pub fn caption_profiles(mut self, profiles: Vec<FrequencyProfile<f64>>) -> Self {
        self.caption_profiles = Some(profiles);
        self
    }
    pub fn object_profiles(mut self, profiles: Vec<FrequencyProfile<f64>>) -> Self {
        self.object_profiles = Some(profiles);
        self
    }
    pub fn languages(mut self, languages: LanguageProfileSet) -> Self {
        self.languages = Some(languages);
        self
    }
    pub fn stopwords(mut self, stopwords: BTreeSet<String>) -> Self {
        self.stopwords = Some(stopwords);
        self
    }
    pub fn ocr(mut self, provider: Arc<dyn InferenceProvider>) -> Self {
        self.ocr = Some(provider);
        self
    }
    pub fn captioner(mut self, provider: Arc<dyn InferenceProvider>) -> Self {
        self.captioner = Some(provider);
        self
    }
    pub fn detector(mut self, provider: Arc<dyn InferenceProvider>) -> Self {
        self.detector = Some(provider);
        self
    }
    pub fn provider_settings(mut self, settings: ProviderSettings) -> Self {
        self.providers = settings;
        self
    }
    pub fn view_grid(mut self, views: ViewGrid) -> Self {
        self.views = views;
        self
    }
    pub fn solar(mut self, solar: SolarConfig) -> Self {
        self.solar = solar;
        self
    }
    pub fn textlang(mut self, textlang: TextlangConfig) -> Self {
        self.textlang = textlang;
        self
    }

    pub fn build(self) -> Result<Engine, EngineError> {
        if self.registry.is_empty() {
            return Err(EngineError::Config("registry has no countries".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.modules {
            if !evidence::ALL_MODULES.contains(&m.as_str()) {
                return Err(EngineError::Config(format!("unknown module {m:?}")));
            }
            if !seen.insert(m) {
                return Err(EngineError::Config(format!("module {m:?} listed twice")));
            }
        }
        if self.modules.is_empty() {
            return Err(EngineError::Config("no modules enabled".into()));
        }
        let weights = match self.weights {
            Some(w) => w.restricted(&self.modules)?,
            None => WeightVector::uniform(&self.modules)?,
        };
        Ok(Engine {
            registry: self.registry,
            modules: self.modules,
            weights,
            color_profiles: self.color_profiles,
            caption_profiles: self.caption_profiles,
            object_profiles: self.object_profiles,
            languages: self.languages.unwrap_or_else(LanguageProfileSet::bundled),
            stopwords: self.stopwords.unwrap_or_else(english_stopwords),
            ocr: self.ocr,
            captioner: self.captioner,
            detector: self.detector,
            providers: self.providers,
            views: self.views,
            solar: self.solar,
            textlang: self.textlang,
        })
    }
}

impl Engine {
    pub fn builder(registry: CountryRegistry) -> EngineBuilder {
        EngineBuilder {
            registry,
            modules: evidence::ALL_MODULES.iter().map(|m| m.to_string()).collect(),
            weights: None,
            color_profiles: None,
            caption_profiles: None,
            object_profiles: None,
            languages: None,
            stopwords: None,
            ocr: None,
            captioner: None,
            detector: None,
            providers: ProviderSettings::default(),
            views: ViewGrid::default(),
            solar: SolarConfig::default(),
            textlang: TextlangConfig::default(),
        }
    }

    /// Loads every resource named by `config`. Missing optional resources
    /// leave the corresponding module to abstain at run time.
    pub fn from_config(config: &EngineConfig) -> Result<Self, EngineError> {
        let factsheets = config
            .factsheets
            .as_ref()
            .ok_or_else(|| EngineError::Config("factsheets directory not configured".into()))?;
        let boundaries = config
            .boundaries
            .as_ref()
            .ok_or_else(|| EngineError::Config("boundaries file not configured".into()))?;
        let registry = load_registry(factsheets, boundaries)?;
        let mut b = Engine::builder(registry)
            .modules(&config.modules)
            .provider_settings(config.providers.clone())
            .view_grid(config.views.clone())
            .solar(config.solar.clone())
            .textlang(config.textlang.clone());

        if let Some(path) = &config.weights {
            b = b.weights(WeightVector::load(path)?);
        }
        if let Some(dir) = existing_dir(&config.profiles.color) {
            b = b.color_profiles(load_color_profiles(dir)?);
        }
        if let Some(dir) = existing_dir(&config.profiles.caption) {
            b = b.caption_profiles(load_frequency_profiles(dir)?);
        }
        if let Some(dir) = existing_dir(&config.profiles.object) {
            b = b.object_profiles(load_frequency_profiles(dir)?);
        }
        if let Some(path) = &config.profiles.language {
            b = b.languages(LanguageProfileSet::load(path)?);
        }
        if let Some(path) = &config.stopwords {
            let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
            b = b.stopwords(
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_lowercase)
                    .collect(),
            );
        }
        let deadline = Duration::from_secs_f64(config.providers.deadline_secs.max(0.001));
        if let Some(spec) = &config.providers.ocr {
            b = b.ocr(build_provider(spec, deadline)?);
        }
        if let Some(spec) = &config.providers.caption {
            b = b.captioner(build_provider(spec, deadline)?);
        }
        if let Some(spec) = &config.providers.objects {
            b = b.detector(build_provider(spec, deadline)?);
        }
        b.build()
    }

    pub fn registry(&self) -> &CountryRegistry {
        &self.registry
    }

    pub fn modules(&self) -> &[String] {
        &self.modules
    }

    pub fn weights(&self) -> &WeightVector<f64> {
        &self.weights
    }

    pub fn view_grid(&self) -> &ViewGrid {
        &self.views
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn provider_settings(&self) -> &ProviderSettings {
        &self.providers
    }

    pub fn captioner(&self) -> Option<&Arc<dyn InferenceProvider>> {
        self.captioner.as_ref()
    }

    pub fn detector(&self) -> Option<&Arc<dyn InferenceProvider>> {
        self.detector.as_ref()
    }

    /// Same resources, different weights.
    pub fn with_weights(&self, weights: WeightVector<f64>) -> Result<Engine, EngineError> {
        Ok(Engine {
            registry: self.registry.clone(),
            modules: self.modules.clone(),
            weights: weights.restricted(&self.modules)?,
            color_profiles: self.color_profiles.clone(),
            caption_profiles: self.caption_profiles.clone(),
            object_profiles: self.object_profiles.clone(),
            languages: self.languages.clone(),
            stopwords: self.stopwords.clone(),
            ocr: self.ocr.clone(),
            captioner: self.captioner.clone(),
            detector: self.detector.clone(),
            providers: self.providers.clone(),
            views: self.views.clone(),
            solar: self.solar.clone(),
            textlang: self.textlang.clone(),
        })
    }

    fn active(&self, module: &str) -> bool {
        self.modules.iter().any(|m| m == module)
    }

    /// Evidence from every active module, in configuration order.
    pub fn evidence(&self, pano: &Panorama) -> Vec<EvidenceScores<f64>> {
        let views = if self.active(evidence::TEXTLANG)
            || self.active(evidence::CAPTION)
            || self.active(evidence::OBJECT)
            || self.active(evidence::PLATE)
        {
            self.views.views(pano)
        } else {
            Ok(Vec::new())
        };

        let results: Vec<EvidenceScores<f64>> = std::thread::scope(|s| {
            let color = self.active(evidence::COLOR).then(|| s.spawn(|| self.color_evidence(pano)));
            let solar = self.active(evidence::SOLAR).then(|| s.spawn(|| self.solar_evidence(pano)));
            let text = self.active(evidence::TEXTLANG).then(|| s.spawn(|| self.text_evidence(&views)));
            let caption = self.active(evidence::CAPTION).then(|| s.spawn(|| self.caption_evidence(&views)));
            let objects = (self.active(evidence::OBJECT) || self.active(evidence::PLATE))
                .then(|| s.spawn(|| self.object_and_plate_evidence(&views)));

            let mut out = Vec::new();
            for handle in [color, solar, text, caption].into_iter().flatten() {
                out.push(handle.join().expect("evidence thread"));
            }
            if let Some(h) = objects {
                out.extend(h.join().expect("evidence thread"));
            }
            out
        });

        let mut ordered = Vec::with_capacity(results.len());
        for m in &self.modules {
            if let Some(ev) = results.iter().find(|e| e.module_id() == m) {
                ordered.push(ev.clone());
            }
        }
        ordered
    }

    pub fn guess(&self, pano: &Panorama) -> Result<GuessReport<f64>, EngineError> {
        Ok(fuse(self.evidence(pano), &self.weights, &self.registry)?)
    }

    pub fn guess_bytes(&self, bytes: &[u8], north_offset_deg: Option<f64>) -> Result<GuessReport<f64>, EngineError> {
        let pano = decode_panorama(bytes, north_offset_deg)?;
        self.guess(&pano)
    }

    fn color_evidence(&self, pano: &Panorama) -> EvidenceScores<f64> {
        let Some(profiles) = self.color_profiles.as_ref().filter(|p| !p.is_empty()) else {
            return EvidenceScores::abstain(evidence::COLOR, "no color profiles loaded");
        };
        let hist = channel_histogram(pano).expect("panoramas are non-empty");
        score_colors(&hist, profiles)
            .unwrap_or_else(|e| EvidenceScores::abstain(evidence::COLOR, e.to_string()))
    }

    fn solar_evidence(&self, pano: &Panorama) -> EvidenceScores<f64> {
        let est = detect_sun_azimuth(pano, &self.solar);
        let mut ev = score_solar(infer_hemisphere(&est), &self.registry);
        let reason = if !pano.has_north_offset() {
            "panorama has no north offset".to_string()
        } else {
            format!("brightest sky at {:.0} deg, contrast {:.1}", est.azimuth_deg, est.contrast)
        };
        ev.push_note(reason);
        ev
    }

    fn text_evidence(&self, views: &Result<Vec<View>, ImagingError>) -> EvidenceScores<f64> {
        let Some(provider) = &self.ocr else {
            return EvidenceScores::abstain(evidence::TEXTLANG, "no OCR provider configured");
        };
        let views = match views {
            Ok(v) => v,
            Err(e) => return EvidenceScores::abstain(evidence::TEXTLANG, e.to_string()),
        };
        let mut observations = Vec::new();
        for view in views {
            match run_ocr(provider.as_ref(), view, self.providers.ocr_floor) {
                Ok(obs) => observations.extend(obs),
                Err(e) => return EvidenceScores::abstain(evidence::TEXTLANG, format!("OCR failed: {e}")),
            }
        }
        score_textlang(&observations, &self.registry, &self.languages, &self.textlang)
    }

    /// Caption words of every view, stopwords removed.
    pub fn caption_terms(&self, views: &[View]) -> Result<TermCounts, ProviderError> {
        let provider = self.captioner.as_ref().ok_or(ProviderError::Unconfigured("caption"))?;
        let mut terms = TermCounts::new();
        for view in views {
            let caption = run_caption(provider.as_ref(), view)?;
            terms.merge(&tokenize_filter(caption.as_str(), &self.stopwords));
        }
        Ok(terms)
    }

    /// Detected objects per view.
    pub fn detect_objects(&self, views: &[View]) -> Result<Vec<Vec<ObjectObservation>>, ProviderError> {
        let provider = self.detector.as_ref().ok_or(ProviderError::Unconfigured("objects"))?;
        views
            .iter()
            .map(|v| run_objects(provider.as_ref(), v, self.providers.object_floor))
            .collect()
    }

    fn caption_evidence(&self, views: &Result<Vec<View>, ImagingError>) -> EvidenceScores<f64> {
        let Some(profiles) = self.caption_profiles.as_ref().filter(|p| !p.is_empty()) else {
            return EvidenceScores::abstain(evidence::CAPTION, "no caption profiles loaded");
        };
        let views = match views {
            Ok(v) => v,
            Err(e) => return EvidenceScores::abstain(evidence::CAPTION, e.to_string()),
        };
        match self.caption_terms(views) {
            Ok(terms) => score_frequency(&terms, profiles)
                .unwrap_or_else(|e| EvidenceScores::abstain(evidence::CAPTION, e.to_string())),
            Err(e) => EvidenceScores::abstain(evidence::CAPTION, format!("captioning failed: {e}")),
        }
    }

    fn object_and_plate_evidence(&self, views: &Result<Vec<View>, ImagingError>) -> Vec<EvidenceScores<f64>> {
        let want_objects = self.active(evidence::OBJECT);
        let want_plates = self.active(evidence::PLATE);
        let abstain_all = |why: String| {
            let mut out = Vec::new();
            if want_objects {
                out.push(EvidenceScores::abstain(evidence::OBJECT, why.clone()));
            }
            if want_plates {
                out.push(EvidenceScores::abstain(evidence::PLATE, why));
            }
            out
        };
        let views = match views {
            Ok(v) => v,
            Err(e) => return abstain_all(e.to_string()),
        };
        let detections = match self.detect_objects(views) {
            Ok(d) => d,
            Err(e) => return abstain_all(format!("object detection failed: {e}")),
        };
        let mut out = Vec::new();
        if want_objects {
            let terms = TermCounts::from_labels(detections.iter().flatten().map(|o| o.label.as_str()));
            out.push(match self.object_profiles.as_ref().filter(|p| !p.is_empty()) {
                Some(profiles) => score_frequency(&terms, profiles)
                    .unwrap_or_else(|e| EvidenceScores::abstain(evidence::OBJECT, e.to_string())),
                None => EvidenceScores::abstain(evidence::OBJECT, "no object profiles loaded"),
            });
        }
        if want_plates {
            let plates: Vec<_> = views
                .iter()
                .zip(&detections)
                .flat_map(|(v, objs)| extract_plate_colors(v, objs))
                .collect();
            out.push(score_plates(&plates, &self.registry));
        }
        out
    }
}

fn existing_dir(p: &Option<PathBuf>) -> Option<&Path> {
    p.as_deref().filter(|d| d.is_dir())
}
