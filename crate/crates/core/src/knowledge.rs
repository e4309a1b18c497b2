//! Per-country fact sheets, latitude extents from boundary polygons, and the
//! place-name gazetteer consulted by the evidence modules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Latitude bound of the tropics, degrees.
pub const TROPIC_LATITUDE: f64 = 23.4;

/// Shortest normalized place name the gazetteer will match.
pub const MIN_PLACE_NAME_CHARS: usize = 3;

/// Version tag written into the registry cache document.
pub const REGISTRY_CACHE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("duplicate country code {0}")]
    DuplicateCode(CountryCode),
    #[error("fact sheet {0} has no boundary polygon")]
    MissingBoundary(CountryCode),
    #[error("invalid fact sheet {code}: {reason}")]
    Invalid { code: String, reason: String },
    #[error("invalid country code {0:?}: expected two uppercase ASCII letters")]
    BadCode(String),
    #[error("unknown plate color {0:?}")]
    BadPlateColor(String),
}

/// ISO-3166-1 alpha-2 country code.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self, KnowledgeError> {
        match code.as_bytes() {
            [a, b] if a.is_ascii_uppercase() && b.is_ascii_uppercase() => Ok(Self([*a, *b])),
            _ => Err(KnowledgeError::BadCode(code.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        // both bytes are ASCII uppercase by construction
        std::str::from_utf8(&self.0).expect("ascii")
    }
}

impl FromStr for CountryCode {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CountryCode({})", self.as_str())
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        CountryCode::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Closed palette of license-plate background colors. Declaration order is
/// the palette index used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlateColor {
    White,
    Yellow,
    Blue,
    Red,
    Green,
    Black,
}

impl PlateColor {
    pub const ALL: [PlateColor; 6] = [
        PlateColor::White,
        PlateColor::Yellow,
        PlateColor::Blue,
        PlateColor::Red,
        PlateColor::Green,
        PlateColor::Black,
    ];

    /// Reference RGB value used for quantization.
    pub fn prototype(self) -> [u8; 3] {
        match self {
            PlateColor::White => [255, 255, 255],
            PlateColor::Yellow => [255, 200, 0],
            PlateColor::Blue => [0, 60, 180],
            PlateColor::Red => [200, 0, 0],
            PlateColor::Green => [0, 130, 60],
            PlateColor::Black => [20, 20, 20],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PlateColor::White => "white",
            PlateColor::Yellow => "yellow",
            PlateColor::Blue => "blue",
            PlateColor::Red => "red",
            PlateColor::Green => "green",
            PlateColor::Black => "black",
        }
    }
}

impl FromStr for PlateColor {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlateColor::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| KnowledgeError::BadPlateColor(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HemisphereClass {
    Northern,
    Southern,
    Tropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageShare {
    pub code: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateColors {
    #[serde(default)]
    pub front: Vec<PlateColor>,
    #[serde(default)]
    pub rear: Vec<PlateColor>,
}

impl PlateColors {
    pub fn any(&self) -> BTreeSet<PlateColor> {
        self.front.iter().chain(&self.rear).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSheet {
    pub code: CountryCode,
    pub display_name: String,
    pub languages: Vec<LanguageShare>,
    pub plate_colors: PlateColors,
    pub place_names: Vec<String>,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl FactSheet {
    /// Weight of `language` in this country, zero when not spoken.
    pub fn language_weight(&self, language: &str) -> f64 {
        self.languages
            .iter()
            .filter(|l| l.code == language)
            .map(|l| l.weight)
            .sum()
    }

    fn validate(&self) -> Result<(), KnowledgeError> {
        let invalid = |reason: String| KnowledgeError::Invalid {
            code: self.code.to_string(),
            reason,
        };
        if self.languages.is_empty() {
            return Err(invalid("languages must not be empty".into()));
        }
        let mut total = 0.0;
        for lang in &self.languages {
            let code_ok = lang.code.len() == 2 && lang.code.bytes().all(|b| b.is_ascii_lowercase());
            if !code_ok {
                return Err(invalid(format!("language code {:?} is not ISO-639-1", lang.code)));
            }
            if !(lang.weight > 0.0 && lang.weight <= 1.0) {
                return Err(invalid(format!(
                    "language {} weight {} outside (0, 1]",
                    lang.code, lang.weight
                )));
            }
            total += lang.weight;
        }
        if total > 1.000001 {
            return Err(invalid(format!("language weights sum to {total} > 1")));
        }
        if !(-90.0..=90.0).contains(&self.lat_min)
            || !(-90.0..=90.0).contains(&self.lat_max)
            || self.lat_min > self.lat_max
        {
            return Err(invalid(format!(
                "latitude extent [{}, {}] is not a valid range",
                self.lat_min, self.lat_max
            )));
        }
        Ok(())
    }
}

/// Latitude extent check against the tropic band.
pub fn hemisphere_class(sheet: &FactSheet) -> HemisphereClass {
    if sheet.lat_min <= TROPIC_LATITUDE && sheet.lat_max >= -TROPIC_LATITUDE {
        HemisphereClass::Tropic
    } else if sheet.lat_min > TROPIC_LATITUDE {
        HemisphereClass::Northern
    } else {
        HemisphereClass::Southern
    }
}

/// Lowercase, strip combining diacritics, trim.
pub fn normalize_place_name(raw: &str) -> String {
    raw.nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect::<String>()
        .to_lowercase()
        .trim()
        .to_string()
}

/// On-disk fact sheet document.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactSheetDocument {
    code: String,
    name: String,
    languages: Vec<LanguageShare>,
    #[serde(default)]
    plate_colors: PlateColors,
    #[serde(default)]
    place_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRegistry {
    entries: BTreeMap<CountryCode, FactSheet>,
    gazetteer: BTreeMap<String, BTreeSet<CountryCode>>,
}

#[derive(Serialize, Deserialize)]
struct RegistryCache {
    version: u32,
    countries: Vec<FactSheet>,
}

impl CountryRegistry {
    /// Builds a registry from already validated sheets.
    pub fn from_sheets(sheets: impl IntoIterator<Item = FactSheet>) -> Result<Self, KnowledgeError> {
        let mut entries = BTreeMap::new();
        for sheet in sheets {
            sheet.validate()?;
            let code = sheet.code;
            if entries.insert(code, sheet).is_some() {
                return Err(KnowledgeError::DuplicateCode(code));
            }
        }
        let mut gazetteer: BTreeMap<String, BTreeSet<CountryCode>> = BTreeMap::new();
        for sheet in entries.values() {
            for place in &sheet.place_names {
                let key = normalize_place_name(place);
                if key.is_empty() {
                    continue;
                }
                gazetteer.entry(key).or_default().insert(sheet.code);
            }
        }
        Ok(Self { entries, gazetteer })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, code: &CountryCode) -> Option<&FactSheet> {
        self.entries.get(code)
    }

    pub fn contains(&self, code: &CountryCode) -> bool {
        self.entries.contains_key(code)
    }

    /// Fact sheets in ascending code order.
    pub fn sheets(&self) -> impl Iterator<Item = &FactSheet> {
        self.entries.values()
    }

    pub fn codes(&self) -> Vec<CountryCode> {
        self.entries.keys().copied().collect()
    }

    pub fn gazetteer(&self) -> &BTreeMap<String, BTreeSet<CountryCode>> {
        &self.gazetteer
    }

    /// Countries containing a place called `token`; empty below the length gate.
    pub fn lookup_place(&self, token: &str) -> BTreeSet<CountryCode> {
        let key = normalize_place_name(token);
        if key.chars().count() < MIN_PLACE_NAME_CHARS {
            return BTreeSet::new();
        }
        self.gazetteer.get(&key).cloned().unwrap_or_default()
    }

    /// Versioned cache document; countries in ascending code order.
    pub fn to_cache_json(&self) -> String {
        let cache = RegistryCache {
            version: REGISTRY_CACHE_VERSION,
            countries: self.entries.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&cache).expect("registry serializes")
    }

    pub fn from_cache_json(text: &str) -> Result<Self, KnowledgeError> {
        let cache: RegistryCache = serde_json::from_str(text).map_err(|e| KnowledgeError::Parse {
            path: PathBuf::from("<registry cache>"),
            message: e.to_string(),
        })?;
        if cache.version != REGISTRY_CACHE_VERSION {
            return Err(KnowledgeError::Parse {
                path: PathBuf::from("<registry cache>"),
                message: format!("unsupported cache version {}", cache.version),
            });
        }
        Self::from_sheets(cache.countries)
    }
}

/// Latitude extent per `iso_a2` code, taken over every polygon vertex.
pub fn parse_boundaries(
    text: &str,
    path: &Path,
) -> Result<BTreeMap<String, (f64, f64)>, KnowledgeError> {
    let parse_err = |message: String| KnowledgeError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if doc.get("type").and_then(|t| t.as_str()) != Some("FeatureCollection") {
        return Err(parse_err("expected a GeoJSON FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| parse_err("missing features array".into()))?;

    let mut extents: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (i, feature) in features.iter().enumerate() {
        let Some(iso) = feature
            .pointer("/properties/iso_a2")
            .and_then(|v| v.as_str())
        else {
            continue;
        };
        let coords = feature
            .pointer("/geometry/coordinates")
            .ok_or_else(|| parse_err(format!("feature {i} ({iso}) has no geometry coordinates")))?;
        let mut lats = Vec::new();
        collect_latitudes(coords, &mut lats)
            .map_err(|m| parse_err(format!("feature {i} ({iso}): {m}")))?;
        if lats.is_empty() {
            continue;
        }
        let lo = lats.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = lats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slot = extents.entry(iso.to_string()).or_insert((lo, hi));
        slot.0 = slot.0.min(lo);
        slot.1 = slot.1.max(hi);
    }
    Ok(extents)
}

// Positions are [lon, lat, ...]; anything nested deeper is a ring or polygon.
fn collect_latitudes(value: &serde_json::Value, out: &mut Vec<f64>) -> Result<(), String> {
    let arr = value.as_array().ok_or("coordinates must be arrays")?;
    if arr.first().is_some_and(|v| v.is_number()) {
        let lat = arr
            .get(1)
            .and_then(|v| v.as_f64())
            .ok_or("position without latitude")?;
        out.push(lat);
        return Ok(());
    }
    for item in arr {
        collect_latitudes(item, out)?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String, KnowledgeError> {
    std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses one fact-sheet document; latitude is filled in from `extents`.
pub fn parse_fact_sheet(
    text: &str,
    path: &Path,
    extents: &BTreeMap<String, (f64, f64)>,
) -> Result<FactSheet, KnowledgeError> {
    let doc: FactSheetDocument = serde_json::from_str(text).map_err(|e| KnowledgeError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let code = CountryCode::new(&doc.code).map_err(|e| KnowledgeError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (lat_min, lat_max) = *extents
        .get(code.as_str())
        .ok_or(KnowledgeError::MissingBoundary(code))?;
    Ok(FactSheet {
        code,
        display_name: doc.name,
        languages: doc.languages,
        plate_colors: doc.plate_colors,
        place_names: doc.place_names,
        lat_min,
        lat_max,
    })
}

/// Loads every `*.json` fact sheet below `factsheet_dir` plus the boundary
/// collection. Files are visited in sorted path order.
pub fn load_registry(factsheet_dir: &Path, boundaries: &Path) -> Result<CountryRegistry, KnowledgeError> {
    let extents = parse_boundaries(&read_text(boundaries)?, boundaries)?;
    let mut paths = Vec::new();
    for entry in walkdir::WalkDir::new(factsheet_dir).sort_by_file_name() {
        let entry = entry.map_err(|e| KnowledgeError::Io {
            path: factsheet_dir.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "json") {
            paths.push(entry.into_path());
        }
    }
    let mut sheets = Vec::with_capacity(paths.len());
    let mut seen = BTreeSet::new();
    for path in paths {
        let sheet = parse_fact_sheet(&read_text(&path)?, &path, &extents)?;
        if !seen.insert(sheet.code) {
            return Err(KnowledgeError::DuplicateCode(sheet.code));
        }
        sheets.push(sheet);
    }
    CountryRegistry::from_sheets(sheets)
}
