//! Synthetic countries and rendered panorama corpora with canned provider
//! answers, for end-to-end runs without real imagery or models.
//!
//! Every synthetic country has its own sky, ground and facade palette, a
//! caption vocabulary, object labels, a plate color, a language and two
//! place names. Panoramas put the sun to the south for northern countries
//! and to the north for southern ones, paint a plate straight ahead (north)
//! and a sign to the east.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{EngineConfig, ProfilePaths, ProviderSettings, ProviderSpec, ViewGrid};
use crate::evalkit::{DatasetManifest, ManifestItem};
use crate::imaging::{ImagingError, Panorama, Rgb, RgbImage, View};
use crate::knowledge::{CountryCode, PlateColor};
use crate::providers::{BBox, FixtureProvider, FixtureResponse};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("{0}")]
    Argument(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fixed description of one synthetic country.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCountry {
    pub code: &'static str,
    pub name: &'static str,
    pub languages: &'static [(&'static str, f64)],
    pub lat_range: (f64, f64),
    pub sky: Rgb,
    pub ground: Rgb,
    pub facade: Rgb,
    pub caption_words: [&'static str; 4],
    pub object_labels: [&'static str; 2],
    pub plate: PlateColor,
    pub place_names: [&'static str; 2],
}

impl SynthCountry {
    pub fn country_code(&self) -> CountryCode {
        CountryCode::new(self.code).expect("synthetic codes are valid")
    }
}

const SHARED_CAPTION_WORDS: [&str; 7] = ["street", "road", "building", "sky", "tree", "wall", "sidewalk"];
const SHARED_OBJECT_LABELS: [&str; 3] = ["person", "pole", "traffic light"];

const SIGN_PHRASES: [(&str, &str); 7] = [
    ("en", "welcome to the old town and the railway station"),
    ("de", "willkommen in der altstadt und zum bahnhof"),
    ("fr", "bienvenue dans la vieille ville et la gare"),
    ("es", "bienvenidos a la ciudad vieja y la estación"),
    ("it", "benvenuti nella città vecchia e alla stazione"),
    ("nl", "welkom in de oude binnenstad en het station"),
    ("pt", "bem-vindos à cidade velha e à estação"),
];

pub const SYNTH_COUNTRIES: [SynthCountry; 10] = [
    SynthCountry {
        code: "XA",
        name: "Arvania",
        languages: &[("en", 1.0)],
        lat_range: (41.0, 52.0),
        sky: [70, 120, 200],
        ground: [90, 90, 80],
        facade: [200, 60, 50],
        caption_words: ["tram", "cathedral", "bakery", "fountain"],
        object_labels: ["tram", "clock"],
        plate: PlateColor::White,
        place_names: ["Velmora", "Brakton"],
    },
    SynthCountry {
        code: "XB",
        name: "Belmark",
        languages: &[("de", 1.0)],
        lat_range: (47.0, 55.0),
        sky: [100, 140, 180],
        ground: [60, 110, 40],
        facade: [230, 220, 190],
        caption_words: ["windmill", "canal", "bicycle", "tulip"],
        object_labels: ["bicycle", "windmill"],
        plate: PlateColor::Yellow,
        place_names: ["Oskelund", "Tirravik"],
    },
    SynthCountry {
        code: "XC",
        name: "Corvelle",
        languages: &[("fr", 1.0)],
        lat_range: (43.0, 50.0),
        sky: [130, 170, 220],
        ground: [150, 130, 100],
        facade: [120, 120, 160],
        caption_words: ["vineyard", "chapel", "cypress", "terrace"],
        object_labels: ["barrel", "umbrella"],
        plate: PlateColor::Blue,
        place_names: ["Pernault", "Chavigne"],
    },
    SynthCountry {
        code: "XD",
        name: "Dastoria",
        languages: &[("es", 1.0)],
        lat_range: (28.0, 42.0),
        sky: [160, 200, 240],
        ground: [190, 140, 90],
        facade: [240, 180, 120],
        caption_words: ["cactus", "adobe", "mesa", "canyon"],
        object_labels: ["cactus", "horse"],
        plate: PlateColor::Red,
        place_names: ["Marvesa", "Collaredo"],
    },
    SynthCountry {
        code: "XE",
        name: "Elvessa",
        languages: &[("it", 1.0)],
        lat_range: (37.0, 46.0),
        sky: [50, 90, 150],
        ground: [120, 70, 60],
        facade: [250, 140, 60],
        caption_words: ["lagoon", "gondola", "piazza", "sailboat"],
        object_labels: ["boat", "surfboard"],
        plate: PlateColor::Green,
        place_names: ["Sorvenza", "Altamuro"],
    },
    SynthCountry {
        code: "XF",
        name: "Feyland",
        languages: &[("nl", 1.0)],
        lat_range: (-46.0, -34.0),
        sky: [90, 100, 120],
        ground: [40, 80, 60],
        facade: [150, 40, 40],
        caption_words: ["pine", "cabin", "fjord", "moose"],
        object_labels: ["canoe", "sled"],
        plate: PlateColor::Black,
        place_names: ["Drevendam", "Kloosterveld"],
    },
    SynthCountry {
        code: "XG",
        name: "Galvora",
        languages: &[("pt", 1.0)],
        lat_range: (-33.0, -25.0),
        sky: [180, 210, 200],
        ground: [170, 60, 30],
        facade: [60, 160, 150],
        caption_words: ["rickshaw", "temple", "market", "lantern"],
        object_labels: ["rickshaw", "lantern"],
        plate: PlateColor::White,
        place_names: ["Aravela", "Montequeira"],
    },
    SynthCountry {
        code: "XH",
        name: "Hollin",
        languages: &[("en", 0.6), ("fr", 0.4)],
        lat_range: (-44.0, -30.0),
        sky: [120, 130, 150],
        ground: [110, 140, 70],
        facade: [220, 220, 230],
        caption_words: ["lighthouse", "cliff", "heather", "cottage"],
        object_labels: ["sheep", "kite"],
        plate: PlateColor::Yellow,
        place_names: ["Ashcombe", "Lindqvay"],
    },
    SynthCountry {
        code: "XI",
        name: "Istermark",
        languages: &[("de", 1.0)],
        lat_range: (-52.0, -40.0),
        sky: [200, 190, 170],
        ground: [210, 190, 140],
        facade: [170, 110, 70],
        caption_words: ["minaret", "bazaar", "dune", "camel"],
        object_labels: ["camel", "carpet"],
        plate: PlateColor::Blue,
        place_names: ["Wetterfeld", "Grunsdorf"],
    },
    SynthCountry {
        code: "XJ",
        name: "Jovera",
        languages: &[("es", 1.0)],
        lat_range: (-5.0, 12.0),
        sky: [80, 160, 210],
        ground: [70, 50, 40],
        facade: [100, 200, 90],
        caption_words: ["bamboo", "pagoda", "paddy", "buffalo"],
        object_labels: ["buffalo", "scooter"],
        plate: PlateColor::Red,
        place_names: ["Paloverde", "Quintanal"],
    },
];

/// Which signals the rendered corpus carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthSignals {
    /// Palette, sun, plates, signs and country-specific captions/objects.
    Full,
    /// Only the palette differs between countries; captions and objects
    /// come from a shared vocabulary, there is no sun, plate or sign.
    ColorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: u32,
    pub train_per_country: usize,
    pub query_per_country: usize,
    pub dev_per_country: usize,
    pub signals: SynthSignals,
    pub views: ViewGrid,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            width: 512,
            train_per_country: 4,
            query_per_country: 5,
            dev_per_country: 2,
            signals: SynthSignals::Full,
            views: ViewGrid {
                size: 128,
                ..ViewGrid::default()
            },
        }
    }
}

/// Paths of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub root: PathBuf,
    pub config: PathBuf,
    pub train: PathBuf,
    pub query: PathBuf,
    pub dev: PathBuf,
}

/// Scene parameters of one panorama, in absolute azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub country: usize,
    pub north_offset_deg: f64,
    pub sun: Option<(f64, f64)>,
    pub plate: bool,
    pub buildings: Vec<(f64, f64, f64)>,
    pub tint: [i32; 3],
    pub noise_seed: u64,
}

const SUN_DISC_DEG: f64 = 8.0;
const SUN_GLOW_DEG: f64 = 50.0;
const PLATE_AZ_HALF_DEG: f64 = 5.0;
const PLATE_EL_DEG: (f64, f64) = (-14.0, -10.0);
const PIXEL_NOISE: i32 = 8;

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

fn unit(az_deg: f64, el_deg: f64) -> [f64; 3] {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()]
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    dot.acos().to_degrees()
}

fn ang_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Random scene for `country`.
pub fn random_scene(country: usize, signals: SynthSignals, rng: &mut ChaCha8Rng) -> Scene {
    let spec = &SYNTH_COUNTRIES[country];
    let sun = (signals == SynthSignals::Full).then(|| {
        let north = match spec.lat_range {
            (lo, _) if lo > 23.4 => true,
            (_, hi) if hi < -23.4 => false,
            _ => rng.random_bool(0.5),
        };
        let base = if north { 180.0 } else { 0.0 };
        (base + rng.random_range(-15.0..15.0), rng.random_range(25.0..45.0))
    });
    let mut buildings = Vec::new();
    let mut az: f64 = rng.random_range(0.0..20.0);
    while az < 360.0 {
        let width: f64 = rng.random_range(15.0..40.0);
        if rng.random_bool(0.7) {
            buildings.push((az, (az + width).min(360.0), rng.random_range(5.0..25.0)));
        }
        az += width + rng.random_range(2.0..10.0);
    }
    Scene {
        country,
        north_offset_deg: rng.random_range(0.0..360.0_f64).floor(),
        sun,
        plate: signals == SynthSignals::Full,
        buildings,
        tint: std::array::from_fn(|_| rng.random_range(-6..=6)),
        noise_seed: rng.random(),
    }
}

pub fn render(scene: &Scene, width: u32) -> Result<Panorama, SynthError> {
    if width < 64 || width % 2 != 0 {
        return Err(SynthError::Argument("width must be even and at least 64".into()));
    }
    let spec = &SYNTH_COUNTRIES[scene.country];
    let height = width / 2;
    let mut noise = ChaCha8Rng::seed_from_u64(scene.noise_seed);
    let sun_dir = scene.sun.map(|(az, el)| unit(az, el));
    let tinted = |c: Rgb| -> [i32; 3] { std::array::from_fn(|i| c[i] as i32 + scene.tint[i]) };
    let (sky, ground, facade) = (tinted(spec.sky), tinted(spec.ground), tinted(spec.facade));
    let plate = spec.plate.prototype();

    Panorama::from_fn(width, height, Some(scene.north_offset_deg), |x, y| {
        let az = ((x as f64 + 0.5) / width as f64 * 360.0 - scene.north_offset_deg).rem_euclid(360.0);
        let el = 90.0 - (y as f64 + 0.5) / height as f64 * 180.0;
        let jitter: [i32; 3] = std::array::from_fn(|_| noise.random_range(-PIXEL_NOISE..=PIXEL_NOISE));

        if scene.plate && ang_diff(az, 0.0) <= PLATE_AZ_HALF_DEG && el >= PLATE_EL_DEG.0 && el <= PLATE_EL_DEG.1 {
            return plate;
        }
        if el <= 0.0 {
            return std::array::from_fn(|i| clamp_u8(ground[i] + jitter[i]));
        }
        if scene.buildings.iter().any(|&(a0, a1, h)| az >= a0 && az < a1 && el < h) {
            return std::array::from_fn(|i| clamp_u8(facade[i] + jitter[i]));
        }
        let mut px: [f64; 3] = std::array::from_fn(|i| (sky[i] + jitter[i]) as f64);
        if let Some(sd) = sun_dir {
            let d = angle_between(unit(az, el), sd);
            if d <= SUN_DISC_DEG {
                return [255, 255, 245];
            }
            let glow = (1.0 - d / SUN_GLOW_DEG).max(0.0).powi(2);
            for v in &mut px {
                *v += (255.0 - *v) * glow;
            }
        }
        std::array::from_fn(|i| clamp_u8(px[i].round() as i32))
    })
    .map_err(SynthError::from)
}

fn caption_for(spec: &SynthCountry, signals: SynthSignals, rng: &mut ChaCha8Rng) -> String {
    let shared = |rng: &mut ChaCha8Rng| *SHARED_CAPTION_WORDS.choose(rng).expect("non-empty");
    match signals {
        SynthSignals::Full => {
            let own: Vec<&str> = spec.caption_words.choose_multiple(rng, 2).copied().collect();
            format!("a {} with a {} and a {} by the {}", shared(rng), own[0], own[1], shared(rng))
        }
        SynthSignals::ColorOnly => {
            format!("a {} with a {} and a {}", shared(rng), shared(rng), shared(rng))
        }
    }
}

fn object(label: &str, confidence: f64, bbox: [u32; 4]) -> serde_json::Value {
    json!({"label": label, "confidence": confidence, "box": bbox})
}

/// Vehicle box whose plate strip covers the painted plate, found by pixel
/// search in the lower half of the view.
pub fn locate_vehicle(view: &View, plate: PlateColor) -> Option<BBox> {
    let proto = plate.prototype();
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for y in view.height / 2..view.height {
        for x in 0..view.width {
            if view.pixel(x, y) == proto {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 > x1 {
        return None;
    }
    let (pw, ph) = (x1 - x0 + 1, y1 - y0 + 1);
    let (w, h) = (pw * 2, ph * 4);
    let x = x0.checked_sub(pw / 2)?;
    let y = (y1 + 1).checked_sub(h)?;
    (x + w <= view.width && y + h <= view.height).then_some(BBox { x, y, w, h })
}

fn fixture_docs(
    scene: &Scene,
    views: &[View],
    grid: &ViewGrid,
    signals: SynthSignals,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, FixtureResponse)> {
    let spec = &SYNTH_COUNTRIES[scene.country];
    let plate_view = grid.headings_deg.iter().position(|h| ang_diff(*h, 0.0) < 1e-9);
    let sign_view = grid.headings_deg.iter().position(|h| ang_diff(*h, 90.0) < 1e-9);
    views
        .iter()
        .enumerate()
        .map(|(i, view)| {
            let s = view.width;
            let mut objects = vec![object(SHARED_OBJECT_LABELS.choose(rng).expect("non-empty"), 0.7, [2, 2, s / 4, s / 4])];
            if signals == SynthSignals::Full {
                let label = spec.object_labels.choose(rng).expect("non-empty");
                objects.push(object(label, 0.8, [s / 2, 4, s / 4, s / 4]));
                if Some(i) == plate_view && scene.plate {
                    if let Some(b) = locate_vehicle(view, spec.plate) {
                        objects.push(object("car", 0.9, [b.x, b.y, b.w, b.h]));
                    }
                }
            } else {
                objects.push(object(SHARED_OBJECT_LABELS.choose(rng).expect("non-empty"), 0.8, [s / 2, 4, s / 4, s / 4]));
            }
            let ocr = if signals == SynthSignals::Full && Some(i) == sign_view {
                let lang = spec.languages[0].0;
                let phrase = SIGN_PHRASES.iter().find(|(l, _)| *l == lang).map_or("", |p| p.1);
                let place = spec.place_names.choose(rng).expect("non-empty");
                json!([
                    {"text": phrase, "confidence": 0.9, "box": [4, 4, s / 2, s / 8]},
                    {"text": place, "confidence": 0.85, "box": [4, s / 4, s / 3, s / 10]},
                ])
            } else {
                json!([])
            };
            let doc = FixtureResponse {
                ocr: Some(ocr),
                caption: Some(json!(caption_for(spec, signals, rng))),
                objects: Some(json!(objects)),
                error: None,
            };
            (view.digest(), doc)
        })
        .collect()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), SynthError> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    std::fs::write(path, text).map_err(io_err(path))
}

/// Fact sheet documents and boundary collection for the synthetic countries.
pub fn write_knowledge(root: &Path) -> Result<(), SynthError> {
    let dir = root.join("factsheets");
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut features = Vec::new();
    for c in &SYNTH_COUNTRIES {
        let languages: Vec<_> = c.languages.iter().map(|(l, w)| json!({"code": l, "weight": w})).collect();
        write_json(
            &dir.join(format!("{}.json", c.code)),
            &json!({
                "code": c.code,
                "name": c.name,
                "languages": languages,
                "plate_colors": {"front": [c.plate.name()], "rear": [c.plate.name()]},
                "place_names": c.place_names,
            }),
        )?;
        let (lo, hi) = c.lat_range;
        let lon = 10.0 * features.len() as f64;
        features.push(json!({
            "type": "Feature",
            "properties": {"iso_a2": c.code, "name": c.name},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[lon, lo], [lon + 8.0, lo], [lon + 8.0, hi], [lon, hi], [lon, lo]]],
            },
        }));
    }
    write_json(
        &root.join("boundaries.geojson"),
        &json!({"type": "FeatureCollection", "features": features}),
    )
}

/// Renders train, query and dev splits under `root`, with manifests,
/// fixtures, knowledge files and an engine configuration. Profiles are not
/// built; see [`crate::training`].
pub fn generate(root: &Path, config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    write_knowledge(root)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fixtures = FixtureProvider::default();
    let mut seen: BTreeMap<String, FixtureResponse> = BTreeMap::new();

    let splits = [
        ("train", config.train_per_country),
        ("query", config.query_per_country),
        ("dev", config.dev_per_country),
    ];
    let mut manifests = Vec::new();
    for (split, per_country) in splits {
        let dir = root.join(split);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut items = Vec::new();
        for (ci, c) in SYNTH_COUNTRIES.iter().enumerate() {
            for k in 0..per_country {
                let scene = random_scene(ci, config.signals, &mut rng);
                let pano = render(&scene, config.width)?;
                let name = format!("{}_{k:02}.png", c.code);
                let path = dir.join(&name);
                std::fs::write(&path, pano.to_png()).map_err(io_err(&path))?;
                let views = config.views.views(&pano)?;
                for (digest, doc) in fixture_docs(&scene, &views, &config.views, config.signals, &mut rng) {
                    if let Some(prev) = seen.get(&digest) {
                        if *prev != doc {
                            return Err(SynthError::Argument(format!("view digest collision {digest}")));
                        }
                    }
                    seen.insert(digest.clone(), doc.clone());
                    fixtures.insert(digest, doc);
                }
                items.push(ManifestItem {
                    path: PathBuf::from(format!("{split}/{name}")),
                    truth: c.country_code(),
                    north_offset_deg: Some(scene.north_offset_deg),
                });
            }
        }
        let manifest = DatasetManifest::new(items).map_err(|e| SynthError::Argument(e.to_string()))?;
        let path = root.join(format!("{split}.jsonl"));
        std::fs::write(&path, manifest.to_jsonl()).map_err(io_err(&path))?;
        manifests.push(path);
    }
    let fixture_dir = root.join("fixtures");
    fixtures.save(&fixture_dir).map_err(io_err(&fixture_dir))?;

    let fixtures_spec = Some(ProviderSpec::Fixtures {
        fixtures: PathBuf::from("fixtures"),
    });
    let engine = EngineConfig {
        factsheets: Some("factsheets".into()),
        boundaries: Some("boundaries.geojson".into()),
        profiles: ProfilePaths {
            color: Some("profiles/color".into()),
            caption: Some("profiles/caption".into()),
            object: Some("profiles/object".into()),
            language: None,
        },
        providers: ProviderSettings {
            ocr: fixtures_spec.clone(),
            caption: fixtures_spec.clone(),
            objects: fixtures_spec,
            ..ProviderSettings::default()
        },
        views: config.views.clone(),
        ..EngineConfig::default()
    };
    let config_path = root.join("engine.toml");
    std::fs::write(&config_path, engine.to_toml()).map_err(io_err(&config_path))?;

    let [train, query, dev]: [PathBuf; 3] = manifests.try_into().expect("three splits");
    Ok(SynthCorpus {
        root: root.to_path_buf(),
        config: config_path,
        train,
        query,
        dev,
    })
}
