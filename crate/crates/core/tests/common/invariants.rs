//! Randomized distribution-invariant suites. Each suite runs a fixed number
//! of generated cases with a deterministic seed and reports the first
//! counterexample.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use whichcountry_core::evidence::color::{build_color_profile, score_colors};
use whichcountry_core::evidence::freqlist::{build_frequency_profile, score_frequency, FrequencyKind, TermCounts};
use whichcountry_core::evidence::plate::score_plates;
use whichcountry_core::evidence::solar::score_solar;
use whichcountry_core::evidence::textlang::{score_textlang, LanguageProfileSet, TextlangConfig};
use whichcountry_core::evidence::EvidenceScores;
use whichcountry_core::fusion::{fuse_over, WeightVector};
use whichcountry_core::imaging::{channel_histogram, View};
use whichcountry_core::knowledge::{
    CountryRegistry, FactSheet, HemisphereClass, LanguageShare, PlateColor, PlateColors,
};
use whichcountry_core::providers::{BBox, PlateColorObservation, PlatePosition, TextObservation};

use super::codes;

pub const TOL: f64 = 1e-9;

pub const LANGUAGES: [&str; 7] = ["de", "en", "es", "fr", "it", "nl", "pt"];

pub const PLACES: [&str; 10] = [
    "Rosenheim", "Lyon", "Salamanca", "Bergamo", "Utrecht", "Coimbra", "Dover", "Ålesund", "Zürich", "Sète",
];

pub const PHRASES: [&str; 10] = [
    "Bitte nicht parken, die Einfahrt muss frei bleiben",
    "No parking at any time except for deliveries",
    "Prohibido aparcar en la entrada de vehículos",
    "Stationnement interdit sauf pour les livraisons",
    "Divieto di sosta eccetto per il carico e scarico",
    "Verboden te parkeren behalve voor laden en lossen",
    "Proibido estacionar exceto para cargas e descargas",
    "1234 5678",
    "xqz vvk",
    "",
];

pub fn runner(cases: u32, seed: u8) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

pub fn bundled_languages() -> &'static LanguageProfileSet {
    static SET: OnceLock<LanguageProfileSet> = OnceLock::new();
    SET.get_or_init(LanguageProfileSet::bundled)
}

pub fn check_distribution(ev: &EvidenceScores<f64>) -> Result<(), TestCaseError> {
    if ev.is_abstained() {
        prop_assert!(ev.scores().is_empty());
        return Ok(());
    }
    let total: f64 = ev.scores().values().sum();
    prop_assert!((total - 1.0).abs() <= TOL, "{} sums to {total}", ev.module_id());
    prop_assert!(ev.scores().values().all(|v| (0.0..=1.0).contains(v)));
    Ok(())
}

pub fn image(max_side: u32) -> impl Strategy<Value = View> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<[u8; 3]>(), (w * h) as usize)
            .prop_map(move |px| View::from_pixels(w, h, px).unwrap())
    })
}

/// Images drawn from a small palette so that profiles differ in structured
/// ways rather than being near-uniform noise.
pub fn palette_image(max_side: u32) -> impl Strategy<Value = View> {
    (1..=max_side, 1..=max_side, prop::collection::vec(any::<[u8; 3]>(), 1..4)).prop_flat_map(|(w, h, palette)| {
        let n = palette.len();
        prop::collection::vec(0..n, (w * h) as usize)
            .prop_map(move |idx| View::from_pixels(w, h, idx.iter().map(|i| palette[*i]).collect()).unwrap())
    })
}

#[derive(Debug, Clone)]
pub struct SheetSpec {
    lat_min: f64,
    span: f64,
    languages: Vec<(usize, f64)>,
    front: Vec<PlateColor>,
    rear: Vec<PlateColor>,
    places: Vec<usize>,
}

fn plate_set() -> impl Strategy<Value = Vec<PlateColor>> {
    prop::sample::subsequence(PlateColor::ALL.to_vec(), 0..=3)
}

fn sheet_spec() -> impl Strategy<Value = SheetSpec> {
    (
        -80.0..70.0f64,
        0.5..40.0f64,
        prop::sample::subsequence((0..LANGUAGES.len()).collect::<Vec<_>>(), 1..=2),
        0.2..1.0f64,
        plate_set(),
        plate_set(),
        prop::sample::subsequence((0..PLACES.len()).collect::<Vec<_>>(), 0..=3),
    )
        .prop_map(|(lat_min, span, langs, share, front, rear, places)| {
            let languages = if langs.len() == 1 {
                vec![(langs[0], 1.0)]
            } else {
                vec![(langs[0], share * 0.5), (langs[1], (1.0 - share) * 0.5)]
            };
            SheetSpec {
                lat_min,
                span,
                languages,
                front,
                rear,
                places,
            }
        })
}

pub fn build_registry(specs: &[SheetSpec]) -> CountryRegistry {
    let sheets = codes(specs.len()).into_iter().zip(specs).map(|(code, s)| FactSheet {
        code,
        display_name: format!("Country {code}"),
        languages: s
            .languages
            .iter()
            .map(|(i, w)| LanguageShare {
                code: LANGUAGES[*i].to_string(),
                weight: *w,
            })
            .collect(),
        plate_colors: PlateColors {
            front: s.front.clone(),
            rear: s.rear.clone(),
        },
        place_names: s.places.iter().map(|i| PLACES[*i].to_string()).collect(),
        lat_min: s.lat_min,
        lat_max: (s.lat_min + s.span).min(90.0),
    });
    CountryRegistry::from_sheets(sheets).unwrap()
}

pub fn registry(max: usize) -> impl Strategy<Value = CountryRegistry> {
    prop::collection::vec(sheet_spec(), 1..=max).prop_map(|specs| build_registry(&specs))
}

pub fn hypothesis() -> impl Strategy<Value = Option<HemisphereClass>> {
    prop_oneof![
        Just(None),
        Just(Some(HemisphereClass::Northern)),
        Just(Some(HemisphereClass::Southern)),
        Just(Some(HemisphereClass::Tropic)),
    ]
}

pub fn text_observation() -> impl Strategy<Value = TextObservation> {
    (0..PHRASES.len(), prop::option::of(0..PLACES.len()), any::<bool>(), 0.3..1.0f64).prop_map(
        |(p, place, upper, confidence)| {
            let mut text = PHRASES[p].to_string();
            if let Some(i) = place {
                text = format!("{text} {}", PLACES[i]);
            }
            if upper {
                text = text.to_uppercase();
            }
            TextObservation {
                text,
                confidence,
                bbox: BBox { x: 0, y: 0, w: 4, h: 4 },
            }
        },
    )
}

pub fn plate_observation() -> impl Strategy<Value = PlateColorObservation> {
    (
        prop::sample::select(PlateColor::ALL.to_vec()),
        prop_oneof![Just(PlatePosition::Front), Just(PlatePosition::Rear), Just(PlatePosition::Unknown)],
        0.01..=1.0f64,
    )
        .prop_map(|(color, position, confidence)| PlateColorObservation {
            color,
            position,
            confidence,
        })
}

pub const VOCAB: [&str; 12] = [
    "road", "tree", "house", "fence", "church", "palm", "hill", "shop", "car", "bus", "sign", "field",
];

pub fn term_counts(max_terms: usize) -> impl Strategy<Value = TermCounts> {
    prop::collection::btree_map(prop::sample::select(VOCAB.to_vec()), 1..6u64, 0..=max_terms).prop_map(|m| {
        let mut tc = TermCounts::new();
        for (t, n) in m {
            tc.add(t, n);
        }
        tc
    })
}

/// Random evidence over a subset of `n` countries, or an abstention.
pub fn evidence(id: &'static str, n: usize) -> impl Strategy<Value = EvidenceScores<f64>> {
    prop_oneof![
        1 => Just(EvidenceScores::abstain(id, "abstained")),
        4 => prop::collection::vec(prop::option::of(prop_oneof![Just(0.0), 0.0..1.0f64]), n).prop_filter_map(
            "needs positive mass",
            move |raw| {
                let codes = codes(n);
                let map: BTreeMap<_, _> = codes.into_iter().zip(raw).filter_map(|(c, v)| v.map(|v| (c, v))).collect();
                if map.values().any(|v| *v > 0.0) {
                    Some(EvidenceScores::from_weights(id, map, vec![]).unwrap())
                } else {
                    None
                }
            }
        ),
    ]
}

pub const FUSION_MODULES: [&str; 6] = ["caption", "color", "solar", "object", "textlang", "plate"];

pub fn fusion_instance() -> impl Strategy<Value = (usize, Vec<EvidenceScores<f64>>, BTreeMap<String, f64>)> {
    (1..=30usize, 1..=6usize).prop_flat_map(|(n, m)| {
        let modules: Vec<_> = FUSION_MODULES[..m].iter().map(|id| evidence(id, n)).collect();
        let weights = prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..1.0f64], m);
        (Just(n), modules, weights).prop_map(move |(n, modules, raw)| {
            let total: f64 = raw.iter().sum();
            let weights = FUSION_MODULES[..m]
                .iter()
                .zip(&raw)
                .map(|(id, w)| (id.to_string(), if total > 0.0 { w / total } else { 1.0 / m as f64 }))
                .collect();
            (n, modules, weights)
        })
    })
}

pub type Suite = (&'static str, fn(u32) -> Result<(), String>);

pub const SUITES: [Suite; 8] = [
    ("channel_histogram", histogram_suite),
    ("score_colors", color_suite),
    ("score_solar", solar_suite),
    ("score_textlang", textlang_suite),
    ("score_frequency", frequency_suite),
    ("score_plates", plate_suite),
    ("from_weights", weights_suite),
    ("fuse", fusion_suite),
];

pub fn histogram_suite(cases: u32) -> Result<(), String> {
    runner(cases, 1)
        .run(&image(24), |img| {
            let h = channel_histogram::<f64>(&img).unwrap();
            for c in 0..3 {
                let total: f64 = h.channel(c).iter().sum();
                prop_assert!((total - 1.0).abs() <= TOL);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn color_suite(cases: u32) -> Result<(), String> {
    let strat = (prop::collection::vec(palette_image(8), 1..=12), palette_image(8));
    runner(cases, 2)
        .run(&strat, |(train, query)| {
            let profiles: Vec<_> = codes(train.len())
                .into_iter()
                .zip(&train)
                .map(|(c, img)| build_color_profile(c, &[channel_histogram::<f64>(img).unwrap()]).unwrap())
                .collect();
            let q = channel_histogram::<f64>(&query).unwrap();
            let ev = score_colors(&q, &profiles).unwrap();
            prop_assert!(!ev.is_abstained());
            prop_assert_eq!(ev.scores().len(), profiles.len());
            check_distribution(&ev)
        })
        .map_err(|e| e.to_string())
}

pub fn solar_suite(cases: u32) -> Result<(), String> {
    runner(cases, 3)
        .run(&(registry(30), hypothesis()), |(reg, hyp)| {
            let ev = score_solar::<f64>(hyp, &reg);
            prop_assert_eq!(ev.is_abstained(), hyp.is_none());
            check_distribution(&ev)?;
            if !ev.is_abstained() {
                prop_assert!(ev.scores().values().all(|v| *v > 0.0));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn textlang_suite(cases: u32) -> Result<(), String> {
    let strat = (registry(12), prop::collection::vec(text_observation(), 0..4));
    runner(cases, 4)
        .run(&strat, |(reg, obs)| {
            let ev = score_textlang::<f64>(&obs, &reg, bundled_languages(), &TextlangConfig::default());
            if obs.is_empty() {
                prop_assert!(ev.is_abstained());
            }
            check_distribution(&ev)
        })
        .map_err(|e| e.to_string())
}

pub fn frequency_suite(cases: u32) -> Result<(), String> {
    let strat = (
        prop::collection::vec(prop::collection::vec(term_counts(6), 1..4), 1..=10),
        term_counts(6),
    );
    runner(cases, 5)
        .run(&strat, |(docs, observed)| {
            let profiles: Vec<_> = codes(docs.len())
                .into_iter()
                .zip(&docs)
                .map(|(c, d)| build_frequency_profile::<f64>(c, FrequencyKind::CaptionWords, d).unwrap())
                .collect();
            let ev = score_frequency(&observed, &profiles).unwrap();
            prop_assert_eq!(ev.is_abstained(), observed.is_empty());
            check_distribution(&ev)
        })
        .map_err(|e| e.to_string())
}

pub fn plate_suite(cases: u32) -> Result<(), String> {
    let strat = (registry(20), prop::collection::vec(plate_observation(), 0..5));
    runner(cases, 6)
        .run(&strat, |(reg, obs)| {
            let ev = score_plates::<f64>(&obs, &reg);
            prop_assert_eq!(ev.is_abstained(), obs.is_empty());
            check_distribution(&ev)
        })
        .map_err(|e| e.to_string())
}

pub fn weights_suite(cases: u32) -> Result<(), String> {
    runner(cases, 7)
        .run(&evidence("any", 30), |ev| check_distribution(&ev))
        .map_err(|e| e.to_string())
}

pub fn fusion_suite(cases: u32) -> Result<(), String> {
    runner(cases, 8)
        .run(&fusion_instance(), |(n, modules, weights)| {
            let universe = codes(n);
            let wv = WeightVector::new(weights).unwrap();
            let report = fuse_over(modules.clone(), &wv, &universe).unwrap();
            let total: f64 = report.ranking.entries().iter().map(|e| e.score).sum();
            prop_assert!((total - 1.0).abs() <= TOL, "ranking sums to {total}");
            prop_assert_eq!(report.ranking.len(), n);
            for ev in report.per_module.values() {
                check_distribution(ev)?;
            }
            let active: BTreeSet<&str> = modules.iter().filter(|m| !m.is_abstained()).map(|m| m.module_id()).collect();
            let used: BTreeSet<&str> = report.weights_used.modules().collect();
            prop_assert_eq!(&used, &active);
            prop_assert!(report.abstentions.iter().all(|a| !used.contains(a.as_str())));
            if !used.is_empty() {
                let w: f64 = report.weights_used.iter().map(|(_, w)| w).sum();
                prop_assert!((w - 1.0).abs() <= TOL);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
