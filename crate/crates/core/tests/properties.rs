mod common;

use std::collections::BTreeMap;

use common::invariants::{self, bundled_languages, palette_image, plate_observation, registry, term_counts, TOL};
use proptest::prelude::*;
use whichcountry_core::evidence::color::{build_color_profile, color_distance, histogram_distance, score_colors};
use whichcountry_core::evidence::freqlist::{build_frequency_profile, score_frequency, FrequencyKind, TermCounts};
use whichcountry_core::evidence::plate::{match_set, score_plates};
use whichcountry_core::evidence::solar::{infer_hemisphere, score_solar, SunEstimate};
use whichcountry_core::evidence::textlang::{detect_language, score_textlang, TextlangConfig};
use whichcountry_core::evidence::EvidenceScores;
use whichcountry_core::fusion::{fuse_over, WeightVector};
use whichcountry_core::imaging::{channel_histogram, extract_view, mean_luminance, Panorama, RgbImage, View};
use whichcountry_core::knowledge::{hemisphere_class, HemisphereClass, PlateColor, TROPIC_LATITUDE};
use whichcountry_core::providers::{
    extract_plate_colors, BBox, FixtureProvider, FixtureResponse, InferenceProvider, ObjectObservation, PlatePosition,
    ProviderOp,
};

const CASES_PER_SUITE: u32 = 1500;

#[test]
fn distribution_suites() {
    for (name, suite) in invariants::SUITES {
        if let Err(e) = suite(CASES_PER_SUITE) {
            panic!("{name}: {e}");
        }
    }
}

fn upscale(img: &View, k: u32) -> View {
    let (w, h) = (img.width * k, img.height * k);
    let px = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| img.pixel(x / k, y / k))
        .collect();
    View::from_pixels(w, h, px).unwrap()
}

fn small_panorama() -> impl Strategy<Value = Panorama> {
    (1..=12u32, prop::option::of(0.0..360.0f64)).prop_flat_map(|(half, north)| {
        let (w, h) = (half * 2, half);
        prop::collection::vec(any::<[u8; 3]>(), (w * h) as usize)
            .prop_map(move |px| Panorama::new(w, h, px, north).unwrap())
    })
}

fn fused_ranking(modules: Vec<EvidenceScores<f64>>, universe: &[whichcountry_core::knowledge::CountryCode]) -> Vec<(String, f64)> {
    let weights = WeightVector::uniform(modules.iter().map(|m| m.module_id().to_string())).unwrap();
    fuse_over(modules, &weights, universe)
        .unwrap()
        .ranking
        .entries()
        .iter()
        .map(|e| (e.country.to_string(), e.score))
        .collect()
}

fn assert_close(a: &EvidenceScores<f64>, b: &EvidenceScores<f64>) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.is_abstained(), b.is_abstained());
    prop_assert_eq!(a.scores().len(), b.scores().len());
    for (c, v) in a.scores() {
        prop_assert!((v - b.score(c)).abs() <= TOL, "{c}: {v} vs {}", b.score(c));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn view_is_invariant_under_full_turns(pano in small_panorama(), heading in -720.0..720.0f64, pitch in -80.0..80.0f64, turns in -2i32..3) {
        let a = extract_view(&pano, heading, pitch, 70.0, 9, 7).unwrap();
        let b = extract_view(&pano, heading + 360.0 * turns as f64, pitch, 70.0, 9, 7).unwrap();
        prop_assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn brightening_never_lowers_luminance(img in invariants::image(16)) {
        let brighter = View::from_pixels(
            img.width,
            img.height,
            img.pixels.iter().map(|p| p.map(|v| v.saturating_add(1))).collect(),
        ).unwrap();
        let before = mean_luminance::<f64>(&img).unwrap();
        let after = mean_luminance::<f64>(&brighter).unwrap();
        prop_assert!(after >= before);
        prop_assert!((0.0..=255.0).contains(&after));
    }

    #[test]
    fn histogram_ignores_pixel_replication(img in invariants::image(10), k in 2u32..4) {
        let a = channel_histogram::<f64>(&img).unwrap();
        let b = channel_histogram::<f64>(&upscale(&img, k)).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn color_distance_is_a_metric(a in palette_image(8), b in palette_image(8), c in palette_image(8)) {
        let (ha, hb, hc) = (
            channel_histogram::<f64>(&a).unwrap(),
            channel_histogram::<f64>(&b).unwrap(),
            channel_histogram::<f64>(&c).unwrap(),
        );
        let ab = histogram_distance(&ha, &hb);
        prop_assert_eq!(ab, histogram_distance(&hb, &ha));
        prop_assert_eq!(histogram_distance(&ha, &ha), 0.0);
        prop_assert_eq!(ab == 0.0, ha == hb);
        prop_assert!(ab <= histogram_distance(&ha, &hc) + histogram_distance(&hc, &hb) + 1e-15);
        prop_assert!(ab <= 2.0 / 256.0 + 1e-15);
    }

    #[test]
    fn color_scores_reverse_distance_order(train in prop::collection::vec(palette_image(6), 2..8), query in palette_image(6)) {
        let profiles: Vec<_> = common::codes(train.len())
            .into_iter()
            .zip(&train)
            .map(|(code, img)| build_color_profile(code, &[channel_histogram::<f64>(img).unwrap()]).unwrap())
            .collect();
        let q = channel_histogram::<f64>(&query).unwrap();
        let ev = score_colors(&q, &profiles).unwrap();
        for a in &profiles {
            for b in &profiles {
                if color_distance(&q, a) < color_distance(&q, b) {
                    prop_assert!(ev.score(&a.country) > ev.score(&b.country));
                }
            }
        }
    }

    #[test]
    fn hemisphere_rule_depends_only_on_azimuth_modulo_360(az in 0.0..360.0f64, turns in -3i32..4, confident: bool) {
        let est = |azimuth_deg| SunEstimate { azimuth_deg, contrast: 20.0, confident, luminances: vec![] };
        prop_assert_eq!(infer_hemisphere(&est(az)), infer_hemisphere(&est(az + 360.0 * turns as f64)));
    }

    #[test]
    fn solar_argmax_is_the_matching_hemisphere(reg in registry(30), northern: bool) {
        let hyp = if northern { HemisphereClass::Northern } else { HemisphereClass::Southern };
        let ev = score_solar::<f64>(Some(hyp), &reg);
        prop_assert!(ev.scores().values().all(|v| *v > 0.0));
        let matching: std::collections::BTreeSet<_> =
            reg.sheets().filter(|s| hemisphere_class(s) == hyp).map(|s| s.code).collect();
        if !matching.is_empty() {
            prop_assert_eq!(ev.argmax_set(), matching);
        }
    }

    #[test]
    fn tropic_class_matches_latitude_band(reg in registry(10)) {
        for s in reg.sheets() {
            let tropic = s.lat_min <= TROPIC_LATITUDE && s.lat_max >= -TROPIC_LATITUDE;
            prop_assert_eq!(hemisphere_class(s) == HemisphereClass::Tropic, tropic);
        }
    }

    #[test]
    fn place_lookup_is_normalization_invariant(reg in registry(10), i in 0..invariants::PLACES.len(), pad in 0usize..3) {
        let raw = invariants::PLACES[i];
        let messy = format!("{}{}", raw.to_uppercase(), " ".repeat(pad));
        let folded = whichcountry_core::knowledge::normalize_place_name(&messy);
        prop_assert_eq!(reg.lookup_place(&messy), reg.lookup_place(&folded));
        prop_assert_eq!(reg.lookup_place(raw), reg.lookup_place(&folded));
    }

    #[test]
    fn language_detection_ignores_case(i in 0..7usize, upper: bool) {
        let text = invariants::PHRASES[i];
        let variant = if upper { text.to_uppercase() } else { text.to_lowercase() };
        let a = detect_language(text, bundled_languages());
        prop_assert_eq!(&a, &detect_language(&variant, bundled_languages()));
        prop_assert_eq!(&a, &detect_language(text, bundled_languages()));
    }

    #[test]
    fn repeated_toponyms_do_not_change_text_scores(reg in registry(12), obs in prop::collection::vec(invariants::text_observation(), 1..4), copies in 1usize..3) {
        let mut doubled = obs.clone();
        for _ in 0..copies {
            doubled.extend(obs.iter().cloned());
        }
        let cfg = TextlangConfig::default();
        let a = score_textlang::<f64>(&obs, &reg, bundled_languages(), &cfg);
        let b = score_textlang::<f64>(&doubled, &reg, bundled_languages(), &cfg);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn frequency_scores_are_scale_invariant(docs in prop::collection::vec(prop::collection::vec(term_counts(5), 1..3), 1..8), observed in term_counts(5), k in 1u64..20) {
        let profiles: Vec<_> = common::codes(docs.len())
            .into_iter()
            .zip(&docs)
            .map(|(c, d)| build_frequency_profile::<f64>(c, FrequencyKind::ObjectLabels, d).unwrap())
            .collect();
        let a = score_frequency(&observed, &profiles).unwrap();
        let b = score_frequency(&observed.scaled(k), &profiles).unwrap();
        assert_close(&a, &b)?;
    }

    #[test]
    fn own_document_ranks_first_on_disjoint_vocabularies(n in 2usize..8, sizes in prop::collection::vec(1u64..5, 8), pick in 0usize..8) {
        let docs: Vec<TermCounts> = (0..n)
            .map(|i| {
                let mut tc = TermCounts::new();
                tc.add(&format!("term{i}a"), sizes[i]);
                tc.add(&format!("term{i}b"), sizes[(i + 1) % 8]);
                tc
            })
            .collect();
        let codes = common::codes(n);
        let profiles: Vec<_> = codes
            .iter()
            .zip(&docs)
            .map(|(c, d)| build_frequency_profile::<f64>(*c, FrequencyKind::CaptionWords, std::slice::from_ref(d)).unwrap())
            .collect();
        let i = pick % n;
        let ev = score_frequency(&docs[i], &profiles).unwrap();
        prop_assert_eq!(ev.argmax_set().into_iter().collect::<Vec<_>>(), vec![codes[i]]);
    }

    #[test]
    fn frequency_profile_ignores_document_order(docs in prop::collection::vec(term_counts(6), 1..6), rot in 0usize..6) {
        let code = common::codes(1)[0];
        let mut rotated = docs.clone();
        rotated.rotate_left(rot % docs.len());
        let a = build_frequency_profile::<f64>(code, FrequencyKind::CaptionWords, &docs).unwrap();
        let b = build_frequency_profile::<f64>(code, FrequencyKind::CaptionWords, &rotated).unwrap();
        prop_assert_eq!(a.doc_count, b.doc_count);
        for (t, v) in &a.avg_freq {
            prop_assert!((v - b.avg_freq[t]).abs() <= 1e-12);
        }
    }

    #[test]
    fn duplicated_plate_observation_keeps_argmax(reg in registry(15), obs in plate_observation()) {
        let once = score_plates::<f64>(&[obs], &reg);
        let twice = score_plates::<f64>(&[obs, obs], &reg);
        prop_assert_eq!(once.argmax_set(), twice.argmax_set());
        assert_close(&once, &twice)?;
    }

    #[test]
    fn positional_match_is_never_looser(reg in registry(15)) {
        for color in PlateColor::ALL {
            let any = match_set(&reg, color, PlatePosition::Unknown);
            prop_assert!(match_set(&reg, color, PlatePosition::Front).is_subset(&any));
            prop_assert!(match_set(&reg, color, PlatePosition::Rear).is_subset(&any));
        }
    }

    #[test]
    fn plate_colors_depend_only_on_vehicle_boxes(img in invariants::image(24), other in any::<[u8; 3]>(), bx in 0u32..12, by in 0u32..12, bw in 4u32..12, bh in 4u32..12) {
        let bbox = BBox { x: bx.min(img.width - 1), y: by.min(img.height - 1), w: bw, h: bh };
        let inside = |x: u32, y: u32| x >= bbox.x && x < bbox.x + bbox.w && y >= bbox.y && y < bbox.y + bbox.h;
        let repainted = View::from_pixels(
            img.width,
            img.height,
            (0..img.height)
                .flat_map(|y| (0..img.width).map(move |x| (x, y)))
                .map(|(x, y)| if inside(x, y) { img.pixel(x, y) } else { other })
                .collect(),
        ).unwrap();
        let objects = [ObjectObservation { label: "car".into(), confidence: 0.9, bbox }];
        prop_assert_eq!(extract_plate_colors(&img, &objects), extract_plate_colors(&repainted, &objects));
    }

    #[test]
    fn fused_ranking_survives_upscaled_color_query(
        train in prop::collection::vec(palette_image(6), 2..7),
        query in palette_image(6),
        k in 2u32..4,
        other in invariants::evidence("plate", 6),
    ) {
        let codes = common::codes(train.len().max(6));
        let profiles: Vec<_> = codes
            .iter()
            .zip(&train)
            .map(|(c, img)| build_color_profile(*c, &[channel_histogram::<f64>(img).unwrap()]).unwrap())
            .collect();
        let a = score_colors(&channel_histogram::<f64>(&query).unwrap(), &profiles).unwrap();
        let b = score_colors(&channel_histogram::<f64>(&upscale(&query, k)).unwrap(), &profiles).unwrap();
        let ra = fused_ranking(vec![a, other.clone()], &codes);
        let rb = fused_ranking(vec![b, other], &codes);
        prop_assert_eq!(ra.iter().map(|r| &r.0).collect::<Vec<_>>(), rb.iter().map(|r| &r.0).collect::<Vec<_>>());
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!((x.1 - y.1).abs() <= TOL);
        }
    }

    #[test]
    fn fused_ranking_survives_scaled_term_counts(
        docs in prop::collection::vec(prop::collection::vec(term_counts(5), 1..3), 6),
        observed in term_counts(5),
        k in 2u64..10,
        other in invariants::evidence("color", 6),
    ) {
        let codes = common::codes(6);
        let profiles: Vec<_> = codes
            .iter()
            .zip(&docs)
            .map(|(c, d)| build_frequency_profile::<f64>(*c, FrequencyKind::CaptionWords, d).unwrap())
            .collect();
        let a = score_frequency(&observed, &profiles).unwrap();
        let b = score_frequency(&observed.scaled(k), &profiles).unwrap();
        let ra = fused_ranking(vec![a, other.clone()], &codes);
        let rb = fused_ranking(vec![b, other], &codes);
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!((x.1 - y.1).abs() <= TOL);
        }
        // orders may differ only inside exact score ties
        let order = |r: &[(String, f64)]| r.iter().map(|e| e.0.clone()).collect::<Vec<_>>();
        if ra.windows(2).all(|w| (w[0].1 - w[1].1).abs() > TOL) {
            prop_assert_eq!(order(&ra), order(&rb));
        }
    }

    #[test]
    fn fusion_is_byte_deterministic((n, modules, weights) in invariants::fusion_instance()) {
        let universe = common::codes(n);
        let wv = WeightVector::new(weights).unwrap();
        let a = serde_json::to_string(&fuse_over(modules.clone(), &wv, &universe).unwrap()).unwrap();
        let mut shuffled = modules.clone();
        shuffled.reverse();
        let b = serde_json::to_string(&fuse_over(shuffled, &wv, &universe).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn summary_ignores_rank_order(mut ranks in prop::collection::vec(1usize..60, 1..80), seed: u64) {
        let a = whichcountry_core::evalkit::summarize(&ranks).unwrap();
        let k = (seed % ranks.len() as u64) as usize;
        ranks.rotate_left(k);
        ranks.reverse();
        let b = whichcountry_core::evalkit::summarize(&ranks).unwrap();
        prop_assert_eq!(a.n, b.n);
        prop_assert_eq!(a.top1_count, b.top1_count);
        prop_assert_eq!(a.median_rank, b.median_rank);
        prop_assert!((a.mean_rank - b.mean_rank).abs() <= 1e-12);
        prop_assert!((a.std_rank - b.std_rank).abs() <= 1e-9);
        prop_assert!(a.mean_rank >= 1.0 && a.median_rank >= 1.0 && a.top1_count <= a.n);
    }

    #[test]
    fn fixture_answers_depend_only_on_the_view(img in invariants::image(6), label in "[a-z]{1,8}") {
        let mut provider = FixtureProvider::default();
        let objects = serde_json::json!([{ "label": label, "confidence": 0.8, "box": [0, 0, 1, 1] }]);
        provider.insert(img.digest(), FixtureResponse { objects: Some(objects), ..FixtureResponse::default() });
        let copy = View::from_pixels(img.width, img.height, img.pixels.clone()).unwrap();
        let a = provider.request(ProviderOp::Objects, &img).unwrap();
        let b = provider.request(ProviderOp::Objects, &copy).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(provider.request(ProviderOp::Ocr, &img).unwrap(), serde_json::json!([]));
    }
}

#[test]
fn optimizer_never_loses_to_uniform_or_single_modules() {
    use whichcountry_core::fusion::{mean_truth_rank, optimize_weights, DevItem, OptimizerConfig};
    let mut rng = common::rng(99);
    let ids: Vec<String> = ["caption", "color", "plate"].iter().map(|s| s.to_string()).collect();
    for trial in 0..30 {
        let universe = common::codes(6);
        let m = 2 + trial % 2;
        let dev: Vec<DevItem<f64>> = (0..8)
            .map(|i| DevItem {
                modules: ids[..m].iter().map(|id| common::random_evidence(id, &universe, 0.1, &mut rng)).collect(),
                truth: universe[i % universe.len()],
            })
            .collect();
        let best = optimize_weights(&dev, &universe, &OptimizerConfig::default()).unwrap();
        let uniform = mean_truth_rank(&dev, &WeightVector::uniform(&ids[..m]).unwrap(), &universe).unwrap();
        assert!(best.objective <= uniform + 1e-12);
        for id in &ids[..m] {
            let single: BTreeMap<String, f64> =
                ids[..m].iter().map(|o| (o.clone(), if o == id { 1.0 } else { 0.0 })).collect();
            let obj = mean_truth_rank(&dev, &WeightVector::new(single).unwrap(), &universe).unwrap();
            assert!(best.objective <= obj + 1e-12, "trial {trial}: {} > single {id} {obj}", best.objective);
        }
        let check = mean_truth_rank(&dev, &best.weights, &universe).unwrap();
        assert_eq!(check, best.objective);
    }
}

