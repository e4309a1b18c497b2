//! License-plate background colors matched against fact sheets.

use std::collections::{BTreeMap, BTreeSet};

use super::{EvidenceScores, PLATE};
use crate::knowledge::{CountryCode, CountryRegistry, FactSheet, PlateColor};
use crate::providers::{PlateColorObservation, PlatePosition};
use crate::scalar::Scalar;

/// Whether `sheet` lists `color` at `position`; unknown position matches
/// either end of the vehicle.
pub fn sheet_matches(sheet: &FactSheet, color: PlateColor, position: PlatePosition) -> bool {
    match position {
        PlatePosition::Front => sheet.plate_colors.front.contains(&color),
        PlatePosition::Rear => sheet.plate_colors.rear.contains(&color),
        PlatePosition::Unknown => sheet.plate_colors.any().contains(&color),
    }
}

pub fn match_set(registry: &CountryRegistry, color: PlateColor, position: PlatePosition) -> BTreeSet<CountryCode> {
    registry
        .sheets()
        .filter(|s| sheet_matches(s, color, position))
        .map(|s| s.code)
        .collect()
}

pub fn score_plates<T: Scalar>(observations: &[PlateColorObservation], registry: &CountryRegistry) -> EvidenceScores<T> {
    if observations.is_empty() {
        return EvidenceScores::abstain(PLATE, "no license plates seen");
    }
    let mut raw: BTreeMap<CountryCode, T> = registry.codes().into_iter().map(|c| (c, T::zero())).collect();
    let mut notes = Vec::new();
    for obs in observations {
        let matched = match_set(registry, obs.color, obs.position);
        notes.push(format!(
            "{} plate ({:?}, confidence {:.2}) matches {} countries",
            obs.color.name(),
            obs.position,
            obs.confidence,
            matched.len()
        ));
        for code in matched {
            let slot = raw.get_mut(&code).expect("registry code");
            *slot = *slot + T::of(obs.confidence);
        }
    }
    if raw.values().all(|v| *v <= T::zero()) {
        return EvidenceScores::uniform(PLATE, registry.codes(), Some("plate colors match no fact sheet; uniform".into()))
            .unwrap_or_else(|_| EvidenceScores::abstain(PLATE, "empty registry"));
    }
    EvidenceScores::from_weights(PLATE, raw, notes).expect("positive plate weights")
}
