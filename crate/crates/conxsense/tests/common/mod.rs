//! Shared test oracles and random-input generators.
//!
//! The oracles deliberately avoid the library's incremental extraction path:
//! candidate segments are re-validated from scratch against the full-slice
//! predicates, distances and set measures are recomputed from their
//! definitions.

// each test target compiles this module and uses a different subset
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use conxsense::staypoints::{StayPointParams, WifiSnapshot};
use conxsense::trace::{ApId, GpsObservation, Timestamp, WifiObservation};

/// Independent equirectangular distance, restated from the definition.
pub fn oracle_distance_m(a: &GpsObservation, b: &GpsObservation) -> f64 {
    const R: f64 = 6_371_000.0;
    let mean_lat = ((a.lat + b.lat) / 2.0).to_radians();
    let dx = (b.lon - a.lon).to_radians() * mean_lat.cos() * R;
    let dy = (b.lat - a.lat).to_radians() * R;
    (dx * dx + dy * dy).sqrt()
}

/// Independent Jaccard distance via explicit union/intersection sets.
pub fn oracle_jaccard(a: &BTreeSet<ApId>, b: &BTreeSet<ApId>) -> f64 {
    let sa: HashSet<&ApId> = a.iter().collect();
    let sb: HashSet<&ApId> = b.iter().collect();
    let union: HashSet<&&ApId> = sa.union(&sb).collect();
    let intersection: HashSet<&&ApId> = sa.intersection(&sb).collect();
    (union.len() - intersection.len()) as f64 / union.len() as f64
}

fn gps_prefix_ok(slice: &[GpsObservation], p: &StayPointParams) -> bool {
    let first = &slice[0];
    slice.iter().all(|o| oracle_distance_m(first, o) <= p.r_sp)
        && slice.windows(2).all(|w| w[1].t - w[0].t <= p.t_gap_sp)
}

/// Brute-force GPS stay-point oracle: maximal prefixes satisfying the
/// radius/gap predicates (checked over the whole slice each step), emitted
/// when the duration predicate holds, anchor advanced by one otherwise.
/// Returns inclusive member index ranges.
pub fn oracle_gps_staypoints(obs: &[GpsObservation], p: &StayPointParams) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < obs.len() {
        let mut j = i;
        while j + 1 < obs.len() && gps_prefix_ok(&obs[i..=j + 1], p) {
            j += 1;
        }
        if obs[j].t - obs[i].t >= p.t_min_sp {
            out.push((i, j));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn wifi_prefix_ok(slice: &[WifiSnapshot], p: &StayPointParams) -> bool {
    let first = &slice[0];
    slice
        .iter()
        .all(|s| oracle_jaccard(&first.aps, &s.aps) <= p.jaccard_max)
        && slice.windows(2).all(|w| w[1].t - w[0].t <= p.t_gap_sp)
}

/// Brute-force WiFi stay-point oracle over snapshots; mirrors the GPS one.
pub fn oracle_wifi_staypoints(snaps: &[WifiSnapshot], p: &StayPointParams) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < snaps.len() {
        let mut j = i;
        while j + 1 < snaps.len() && wifi_prefix_ok(&snaps[i..=j + 1], p) {
            j += 1;
        }
        if snaps[j].t - snaps[i].t >= p.t_min_sp {
            out.push((i, j));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Characteristic set recount: APs appearing in at least half the snapshots.
pub fn oracle_char_set(snaps: &[WifiSnapshot]) -> BTreeSet<ApId> {
    let mut out = BTreeSet::new();
    let universe: BTreeSet<&ApId> = snaps.iter().flat_map(|s| s.aps.iter()).collect();
    for ap in universe {
        let count = snaps.iter().filter(|s| s.aps.contains(ap)).count();
        if count * 2 >= snaps.len() {
            out.insert(ap.clone());
        }
    }
    out
}

/// Random parameters spanning the interesting regime around the defaults.
pub fn random_params(rng: &mut ChaCha8Rng) -> StayPointParams {
    StayPointParams {
        r_sp: rng.random_range(30.0..150.0),
        t_min_sp: rng.random_range(120..900) * 1000,
        t_gap_sp: rng.random_range(60..600) * 1000,
        t_max_wifi: 10_000,
        jaccard_max: [0.3, 0.5, 0.7][rng.random_range(0..3)],
    }
}

/// Random dwell/move GPS trace: alternating stationary clusters and fast
/// legs, gap spikes included, occasional repeated timestamps.
pub fn random_gps_trace(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<GpsObservation> {
    let len = rng.random_range(0..=max_len);
    let mut out = Vec::with_capacity(len);
    let mut t_ms: i64 = rng.random_range(0..100_000);
    let mut lat = 60.0 + rng.random_range(-0.5..0.5);
    let mut lon = 24.0 + rng.random_range(-0.5..0.5);
    let mut dwelling = rng.random_bool(0.5);
    for _ in 0..len {
        if rng.random_bool(0.12) {
            dwelling = !dwelling;
        }
        let step_m = if dwelling {
            rng.random_range(0.0..25.0)
        } else {
            rng.random_range(40.0..400.0)
        };
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        lat += (step_m * heading.sin() / 6_371_000.0).to_degrees();
        lon += (step_m * heading.cos() / (6_371_000.0 * lat.to_radians().cos())).to_degrees();
        let dt_s: i64 = match rng.random_range(0..10) {
            0 => 0,
            1..=2 => rng.random_range(200..700),
            _ => rng.random_range(20..90),
        };
        t_ms += dt_s * 1000;
        out.push(GpsObservation {
            t: Timestamp::from_millis(t_ms),
            lat,
            lon,
        });
    }
    out
}

/// Random snapshot sequence over a small AP universe: stable stretches with
/// churn, plus fully random scans.
pub fn random_snapshots(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<WifiSnapshot> {
    let len = rng.random_range(0..=max_len);
    let universe: Vec<ApId> = (0..8).map(|i| ApId::new(&format!("ap-{i}"))).collect();
    let mut out = Vec::with_capacity(len);
    let mut t_ms: i64 = rng.random_range(0..100_000);
    let mut base: BTreeSet<ApId> = universe
        .iter()
        .filter(|_| rng.random_bool(0.5))
        .cloned()
        .collect();
    for _ in 0..len {
        if rng.random_bool(0.15) || base.is_empty() {
            base = universe
                .iter()
                .filter(|_| rng.random_bool(0.5))
                .cloned()
                .collect();
        }
        let mut aps: BTreeSet<ApId> = base
            .iter()
            .filter(|_| !rng.random_bool(0.15))
            .cloned()
            .collect();
        if rng.random_bool(0.3) {
            aps.insert(universe[rng.random_range(0..universe.len())].clone());
        }
        if aps.is_empty() {
            aps.insert(universe[0].clone());
        }
        let dt_s: i64 = match rng.random_range(0..10) {
            0..=1 => rng.random_range(200..700),
            _ => rng.random_range(20..90),
        };
        t_ms += dt_s * 1000;
        out.push(WifiSnapshot {
            t: Timestamp::from_millis(t_ms),
            aps,
        });
    }
    out
}

/// Converts raw per-AP observations out of snapshots, for tests that need
/// the lower-level form.
pub fn snapshots_to_observations(snaps: &[WifiSnapshot]) -> Vec<WifiObservation> {
    snaps
        .iter()
        .flat_map(|s| {
            s.aps.iter().map(|ap| WifiObservation {
                t: s.t,
                ap: ap.clone(),
            })
        })
        .collect()
}
