//! Visits, encounters, per-timestamp contexts, and the aggregated CoI and
//! device profiles.
//!
//! Gap comparators are deliberately asymmetric: consecutive visit members may
//! be at most `eps_visit` apart (inclusive) while encounter sightings must be
//! strictly less than `eps_enc` apart.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coi::{GpsCoi, WifiCoi};
use crate::serde_util::ms_as_secs;
use crate::staypoints::{group_wifi_snapshots, jaccard_distance, StayPointParams, WifiSnapshot};
use crate::trace::{DeviceClass, DeviceId, ObservationSequence, Timestamp};

/// Snapshots belong to a WiFi CoI visit while their Jaccard distance to the
/// CoI's AP set stays at or below this.
pub const VISIT_JACCARD_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextParams {
    /// Maximum gap between consecutive observations of one visit (inclusive).
    #[serde(with = "ms_as_secs")]
    pub eps_visit: i64,
    /// Gap bound between consecutive sightings of one encounter (exclusive).
    #[serde(with = "ms_as_secs")]
    pub eps_enc: i64,
    /// Encounter-count threshold for device familiarity.
    pub f_min_famdev: usize,
    /// Total-encounter-duration threshold for device familiarity.
    #[serde(with = "ms_as_secs")]
    pub t_min_famdev: i64,
}

impl Default for ContextParams {
    fn default() -> Self {
        ContextParams {
            eps_visit: 300_000,
            eps_enc: 300_000,
            f_min_famdev: 5,
            t_min_famdev: 1_800_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoiKind {
    Gps,
    Wifi,
}

/// One gap-bounded stay inside a CoI. A single observation is a valid visit
/// of duration zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Visit {
    pub coi_id: String,
    pub coi_kind: CoiKind,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

impl Visit {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }

    pub fn spans(&self, t: Timestamp) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

/// A gap-bounded run of Bluetooth sightings of one mobile device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Encounter {
    pub dev: DeviceId,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

impl Encounter {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }

    pub fn spans(&self, t: Timestamp) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

/// Chains in-CoI observation timestamps into visits: gaps over `max_gap`
/// (inclusive bound) split, everything else extends.
fn chain_visits(
    coi_id: &str,
    coi_kind: CoiKind,
    timestamps: impl Iterator<Item = Timestamp>,
    max_gap: i64,
) -> Vec<Visit> {
    let mut out: Vec<Visit> = Vec::new();
    for t in timestamps {
        match out.last_mut() {
            Some(v) if t - v.t_end <= max_gap => v.t_end = t,
            _ => out.push(Visit {
                coi_id: coi_id.to_string(),
                coi_kind,
                t_start: t,
                t_end: t,
            }),
        }
    }
    out
}

/// Detects visits to every CoI: GPS observations strictly inside a GPS CoI's
/// rectangle, snapshots within Jaccard distance 0.5 of a WiFi CoI's AP set.
/// `sp` supplies the scan-window length used to group snapshots.
pub fn detect_visits(
    seq: &ObservationSequence,
    gps_cois: &[GpsCoi],
    wifi_cois: &[WifiCoi],
    p: &ContextParams,
    sp: &StayPointParams,
) -> Vec<Visit> {
    let gps = seq.gps();
    let snapshots = group_wifi_snapshots(&seq.wifi(), sp);
    let mut visits = Vec::new();
    for coi in gps_cois {
        let inside = gps
            .iter()
            .filter(|o| coi.bounds.contains_strict(o.lat, o.lon))
            .map(|o| o.t);
        visits.extend(chain_visits(&coi.id, CoiKind::Gps, inside, p.eps_visit));
    }
    for coi in wifi_cois {
        let matching = snapshots
            .iter()
            .filter(|s| {
                jaccard_distance(&coi.aps, &s.aps).expect("CoI AP sets are non-empty")
                    <= VISIT_JACCARD_MAX
            })
            .map(|s| s.t);
        visits.extend(chain_visits(&coi.id, CoiKind::Wifi, matching, p.eps_visit));
    }
    visits.sort_by(|a, b| (a.t_start, &a.coi_id).cmp(&(b.t_start, &b.coi_id)));
    visits
}

/// Visits to a WiFi CoI computed from pre-grouped snapshots; used where the
/// snapshots are already at hand.
pub fn wifi_visits_from_snapshots(
    coi: &WifiCoi,
    snapshots: &[WifiSnapshot],
    p: &ContextParams,
) -> Vec<Visit> {
    let matching = snapshots
        .iter()
        .filter(|s| {
            jaccard_distance(&coi.aps, &s.aps).expect("CoI AP sets are non-empty")
                <= VISIT_JACCARD_MAX
        })
        .map(|s| s.t);
    chain_visits(&coi.id, CoiKind::Wifi, matching, p.eps_visit)
}

/// Chains Bluetooth sightings per device into encounters. Only mobile-class
/// devices count; gaps of `eps_enc` or more split.
pub fn detect_encounters(seq: &ObservationSequence, p: &ContextParams) -> Vec<Encounter> {
    let mut per_device: BTreeMap<DeviceId, Vec<Timestamp>> = BTreeMap::new();
    for obs in seq.bt() {
        if obs.dev_class == DeviceClass::Mobile {
            per_device.entry(obs.dev).or_default().push(obs.t);
        }
    }
    let mut encounters = Vec::new();
    for (dev, timestamps) in per_device {
        let mut current: Option<Encounter> = None;
        for t in timestamps {
            match current.as_mut() {
                Some(e) if t - e.t_end < p.eps_enc => e.t_end = t,
                _ => {
                    if let Some(done) = current.take() {
                        encounters.push(done);
                    }
                    current = Some(Encounter {
                        dev: dev.clone(),
                        t_start: t,
                        t_end: t,
                    });
                }
            }
        }
        encounters.extend(current);
    }
    encounters.sort_by(|a, b| (a.t_start, &a.dev).cmp(&(b.t_start, &b.dev)));
    encounters
}

/// CoIs whose visits span `t`; empty when the user is nowhere of interest.
pub fn location_context_at(t: Timestamp, visits: &[Visit]) -> BTreeSet<String> {
    visits
        .iter()
        .filter(|v| v.spans(t))
        .map(|v| v.coi_id.clone())
        .collect()
}

/// Devices whose encounters span `t`.
pub fn device_context_at(t: Timestamp, encounters: &[Encounter]) -> BTreeSet<DeviceId> {
    encounters
        .iter()
        .filter(|e| e.spans(t))
        .map(|e| e.dev.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoiStats {
    pub kind: CoiKind,
    pub visits: usize,
    pub duration_ms: i64,
}

/// Total visit count and duration per CoI.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoiProfile {
    pub per_coi: BTreeMap<String, CoiStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DeviceStats {
    pub encounters: usize,
    pub duration_ms: i64,
}

/// Encounter count/duration per device plus the derived familiar set.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeviceProfile {
    pub per_device: BTreeMap<DeviceId, DeviceStats>,
    pub familiar: BTreeSet<DeviceId>,
}

impl DeviceProfile {
    pub fn is_familiar(&self, dev: &DeviceId) -> bool {
        self.familiar.contains(dev)
    }
}

/// Aggregates completed visits and encounters into the two context profiles.
/// A device is familiar once it has at least `f_min_famdev` encounters whose
/// durations total at least `t_min_famdev`.
pub fn build_profiles(
    visits: &[Visit],
    encounters: &[Encounter],
    p: &ContextParams,
) -> (CoiProfile, DeviceProfile) {
    let mut coi_profile = CoiProfile::default();
    for v in visits {
        let entry = coi_profile
            .per_coi
            .entry(v.coi_id.clone())
            .or_insert(CoiStats {
                kind: v.coi_kind,
                visits: 0,
                duration_ms: 0,
            });
        entry.visits += 1;
        entry.duration_ms += v.duration_ms();
    }
    let mut device_profile = DeviceProfile::default();
    for e in encounters {
        let entry = device_profile.per_device.entry(e.dev.clone()).or_default();
        entry.encounters += 1;
        entry.duration_ms += e.duration_ms();
    }
    device_profile.familiar = device_profile
        .per_device
        .iter()
        .filter(|(_, s)| s.encounters >= p.f_min_famdev && s.duration_ms >= p.t_min_famdev)
        .map(|(d, _)| d.clone())
        .collect();
    (coi_profile, device_profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coi::Bounds;
    use crate::trace::{ApId, BtObservation, GpsObservation, Record};

    fn ts(s: i64) -> Timestamp {
        Timestamp::from_millis(s * 1000)
    }

    fn gps_coi(id: &str) -> GpsCoi {
        GpsCoi {
            id: id.to_string(),
            bounds: Bounds {
                lat_min: 60.0,
                lon_min: 24.0,
                lat_max: 60.001,
                lon_max: 24.001,
            },
            member_staypoints: vec![],
            visit_count: 0,
            total_duration_ms: 0,
        }
    }

    fn seq_of_gps(times: &[i64], lat: f64, lon: f64) -> ObservationSequence {
        ObservationSequence::from_records(
            "u",
            times
                .iter()
                .map(|&s| Record::Gps(GpsObservation { t: ts(s), lat, lon }))
                .collect(),
        )
    }

    #[test]
    fn in_bounds_fixes_chain_into_one_visit() {
        let seq = seq_of_gps(&[0, 60, 120, 180, 240], 60.0005, 24.0005);
        let visits = detect_visits(
            &seq,
            &[gps_coi("c1")],
            &[],
            &ContextParams::default(),
            &StayPointParams::default(),
        );
        assert_eq!(visits.len(), 1);
        assert_eq!(visits[0].duration_ms(), 240_000);
    }

    #[test]
    fn gap_over_eps_visit_splits_visits() {
        let seq = seq_of_gps(&[0, 60, 460, 520], 60.0005, 24.0005);
        let visits = detect_visits(
            &seq,
            &[gps_coi("c1")],
            &[],
            &ContextParams::default(),
            &StayPointParams::default(),
        );
        assert_eq!(visits.len(), 2);
    }

    #[test]
    fn boundary_fixes_are_outside() {
        // Def-style strict comparison: a fix on the rectangle edge is out.
        let seq = seq_of_gps(&[0, 600, 1200], 60.0, 24.0005);
        let visits = detect_visits(
            &seq,
            &[gps_coi("c1")],
            &[],
            &ContextParams::default(),
            &StayPointParams::default(),
        );
        assert!(visits.is_empty());
    }

    #[test]
    fn near_miss_snapshot_joins_wifi_visit() {
        // snapshot {a,b,c} vs CoI {a,b,c,d}: J = 1/4
        let coi = WifiCoi {
            id: "w1".to_string(),
            aps: ["a", "b", "c", "d"].iter().map(|s| ApId::new(s)).collect(),
            member_staypoints: vec![],
            visit_count: 0,
            total_duration_ms: 0,
        };
        let snapshots = vec![WifiSnapshot {
            t: ts(100),
            aps: ["a", "b", "c"].iter().map(|s| ApId::new(s)).collect(),
        }];
        let visits = wifi_visits_from_snapshots(&coi, &snapshots, &ContextParams::default());
        assert_eq!(visits.len(), 1);
        assert_eq!(visits[0].duration_ms(), 0);
    }

    fn bt_seq(sightings: &[(i64, &str, DeviceClass)]) -> ObservationSequence {
        ObservationSequence::from_records(
            "u",
            sightings
                .iter()
                .map(|&(s, dev, dev_class)| {
                    Record::Bt(BtObservation {
                        t: ts(s),
                        dev: DeviceId::new(dev),
                        dev_class,
                    })
                })
                .collect(),
        )
    }

    #[test]
    fn sightings_chain_into_one_encounter() {
        let seq = bt_seq(&[
            (0, "d1", DeviceClass::Mobile),
            (60, "d1", DeviceClass::Mobile),
            (120, "d1", DeviceClass::Mobile),
        ]);
        let encs = detect_encounters(&seq, &ContextParams::default());
        assert_eq!(encs.len(), 1);
        assert_eq!(encs[0].duration_ms(), 120_000);
    }

    #[test]
    fn gap_equal_to_eps_enc_splits_encounters() {
        // strict "less than": a 300 s gap at eps_enc = 300 s splits
        let seq = bt_seq(&[(0, "d1", DeviceClass::Mobile), (300, "d1", DeviceClass::Mobile)]);
        let encs = detect_encounters(&seq, &ContextParams::default());
        assert_eq!(encs.len(), 2);
    }

    #[test]
    fn non_mobile_devices_are_filtered() {
        let seq = bt_seq(&[
            (0, "laptop", DeviceClass::Other),
            (60, "laptop", DeviceClass::Other),
        ]);
        assert!(detect_encounters(&seq, &ContextParams::default()).is_empty());
    }

    #[test]
    fn location_context_collects_spanning_visits() {
        let visits = vec![
            Visit {
                coi_id: "g1".into(),
                coi_kind: CoiKind::Gps,
                t_start: ts(0),
                t_end: ts(600),
            },
            Visit {
                coi_id: "w1".into(),
                coi_kind: CoiKind::Wifi,
                t_start: ts(100),
                t_end: ts(700),
            },
        ];
        assert_eq!(location_context_at(ts(50), &visits).len(), 1);
        let both = location_context_at(ts(300), &visits);
        assert!(both.contains("g1") && both.contains("w1"));
        assert!(location_context_at(ts(900), &visits).is_empty());
    }

    #[test]
    fn device_context_respects_encounter_gaps() {
        let encs = vec![
            Encounter {
                dev: DeviceId::new("d1"),
                t_start: ts(0),
                t_end: ts(100),
            },
            Encounter {
                dev: DeviceId::new("d1"),
                t_start: ts(500),
                t_end: ts(600),
            },
            Encounter {
                dev: DeviceId::new("d2"),
                t_start: ts(0),
                t_end: ts(700),
            },
        ];
        let ctx = device_context_at(ts(50), &encs);
        assert_eq!(ctx.len(), 2);
        let mid_gap = device_context_at(ts(300), &encs);
        assert_eq!(mid_gap.len(), 1);
        assert!(mid_gap.contains(&DeviceId::new("d2")));
        assert!(device_context_at(ts(50), &[]).is_empty());
    }

    fn enc(dev: &str, t_start_s: i64, dur_s: i64) -> Encounter {
        Encounter {
            dev: DeviceId::new(dev),
            t_start: ts(t_start_s),
            t_end: ts(t_start_s + dur_s),
        }
    }

    #[test]
    fn six_ten_minute_encounters_make_familiar() {
        let encs: Vec<Encounter> = (0..6).map(|k| enc("d", k * 2000, 600)).collect();
        let (_, devices) = build_profiles(&[], &encs, &ContextParams::default());
        assert!(devices.is_familiar(&DeviceId::new("d")));
        let stats = devices.per_device[&DeviceId::new("d")];
        assert_eq!(stats.encounters, 6);
        assert_eq!(stats.duration_ms, 3_600_000);
    }

    #[test]
    fn many_short_encounters_stay_unfamiliar() {
        let encs: Vec<Encounter> = (0..10).map(|k| enc("d", k * 2000, 60)).collect();
        let (_, devices) = build_profiles(&[], &encs, &ContextParams::default());
        assert!(!devices.is_familiar(&DeviceId::new("d")));
    }

    #[test]
    fn adding_encounters_never_removes_familiarity() {
        let p = ContextParams::default();
        let mut encs: Vec<Encounter> = (0..6).map(|k| enc("d", k * 2000, 600)).collect();
        let (_, base) = build_profiles(&[], &encs, &p);
        assert!(base.familiar.contains(&DeviceId::new("d")));
        for k in 0..20 {
            encs.push(enc("d", 20_000 + k * 500, 1));
            encs.push(enc("e", 40_000 + k * 500, 1));
            let (_, grown) = build_profiles(&[], &encs, &p);
            assert!(base.familiar.is_subset(&grown.familiar));
            assert!(grown.familiar.is_subset(
                &grown.per_device.keys().cloned().collect::<BTreeSet<_>>()
            ));
        }
    }

    #[test]
    fn empty_inputs_give_empty_profiles() {
        let (cois, devices) = build_profiles(&[], &[], &ContextParams::default());
        assert!(cois.per_coi.is_empty());
        assert!(devices.per_device.is_empty());
        assert!(devices.familiar.is_empty());
    }

    #[test]
    fn profile_durations_sum_exactly() {
        let visits = vec![
            Visit {
                coi_id: "g1".into(),
                coi_kind: CoiKind::Gps,
                t_start: ts(0),
                t_end: Timestamp::from_millis(100_100),
            },
            Visit {
                coi_id: "g1".into(),
                coi_kind: CoiKind::Gps,
                t_start: Timestamp::from_millis(200_050),
                t_end: Timestamp::from_millis(300_250),
            },
        ];
        let (cois, _) = build_profiles(&visits, &[], &ContextParams::default());
        let stats = cois.per_coi["g1"];
        assert_eq!(stats.visits, 2);
        assert_eq!(stats.duration_ms, 100_100 + 100_200);
    }
}
