//! Stay-point extraction: dwell episodes from GPS fixes and from WiFi scan
//! snapshots.
//!
//! Both extractors run the same greedy left-to-right scan: anchor at the
//! first unconsumed observation, extend while the radius/similarity and gap
//! predicates hold, emit when the dwell lasts at least `t_min_sp`, otherwise
//! advance the anchor by a single observation and retry. Advancing by one
//! (rather than jumping to the breaking observation) keeps dwells that begin
//! in the middle of a discarded fragment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo;
use crate::serde_util::ms_as_secs;
use crate::trace::{ApId, GpsObservation, Timestamp, WifiObservation};

/// Segmentation parameters. Durations serialize as seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StayPointParams {
    /// Radius in meters a dwell may span around its first observation.
    pub r_sp: f64,
    /// Minimum dwell duration.
    #[serde(with = "ms_as_secs")]
    pub t_min_sp: i64,
    /// Maximum tolerated observation gap inside a dwell.
    #[serde(with = "ms_as_secs")]
    pub t_gap_sp: i64,
    /// Duration of a single WiFi scan; observations this close to the scan
    /// start belong to one snapshot.
    #[serde(with = "ms_as_secs")]
    pub t_max_wifi: i64,
    /// Snapshots stay in a WiFi stay point while their Jaccard distance to
    /// the first snapshot stays at or below this.
    pub jaccard_max: f64,
}

impl Default for StayPointParams {
    fn default() -> Self {
        StayPointParams {
            r_sp: 100.0,
            t_min_sp: 600_000,
            t_gap_sp: 300_000,
            t_max_wifi: 10_000,
            jaccard_max: 0.5,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StayPointError {
    #[error("jaccard distance is undefined for two empty sets")]
    BothEmpty,
    #[error("cannot take the centroid of zero observations")]
    EmptyMembers,
}

/// Jaccard distance (|A∪B| − |A∩B|) / |A∪B|; 0 iff equal, 1 iff disjoint.
pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, StayPointError> {
    if a.is_empty() && b.is_empty() {
        return Err(StayPointError::BothEmpty);
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    Ok((union - intersection) as f64 / union as f64)
}

/// A contiguous GPS dwell episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpsStayPoint {
    pub members: Vec<GpsObservation>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    /// Arithmetic mean of member latitudes/longitudes.
    pub centroid: (f64, f64),
}

impl GpsStayPoint {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }
}

/// Component-wise arithmetic mean of observation positions.
pub fn staypoint_centroid(members: &[GpsObservation]) -> Result<(f64, f64), StayPointError> {
    if members.is_empty() {
        return Err(StayPointError::EmptyMembers);
    }
    let n = members.len() as f64;
    let lat = members.iter().map(|o| o.lat).sum::<f64>() / n;
    let lon = members.iter().map(|o| o.lon).sum::<f64>() / n;
    Ok((lat, lon))
}

/// Greedy segmentation of time-ordered GPS fixes into stay points.
///
/// An observation joins the current candidate while it lies within `r_sp`
/// meters of the candidate's first observation and within `t_gap_sp` of the
/// previous member.
pub fn extract_gps_staypoints(gps: &[GpsObservation], p: &StayPointParams) -> Vec<GpsStayPoint> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < gps.len() {
        let anchor = gps[i];
        let mut end = i;
        while end + 1 < gps.len() {
            let next = gps[end + 1];
            let within_radius =
                geo::distance_m(anchor.lat, anchor.lon, next.lat, next.lon) <= p.r_sp;
            let within_gap = next.t - gps[end].t <= p.t_gap_sp;
            if within_radius && within_gap {
                end += 1;
            } else {
                break;
            }
        }
        let duration = gps[end].t - gps[i].t;
        if duration >= p.t_min_sp {
            let members = gps[i..=end].to_vec();
            let centroid = staypoint_centroid(&members).expect("members non-empty");
            out.push(GpsStayPoint {
                t_start: members[0].t,
                t_end: members[members.len() - 1].t,
                centroid,
                members,
            });
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// The set of access points seen in one scan window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WifiSnapshot {
    pub t: Timestamp,
    pub aps: BTreeSet<ApId>,
}

/// Groups time-ordered WiFi observations into snapshots: observations within
/// `t_max_wifi` of the group's first observation share a scan.
pub fn group_wifi_snapshots(wifi: &[WifiObservation], p: &StayPointParams) -> Vec<WifiSnapshot> {
    let mut out: Vec<WifiSnapshot> = Vec::new();
    for obs in wifi {
        match out.last_mut() {
            Some(snap) if obs.t - snap.t <= p.t_max_wifi => {
                snap.aps.insert(obs.ap.clone());
            }
            _ => {
                out.push(WifiSnapshot {
                    t: obs.t,
                    aps: BTreeSet::from([obs.ap.clone()]),
                });
            }
        }
    }
    out
}

/// A dwell episode in WiFi space: a run of snapshots similar to the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WifiStayPoint {
    pub snapshots: Vec<WifiSnapshot>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    /// Access points present in at least half of the member snapshots.
    pub char_set: BTreeSet<ApId>,
}

impl WifiStayPoint {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }
}

/// Access points occurring in at least half of the snapshots. An AP present
/// in exactly half qualifies.
fn characteristic_set(snapshots: &[WifiSnapshot]) -> BTreeSet<ApId> {
    let mut counts: BTreeMap<&ApId, usize> = BTreeMap::new();
    for snap in snapshots {
        for ap in &snap.aps {
            *counts.entry(ap).or_insert(0) += 1;
        }
    }
    let n = snapshots.len();
    counts
        .into_iter()
        .filter(|&(_, c)| 2 * c >= n)
        .map(|(ap, _)| ap.clone())
        .collect()
}

/// Greedy segmentation of snapshots into WiFi stay points: a snapshot joins
/// while its Jaccard distance to the anchor snapshot stays within
/// `jaccard_max` and the gap to the previous member stays within `t_gap_sp`.
pub fn extract_wifi_staypoints(snaps: &[WifiSnapshot], p: &StayPointParams) -> Vec<WifiStayPoint> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < snaps.len() {
        let anchor = &snaps[i];
        let mut end = i;
        while end + 1 < snaps.len() {
            let next = &snaps[end + 1];
            let similar = jaccard_distance(&anchor.aps, &next.aps)
                .expect("snapshots hold at least one AP")
                <= p.jaccard_max;
            let within_gap = next.t - snaps[end].t <= p.t_gap_sp;
            if similar && within_gap {
                end += 1;
            } else {
                break;
            }
        }
        let duration = snaps[end].t - snaps[i].t;
        if duration >= p.t_min_sp {
            let members = snaps[i..=end].to_vec();
            out.push(WifiStayPoint {
                t_start: members[0].t,
                t_end: members[members.len() - 1].t,
                char_set: characteristic_set(&members),
                snapshots: members,
            });
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}
