//! Contexts-of-Interest: significant places aggregated from stay points.
//!
//! A GPS CoI is the smallest rectangle over the centroids of a group of
//! stay points, grown greedily in chronological order while the rectangle
//! fits inside `gps_max` x `gps_max` meters. A WiFi CoI is a characteristic
//! AP set shared, exactly, by enough stay points. Both kinds must clear a
//! visit-frequency and a total-duration threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo;
use crate::serde_util::ms_as_secs;
use crate::staypoints::{GpsStayPoint, WifiStayPoint};
use crate::trace::ApId;

/// How a visit count is compared against `f_min_coi`. GPS CoIs default to
/// the strict reading, WiFi CoIs to the inclusive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqComparator {
    MoreThan,
    AtLeast,
}

impl FreqComparator {
    pub fn passes(self, count: usize, f_min: usize) -> bool {
        match self {
            FreqComparator::MoreThan => count > f_min,
            FreqComparator::AtLeast => count >= f_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoiParams {
    /// Maximum width and length in meters of a GPS CoI rectangle.
    pub gps_max: f64,
    /// Visit-frequency threshold.
    pub f_min_coi: usize,
    /// Minimum total dwell time across member stay points.
    #[serde(with = "ms_as_secs")]
    pub t_min_coi: i64,
    pub gps_freq: FreqComparator,
    pub wifi_freq: FreqComparator,
}

impl Default for CoiParams {
    fn default() -> Self {
        CoiParams {
            gps_max: 100.0,
            f_min_coi: 5,
            t_min_coi: 1_800_000,
            gps_freq: FreqComparator::MoreThan,
            wifi_freq: FreqComparator::AtLeast,
        }
    }
}

/// Rectangle in degrees: (lat_min, lon_min, lat_max, lon_max).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lat_min: f64,
    pub lon_min: f64,
    pub lat_max: f64,
    pub lon_max: f64,
}

impl Bounds {
    fn around(point: (f64, f64)) -> Self {
        Bounds {
            lat_min: point.0,
            lon_min: point.1,
            lat_max: point.0,
            lon_max: point.1,
        }
    }

    fn expanded_to(mut self, point: (f64, f64)) -> Self {
        self.lat_min = self.lat_min.min(point.0);
        self.lat_max = self.lat_max.max(point.0);
        self.lon_min = self.lon_min.min(point.1);
        self.lon_max = self.lon_max.max(point.1);
        self
    }

    pub fn mid_lat(&self) -> f64 {
        (self.lat_min + self.lat_max) / 2.0
    }

    /// East-west extent in meters at the rectangle's mean latitude.
    pub fn width_m(&self) -> f64 {
        geo::lon_span_m(self.lon_min, self.lon_max, self.mid_lat())
    }

    /// North-south extent in meters.
    pub fn height_m(&self) -> f64 {
        geo::lat_span_m(self.lat_min, self.lat_max)
    }

    fn fits(&self, side_m: f64) -> bool {
        self.width_m() <= side_m && self.height_m() <= side_m
    }

    /// Strict interior test: boundary points do not count as inside.
    pub fn contains_strict(&self, lat: f64, lon: f64) -> bool {
        self.lat_min < lat && lat < self.lat_max && self.lon_min < lon && lon < self.lon_max
    }

    pub fn contains_inclusive(&self, lat: f64, lon: f64) -> bool {
        self.lat_min <= lat && lat <= self.lat_max && self.lon_min <= lon && lon <= self.lon_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpsCoi {
    pub id: String,
    pub bounds: Bounds,
    /// Indices into the stay-point slice the CoI was detected from.
    pub member_staypoints: Vec<usize>,
    pub visit_count: usize,
    pub total_duration_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WifiCoi {
    pub id: String,
    pub aps: std::collections::BTreeSet<ApId>,
    pub member_staypoints: Vec<usize>,
    pub visit_count: usize,
    pub total_duration_ms: i64,
}

fn short_hash(payload: &str) -> String {
    let digest = Sha256::digest(payload.as_bytes());
    hex::encode(&digest[..8])
}

fn gps_coi_id(bounds: &Bounds) -> String {
    // Round to 1e-6 degree so the id survives serialization round trips.
    let payload = format!(
        "{:.6},{:.6},{:.6},{:.6}",
        bounds.lat_min, bounds.lon_min, bounds.lat_max, bounds.lon_max
    );
    format!("gps-{}", short_hash(&payload))
}

fn wifi_coi_id(aps: &std::collections::BTreeSet<ApId>) -> String {
    let payload = aps
        .iter()
        .map(|ap| ap.as_str())
        .collect::<Vec<_>>()
        .join(",");
    format!("wifi-{}", short_hash(&payload))
}

/// Chronological first-fit box growing over stay-point centroids.
///
/// Each unassigned centroid seeds a candidate rectangle; later unassigned
/// centroids join if the enlarged bounding box still fits within
/// `gps_max` x `gps_max` meters. Candidates clearing the frequency and
/// total-duration thresholds become CoIs. A stay point joins at most one
/// candidate, so CoIs from a single run never share members.
pub fn detect_gps_cois(sps: &[GpsStayPoint], p: &CoiParams) -> Vec<GpsCoi> {
    let mut assigned = vec![false; sps.len()];
    let mut cois = Vec::new();
    for seed in 0..sps.len() {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut bounds = Bounds::around(sps[seed].centroid);
        let mut members = vec![seed];
        for later in seed + 1..sps.len() {
            if assigned[later] {
                continue;
            }
            let enlarged = bounds.expanded_to(sps[later].centroid);
            if enlarged.fits(p.gps_max) {
                bounds = enlarged;
                members.push(later);
                assigned[later] = true;
            }
        }
        let total_duration_ms: i64 = members.iter().map(|&i| sps[i].duration_ms()).sum();
        if p.gps_freq.passes(members.len(), p.f_min_coi) && total_duration_ms >= p.t_min_coi {
            cois.push(GpsCoi {
                id: gps_coi_id(&bounds),
                bounds,
                visit_count: members.len(),
                total_duration_ms,
                member_staypoints: members,
            });
        }
    }
    cois
}

/// Groups WiFi stay points by exact characteristic-set equality; each group
/// clearing the thresholds becomes one CoI. Output is ordered by AP set, so
/// it does not depend on stay-point order.
pub fn detect_wifi_cois(wsps: &[WifiStayPoint], p: &CoiParams) -> Vec<WifiCoi> {
    let mut groups: BTreeMap<&std::collections::BTreeSet<ApId>, Vec<usize>> = BTreeMap::new();
    for (i, sp) in wsps.iter().enumerate() {
        groups.entry(&sp.char_set).or_default().push(i);
    }
    let mut cois = Vec::new();
    for (aps, members) in groups {
        if aps.is_empty() {
            continue;
        }
        let total_duration_ms: i64 = members.iter().map(|&i| wsps[i].duration_ms()).sum();
        if p.wifi_freq.passes(members.len(), p.f_min_coi) && total_duration_ms >= p.t_min_coi {
            cois.push(WifiCoi {
                id: wifi_coi_id(aps),
                aps: aps.clone(),
                visit_count: members.len(),
                total_duration_ms,
                member_staypoints: members,
            });
        }
    }
    cois
}
