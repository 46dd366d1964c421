//! The eight context features and labeled-dataset construction.
//!
//! Feature order is fixed and shared by the CSV format, the classifiers and
//! the model files:
//!
//! | idx | name                | meaning                                              |
//! |-----|---------------------|------------------------------------------------------|
//! | 0   | gps_max_dur         | max total visit time of a GPS CoI in context (s)     |
//! | 1   | gps_max_dur_visits  | visit count of that GPS CoI                          |
//! | 2   | wifi_max_dur        | max total visit time of a WiFi CoI in context (s)    |
//! | 3   | wifi_max_dur_visits | visit count of that WiFi CoI                         |
//! | 4   | bt_num              | devices in the device context                        |
//! | 5   | bt_fam              | familiar devices in the device context               |
//! | 6   | bt_fam_avg_time     | mean total encounter time of those familiar devices  |
//! | 7   | bt_fam_avg_freq     | mean encounter count of those familiar devices       |
//!
//! Argmax ties over equal durations break toward the smallest CoI id. Empty
//! contexts zero the corresponding features.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{
    device_context_at, location_context_at, CoiKind, CoiProfile, DeviceProfile, Encounter, Visit,
};
use crate::trace::{DeviceId, ExposureFeedback, MisuseFeedback, ObservationSequence, Timestamp};

pub const FEATURE_COUNT: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "gps_max_dur",
    "gps_max_dur_visits",
    "wifi_max_dur",
    "wifi_max_dur_visits",
    "bt_num",
    "bt_fam",
    "bt_fam_avg_time",
    "bt_fam_avg_freq",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub t: Timestamp,
    pub f: [f64; FEATURE_COUNT],
}

/// The two classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Misuse,
    Exposure,
}

impl Task {
    /// The class meaning "protections can be relaxed"; the positive class
    /// throughout evaluation.
    pub fn relax_label(self) -> Label {
        match self {
            Task::Misuse => Label::LowRisk,
            Task::Exposure => Label::LowExposure,
        }
    }

    /// The restrictive class; ties and defaults resolve here.
    pub fn restrict_label(self) -> Label {
        match self {
            Task::Misuse => Label::HighRisk,
            Task::Exposure => Label::HighExposure,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Misuse => f.write_str("misuse"),
            Task::Exposure => f.write_str("exposure"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "misuse" => Ok(Task::Misuse),
            "exposure" => Ok(Task::Exposure),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    LowRisk,
    HighRisk,
    LowExposure,
    HighExposure,
}

impl Label {
    pub fn task(self) -> Task {
        match self {
            Label::LowRisk | Label::HighRisk => Task::Misuse,
            Label::LowExposure | Label::HighExposure => Task::Exposure,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::LowRisk => "low_risk",
            Label::HighRisk => "high_risk",
            Label::LowExposure => "low_exposure",
            Label::HighExposure => "high_exposure",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low_risk" => Ok(Label::LowRisk),
            "high_risk" => Ok(Label::HighRisk),
            "low_exposure" => Ok(Label::LowExposure),
            "high_exposure" => Ok(Label::HighExposure),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Feedback-to-class mapping: "safe" relaxes, home and work are private or
/// confidential and therefore high exposure, public is low exposure.
pub fn misuse_label(fb: MisuseFeedback) -> Label {
    match fb {
        MisuseFeedback::Safe => Label::LowRisk,
        MisuseFeedback::Unsafe => Label::HighRisk,
    }
}

pub fn exposure_label(fb: ExposureFeedback) -> Label {
    match fb {
        ExposureFeedback::Home | ExposureFeedback::Work => Label::HighExposure,
        ExposureFeedback::Public => Label::LowExposure,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatureVector {
    pub fv: FeatureVector,
    pub task: Task,
    pub label: Label,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("no feedback records carry a {0} label")]
    NoFeedback(Task),
}

/// Computes the feature vector at `t` from the profiles and the contexts in
/// force at `t`. Pure: identical inputs produce bit-identical outputs.
pub fn compute_features(
    t: Timestamp,
    coi_profile: &CoiProfile,
    device_profile: &DeviceProfile,
    loc_ctx: &BTreeSet<String>,
    dev_ctx: &BTreeSet<DeviceId>,
) -> FeatureVector {
    let (gps_max_dur, gps_max_dur_visits) = max_dur_coi(coi_profile, loc_ctx, CoiKind::Gps);
    let (wifi_max_dur, wifi_max_dur_visits) = max_dur_coi(coi_profile, loc_ctx, CoiKind::Wifi);

    let familiar_in_ctx: Vec<&DeviceId> = dev_ctx
        .iter()
        .filter(|d| device_profile.is_familiar(d))
        .collect();
    let bt_num = dev_ctx.len() as f64;
    let bt_fam = familiar_in_ctx.len() as f64;
    let (bt_fam_avg_time, bt_fam_avg_freq) = if familiar_in_ctx.is_empty() {
        (0.0, 0.0)
    } else {
        let n = familiar_in_ctx.len() as f64;
        let total_time: f64 = familiar_in_ctx
            .iter()
            .map(|d| device_profile.per_device[*d].duration_ms as f64 / 1000.0)
            .sum();
        let total_freq: f64 = familiar_in_ctx
            .iter()
            .map(|d| device_profile.per_device[*d].encounters as f64)
            .sum();
        (total_time / n, total_freq / n)
    };

    FeatureVector {
        t,
        f: [
            gps_max_dur,
            gps_max_dur_visits,
            wifi_max_dur,
            wifi_max_dur_visits,
            bt_num,
            bt_fam,
            bt_fam_avg_time,
            bt_fam_avg_freq,
        ],
    }
}

/// Duration (seconds) and visit count of the CoI of the given kind with the
/// largest total visit time among those in the location context. Ties break
/// toward the smallest id; an empty intersection yields zeros.
fn max_dur_coi(profile: &CoiProfile, loc_ctx: &BTreeSet<String>, kind: CoiKind) -> (f64, f64) {
    let mut best: Option<(&String, i64, usize)> = None;
    // BTreeSet iterates ids in ascending order, so strict "greater than"
    // keeps the smallest id on ties.
    for id in loc_ctx {
        let Some(stats) = profile.per_coi.get(id) else {
            continue;
        };
        if stats.kind != kind {
            continue;
        }
        if best.is_none_or(|(_, dur, _)| stats.duration_ms > dur) {
            best = Some((id, stats.duration_ms, stats.visits));
        }
    }
    match best {
        Some((_, dur_ms, visits)) => (dur_ms as f64 / 1000.0, visits as f64),
        None => (0.0, 0.0),
    }
}

/// Everything needed to evaluate features at arbitrary timestamps.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub visits: Vec<Visit>,
    pub encounters: Vec<Encounter>,
    pub coi_profile: CoiProfile,
    pub device_profile: DeviceProfile,
}

impl FeatureContext {
    /// Features at `t` against profiles aggregated over the full trace.
    pub fn features_at(&self, t: Timestamp) -> FeatureVector {
        let loc_ctx = location_context_at(t, &self.visits);
        let dev_ctx = device_context_at(t, &self.encounters);
        compute_features(t, &self.coi_profile, &self.device_profile, &loc_ctx, &dev_ctx)
    }

    /// Features at `t` against profiles aggregated from data strictly before
    /// `t`: visits and encounters are clipped at `t` before counting.
    pub fn causal_features_at(
        &self,
        t: Timestamp,
        params: &crate::context::ContextParams,
    ) -> FeatureVector {
        let clipped_visits: Vec<Visit> = self
            .visits
            .iter()
            .filter(|v| v.t_start < t)
            .map(|v| Visit {
                t_end: v.t_end.min(t),
                ..v.clone()
            })
            .collect();
        let clipped_encounters: Vec<Encounter> = self
            .encounters
            .iter()
            .filter(|e| e.t_start < t)
            .map(|e| Encounter {
                t_end: e.t_end.min(t),
                ..e.clone()
            })
            .collect();
        let (coi_profile, device_profile) =
            crate::context::build_profiles(&clipped_visits, &clipped_encounters, params);
        let loc_ctx = location_context_at(t, &self.visits);
        let dev_ctx = device_context_at(t, &self.encounters);
        compute_features(t, &coi_profile, &device_profile, &loc_ctx, &dev_ctx)
    }
}

/// One labeled vector per feedback record carrying the task's field;
/// feedback rows missing that field are skipped.
pub fn build_dataset(
    seq: &ObservationSequence,
    ctx: &FeatureContext,
    task: Task,
) -> Result<Vec<LabeledFeatureVector>, FeatureError> {
    let mut out = Vec::new();
    for fb in seq.feedback() {
        let label = match task {
            Task::Misuse => fb.misuse.map(misuse_label),
            Task::Exposure => fb.exposure.map(exposure_label),
        };
        if let Some(label) = label {
            out.push(LabeledFeatureVector {
                fv: ctx.features_at(fb.t),
                task,
                label,
            });
        }
    }
    if out.is_empty() {
        return Err(FeatureError::NoFeedback(task));
    }
    Ok(out)
}
