//! Seeded synthetic-trace generation: a scheduled daily routine over named
//! places, transit legs between them, companion and stranger Bluetooth
//! devices, periodic feedback, plus the ground-truth timeline and the
//! wake/reboot/app-access event stream consumed by enforcement replay.
//!
//! Identical config and seed produce byte-identical output. All sampling
//! runs in a fixed order (movement, wifi, bluetooth, feedback, events) from
//! sub-generators derived from the master seed.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Label;
use crate::geo;
use crate::policy::Sensor;
use crate::serde_util::ms_as_secs;
use crate::trace::{
    ApId, BtObservation, DeviceClass, DeviceId, ExposureFeedback, FeedbackObservation,
    GpsObservation, MisuseFeedback, ObservationSequence, Record, Timestamp, WifiObservation,
};

/// Sensor sampling cadence, one observation round per minute.
pub const TICK_MS: i64 = 60_000;

/// Gaps between scheduled dwells longer than this are silence instead of a
/// transit leg: the device saw nothing.
const MAX_TRANSIT_GAP_MS: i64 = 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayFilter {
    All,
    Weekdays,
    Weekends,
}

impl DayFilter {
    fn applies(self, day: usize) -> bool {
        // day 0 is a Monday
        let weekday = day % 7 < 5;
        match self {
            DayFilter::All => true,
            DayFilter::Weekdays => weekday,
            DayFilter::Weekends => !weekday,
        }
    }
}

/// One dwell window within a day, seconds from midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellWindow {
    pub days: DayFilter,
    #[serde(with = "ms_as_secs")]
    pub start: i64,
    #[serde(with = "ms_as_secs")]
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceSpec {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub wifi_aps: Vec<String>,
    pub schedule: Vec<DwellWindow>,
    /// Ground-truth feedback labels reported at this place.
    pub misuse: MisuseFeedback,
    pub exposure: ExposureFeedback,
}

/// A companion device present whenever the user dwells at `place`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionSpec {
    pub dev: String,
    pub place: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-fix GPS jitter (standard deviation, meters).
    pub gps_sigma_m: f64,
    pub wifi_miss_prob: f64,
    pub bt_miss_prob: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            gps_sigma_m: 10.0,
            wifi_miss_prob: 0.05,
            bt_miss_prob: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub places: Vec<PlaceSpec>,
    pub companions: Vec<CompanionSpec>,
    /// Per-tick probability of a fresh stranger sighting burst while the
    /// user is in a public context.
    pub stranger_rate: f64,
    pub days: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("place {place}: window [{start}, {end}) is not a valid interval")]
    BadWindow { place: String, start: i64, end: i64 },
    #[error("day {day}: windows of {a} and {b} overlap")]
    OverlappingWindows { day: usize, a: String, b: String },
    #[error("companion {dev} references unknown place {place}")]
    UnknownPlace { dev: String, place: String },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("scenario needs at least one place and one day")]
    Empty,
}

/// Ground truth for one time span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthWindow {
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub misuse: Label,
    pub exposure: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub windows: Vec<TruthWindow>,
}

impl ScenarioTruth {
    /// Labels in force at `t`; None during uncovered silence.
    pub fn labels_at(&self, t: Timestamp) -> Option<(Label, Label)> {
        self.windows
            .iter()
            .find(|w| w.t_start <= t && t < w.t_end)
            .map(|w| (w.misuse, w.exposure))
    }
}

/// Simulated device activity driving the enforcement replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum DeviceEventKind {
    Wake,
    Reboot,
    Access {
        app: String,
        sensor: Sensor,
        op: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEvent {
    pub t: Timestamp,
    #[serde(flatten)]
    pub kind: DeviceEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub sequence: ObservationSequence,
    pub truth: ScenarioTruth,
    pub device_events: Vec<DeviceEvent>,
}

/// Apps the synthetic device runs; the bool marks trusted system apps.
pub const SCENARIO_APPS: [(&str, bool); 3] = [
    ("com.system.camera", true),
    ("com.thirdparty.game", false),
    ("com.thirdparty.tracker", false),
];

/// A contiguous block of presence at one place (windows merged across
/// midnight when they touch).
#[derive(Debug, Clone, Copy)]
struct PresenceSegment {
    place: usize,
    start_ms: i64,
    end_ms: i64,
}

/// A movement leg between two consecutive presence segments.
#[derive(Debug, Clone, Copy)]
struct TransitLeg {
    from: usize,
    to: usize,
    start_ms: i64,
    end_ms: i64,
}

fn validate(cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    if cfg.places.is_empty() || cfg.days == 0 {
        return Err(ScenarioError::Empty);
    }
    for p in [
        cfg.stranger_rate,
        cfg.noise.wifi_miss_prob,
        cfg.noise.bt_miss_prob,
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(ScenarioError::BadProbability(p));
        }
    }
    const DAY_MS: i64 = 86_400_000;
    for place in &cfg.places {
        for w in &place.schedule {
            if w.start < 0 || w.end <= w.start || w.end > DAY_MS {
                return Err(ScenarioError::BadWindow {
                    place: place.name.clone(),
                    start: w.start / 1000,
                    end: w.end / 1000,
                });
            }
        }
    }
    for day in 0..cfg.days.min(7) {
        let mut windows: Vec<(i64, i64, &str)> = Vec::new();
        for place in &cfg.places {
            for w in &place.schedule {
                if w.days.applies(day) {
                    windows.push((w.start, w.end, &place.name));
                }
            }
        }
        windows.sort();
        for pair in windows.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(ScenarioError::OverlappingWindows {
                    day,
                    a: pair[0].2.to_string(),
                    b: pair[1].2.to_string(),
                });
            }
        }
    }
    for companion in &cfg.companions {
        if !cfg.places.iter().any(|p| p.name == companion.place) {
            return Err(ScenarioError::UnknownPlace {
                dev: companion.dev.clone(),
                place: companion.place.clone(),
            });
        }
    }
    Ok(())
}

/// Chronological presence segments over the whole horizon, merging blocks of
/// the same place that touch (evening-to-morning at home crosses midnight).
fn presence_segments(cfg: &ScenarioConfig) -> Vec<PresenceSegment> {
    const DAY_MS: i64 = 86_400_000;
    let mut blocks: Vec<PresenceSegment> = Vec::new();
    for day in 0..cfg.days {
        for (place_idx, place) in cfg.places.iter().enumerate() {
            for w in &place.schedule {
                if w.days.applies(day) {
                    blocks.push(PresenceSegment {
                        place: place_idx,
                        start_ms: day as i64 * DAY_MS + w.start,
                        end_ms: day as i64 * DAY_MS + w.end,
                    });
                }
            }
        }
    }
    blocks.sort_by_key(|b| b.start_ms);
    let mut merged: Vec<PresenceSegment> = Vec::new();
    for block in blocks {
        match merged.last_mut() {
            Some(prev) if prev.place == block.place && prev.end_ms == block.start_ms => {
                prev.end_ms = block.end_ms;
            }
            _ => merged.push(block),
        }
    }
    merged
}

fn transit_legs(segments: &[PresenceSegment]) -> Vec<TransitLeg> {
    segments
        .windows(2)
        .filter(|pair| {
            let gap = pair[1].start_ms - pair[0].end_ms;
            gap > 0 && gap <= MAX_TRANSIT_GAP_MS
        })
        .map(|pair| TransitLeg {
            from: pair[0].place,
            to: pair[1].place,
            start_ms: pair[0].end_ms,
            end_ms: pair[1].start_ms,
        })
        .collect()
}

fn ticks(start_ms: i64, end_ms: i64) -> impl Iterator<Item = i64> {
    let first = start_ms.div_euclid(TICK_MS) * TICK_MS;
    let first = if first < start_ms { first + TICK_MS } else { first };
    (0..).map(move |k| first + k * TICK_MS).take_while(move |&t| t < end_ms)
}

fn jitter(rng: &mut ChaCha8Rng, sigma_m: f64, lat: f64, lon: f64) -> (f64, f64) {
    if sigma_m == 0.0 {
        return (lat, lon);
    }
    let normal = Normal::new(0.0, sigma_m).expect("sigma is finite");
    let dn: f64 = normal.sample(rng);
    let de: f64 = normal.sample(rng);
    (
        lat + geo::meters_to_lat_deg(dn),
        lon + geo::meters_to_lon_deg(de, lat),
    )
}

/// Builds the trace, the truth timeline, and the device-event stream.
pub fn generate_synthetic_trace(
    cfg: &ScenarioConfig,
) -> Result<GeneratedScenario, ScenarioError> {
    validate(cfg)?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rng_move = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_wifi = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_bt = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_feedback = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_events = ChaCha8Rng::seed_from_u64(master.random());

    let segments = presence_segments(cfg);
    let legs = transit_legs(&segments);
    let horizon_ms = cfg.days as i64 * 86_400_000;

    let mut records: Vec<Record> = Vec::new();
    let mut truth = ScenarioTruth::default();

    // --- movement: dwell fixes with a per-visit basis offset (parking and
    // entry-point variation) plus per-fix jitter, transit fixes interpolated
    for seg in &segments {
        let place = &cfg.places[seg.place];
        let (center_lat, center_lon) = jitter(
            &mut rng_move,
            1.5 * cfg.noise.gps_sigma_m,
            place.lat,
            place.lon,
        );
        for t in ticks(seg.start_ms, seg.end_ms) {
            let (lat, lon) = jitter(&mut rng_move, cfg.noise.gps_sigma_m, center_lat, center_lon);
            records.push(Record::Gps(GpsObservation {
                t: Timestamp::from_millis(t),
                lat,
                lon,
            }));
        }
        truth.windows.push(TruthWindow {
            t_start: Timestamp::from_millis(seg.start_ms),
            t_end: Timestamp::from_millis(seg.end_ms),
            misuse: crate::features::misuse_label(place.misuse),
            exposure: crate::features::exposure_label(place.exposure),
        });
    }
    for leg in &legs {
        let (a, b) = (&cfg.places[leg.from], &cfg.places[leg.to]);
        let span = (leg.end_ms - leg.start_ms) as f64;
        for t in ticks(leg.start_ms, leg.end_ms) {
            let frac = (t - leg.start_ms) as f64 / span;
            let lat = a.lat + (b.lat - a.lat) * frac;
            let lon = a.lon + (b.lon - a.lon) * frac;
            let (lat, lon) = jitter(&mut rng_move, cfg.noise.gps_sigma_m, lat, lon);
            records.push(Record::Gps(GpsObservation {
                t: Timestamp::from_millis(t),
                lat,
                lon,
            }));
        }
        // in transit among strangers: device at risk, nothing private around
        truth.windows.push(TruthWindow {
            t_start: Timestamp::from_millis(leg.start_ms),
            t_end: Timestamp::from_millis(leg.end_ms),
            misuse: Label::HighRisk,
            exposure: Label::LowExposure,
        });
    }
    truth.windows.sort_by_key(|w| w.t_start);

    // --- wifi scans at places that have access points
    for seg in &segments {
        let place = &cfg.places[seg.place];
        if place.wifi_aps.is_empty() {
            continue;
        }
        for t in ticks(seg.start_ms, seg.end_ms) {
            for ap in &place.wifi_aps {
                if rng_wifi.random::<f64>() >= cfg.noise.wifi_miss_prob {
                    records.push(Record::Wifi(WifiObservation {
                        t: Timestamp::from_millis(t),
                        ap: ApId::new(ap),
                    }));
                }
            }
        }
    }

    // --- bluetooth: companions while at their place, stranger bursts in
    // public contexts (public-labeled dwells and transit legs)
    for companion in &cfg.companions {
        let place_idx = cfg
            .places
            .iter()
            .position(|p| p.name == companion.place)
            .expect("validated above");
        for seg in segments.iter().filter(|s| s.place == place_idx) {
            for t in ticks(seg.start_ms, seg.end_ms) {
                if rng_bt.random::<f64>() >= cfg.noise.bt_miss_prob {
                    records.push(Record::Bt(BtObservation {
                        t: Timestamp::from_millis(t),
                        dev: DeviceId::new(&companion.dev),
                        dev_class: DeviceClass::Mobile,
                    }));
                }
            }
        }
    }
    let mut public_spans: Vec<(i64, i64)> = Vec::new();
    for seg in &segments {
        if cfg.places[seg.place].exposure == ExposureFeedback::Public {
            public_spans.push((seg.start_ms, seg.end_ms));
        }
    }
    for leg in &legs {
        public_spans.push((leg.start_ms, leg.end_ms));
    }
    public_spans.sort();
    let mut stranger_pool: Vec<String> = Vec::new();
    let mut next_stranger_id = 0usize;
    // active bursts: (device id, mobile?, ticks left)
    let mut active: Vec<(String, bool, u32)> = Vec::new();
    for &(start_ms, end_ms) in &public_spans {
        active.clear(); // strangers do not follow the user between spans
        for t in ticks(start_ms, end_ms) {
            if rng_bt.random::<f64>() < cfg.stranger_rate {
                let reuse = !stranger_pool.is_empty() && rng_bt.random::<f64>() < 0.3;
                let dev = if reuse {
                    stranger_pool[rng_bt.random_range(0..stranger_pool.len())].clone()
                } else {
                    let dev = format!("stranger-{next_stranger_id}");
                    next_stranger_id += 1;
                    stranger_pool.push(dev.clone());
                    dev
                };
                let mobile = rng_bt.random::<f64>() < 0.85;
                let burst_ticks = rng_bt.random_range(1..=3u32);
                active.push((dev, mobile, burst_ticks));
            }
            active.retain_mut(|(dev, mobile, left)| {
                if rng_bt.random::<f64>() >= cfg.noise.bt_miss_prob {
                    records.push(Record::Bt(BtObservation {
                        t: Timestamp::from_millis(t),
                        dev: DeviceId::new(dev),
                        dev_class: if *mobile {
                            DeviceClass::Mobile
                        } else {
                            DeviceClass::Other
                        },
                    }));
                }
                *left -= 1;
                *left > 0
            });
        }
    }

    // --- feedback: 2-3 reports per day, drawn from the central 80% of each
    // dwell interval so they sit inside detectable visits. A day spent
    // entirely in one place reports twice (morning and evening); otherwise
    // each dwell that begins that day reports once.
    const DAY_MS: i64 = 86_400_000;
    for day in 0..cfg.days as i64 {
        let (day_start, day_end) = (day * DAY_MS, (day + 1) * DAY_MS);
        // dwell intervals clipped to this day
        let intervals: Vec<(i64, i64, usize)> = segments
            .iter()
            .filter(|s| s.start_ms < day_end && s.end_ms > day_start)
            .map(|s| (s.start_ms.max(day_start), s.end_ms.min(day_end), s.place))
            .collect();
        let mut report_at = |rng: &mut ChaCha8Rng, lo: i64, hi: i64, place: usize| {
            let width = hi - lo;
            let t = lo + width / 10 + rng.random_range(0..=(width * 8 / 10).max(1));
            let place = &cfg.places[place];
            records.push(Record::Feedback(FeedbackObservation {
                t: Timestamp::from_millis(t),
                misuse: Some(place.misuse),
                exposure: Some(place.exposure),
            }));
        };
        if let [(lo, hi, place)] = intervals[..] {
            if hi - lo > 12 * 3_600_000 {
                // whole day in one place: morning and evening reports
                let mid = (lo + hi) / 2;
                report_at(&mut rng_feedback, lo, mid, place);
                report_at(&mut rng_feedback, mid, hi, place);
                continue;
            }
        }
        for &(lo, hi, place) in &intervals {
            // the dwell reaching back to midnight reported yesterday evening
            if lo == day_start && intervals.len() > 1 {
                continue;
            }
            report_at(&mut rng_feedback, lo, hi, place);
        }
    }

    // --- device events: wakes every 15-40 min, reboots every 2-4 days,
    // per-app sensor access attempts every 5-20 min
    let mut device_events: Vec<DeviceEvent> = Vec::new();
    let mut t = 0;
    loop {
        t += rng_events.random_range(900_000..2_400_000);
        if t >= horizon_ms {
            break;
        }
        device_events.push(DeviceEvent {
            t: Timestamp::from_millis(t),
            kind: DeviceEventKind::Wake,
        });
    }
    t = 0;
    loop {
        t += rng_events.random_range(172_800_000..345_600_000);
        if t >= horizon_ms {
            break;
        }
        device_events.push(DeviceEvent {
            t: Timestamp::from_millis(t),
            kind: DeviceEventKind::Reboot,
        });
    }
    let sensors = [
        Sensor::Camera,
        Sensor::Accelerometer,
        Sensor::Microphone,
        Sensor::Gps,
        Sensor::Magnetometer,
    ];
    for (app, _) in SCENARIO_APPS {
        t = 0;
        loop {
            t += rng_events.random_range(300_000..1_200_000);
            if t >= horizon_ms {
                break;
            }
            device_events.push(DeviceEvent {
                t: Timestamp::from_millis(t),
                kind: DeviceEventKind::Access {
                    app: app.to_string(),
                    sensor: sensors[rng_events.random_range(0..sensors.len())],
                    op: "read".to_string(),
                },
            });
        }
    }
    device_events.sort_by_key(|e| (e.t, event_rank(&e.kind)));

    Ok(GeneratedScenario {
        sequence: ObservationSequence::from_records("synthetic", records),
        truth,
        device_events,
    })
}

fn event_rank(kind: &DeviceEventKind) -> u8 {
    match kind {
        DeviceEventKind::Reboot => 0,
        DeviceEventKind::Wake => 1,
        DeviceEventKind::Access { .. } => 2,
    }
}

/// The canonical commuter scenario: home and work bracket the weekdays, a
/// short grocery stop on the way back, public transit in between, two
/// colleague devices at work, strangers in public. Over two weeks every
/// place clears the CoI thresholds by construction.
pub fn commuter_scenario(days: usize, seed: u64) -> ScenarioConfig {
    let hour = 3_600_000i64;
    let minute = 60_000i64;
    ScenarioConfig {
        places: vec![
            PlaceSpec {
                name: "home".to_string(),
                lat: 60.1695,
                lon: 24.9354,
                wifi_aps: (1..=4).map(|i| format!("aa:00:00:00:01:{i:02x}")).collect(),
                schedule: vec![
                    DwellWindow {
                        days: DayFilter::All,
                        start: 0,
                        end: 7 * hour + 30 * minute,
                    },
                    DwellWindow {
                        days: DayFilter::Weekends,
                        start: 7 * hour + 30 * minute,
                        end: 17 * hour,
                    },
                    DwellWindow {
                        days: DayFilter::All,
                        start: 17 * hour,
                        end: 24 * hour,
                    },
                ],
                misuse: MisuseFeedback::Safe,
                exposure: ExposureFeedback::Home,
            },
            PlaceSpec {
                name: "work".to_string(),
                lat: 60.1841,
                lon: 24.8301,
                wifi_aps: (1..=5).map(|i| format!("aa:00:00:00:02:{i:02x}")).collect(),
                schedule: vec![DwellWindow {
                    days: DayFilter::Weekdays,
                    start: 8 * hour,
                    end: 16 * hour,
                }],
                misuse: MisuseFeedback::Safe,
                exposure: ExposureFeedback::Work,
            },
            PlaceSpec {
                name: "store".to_string(),
                lat: 60.1730,
                lon: 24.8900,
                wifi_aps: (1..=3).map(|i| format!("aa:00:00:00:03:{i:02x}")).collect(),
                schedule: vec![DwellWindow {
                    days: DayFilter::Weekdays,
                    start: 16 * hour + 20 * minute,
                    end: 16 * hour + 35 * minute,
                }],
                misuse: MisuseFeedback::Unsafe,
                exposure: ExposureFeedback::Public,
            },
        ],
        companions: vec![
            CompanionSpec {
                dev: "colleague-1".to_string(),
                place: "work".to_string(),
            },
            CompanionSpec {
                dev: "colleague-2".to_string(),
                place: "work".to_string(),
            },
        ],
        stranger_rate: 0.25,
        days,
        noise: NoiseSpec::default(),
        seed,
    }
}

/// Builds the scenario for a named built-in.
pub fn builtin_scenario(name: &str, days: usize, seed: u64) -> Option<ScenarioConfig> {
    match name {
        "commuter" => Some(commuter_scenario(days, seed)),
        _ => None,
    }
}

/// The policy file matching [`SCENARIO_APPS`]: untrusted apps reach sensors
/// only in low-exposure contexts, trusted apps always; GPS demands extra
/// confidence; lock auto-dismiss needs 0.6.
pub fn scenario_policy() -> crate::policy::PolicyFile {
    use crate::features::Task;
    use crate::policy::{Condition, PolicyFile, Rule, SubjectType, Thresholds};
    let mut apps = std::collections::BTreeMap::new();
    for (app, trusted) in SCENARIO_APPS {
        apps.insert(
            app.to_string(),
            if trusted {
                SubjectType::Trusted
            } else {
                SubjectType::Untrusted
            },
        );
    }
    let sensors = [
        Sensor::Camera,
        Sensor::Accelerometer,
        Sensor::Microphone,
        Sensor::Gps,
        Sensor::Magnetometer,
    ];
    let mut rules = Vec::new();
    let mut thresholds = Thresholds::default();
    for sensor in sensors {
        rules.push(Rule {
            subject: SubjectType::Untrusted,
            object: sensor,
            op: "read".to_string(),
            condition: Some(Condition {
                task: Task::Exposure,
                relax_label: Label::LowExposure,
            }),
        });
        rules.push(Rule {
            subject: SubjectType::Trusted,
            object: sensor,
            op: "read".to_string(),
            condition: None,
        });
        thresholds.set(
            Task::Exposure,
            sensor,
            if sensor == Sensor::Gps { 0.8 } else { 0.6 },
        );
    }
    thresholds.set(Task::Misuse, Sensor::Lockscreen, 0.6);
    PolicyFile {
        apps,
        rules,
        thresholds,
    }
}

/// Distinct AP identifiers observed across the scenario config.
pub fn configured_aps(cfg: &ScenarioConfig) -> BTreeSet<ApId> {
    cfg.places
        .iter()
        .flat_map(|p| p.wifi_aps.iter().map(|s| ApId::new(s)))
        .collect()
}
