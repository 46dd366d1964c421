//! Observation record model and trace-file ingestion.
//!
//! A trace is a UTF-8 JSON Lines file: one record per line, discriminated by
//! a `"kind"` field (`gps` | `wifi` | `bt` | `feedback`). Timestamps are
//! numeric seconds since the Unix epoch and are held internally as integer
//! milliseconds so that durations sum without floating drift. Everything
//! downstream of this module consumes [`ObservationSequence`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Milliseconds since the Unix epoch.
///
/// Serialized as fractional seconds (the trace-file unit); stored as `i64`
/// milliseconds so timestamp differences are exact integers.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    /// Rounds to the nearest millisecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * 1000.0).round() as i64)
    }

    pub fn millis(self) -> i64 {
        self.0
    }

    pub fn secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Sub for Timestamp {
    type Output = i64;

    /// Difference in milliseconds.
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;

    fn add(self, ms: i64) -> Timestamp {
        Timestamp(self.0 + ms)
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.secs_f64())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom(format!(
                "timestamp must be finite and non-negative, got {secs}"
            )));
        }
        Ok(Timestamp::from_secs_f64(secs))
    }
}

/// Access-point identifier, case-normalized ("AA-BB-.." becomes "aa:bb:..").
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ApId(String);

impl ApId {
    pub fn new(raw: &str) -> Self {
        ApId(raw.to_ascii_lowercase().replace('-', ":"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ApId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(ApId::new(&raw))
    }
}

impl fmt::Debug for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ap:{}", self.0)
    }
}

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque Bluetooth device identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(String);

impl DeviceId {
    pub fn new(raw: &str) -> Self {
        DeviceId(raw.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dev:{}", self.0)
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsObservation {
    pub t: Timestamp,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WifiObservation {
    pub t: Timestamp,
    pub ap: ApId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceClass {
    Mobile,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtObservation {
    pub t: Timestamp,
    pub dev: DeviceId,
    pub dev_class: DeviceClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MisuseFeedback {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureFeedback {
    Home,
    Work,
    Public,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackObservation {
    pub t: Timestamp,
    #[serde(default)]
    pub misuse: Option<MisuseFeedback>,
    #[serde(default)]
    pub exposure: Option<ExposureFeedback>,
}

/// Record kind, in the fixed order used to break timestamp ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Gps,
    Wifi,
    Bt,
    Feedback,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Gps => "gps",
            Kind::Wifi => "wifi",
            Kind::Bt => "bt",
            Kind::Feedback => "feedback",
        };
        f.write_str(s)
    }
}

/// One trace record. Unknown JSON keys are ignored; an unknown `kind` is a
/// malformed record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Gps(GpsObservation),
    Wifi(WifiObservation),
    Bt(BtObservation),
    Feedback(FeedbackObservation),
}

impl Record {
    pub fn t(&self) -> Timestamp {
        match self {
            Record::Gps(o) => o.t,
            Record::Wifi(o) => o.t,
            Record::Bt(o) => o.t,
            Record::Feedback(o) => o.t,
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Record::Gps(_) => Kind::Gps,
            Record::Wifi(_) => Kind::Wifi,
            Record::Bt(_) => Kind::Bt,
            Record::Feedback(_) => Kind::Feedback,
        }
    }

    /// Field-level invariants that serde alone cannot express.
    fn check(&self) -> Result<(), String> {
        match self {
            Record::Gps(o) => {
                if !o.lat.is_finite() || !(-90.0..=90.0).contains(&o.lat) {
                    return Err(format!("lat {} out of [-90,90]", o.lat));
                }
                if !o.lon.is_finite() || !(-180.0..=180.0).contains(&o.lon) {
                    return Err(format!("lon {} out of [-180,180]", o.lon));
                }
            }
            Record::Wifi(o) => {
                if o.ap.as_str().is_empty() {
                    return Err("empty ap identifier".to_string());
                }
            }
            Record::Bt(o) => {
                if o.dev.as_str().is_empty() {
                    return Err("empty device identifier".to_string());
                }
            }
            Record::Feedback(o) => {
                if o.misuse.is_none() && o.exposure.is_none() {
                    return Err("feedback carries neither misuse nor exposure".to_string());
                }
            }
        }
        Ok(())
    }
}

/// Time-ordered multiplexed sensor records for one user.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub user_id: String,
    pub records: Vec<Record>,
}

impl ObservationSequence {
    /// Builds a sequence, sorting records by (t, kind, original position).
    pub fn from_records(user_id: impl Into<String>, mut records: Vec<Record>) -> Self {
        records.sort_by_key(|r| (r.t(), r.kind()));
        ObservationSequence {
            user_id: user_id.into(),
            records,
        }
    }

    pub fn gps(&self) -> Vec<GpsObservation> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Gps(o) => Some(*o),
                _ => None,
            })
            .collect()
    }

    pub fn wifi(&self) -> Vec<WifiObservation> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Wifi(o) => Some(o.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn bt(&self) -> Vec<BtObservation> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Bt(o) => Some(o.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn feedback(&self) -> Vec<FeedbackObservation> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Feedback(o) => Some(o.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed record at line {line_no}: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("trace contains no valid records")]
    EmptyTrace,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Fail on the first malformed line.
    Strict,
    /// Skip malformed lines but report them.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalformedLine {
    pub line_no: usize,
    pub reason: String,
}

/// What happened during a parse: counts plus every rejected line.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseReport {
    pub lines_read: usize,
    pub records_parsed: usize,
    pub malformed: Vec<MalformedLine>,
}

/// Parses a JSON Lines trace. Blank lines are skipped. In lenient mode
/// malformed lines land in the report; in strict mode the first one aborts.
pub fn parse_trace(
    reader: impl BufRead,
    mode: ParseMode,
    user_id: &str,
) -> Result<(ObservationSequence, ParseReport), TraceError> {
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.lines_read += 1;
        let parsed: Result<Record, String> = serde_json::from_str::<Record>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|()| r));
        match parsed {
            Ok(record) => {
                records.push(record);
                report.records_parsed += 1;
            }
            Err(reason) => match mode {
                ParseMode::Strict => {
                    return Err(TraceError::MalformedRecord { line_no, reason });
                }
                ParseMode::Lenient => {
                    report.malformed.push(MalformedLine { line_no, reason });
                }
            },
        }
    }
    if records.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    Ok((ObservationSequence::from_records(user_id, records), report))
}

/// Writes a sequence back out as JSON Lines; `parse_trace` inverts this.
pub fn write_trace(mut writer: impl Write, seq: &ObservationSequence) -> std::io::Result<()> {
    for record in &seq.records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_to_string(seq: &ObservationSequence) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, seq).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationConfig {
    /// Per-kind observation gaps longer than this are flagged.
    pub gap_threshold_ms: i64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            gap_threshold_ms: 300_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEntry {
    pub kind: Kind,
    pub from: Timestamp,
    pub to: Timestamp,
}

/// Pure diagnostic summary of a sequence; never an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub counts: BTreeMap<Kind, usize>,
    pub duplicate_timestamps: BTreeMap<Kind, Vec<Timestamp>>,
    pub gaps: Vec<GapEntry>,
}

pub fn validate_sequence(seq: &ObservationSequence, cfg: &ValidationConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    for kind in [Kind::Gps, Kind::Wifi, Kind::Bt, Kind::Feedback] {
        report.counts.insert(kind, 0);
    }
    let mut last_per_kind: BTreeMap<Kind, Timestamp> = BTreeMap::new();
    for record in &seq.records {
        let kind = record.kind();
        let t = record.t();
        *report.counts.get_mut(&kind).expect("all kinds preseeded") += 1;
        if let Some(&prev) = last_per_kind.get(&kind) {
            if t == prev {
                let dups = report.duplicate_timestamps.entry(kind).or_default();
                if dups.last() != Some(&t) {
                    dups.push(t);
                }
            } else if t - prev > cfg.gap_threshold_ms {
                report.gaps.push(GapEntry {
                    kind,
                    from: prev,
                    to: t,
                });
            }
        }
        last_per_kind.insert(kind, t);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, mode: ParseMode) -> Result<(ObservationSequence, ParseReport), TraceError> {
        parse_trace(Cursor::new(text), mode, "u")
    }

    #[test]
    fn single_gps_line() {
        let (seq, report) = parse(
            r#"{"kind":"gps","t":100.0,"lat":60.0,"lon":24.0}"#,
            ParseMode::Lenient,
        )
        .unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.records[0].kind(), Kind::Gps);
        assert!(report.malformed.is_empty());
    }

    #[test]
    fn records_sorted_by_timestamp() {
        let text = r#"{"kind":"gps","t":30,"lat":1.0,"lon":1.0}
{"kind":"gps","t":10,"lat":2.0,"lon":2.0}
{"kind":"gps","t":20,"lat":3.0,"lon":3.0}"#;
        let (seq, _) = parse(text, ParseMode::Lenient).unwrap();
        let ts: Vec<i64> = seq.records.iter().map(|r| r.t().millis()).collect();
        assert_eq!(ts, vec![10_000, 20_000, 30_000]);
    }

    #[test]
    fn timestamp_ties_break_by_kind_then_input_order() {
        let text = r#"{"kind":"bt","t":5,"dev":"d1","dev_class":"mobile"}
{"kind":"gps","t":5,"lat":1.0,"lon":1.0}
{"kind":"wifi","t":5,"ap":"aa:bb:cc:dd:ee:01"}
{"kind":"wifi","t":5,"ap":"aa:bb:cc:dd:ee:02"}"#;
        let (seq, _) = parse(text, ParseMode::Lenient).unwrap();
        let kinds: Vec<Kind> = seq.records.iter().map(|r| r.kind()).collect();
        assert_eq!(kinds, vec![Kind::Gps, Kind::Wifi, Kind::Wifi, Kind::Bt]);
        // stable sort keeps the two wifi scans in input order
        match (&seq.records[1], &seq.records[2]) {
            (Record::Wifi(a), Record::Wifi(b)) => {
                assert_eq!(a.ap.as_str(), "aa:bb:cc:dd:ee:01");
                assert_eq!(b.ap.as_str(), "aa:bb:cc:dd:ee:02");
            }
            other => panic!("expected wifi records, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_latitude_is_malformed() {
        let text = r#"{"kind":"gps","t":1,"lat":200.0,"lon":0.0}
{"kind":"gps","t":2,"lat":10.0,"lon":0.0}"#;
        let err = parse(text, ParseMode::Strict).unwrap_err();
        match err {
            TraceError::MalformedRecord { line_no, .. } => assert_eq!(line_no, 1),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
        let (seq, report) = parse(text, ParseMode::Lenient).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(report.malformed.len(), 1);
        assert_eq!(report.malformed[0].line_no, 1);
    }

    #[test]
    fn unknown_kind_is_malformed_unknown_keys_are_not() {
        let text = r#"{"kind":"sonar","t":1,"depth":3.0}
{"kind":"gps","t":2,"lat":10.0,"lon":0.0,"altitude":55.1}"#;
        let (seq, report) = parse(text, ParseMode::Lenient).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(report.malformed.len(), 1);
    }

    #[test]
    fn negative_timestamp_rejected() {
        let (_, report) = parse(
            r#"{"kind":"gps","t":-5,"lat":0.0,"lon":0.0}
{"kind":"gps","t":5,"lat":0.0,"lon":0.0}"#,
            ParseMode::Lenient,
        )
        .unwrap();
        assert_eq!(report.malformed.len(), 1);
    }

    #[test]
    fn feedback_without_either_field_rejected() {
        let text = r#"{"kind":"feedback","t":9,"misuse":null,"exposure":null}
{"kind":"feedback","t":10,"misuse":"safe","exposure":null}"#;
        let (seq, report) = parse(text, ParseMode::Lenient).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(report.malformed.len(), 1);
    }

    #[test]
    fn empty_trace_is_an_error() {
        match parse("\n\n", ParseMode::Lenient) {
            Err(TraceError::EmptyTrace) => {}
            other => panic!("expected EmptyTrace, got {other:?}"),
        }
    }

    #[test]
    fn ap_identifiers_normalized() {
        let (seq, _) = parse(
            r#"{"kind":"wifi","t":1,"ap":"AA-BB-CC-DD-EE-FF"}"#,
            ParseMode::Lenient,
        )
        .unwrap();
        match &seq.records[0] {
            Record::Wifi(o) => assert_eq!(o.ap.as_str(), "aa:bb:cc:dd:ee:ff"),
            other => panic!("expected wifi, got {other:?}"),
        }
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let text = r#"{"kind":"gps","t":10.5,"lat":60.1234,"lon":24.5678}
{"kind":"wifi","t":11,"ap":"aa:bb:cc:dd:ee:ff"}
{"kind":"bt","t":12,"dev":"phone-7","dev_class":"other"}
{"kind":"feedback","t":13,"misuse":"unsafe","exposure":"public"}"#;
        let (seq, _) = parse(text, ParseMode::Strict).unwrap();
        let serialized = trace_to_string(&seq);
        let (roundtrip, report) = parse(&serialized, ParseMode::Strict).unwrap();
        assert_eq!(seq, roundtrip);
        assert!(report.malformed.is_empty());
    }

    #[test]
    fn parsing_is_insensitive_to_input_line_order() {
        let lines = [
            r#"{"kind":"gps","t":30,"lat":1.0,"lon":1.0}"#,
            r#"{"kind":"wifi","t":10,"ap":"aa:bb:cc:dd:ee:01"}"#,
            r#"{"kind":"bt","t":20,"dev":"d","dev_class":"mobile"}"#,
            r#"{"kind":"feedback","t":40,"misuse":"safe","exposure":null}"#,
            r#"{"kind":"gps","t":10,"lat":2.0,"lon":2.0}"#,
        ];
        let forward = lines.join("\n");
        let mut reversed: Vec<&str> = lines.to_vec();
        reversed.reverse();
        let (a, _) = parse(&forward, ParseMode::Strict).unwrap();
        let (b, _) = parse(&reversed.join("\n"), ParseMode::Strict).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_counts_empty_sequence() {
        let seq = ObservationSequence::from_records("u", vec![]);
        let report = validate_sequence(&seq, &ValidationConfig::default());
        assert!(report.counts.values().all(|&c| c == 0));
        assert!(report.gaps.is_empty());
        assert!(report.duplicate_timestamps.is_empty());
    }

    #[test]
    fn validation_flags_gap_over_threshold() {
        let records = vec![
            Record::Gps(GpsObservation {
                t: Timestamp::from_millis(0),
                lat: 0.0,
                lon: 0.0,
            }),
            Record::Gps(GpsObservation {
                t: Timestamp::from_millis(120_000),
                lat: 0.0,
                lon: 0.0,
            }),
        ];
        let seq = ObservationSequence::from_records("u", records);
        let report = validate_sequence(
            &seq,
            &ValidationConfig {
                gap_threshold_ms: 60_000,
            },
        );
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].kind, Kind::Gps);
        assert_eq!(report.counts[&Kind::Gps], 2);
    }

    #[test]
    fn validation_reports_duplicates_per_kind() {
        let t = Timestamp::from_millis(7_000);
        let records = vec![
            Record::Wifi(WifiObservation {
                t,
                ap: ApId::new("aa:bb:cc:dd:ee:01"),
            }),
            Record::Wifi(WifiObservation {
                t,
                ap: ApId::new("aa:bb:cc:dd:ee:02"),
            }),
            Record::Gps(GpsObservation {
                t,
                lat: 0.0,
                lon: 0.0,
            }),
        ];
        let seq = ObservationSequence::from_records("u", records);
        let report = validate_sequence(&seq, &ValidationConfig::default());
        assert_eq!(report.duplicate_timestamps[&Kind::Wifi], vec![t]);
        assert!(!report.duplicate_timestamps.contains_key(&Kind::Gps));
    }
}
