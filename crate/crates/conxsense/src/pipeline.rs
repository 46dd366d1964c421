//! End-to-end orchestration: parse -> stay points -> CoIs -> profiles ->
//! features -> train/eval, with every intermediate artifact written to an
//! output directory. Two runs with the same trace and config produce
//! byte-identical artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    cross_validate, operating_point, train, vertical_average, ClassifierError, Confusion,
    EvalResult, ModelSpec, OperatingPoint, RocPoint, TrainedModel,
};
use crate::coi::{detect_gps_cois, detect_wifi_cois, CoiParams, GpsCoi, WifiCoi};
use crate::context::{
    build_profiles, detect_encounters, detect_visits, ContextParams, Encounter, Visit,
};
use crate::features::{
    build_dataset, FeatureContext, FeatureError, LabeledFeatureVector, Task, FEATURE_NAMES,
};
use crate::policy::Thresholds;
use crate::serde_util::ms_as_secs;
use crate::staypoints::{
    extract_gps_staypoints, extract_wifi_staypoints, group_wifi_snapshots, GpsStayPoint,
    StayPointParams, WifiStayPoint,
};
use crate::trace::{ObservationSequence, TraceError};

/// The operating points reported in every evaluation summary.
pub const OPERATING_POINT_FPRS: [f64; 2] = [0.10, 0.035];

/// Whole-pipeline configuration; one JSON file, defaults everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub staypoints: StayPointParams,
    pub coi: CoiParams,
    pub context: ContextParams,
    pub model: ModelSpec,
    pub thresholds: Thresholds,
    #[serde(with = "ms_as_secs")]
    pub feature_cadence: i64,
    /// Evaluate replay features against profiles built strictly from data
    /// before each instant.
    pub causal_profiles: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            staypoints: StayPointParams::default(),
            coi: CoiParams::default(),
            context: ContextParams::default(),
            model: ModelSpec::default(),
            thresholds: crate::scenario::scenario_policy().thresholds,
            feature_cadence: 60_000,
            causal_profiles: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("feature csv line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
}

/// Everything the profiler derives from one trace.
#[derive(Debug, Clone)]
pub struct ProfilingArtifacts {
    pub gps_staypoints: Vec<GpsStayPoint>,
    pub wifi_staypoints: Vec<WifiStayPoint>,
    pub gps_cois: Vec<GpsCoi>,
    pub wifi_cois: Vec<WifiCoi>,
    pub visits: Vec<Visit>,
    pub encounters: Vec<Encounter>,
    pub features: FeatureContext,
}

/// Runs the profiling stages (stay points, CoIs, visits, encounters,
/// profiles) over a parsed trace.
pub fn profile_trace(seq: &ObservationSequence, config: &Config) -> ProfilingArtifacts {
    let gps = seq.gps();
    let gps_staypoints = extract_gps_staypoints(&gps, &config.staypoints);
    let snapshots = group_wifi_snapshots(&seq.wifi(), &config.staypoints);
    let wifi_staypoints = extract_wifi_staypoints(&snapshots, &config.staypoints);
    let gps_cois = detect_gps_cois(&gps_staypoints, &config.coi);
    let wifi_cois = detect_wifi_cois(&wifi_staypoints, &config.coi);
    let visits = detect_visits(seq, &gps_cois, &wifi_cois, &config.context, &config.staypoints);
    let encounters = detect_encounters(seq, &config.context);
    let (coi_profile, device_profile) = build_profiles(&visits, &encounters, &config.context);
    let features = FeatureContext {
        visits: visits.clone(),
        encounters: encounters.clone(),
        coi_profile,
        device_profile,
    };
    ProfilingArtifacts {
        gps_staypoints,
        wifi_staypoints,
        gps_cois,
        wifi_cois,
        visits,
        encounters,
        features,
    }
}

/// Profile JSON shape: {cois: {id: {visits, dur_s}}, devices: {id: {enc,
/// dur_s, familiar}}}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesJson {
    pub cois: BTreeMap<String, CoiProfileEntry>,
    pub devices: BTreeMap<String, DeviceProfileEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoiProfileEntry {
    pub visits: usize,
    pub dur_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfileEntry {
    pub enc: usize,
    pub dur_s: f64,
    pub familiar: bool,
}

pub fn profiles_json(artifacts: &ProfilingArtifacts) -> ProfilesJson {
    let cois = artifacts
        .features
        .coi_profile
        .per_coi
        .iter()
        .map(|(id, stats)| {
            (
                id.clone(),
                CoiProfileEntry {
                    visits: stats.visits,
                    dur_s: stats.duration_ms as f64 / 1000.0,
                },
            )
        })
        .collect();
    let devices = artifacts
        .features
        .device_profile
        .per_device
        .iter()
        .map(|(dev, stats)| {
            (
                dev.to_string(),
                DeviceProfileEntry {
                    enc: stats.encounters,
                    dur_s: stats.duration_ms as f64 / 1000.0,
                    familiar: artifacts.features.device_profile.familiar.contains(dev),
                },
            )
        })
        .collect();
    ProfilesJson { cois, devices }
}

/// Fixed header of the features CSV.
pub fn features_csv_header() -> String {
    format!("t,{},task,label", FEATURE_NAMES.join(","))
}

pub fn features_to_csv(rows: &[LabeledFeatureVector]) -> String {
    let mut out = features_csv_header();
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{}", row.fv.t.secs_f64()));
        for value in row.fv.f {
            out.push_str(&format!(",{value}"));
        }
        out.push_str(&format!(",{},{}\n", row.task, row.label.as_str()));
    }
    out
}

pub fn features_from_csv(text: &str) -> Result<Vec<LabeledFeatureVector>, PipelineError> {
    use crate::features::{FeatureVector, Label, FEATURE_COUNT};
    use crate::trace::Timestamp;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| PipelineError::BadCsv {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COUNT + 3 {
            return Err(bad(&format!("expected {} fields", FEATURE_COUNT + 3)));
        }
        let t: f64 = fields[0].parse().map_err(|_| bad("bad timestamp"))?;
        let mut f = [0.0; FEATURE_COUNT];
        for (i, slot) in f.iter_mut().enumerate() {
            *slot = fields[1 + i].parse().map_err(|_| bad("bad feature value"))?;
        }
        let task: Task = fields[FEATURE_COUNT + 1].parse().map_err(|e: String| bad(&e))?;
        let label: Label = fields[FEATURE_COUNT + 2].parse().map_err(|e: String| bad(&e))?;
        if label.task() != task {
            return Err(bad("label does not belong to task"));
        }
        rows.push(LabeledFeatureVector {
            fv: FeatureVector {
                t: Timestamp::from_secs_f64(t),
                f,
            },
            task,
            label,
        });
    }
    Ok(rows)
}

/// roc.csv: threshold,fpr,tpr rows of the pooled sweep.
pub fn roc_to_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSummary {
    pub task: Task,
    pub examples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub folds_used: usize,
    pub auc_pooled: f64,
    pub per_fold_auc: Vec<f64>,
    pub confusion_pooled: Confusion,
    /// TPR at the fixed false-positive budgets, from the pooled curve.
    pub operating_points: Vec<OperatingPoint>,
    /// Vertical average of the per-fold curves on a fixed FPR grid.
    pub averaged_roc: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

pub fn summarize_eval(task: Task, data: &[LabeledFeatureVector], eval: &EvalResult) -> TaskSummary {
    let positives = data
        .iter()
        .filter(|d| d.label == task.relax_label())
        .count();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let fold_curves: Vec<Vec<RocPoint>> = eval.folds.iter().map(|f| f.roc.clone()).collect();
    TaskSummary {
        task,
        examples: data.len(),
        positives,
        negatives: data.len() - positives,
        folds_used: eval.folds_used,
        auc_pooled: eval.pooled.auc,
        per_fold_auc: eval.folds.iter().map(|f| f.auc).collect(),
        confusion_pooled: eval.pooled.confusion,
        operating_points: OPERATING_POINT_FPRS
            .iter()
            .map(|&fpr| {
                operating_point(&eval.pooled.roc, fpr, positives, data.len() - positives)
            })
            .collect(),
        averaged_roc: vertical_average(&fold_curves, &grid),
        warnings: eval.warnings.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub records: usize,
    pub gps_staypoints: usize,
    pub wifi_staypoints: usize,
    pub gps_cois: usize,
    pub wifi_cois: usize,
    pub visits: usize,
    pub encounters: usize,
    pub familiar_devices: usize,
    pub model: ModelSpec,
    pub tasks: Vec<TaskSummary>,
}

pub struct PipelineResult {
    pub artifacts: ProfilingArtifacts,
    pub datasets: BTreeMap<Task, Vec<LabeledFeatureVector>>,
    pub models: BTreeMap<Task, TrainedModel>,
    pub evals: BTreeMap<Task, EvalResult>,
    pub summary: RunSummary,
    pub written: Vec<PathBuf>,
}

fn write_artifact(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    written: &mut Vec<PathBuf>,
) -> Result<(), PipelineError> {
    let path = dir.join(name);
    let mut file = fs::File::create(&path)?;
    file.write_all(bytes)?;
    written.push(path);
    Ok(())
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Chains every stage over a parsed trace and writes the artifacts.
///
/// Cross-validation and training need feedback; a task with no feedback
/// records is skipped with a warning unless both are missing, which is an
/// error.
pub fn run_pipeline(
    seq: &ObservationSequence,
    config: &Config,
    out_dir: &Path,
) -> Result<PipelineResult, PipelineError> {
    fs::create_dir_all(out_dir)?;
    let artifacts = profile_trace(seq, config);
    let mut written = Vec::new();

    #[derive(Serialize)]
    struct StayPointsJson<'a> {
        gps: &'a [GpsStayPoint],
        wifi: &'a [WifiStayPoint],
    }
    write_artifact(
        out_dir,
        "staypoints.json",
        &to_json_pretty(&StayPointsJson {
            gps: &artifacts.gps_staypoints,
            wifi: &artifacts.wifi_staypoints,
        })?,
        &mut written,
    )?;

    #[derive(Serialize)]
    struct CoisJson<'a> {
        gps: &'a [GpsCoi],
        wifi: &'a [WifiCoi],
    }
    write_artifact(
        out_dir,
        "cois.json",
        &to_json_pretty(&CoisJson {
            gps: &artifacts.gps_cois,
            wifi: &artifacts.wifi_cois,
        })?,
        &mut written,
    )?;

    write_artifact(
        out_dir,
        "profiles.json",
        &to_json_pretty(&profiles_json(&artifacts))?,
        &mut written,
    )?;

    let mut datasets = BTreeMap::new();
    let mut missing = Vec::new();
    for task in [Task::Misuse, Task::Exposure] {
        match build_dataset(seq, &artifacts.features, task) {
            Ok(rows) => {
                datasets.insert(task, rows);
            }
            Err(FeatureError::NoFeedback(_)) => missing.push(task),
        }
    }
    if datasets.is_empty() {
        return Err(FeatureError::NoFeedback(Task::Misuse).into());
    }

    let mut all_rows: Vec<LabeledFeatureVector> = Vec::new();
    for rows in datasets.values() {
        all_rows.extend(rows.iter().cloned());
    }
    write_artifact(
        out_dir,
        "features.csv",
        features_to_csv(&all_rows).as_bytes(),
        &mut written,
    )?;

    let mut models = BTreeMap::new();
    let mut evals = BTreeMap::new();
    let mut task_summaries = Vec::new();
    for (&task, rows) in &datasets {
        let model = train(&config.model, rows)?;
        let eval = cross_validate(&config.model, rows, 10)?;
        write_artifact(
            out_dir,
            &format!("model_{task}.json"),
            &to_json_pretty(&model)?,
            &mut written,
        )?;
        write_artifact(
            out_dir,
            &format!("roc_{task}.csv"),
            roc_to_csv(&eval.pooled.roc).as_bytes(),
            &mut written,
        )?;
        let mut summary = summarize_eval(task, rows, &eval);
        for skipped in &missing {
            summary
                .warnings
                .push(format!("task {skipped} skipped: no feedback records"));
        }
        task_summaries.push(summary);
        models.insert(task, model);
        evals.insert(task, eval);
    }

    let summary = RunSummary {
        records: seq.len(),
        gps_staypoints: artifacts.gps_staypoints.len(),
        wifi_staypoints: artifacts.wifi_staypoints.len(),
        gps_cois: artifacts.gps_cois.len(),
        wifi_cois: artifacts.wifi_cois.len(),
        visits: artifacts.visits.len(),
        encounters: artifacts.encounters.len(),
        familiar_devices: artifacts.features.device_profile.familiar.len(),
        model: config.model,
        tasks: task_summaries,
    };
    write_artifact(out_dir, "summary.json", &to_json_pretty(&summary)?, &mut written)?;

    Ok(PipelineResult {
        artifacts,
        datasets,
        models,
        evals,
        summary,
        written,
    })
}
