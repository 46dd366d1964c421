//! Command-line front end: generate synthetic traces, profile real or
//! synthetic ones, emit feature datasets, train and evaluate classifiers,
//! replay enforcement, and query single access-control decisions.

use std::error::Error;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use conxsense::classifier::{cross_validate, train, ModelKind, TrainedModel};
use conxsense::features::{Label, Task};
use conxsense::pipeline::{
    self, features_from_csv, features_to_csv, profile_trace, roc_to_csv, run_pipeline, Config,
};
use conxsense::policy::{
    decide_access, ClassificationEvent, LockState, PolicyFile, Sensor,
};
use conxsense::replay::{replay_enforcement, ReplayClassifier, ReplayInputs};
use conxsense::scenario::{
    builtin_scenario, generate_synthetic_trace, scenario_policy, ScenarioConfig,
};
use conxsense::trace::{parse_trace, write_trace, ObservationSequence, ParseMode, Timestamp};

#[derive(Parser)]
#[command(
    name = "conxsense",
    version,
    about = "Context profiling, classification, and access-control simulation over sensor traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic trace (plus optional truth/event sidecars)
    Generate {
        /// Built-in scenario name
        #[arg(long, default_value = "commuter")]
        scenario: String,
        /// Load the scenario from a JSON file instead of a built-in
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long, default_value_t = 14)]
        days: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Trace output path (JSON Lines)
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the ground-truth timeline here
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the wake/reboot/access event stream here
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Profile a trace: stay points, CoIs, visit/encounter profiles
    Profile {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also write staypoints.json
        #[arg(long)]
        dump_staypoints: bool,
        /// Also write cois.json
        #[arg(long)]
        dump_cois: bool,
        /// Fail on the first malformed trace line instead of reporting it
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value = "user")]
        user: String,
    },
    /// Compute labeled feature vectors at feedback timestamps (CSV)
    Features {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// misuse, exposure, or both
        #[arg(long, default_value = "both")]
        task: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value = "user")]
        user: String,
    },
    /// Train a classifier from a feature CSV and write the model file
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured model kind (knn, naive_bayes, random_forest)
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Cross-validate on a feature CSV; writes roc.csv and summary.json
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Full pipeline over a trace: profile, features, train, evaluate
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(short, long)]
        out_dir: PathBuf,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value = "user")]
        user: String,
    },
    /// Replay enforcement over a generated scenario under a policy
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = "commuter")]
        scenario: String,
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long, default_value_t = 14)]
        days: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Classifier driving enforcement: a model kind, "oracle", or
        /// "always-deny"
        #[arg(long, default_value = "random_forest")]
        model: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report output path; stdout when omitted
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Build replay profiles only from data before each instant
        #[arg(long)]
        causal: bool,
    },
    /// Decide one access request and print the decision as JSON
    Decide {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        app: String,
        #[arg(long)]
        sensor: Sensor,
        #[arg(long, default_value = "read")]
        op: String,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        label: Label,
        #[arg(long)]
        confidence: f64,
        /// Event timestamp, seconds
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Evaluate with the lockscreen currently displayed
        #[arg(long)]
        lock_displayed: bool,
    },
    /// Write the default config or the default policy to stdout
    Defaults {
        /// "config" or "policy"
        #[arg(default_value = "config")]
        what: String,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, Box<dyn Error>> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(Config::default()),
    }
}

fn load_policy(path: &Path) -> Result<PolicyFile, Box<dyn Error>> {
    let policy: PolicyFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    policy.validate()?;
    Ok(policy)
}

fn load_trace(
    path: &Path,
    strict: bool,
    user: &str,
) -> Result<ObservationSequence, Box<dyn Error>> {
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let file = fs::File::open(path)?;
    let (seq, report) = parse_trace(BufReader::new(file), mode, user)?;
    if !report.malformed.is_empty() {
        eprintln!(
            "warning: skipped {} malformed line(s), first at line {}",
            report.malformed.len(),
            report.malformed[0].line_no
        );
    }
    Ok(seq)
}

fn resolve_scenario(
    name: &str,
    file: &Option<PathBuf>,
    days: usize,
    seed: u64,
) -> Result<ScenarioConfig, Box<dyn Error>> {
    if let Some(path) = file {
        let mut cfg: ScenarioConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.days = days;
        cfg.seed = seed;
        return Ok(cfg);
    }
    builtin_scenario(name, days, seed)
        .ok_or_else(|| format!("unknown scenario {name:?}; built-ins: commuter").into())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Box<dyn Error>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Generate {
            scenario,
            scenario_file,
            days,
            seed,
            out,
            truth,
            events,
        } => {
            let cfg = resolve_scenario(&scenario, &scenario_file, days, seed)?;
            let generated = generate_synthetic_trace(&cfg)?;
            let file = fs::File::create(&out)?;
            write_trace(std::io::BufWriter::new(file), &generated.sequence)?;
            println!(
                "wrote {} records to {}",
                generated.sequence.len(),
                out.display()
            );
            if let Some(path) = truth {
                write_json(&path, &generated.truth)?;
                println!("wrote truth timeline to {}", path.display());
            }
            if let Some(path) = events {
                let file = fs::File::create(&path)?;
                let mut w = std::io::BufWriter::new(file);
                use std::io::Write;
                for event in &generated.device_events {
                    serde_json::to_writer(&mut w, event)?;
                    w.write_all(b"\n")?;
                }
                println!(
                    "wrote {} device events to {}",
                    generated.device_events.len(),
                    path.display()
                );
            }
        }
        Command::Profile {
            trace,
            config,
            out_dir,
            dump_staypoints,
            dump_cois,
            strict,
            user,
        } => {
            let config = load_config(&config)?;
            let seq = load_trace(&trace, strict, &user)?;
            let artifacts = profile_trace(&seq, &config);
            fs::create_dir_all(&out_dir)?;
            write_json(
                &out_dir.join("profiles.json"),
                &pipeline::profiles_json(&artifacts),
            )?;
            if dump_staypoints {
                #[derive(serde::Serialize)]
                struct StayPoints<'a> {
                    gps: &'a [conxsense::staypoints::GpsStayPoint],
                    wifi: &'a [conxsense::staypoints::WifiStayPoint],
                }
                write_json(
                    &out_dir.join("staypoints.json"),
                    &StayPoints {
                        gps: &artifacts.gps_staypoints,
                        wifi: &artifacts.wifi_staypoints,
                    },
                )?;
            }
            if dump_cois {
                #[derive(serde::Serialize)]
                struct Cois<'a> {
                    gps: &'a [conxsense::coi::GpsCoi],
                    wifi: &'a [conxsense::coi::WifiCoi],
                }
                write_json(
                    &out_dir.join("cois.json"),
                    &Cois {
                        gps: &artifacts.gps_cois,
                        wifi: &artifacts.wifi_cois,
                    },
                )?;
            }
            println!(
                "{} gps + {} wifi staypoints, {} gps + {} wifi cois, {} visits, {} encounters, {} familiar devices -> {}",
                artifacts.gps_staypoints.len(),
                artifacts.wifi_staypoints.len(),
                artifacts.gps_cois.len(),
                artifacts.wifi_cois.len(),
                artifacts.visits.len(),
                artifacts.encounters.len(),
                artifacts.features.device_profile.familiar.len(),
                out_dir.display()
            );
        }
        Command::Features {
            trace,
            config,
            task,
            out,
            strict,
            user,
        } => {
            let config = load_config(&config)?;
            let seq = load_trace(&trace, strict, &user)?;
            let artifacts = profile_trace(&seq, &config);
            let tasks: Vec<Task> = match task.as_str() {
                "both" => vec![Task::Misuse, Task::Exposure],
                other => vec![other.parse::<Task>()?],
            };
            let mut rows = Vec::new();
            for task in tasks {
                match conxsense::features::build_dataset(&seq, &artifacts.features, task) {
                    Ok(mut r) => rows.append(&mut r),
                    Err(e) => eprintln!("warning: {e}"),
                }
            }
            if rows.is_empty() {
                return Err("no labeled feature vectors produced".into());
            }
            fs::write(&out, features_to_csv(&rows))?;
            println!("wrote {} labeled vectors to {}", rows.len(), out.display());
        }
        Command::Train {
            features,
            task,
            config,
            model,
            out,
        } => {
            let mut config = load_config(&config)?;
            if let Some(kind) = model {
                config.model.kind = kind;
            }
            let rows = select_task(&features, task)?;
            let trained = train(&config.model, &rows)?;
            write_json(&out, &trained)?;
            println!(
                "trained {:?} on {} examples -> {}",
                trained.kind(),
                rows.len(),
                out.display()
            );
        }
        Command::Eval {
            features,
            task,
            config,
            model,
            folds,
            out_dir,
        } => {
            let mut config = load_config(&config)?;
            if let Some(kind) = model {
                config.model.kind = kind;
            }
            let rows = select_task(&features, task)?;
            let eval = cross_validate(&config.model, &rows, folds)?;
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("roc.csv"), roc_to_csv(&eval.pooled.roc))?;
            let summary = pipeline::summarize_eval(task, &rows, &eval);
            write_json(&out_dir.join("summary.json"), &summary)?;
            for warning in &eval.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "task {task}: pooled AUC {:.4} over {} folds -> {}",
                eval.pooled.auc,
                eval.folds_used,
                out_dir.display()
            );
        }
        Command::Run {
            trace,
            config,
            model,
            out_dir,
            strict,
            user,
        } => {
            let mut config = load_config(&config)?;
            if let Some(kind) = model {
                config.model.kind = kind;
            }
            let seq = load_trace(&trace, strict, &user)?;
            let result = run_pipeline(&seq, &config, &out_dir)?;
            for task in &result.summary.tasks {
                println!(
                    "task {}: pooled AUC {:.4} ({} examples)",
                    task.task, task.auc_pooled, task.examples
                );
            }
            println!(
                "wrote {} artifacts to {}",
                result.written.len(),
                out_dir.display()
            );
        }
        Command::Simulate {
            policy,
            scenario,
            scenario_file,
            days,
            seed,
            model,
            config,
            out,
            causal,
        } => {
            let policy = load_policy(&policy)?;
            let mut config = load_config(&config)?;
            let cfg = resolve_scenario(&scenario, &scenario_file, days, seed)?;
            let generated = generate_synthetic_trace(&cfg)?;
            let artifacts = profile_trace(&generated.sequence, &config);

            let trained: Option<(TrainedModel, TrainedModel)> = match model.as_str() {
                "oracle" | "always-deny" => None,
                kind => {
                    config.model.kind = kind.parse()?;
                    let misuse_rows = conxsense::features::build_dataset(
                        &generated.sequence,
                        &artifacts.features,
                        Task::Misuse,
                    )?;
                    let exposure_rows = conxsense::features::build_dataset(
                        &generated.sequence,
                        &artifacts.features,
                        Task::Exposure,
                    )?;
                    Some((
                        train(&config.model, &misuse_rows)?,
                        train(&config.model, &exposure_rows)?,
                    ))
                }
            };
            let classifier = match (&model[..], &trained) {
                ("oracle", _) => ReplayClassifier::Oracle,
                ("always-deny", _) => ReplayClassifier::AlwaysDeny,
                (_, Some((misuse, exposure))) => ReplayClassifier::Models { misuse, exposure },
                _ => unreachable!("trained models exist for model kinds"),
            };
            let report = replay_enforcement(&ReplayInputs {
                features: &artifacts.features,
                truth: &generated.truth,
                events: &generated.device_events,
                policy: &policy,
                classifier,
                cadence_ms: config.feature_cadence,
                causal: causal || config.causal_profiles,
                context_params: config.context,
            })?;
            match out {
                Some(path) => {
                    write_json(&path, &report)?;
                    println!("wrote enforcement report to {}", path.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Decide {
            policy,
            app,
            sensor,
            op,
            task,
            label,
            confidence,
            t,
            lock_displayed,
        } => {
            let policy = load_policy(&policy)?;
            let event = ClassificationEvent {
                t: Timestamp::from_secs_f64(t),
                task,
                label,
                confidence,
            };
            let lock = LockState {
                displayed: lock_displayed,
                watermark: false,
                last_risk: Label::LowRisk,
                last_risk_confident: true,
            };
            let decision = decide_access(
                &app,
                sensor,
                &op,
                &event,
                &policy.rule_table(),
                &policy.thresholds,
                &lock,
            )?;
            println!("{}", serde_json::to_string_pretty(&decision)?);
        }
        Command::Defaults { what } => match what.as_str() {
            "config" => println!("{}", serde_json::to_string_pretty(&Config::default())?),
            "policy" => println!("{}", serde_json::to_string_pretty(&scenario_policy())?),
            other => return Err(format!("unknown defaults target {other:?}").into()),
        },
    }
    Ok(())
}

fn select_task(path: &Path, task: Task) -> Result<Vec<conxsense::features::LabeledFeatureVector>, Box<dyn Error>> {
    let rows = features_from_csv(&fs::read_to_string(path)?)?;
    let rows: Vec<_> = rows.into_iter().filter(|r| r.task == task).collect();
    if rows.is_empty() {
        return Err(format!("no rows for task {task} in {}", path.display()).into());
    }
    Ok(rows)
}
