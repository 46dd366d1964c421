//! Simulated access-control layer: a default-deny rule table whose
//! conditional rules are activated by classification events, plus the
//! low-watermark lockscreen state machine.
//!
//! Everything here is pure: decisions are value-in/value-out, lock
//! transitions return a new state. Any (app, sensor, op) triple without a
//! matching rule denies; every tie or ambiguity resolves restrictively.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Label, Task};
use crate::trace::Timestamp;

/// Objects the access-control layer mediates. `Lockscreen` is not a sensor
/// but shares the threshold table: its misuse-task entry sets the confidence
/// needed to auto-dismiss the lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Camera,
    Accelerometer,
    Microphone,
    Gps,
    Magnetometer,
    Lockscreen,
}

impl std::fmt::Display for Sensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Sensor::Camera => "camera",
            Sensor::Accelerometer => "accelerometer",
            Sensor::Microphone => "microphone",
            Sensor::Gps => "gps",
            Sensor::Magnetometer => "magnetometer",
            Sensor::Lockscreen => "lockscreen",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Sensor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "camera" => Ok(Sensor::Camera),
            "accelerometer" => Ok(Sensor::Accelerometer),
            "microphone" => Ok(Sensor::Microphone),
            "gps" => Ok(Sensor::Gps),
            "magnetometer" => Ok(Sensor::Magnetometer),
            "lockscreen" => Ok(Sensor::Lockscreen),
            other => Err(format!("unknown sensor {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectType {
    Trusted,
    Untrusted,
}

/// Condition attached to a rule: the event must certify this label for this
/// task, at sufficient confidence, for the rule to fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub task: Task,
    pub relax_label: Label,
}

/// An allowing rule. Without a condition the rule is unconditional, the
/// usual shape for trusted subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub subject: SubjectType,
    pub object: Sensor,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEvent {
    pub t: Timestamp,
    pub task: Task,
    pub label: Label,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    /// A conditional rule matched and its condition held.
    RuleSatisfied,
    /// An unconditional rule matched (no classification needed).
    TrustedBypass,
    NoRule,
    WrongLabel,
    LowConfidence,
    LockscreenBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub effect: Effect,
    pub reason: DecisionReason,
}

impl Decision {
    fn allow(reason: DecisionReason) -> Decision {
        Decision {
            effect: Effect::Allow,
            reason,
        }
    }

    fn deny(reason: DecisionReason) -> Decision {
        Decision {
            effect: Effect::Deny,
            reason,
        }
    }

    pub fn is_allow(&self) -> bool {
        self.effect == Effect::Allow
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no confidence threshold configured for ({task}, {sensor})")]
    UnknownSensor { task: Task, sensor: Sensor },
    #[error("duplicate rule for ({subject:?}, {object}, {op})")]
    DuplicateRule {
        subject: SubjectType,
        object: Sensor,
        op: String,
    },
    #[error("rule condition label {label:?} does not belong to task {task}")]
    LabelTaskMismatch { task: Task, label: Label },
    #[error("conditional rule on {sensor} has no ({task}, {sensor}) threshold")]
    MissingThreshold { task: Task, sensor: Sensor },
}

/// Per-(task, sensor) minimum confidences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(pub BTreeMap<Task, BTreeMap<Sensor, f64>>);

/// Confidence required to auto-dismiss the lockscreen when no explicit
/// (misuse, lockscreen) threshold is configured.
pub const DEFAULT_LOCK_DISMISS_THRESHOLD: f64 = 0.5;

impl Thresholds {
    pub fn get(&self, task: Task, sensor: Sensor) -> Option<f64> {
        self.0.get(&task).and_then(|m| m.get(&sensor)).copied()
    }

    pub fn set(&mut self, task: Task, sensor: Sensor, confidence: f64) {
        self.0.entry(task).or_default().insert(sensor, confidence);
    }

    pub fn lock_dismiss(&self) -> f64 {
        self.get(Task::Misuse, Sensor::Lockscreen)
            .unwrap_or(DEFAULT_LOCK_DISMISS_THRESHOLD)
    }
}

/// App type assignments plus the conditional rule list. Default deny: a
/// triple with no rule never allows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleTable {
    pub apps: BTreeMap<String, SubjectType>,
    pub rules: Vec<Rule>,
}

impl RuleTable {
    /// Apps never listed are untrusted; only an explicit assignment trusts.
    pub fn subject_type(&self, app_id: &str) -> SubjectType {
        self.apps
            .get(app_id)
            .copied()
            .unwrap_or(SubjectType::Untrusted)
    }

    pub fn find(&self, subject: SubjectType, object: Sensor, op: &str) -> Option<&Rule> {
        self.rules
            .iter()
            .find(|r| r.subject == subject && r.object == object && r.op == op)
    }

    /// At most one rule per (subject, object, op); condition labels must
    /// belong to their task; conditional rules need a threshold.
    pub fn validate(&self, thresholds: &Thresholds) -> Result<(), PolicyError> {
        let mut seen = BTreeMap::new();
        for rule in &self.rules {
            let key = (rule.subject, rule.object, rule.op.clone());
            if seen.insert(key, ()).is_some() {
                return Err(PolicyError::DuplicateRule {
                    subject: rule.subject,
                    object: rule.object,
                    op: rule.op.clone(),
                });
            }
            if let Some(cond) = &rule.condition {
                if cond.relax_label.task() != cond.task {
                    return Err(PolicyError::LabelTaskMismatch {
                        task: cond.task,
                        label: cond.relax_label,
                    });
                }
                if thresholds.get(cond.task, rule.object).is_none() {
                    return Err(PolicyError::MissingThreshold {
                        task: cond.task,
                        sensor: rule.object,
                    });
                }
            }
        }
        Ok(())
    }
}

/// The complete policy file: {apps, rules, thresholds}.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub apps: BTreeMap<String, SubjectType>,
    pub rules: Vec<Rule>,
    pub thresholds: Thresholds,
}

impl PolicyFile {
    pub fn rule_table(&self) -> RuleTable {
        RuleTable {
            apps: self.apps.clone(),
            rules: self.rules.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.rule_table().validate(&self.thresholds)
    }
}

/// Decides one access request. Allows only when a rule matches, its
/// condition (if any) is certified by `event` at sufficient confidence, and
/// the accelerometer-while-locked block does not apply.
pub fn decide_access(
    app_id: &str,
    sensor: Sensor,
    op: &str,
    event: &ClassificationEvent,
    rules: &RuleTable,
    thresholds: &Thresholds,
    lock: &LockState,
) -> Result<Decision, PolicyError> {
    let subject = rules.subject_type(app_id);
    if sensor == Sensor::Accelerometer && subject == SubjectType::Untrusted && lock.displayed {
        return Ok(Decision::deny(DecisionReason::LockscreenBlock));
    }
    let Some(rule) = rules.find(subject, sensor, op) else {
        return Ok(Decision::deny(DecisionReason::NoRule));
    };
    let Some(cond) = &rule.condition else {
        return Ok(Decision::allow(DecisionReason::TrustedBypass));
    };
    if event.task != cond.task || event.label != cond.relax_label {
        return Ok(Decision::deny(DecisionReason::WrongLabel));
    }
    let threshold = thresholds
        .get(cond.task, sensor)
        .ok_or(PolicyError::UnknownSensor {
            task: cond.task,
            sensor,
        })?;
    if event.confidence < threshold {
        return Ok(Decision::deny(DecisionReason::LowConfidence));
    }
    Ok(Decision::allow(DecisionReason::RuleSatisfied))
}

/// Lockscreen state. The watermark is a safety latch: once set (boot or any
/// high-risk classification) every wake shows the lockscreen until the user
/// authenticates manually.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockState {
    pub displayed: bool,
    pub watermark: bool,
    pub last_risk: Label,
    /// Whether the last risk classification met the dismiss threshold.
    pub last_risk_confident: bool,
}

impl LockState {
    /// Post-boot state: locked, watermarked, risk unknown (treated high).
    pub fn boot() -> LockState {
        LockState {
            displayed: true,
            watermark: true,
            last_risk: Label::HighRisk,
            last_risk_confident: false,
        }
    }
}

impl Default for LockState {
    fn default() -> Self {
        LockState::boot()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LockEvent {
    RiskClassified { label: Label, confidence: f64 },
    Wake,
    Reboot,
    ManualUnlock,
}

/// Applies one lock event. A high-risk classification latches the watermark
/// at any confidence; auto-dismiss on wake additionally requires the last
/// low-risk classification to have met `dismiss_threshold`.
pub fn update_lock_state(lock: LockState, event: LockEvent, dismiss_threshold: f64) -> LockState {
    match event {
        LockEvent::Reboot => LockState::boot(),
        LockEvent::RiskClassified { label, confidence } => LockState {
            watermark: lock.watermark || label == Label::HighRisk,
            last_risk: label,
            last_risk_confident: confidence >= dismiss_threshold,
            ..lock
        },
        LockEvent::Wake => {
            let auto_dismiss =
                !lock.watermark && lock.last_risk == Label::LowRisk && lock.last_risk_confident;
            LockState {
                displayed: !auto_dismiss,
                ..lock
            }
        }
        LockEvent::ManualUnlock => LockState {
            displayed: false,
            watermark: false,
            ..lock
        },
    }
}
