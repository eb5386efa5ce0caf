//! The automatic recovery pipeline: failure detection, resource
//! comparison with alerting, policy-driven target selection and restore
//! execution, composed into one flow over the simulated world.

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ForecastError, ForecastModel};
use crate::sim::{ms_to_secs, secs_to_ms, AppInstance, SimError, World};

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("no newly detected cluster failure is pending")]
    NoPendingFailure,
    #[error("more than one failure pending; one recovery runs at a time")]
    MultiplePendingFailures,
    #[error("replay policy ran out of recorded targets")]
    ReplayExhausted,
    #[error("replay target `{name}` is not a viable candidate")]
    ReplayTargetNotViable { name: String },
    #[error("backup not found: {0}")]
    BackupNotFound(String),
    #[error("restore target `{name}` is disconnected")]
    TargetDisconnected { name: String },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A detected disconnection: the poll at `detected_at_ms` observed the
/// failure from `failed_at_ms`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisconnectEvent {
    pub cluster: String,
    pub failed_at_ms: u64,
    pub detected_at_ms: u64,
}

impl DisconnectEvent {
    pub fn delay_ms(&self) -> u64 {
        self.detected_at_ms - self.failed_at_ms
    }
}

/// Restore candidates for an affected cluster, in managed-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub affected: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Alert {
    /// No active cluster has enough cores; restoration halts and the
    /// operator is alerted.
    NoViableCluster { affected: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonOutcome {
    Viable(CandidateSet),
    Halt(Alert),
}

/// How the restore target is chosen among the candidates.
#[derive(Debug, Clone)]
pub enum SelectionPolicy {
    /// Lowest predicted next-slot utilization; ties go to the lowest
    /// managed-list index.
    Forecast(ForecastModel),
    /// Lowest current utilization; same tie-breaking.
    CurrentLowest,
    /// Seeded uniform pick.
    Random(u64),
    /// Follows a fixed recorded target sequence.
    Replay(Vec<String>),
}

impl SelectionPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            SelectionPolicy::Forecast(_) => "forecast",
            SelectionPolicy::CurrentLowest => "current",
            SelectionPolicy::Random(_) => "random",
            SelectionPolicy::Replay(_) => "replay",
        }
    }
}

/// A policy plus the state it carries across recovery rounds (RNG stream,
/// replay cursor).
#[derive(Debug, Clone)]
pub struct PolicyEngine {
    policy: SelectionPolicy,
    rng: Option<ChaCha8Rng>,
    cursor: usize,
}

impl PolicyEngine {
    pub fn new(policy: SelectionPolicy) -> Self {
        let rng = match &policy {
            SelectionPolicy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        Self {
            policy,
            rng,
            cursor: 0,
        }
    }

    pub fn policy(&self) -> &SelectionPolicy {
        &self.policy
    }
}

/// Timestamps of one recovery. With integer milliseconds the identity
/// `recovery = detection delay + overhead + restoration` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryTimeline {
    pub failed_at_ms: u64,
    pub detected_at_ms: u64,
    pub command_issued_at_ms: u64,
    pub restore_completed_at_ms: u64,
}

impl RecoveryTimeline {
    /// A: failure to restored service.
    pub fn recovery_ms(&self) -> u64 {
        self.restore_completed_at_ms - self.failed_at_ms
    }

    /// B: restore command to restored service.
    pub fn restoration_ms(&self) -> u64 {
        self.restore_completed_at_ms - self.command_issued_at_ms
    }

    pub fn detection_delay_ms(&self) -> u64 {
        self.detected_at_ms - self.failed_at_ms
    }

    pub fn overhead_ms(&self) -> u64 {
        self.command_issued_at_ms - self.detected_at_ms
    }

    pub fn recovery_s(&self) -> f64 {
        ms_to_secs(self.recovery_ms())
    }

    pub fn restoration_s(&self) -> f64 {
        ms_to_secs(self.restoration_ms())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryOutcome {
    Completed {
        target: String,
        backup_name: String,
        timeline: RecoveryTimeline,
    },
    Halted(Alert),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionEntry {
    pub cluster: String,
    pub predicted: f64,
}

/// Structured log entry emitted by the pipeline; `cluster` is the affected
/// cluster throughout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineEvent {
    pub at_ms: u64,
    pub cluster: String,
    pub kind: PipelineEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PipelineEventKind {
    FailureDetected {
        delay_ms: u64,
    },
    AlertRaised {
        reason: String,
    },
    TargetSelected {
        target: String,
        predictions: Vec<PredictionEntry>,
    },
    RestoreCommandIssued {
        target: String,
        backup_name: String,
    },
    RestoreCompleted {
        target: String,
        instance: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub detection_interval_ms: u64,
    pub overhead_ms: u64,
    /// Require strictly more cores than the affected cluster instead of at
    /// least as many.
    pub strict_more: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            detection_interval_ms: 15_000,
            overhead_ms: 500,
            strict_more: false,
        }
    }
}

impl PipelineOptions {
    pub fn from_secs(detection_interval_s: f64, overhead_s: f64, strict_more: bool) -> Self {
        Self {
            detection_interval_ms: secs_to_ms(detection_interval_s),
            overhead_ms: secs_to_ms(overhead_s),
            strict_more,
        }
    }
}

/// Reports unreported disconnections as seen by a monitor polling at
/// `t = 0, I, 2I, ...` on the global clock. A poll observes state at its
/// own timestamp inclusively, so a failure exactly on a poll instant is
/// detected with zero delay.
pub fn detect(world: &World, detection_interval_ms: u64) -> Vec<DisconnectEvent> {
    assert!(detection_interval_ms > 0);
    world
        .unreported_failures()
        .into_iter()
        .map(|(cluster, failed_at_ms)| DisconnectEvent {
            cluster,
            failed_at_ms,
            detected_at_ms: failed_at_ms.div_ceil(detection_interval_ms) * detection_interval_ms,
        })
        .collect()
}

/// Compares allocations: candidates are the active clusters with at least
/// as many cores as the affected one (strictly more under `strict_more`),
/// in managed-list order. An empty candidate list is a terminal alert,
/// not an error.
pub fn compare_resources(
    world: &World,
    affected: &str,
    strict_more: bool,
) -> Result<ComparisonOutcome, RecoveryError> {
    let affected_state = world
        .cluster(affected)
        .ok_or_else(|| SimError::UnknownCluster {
            name: affected.to_string(),
        })?;
    debug_assert!(
        !affected_state.is_active(),
        "resource comparison runs for disconnected clusters"
    );
    let needed = affected_state.spec().alloc_millicores;
    let candidates: Vec<String> = world
        .clusters()
        .filter(|c| c.is_active() && c.name() != affected)
        .filter(|c| {
            let alloc = c.spec().alloc_millicores;
            if strict_more {
                alloc > needed
            } else {
                alloc >= needed
            }
        })
        .map(|c| c.name().to_string())
        .collect();
    if candidates.is_empty() {
        return Ok(ComparisonOutcome::Halt(Alert::NoViableCluster {
            affected: affected.to_string(),
        }));
    }
    Ok(ComparisonOutcome::Viable(CandidateSet {
        affected: affected.to_string(),
        candidates,
    }))
}

/// First index of the minimum value; with candidates in managed-list
/// order, ties therefore break to the lowest order index. Any strictly
/// increasing transform of all values leaves the result unchanged.
pub(crate) fn argmin_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v.total_cmp(&values[best]) == Ordering::Less {
            best = i;
        }
    }
    best
}

/// Picks the restore target among the candidates. A single candidate is
/// returned directly under the forecast policy, without running the model.
pub fn select_target(
    world: &World,
    candidates: &CandidateSet,
    engine: &mut PolicyEngine,
) -> Result<(String, Vec<PredictionEntry>), RecoveryError> {
    assert!(!candidates.candidates.is_empty(), "candidate set non-empty");
    let names = &candidates.candidates;
    match &engine.policy {
        SelectionPolicy::Forecast(model) => {
            if names.len() == 1 {
                return Ok((names[0].clone(), Vec::new()));
            }
            let mut entries = Vec::with_capacity(names.len());
            for name in names {
                let window = world.recent_window(name, model.lookback())?;
                let predicted = model.predict_next(&window)?;
                entries.push(PredictionEntry {
                    cluster: name.clone(),
                    predicted,
                });
            }
            let values: Vec<f64> = entries.iter().map(|e| e.predicted).collect();
            Ok((names[argmin_index(&values)].clone(), entries))
        }
        SelectionPolicy::CurrentLowest => {
            let mut entries = Vec::with_capacity(names.len());
            let mut utils = Vec::with_capacity(names.len());
            for name in names {
                let util = world.utilization_u(name)?;
                utils.push(util);
                entries.push(PredictionEntry {
                    cluster: name.clone(),
                    predicted: f64::from(util) / 1e6,
                });
            }
            // Integer comparison keeps equal-load ties exact.
            let mut best = 0;
            for (i, u) in utils.iter().enumerate().skip(1) {
                if *u < utils[best] {
                    best = i;
                }
            }
            Ok((names[best].clone(), entries))
        }
        SelectionPolicy::Random(_) => {
            let rng = engine.rng.as_mut().expect("random policy carries an rng");
            let pick = rng.random_range(0..names.len());
            Ok((names[pick].clone(), Vec::new()))
        }
        SelectionPolicy::Replay(targets) => {
            let next = targets
                .get(engine.cursor)
                .ok_or(RecoveryError::ReplayExhausted)?
                .clone();
            engine.cursor += 1;
            if !names.contains(&next) {
                return Err(RecoveryError::ReplayTargetNotViable { name: next });
            }
            Ok((next, Vec::new()))
        }
    }
}

/// Issues the restore command at `now_ms`: the backup's app becomes a
/// running instance on the target once the app's restore duration elapses,
/// and only then contributes load.
pub fn execute_restore(
    world: &mut World,
    target: &str,
    backup_name: &str,
    now_ms: u64,
) -> Result<(u64, String), RecoveryError> {
    let record = world
        .backups()
        .get(backup_name)
        .ok_or_else(|| RecoveryError::BackupNotFound(format!("backup `{backup_name}`")))?
        .clone();
    let target_state = world
        .cluster(target)
        .ok_or_else(|| SimError::UnknownCluster {
            name: target.to_string(),
        })?;
    if !target_state.is_active() {
        return Err(RecoveryError::TargetDisconnected {
            name: target.to_string(),
        });
    }
    world.advance_to_ms(now_ms);
    let complete_at_ms = now_ms + record.app.restore_duration_ms();
    let instance = format!("{}::{}", record.app.name, record.backup_name);
    world.schedule_restore(
        target,
        AppInstance {
            instance: instance.clone(),
            spec: record.app,
        },
        complete_at_ms,
    )?;
    world.advance_to_ms(complete_at_ms);
    Ok((complete_at_ms, instance))
}

/// Runs the full pipeline for the one pending failure: detect, compare
/// resources (halting with an alert when nothing is viable), select a
/// target, look up the latest backup and execute the restore. Returns the
/// outcome plus the structured event log.
pub fn run_recovery(
    world: &mut World,
    engine: &mut PolicyEngine,
    opts: &PipelineOptions,
) -> Result<(RecoveryOutcome, Vec<PipelineEvent>), RecoveryError> {
    let mut pending = detect(world, opts.detection_interval_ms);
    let event = match pending.len() {
        0 => return Err(RecoveryError::NoPendingFailure),
        1 => pending.remove(0),
        _ => return Err(RecoveryError::MultiplePendingFailures),
    };
    let affected = event.cluster.clone();
    let mut log = Vec::new();

    world.advance_to_ms(event.detected_at_ms);
    world.mark_failure_reported(&affected)?;
    log.push(PipelineEvent {
        at_ms: event.detected_at_ms,
        cluster: affected.clone(),
        kind: PipelineEventKind::FailureDetected {
            delay_ms: event.delay_ms(),
        },
    });

    let candidates = match compare_resources(world, &affected, opts.strict_more)? {
        ComparisonOutcome::Viable(set) => set,
        ComparisonOutcome::Halt(alert) => {
            log.push(PipelineEvent {
                at_ms: event.detected_at_ms,
                cluster: affected.clone(),
                kind: PipelineEventKind::AlertRaised {
                    reason: "no viable cluster for restoration".to_string(),
                },
            });
            return Ok((RecoveryOutcome::Halted(alert), log));
        }
    };

    let (target, predictions) = select_target(world, &candidates, engine)?;
    log.push(PipelineEvent {
        at_ms: event.detected_at_ms,
        cluster: affected.clone(),
        kind: PipelineEventKind::TargetSelected {
            target: target.clone(),
            predictions,
        },
    });

    let backup_name = world
        .backups()
        .latest(&affected)
        .map_err(|_| RecoveryError::BackupNotFound(format!("cluster `{affected}`")))?
        .backup_name
        .clone();

    let command_issued_at_ms = event.detected_at_ms + opts.overhead_ms;
    world.advance_to_ms(command_issued_at_ms);
    log.push(PipelineEvent {
        at_ms: command_issued_at_ms,
        cluster: affected.clone(),
        kind: PipelineEventKind::RestoreCommandIssued {
            target: target.clone(),
            backup_name: backup_name.clone(),
        },
    });

    let (restore_completed_at_ms, instance) =
        execute_restore(world, &target, &backup_name, command_issued_at_ms)?;
    log.push(PipelineEvent {
        at_ms: restore_completed_at_ms,
        cluster: affected.clone(),
        kind: PipelineEventKind::RestoreCompleted {
            target: target.clone(),
            instance,
        },
    });

    let timeline = RecoveryTimeline {
        failed_at_ms: event.failed_at_ms,
        detected_at_ms: event.detected_at_ms,
        command_issued_at_ms,
        restore_completed_at_ms,
    };
    debug_assert_eq!(
        timeline.recovery_ms(),
        timeline.detection_delay_ms() + timeline.overhead_ms() + timeline.restoration_ms()
    );
    Ok((
        RecoveryOutcome::Completed {
            target,
            backup_name,
            timeline,
        },
        log,
    ))
}
