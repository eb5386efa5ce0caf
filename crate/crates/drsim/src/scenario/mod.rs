//! Scenario configuration, the multi-round experiment driver and policy
//! comparison.

mod report;

pub use report::{ReportFormat, RoundRow, ScenarioReport, TimingSummary};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{load_model, ForecastError, ForecastModel};
use crate::recovery::{
    run_recovery, PipelineEvent, PipelineOptions, PolicyEngine, RecoveryError, RecoveryOutcome,
    SelectionPolicy,
};
use crate::sim::{util_to_pct, AppSpec, ClusterSpec, SimError, World};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config {path} (key `{key}`): {reason}")]
    Parse {
        path: String,
        key: String,
        reason: String,
    },
    #[error("invalid config: {reason}")]
    Invalid { reason: String },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Forecast,
    CurrentLowest,
    Random,
    Replay,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PolicyKind::Forecast => "forecast",
            PolicyKind::CurrentLowest => "current",
            PolicyKind::Random => "random",
            PolicyKind::Replay => "replay",
        };
        f.write_str(name)
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forecast" => Ok(PolicyKind::Forecast),
            "current" => Ok(PolicyKind::CurrentLowest),
            "random" => Ok(PolicyKind::Random),
            "replay" => Ok(PolicyKind::Replay),
            other => Err(format!(
                "unknown policy `{other}` (expected forecast, current, random or replay)"
            )),
        }
    }
}

/// One managed cluster as configured. `initial_utilization` is a percent,
/// matching the config file convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub name: String,
    pub order_index: u32,
    pub alloc_millicores: u32,
    pub initial_utilization: f64,
}

/// Validated scenario configuration with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub clusters: Vec<ClusterConfig>,
    pub app: AppSpec,
    pub source_cluster: String,
    pub rounds: u32,
    pub policy: PolicyKind,
    pub replay_targets: Option<Vec<String>>,
    pub detection_interval_s: f64,
    pub overhead_s: f64,
    pub slot_seconds: u32,
    pub seed: u64,
    /// Fraction in (0, 1]; utilization at or above it flags a cluster.
    pub degradation_threshold: f64,
    pub model_path: Option<PathBuf>,
    pub strict_more: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClusterConfig {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order_index: Option<u32>,
    alloc_millicores: u32,
    initial_utilization: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAppConfig {
    name: String,
    cpu_millicores: u32,
    #[serde(default = "default_restore_duration")]
    restore_duration_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenarioConfig {
    clusters: Vec<RawClusterConfig>,
    app: RawAppConfig,
    source_cluster: String,
    rounds: u32,
    policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replay_targets: Option<Vec<String>>,
    #[serde(default = "default_detection_interval")]
    detection_interval_s: f64,
    #[serde(default = "default_overhead")]
    overhead_s: f64,
    #[serde(default = "default_slot_seconds")]
    slot_seconds: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_threshold")]
    degradation_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_path: Option<PathBuf>,
    #[serde(default)]
    strict_more: bool,
}

fn default_detection_interval() -> f64 {
    15.0
}

fn default_overhead() -> f64 {
    0.5
}

fn default_slot_seconds() -> u32 {
    300
}

fn default_threshold() -> f64 {
    0.80
}

fn default_restore_duration() -> f64 {
    20.0
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
        path: label.clone(),
        key: String::new(),
        reason: e.to_string(),
    })?;
    parse_config(&text, &label)
}

pub fn parse_config(text: &str, path_label: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: path_label.to_string(),
        key: String::new(),
        reason: e.to_string(),
    })?;
    validate_config(raw, path_label)
}

fn validate_config(raw: RawScenarioConfig, path_label: &str) -> Result<ScenarioConfig, ConfigError> {
    let invalid = |reason: String| ConfigError::Invalid { reason };

    let policy = raw.policy.parse::<PolicyKind>().map_err(|reason| {
        ConfigError::Parse {
            path: path_label.to_string(),
            key: "policy".to_string(),
            reason,
        }
    })?;

    if raw.clusters.is_empty() {
        return Err(invalid("at least one cluster is required".into()));
    }
    let explicit = raw.clusters.iter().filter(|c| c.order_index.is_some()).count();
    if explicit != 0 && explicit != raw.clusters.len() {
        return Err(invalid(
            "order_index must be given for all clusters or none".into(),
        ));
    }
    let mut clusters = Vec::with_capacity(raw.clusters.len());
    for (position, c) in raw.clusters.into_iter().enumerate() {
        if c.alloc_millicores == 0 {
            return Err(invalid(format!("cluster `{}`: zero allocation", c.name)));
        }
        if !(0.0..=100.0).contains(&c.initial_utilization) {
            return Err(invalid(format!(
                "cluster `{}`: initial_utilization {} outside [0, 100] percent",
                c.name, c.initial_utilization
            )));
        }
        clusters.push(ClusterConfig {
            name: c.name,
            order_index: c.order_index.unwrap_or(position as u32),
            alloc_millicores: c.alloc_millicores,
            initial_utilization: c.initial_utilization,
        });
    }
    for (i, a) in clusters.iter().enumerate() {
        for b in &clusters[i + 1..] {
            if a.name == b.name {
                return Err(invalid(format!("duplicate cluster name `{}`", a.name)));
            }
            if a.order_index == b.order_index {
                return Err(invalid(format!("duplicate order_index {}", a.order_index)));
            }
        }
    }
    if !clusters.iter().any(|c| c.name == raw.source_cluster) {
        return Err(invalid(format!(
            "source_cluster `{}` is not in the cluster list",
            raw.source_cluster
        )));
    }
    if !(raw.detection_interval_s.is_finite() && raw.detection_interval_s > 0.0) {
        return Err(invalid("detection_interval_s must be positive".into()));
    }
    if !(raw.overhead_s.is_finite() && (0.0..1.0).contains(&raw.overhead_s)) {
        return Err(invalid(
            "overhead_s must lie in [0, 1); pipeline overhead stays under one second".into(),
        ));
    }
    if raw.slot_seconds == 0 {
        return Err(invalid("slot_seconds must be positive".into()));
    }
    if !(raw.degradation_threshold.is_finite() && (0.0..=1.0).contains(&raw.degradation_threshold))
        || raw.degradation_threshold == 0.0
    {
        return Err(invalid(
            "degradation_threshold must be a fraction in (0, 1]".into(),
        ));
    }
    if !(raw.app.restore_duration_s.is_finite() && raw.app.restore_duration_s >= 0.0) {
        return Err(invalid("app restore_duration_s must be non-negative".into()));
    }
    match policy {
        PolicyKind::Replay => {
            let targets = raw.replay_targets.as_ref().ok_or_else(|| {
                invalid("replay policy requires replay_targets".into())
            })?;
            if (targets.len() as u64) < u64::from(raw.rounds) {
                return Err(invalid(format!(
                    "replay_targets has {} entries but the scenario runs {} rounds",
                    targets.len(),
                    raw.rounds
                )));
            }
            for t in targets {
                if !clusters.iter().any(|c| &c.name == t) {
                    return Err(invalid(format!("replay target `{t}` is not a cluster")));
                }
            }
        }
        PolicyKind::Forecast => {
            if raw.model_path.is_none() {
                return Err(invalid("forecast policy requires model_path".into()));
            }
        }
        _ => {}
    }

    Ok(ScenarioConfig {
        clusters,
        app: AppSpec {
            name: raw.app.name,
            cpu_millicores: raw.app.cpu_millicores,
            restore_duration_s: raw.app.restore_duration_s,
        },
        source_cluster: raw.source_cluster,
        rounds: raw.rounds,
        policy,
        replay_targets: raw.replay_targets,
        detection_interval_s: raw.detection_interval_s,
        overhead_s: raw.overhead_s,
        slot_seconds: raw.slot_seconds,
        seed: raw.seed,
        degradation_threshold: raw.degradation_threshold,
        model_path: raw.model_path,
        strict_more: raw.strict_more,
    })
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        let raw = RawScenarioConfig {
            clusters: self
                .clusters
                .iter()
                .map(|c| RawClusterConfig {
                    name: c.name.clone(),
                    order_index: Some(c.order_index),
                    alloc_millicores: c.alloc_millicores,
                    initial_utilization: c.initial_utilization,
                })
                .collect(),
            app: RawAppConfig {
                name: self.app.name.clone(),
                cpu_millicores: self.app.cpu_millicores,
                restore_duration_s: self.app.restore_duration_s,
            },
            source_cluster: self.source_cluster.clone(),
            rounds: self.rounds,
            policy: self.policy.to_string(),
            replay_targets: self.replay_targets.clone(),
            detection_interval_s: self.detection_interval_s,
            overhead_s: self.overhead_s,
            slot_seconds: self.slot_seconds,
            seed: self.seed,
            degradation_threshold: self.degradation_threshold,
            model_path: self.model_path.clone(),
            strict_more: self.strict_more,
        };
        let mut text = serde_json::to_string_pretty(&raw).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn world(&self) -> Result<World, SimError> {
        let specs: Vec<ClusterSpec> = self
            .clusters
            .iter()
            .map(|c| ClusterSpec {
                name: c.name.clone(),
                order_index: c.order_index,
                alloc_millicores: c.alloc_millicores,
                initial_utilization: c.initial_utilization / 100.0,
            })
            .collect();
        World::new(specs, self.slot_seconds)
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions::from_secs(self.detection_interval_s, self.overhead_s, self.strict_more)
    }

    /// Report columns: every cluster except the failure source, in
    /// managed-list order.
    pub fn report_clusters(&self) -> Vec<String> {
        let mut ordered = self.clusters.clone();
        ordered.sort_by_key(|c| c.order_index);
        ordered
            .into_iter()
            .filter(|c| c.name != self.source_cluster)
            .map(|c| c.name)
            .collect()
    }

    fn threshold_pct(&self) -> f64 {
        (self.degradation_threshold * 1e6).round() / 1e4
    }

    /// Builds the policy engine named by the config, loading the forecast
    /// model from `model_path` when needed.
    pub fn build_policy_engine(&self) -> Result<PolicyEngine, ScenarioError> {
        let policy = match self.policy {
            PolicyKind::Forecast => {
                let path = self.model_path.as_ref().ok_or_else(|| {
                    ConfigError::Invalid {
                        reason: "forecast policy requires model_path".into(),
                    }
                })?;
                SelectionPolicy::Forecast(load_model(path)?)
            }
            PolicyKind::CurrentLowest => SelectionPolicy::CurrentLowest,
            PolicyKind::Random => SelectionPolicy::Random(self.seed),
            PolicyKind::Replay => SelectionPolicy::Replay(
                self.replay_targets
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid {
                        reason: "replay policy requires replay_targets".into(),
                    })?,
            ),
        };
        Ok(PolicyEngine::new(policy))
    }
}

/// A scenario run: the report plus the pipeline's structured event log.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub events: Vec<PipelineEvent>,
}

/// Runs the configured scenario with the policy named in the config.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    let mut engine = config.build_policy_engine()?;
    run_scenario_with_engine(config, &mut engine)
}

/// Runs the scenario with an explicit policy engine (the config's `policy`
/// field is ignored). Each round re-arms the source cluster with its app,
/// backs it up, injects a failure at a seeded offset within one detection
/// interval and runs the recovery pipeline; utilizations are recorded at
/// restore completion.
pub fn run_scenario_with_engine(
    config: &ScenarioConfig,
    engine: &mut PolicyEngine,
) -> Result<ScenarioRun, ScenarioError> {
    let mut world = config.world()?;
    let opts = config.pipeline_options();
    let columns = config.report_clusters();
    let pcts = |world: &World| -> Result<Vec<f64>, SimError> {
        columns
            .iter()
            .map(|name| Ok(util_to_pct(world.utilization_u(name)?)))
            .collect()
    };
    let initial_pct = pcts(&world)?;
    let mut offset_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rounds = Vec::with_capacity(config.rounds as usize);
    let mut events = Vec::new();

    for round in 1..=config.rounds {
        world.rearm(&config.source_cluster, &config.app)?;
        world.create_backup(&config.source_cluster, &config.app.name)?;
        let offset: u64 = offset_rng.random_range(0..opts.detection_interval_ms);
        world.inject_failure(&config.source_cluster, world.now_ms() + offset)?;
        let (outcome, log) = run_recovery(&mut world, engine, &opts)?;
        events.extend(log);
        let (target, timeline) = match outcome {
            RecoveryOutcome::Completed {
                target, timeline, ..
            } => (Some(target), Some(timeline)),
            RecoveryOutcome::Halted(_) => (None, None),
        };
        rounds.push(RoundRow {
            round,
            target,
            utilization_pct: pcts(&world)?,
            timeline,
        });
    }

    Ok(ScenarioRun {
        report: ScenarioReport {
            clusters: columns,
            threshold_pct: config.threshold_pct(),
            initial_pct,
            rounds,
        },
        events,
    })
}

/// A policy under comparison. `Random` receives a fresh per-trial seed.
#[derive(Debug, Clone)]
pub enum ComparePolicy {
    Forecast(ForecastModel),
    CurrentLowest,
    Random,
    Replay(Vec<String>),
}

impl ComparePolicy {
    pub fn label(&self) -> &'static str {
        match self {
            ComparePolicy::Forecast(_) => "forecast",
            ComparePolicy::CurrentLowest => "current",
            ComparePolicy::Random => "random",
            ComparePolicy::Replay(_) => "replay",
        }
    }
}

/// Aggregate outcome of one policy over the comparison trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyStats {
    pub policy: String,
    pub trials: u32,
    pub mean_final_max_pct: f64,
    pub max_final_max_pct: f64,
    /// Spread = max - min final utilization.
    pub mean_spread_pct: f64,
    pub max_spread_pct: f64,
    /// Trials in which at least one cluster reached the threshold.
    pub flagged_trials: u32,
    pub mean_flagged_clusters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparison {
    pub trials: u32,
    pub entries: Vec<PolicyStats>,
}

impl PolicyComparison {
    pub fn render_text(&self) -> String {
        let mut out = format!("Policy comparison over {} trials\n\n", self.trials);
        out.push_str(&format!(
            "{:<10}{:>14}{:>14}{:>14}{:>14}{:>16}\n",
            "Policy", "mean max %", "worst max %", "mean spread", "worst spread", "flagged trials"
        ));
        for entry in &self.entries {
            out.push_str(&format!(
                "{:<10}{:>14.1}{:>14.1}{:>14.1}{:>14.1}{:>16}\n",
                entry.policy,
                entry.mean_final_max_pct,
                entry.max_final_max_pct,
                entry.mean_spread_pct,
                entry.max_spread_pct,
                format!("{}/{}", entry.flagged_trials, entry.trials),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("comparison serializes");
        text.push('\n');
        text
    }
}

/// Runs every policy for `trials` seeded scenarios (seed, seed+1, ...) and
/// aggregates final utilization statistics. Deterministic: trial `t` of a
/// policy always uses scenario seed `config.seed + t`.
pub fn compare_policies(
    config: &ScenarioConfig,
    policies: &[ComparePolicy],
    trials: u32,
) -> Result<PolicyComparison, ScenarioError> {
    assert!(trials >= 1, "at least one trial");
    let mut entries = Vec::with_capacity(policies.len());
    for policy in policies {
        let mut final_max = Vec::with_capacity(trials as usize);
        let mut spreads = Vec::with_capacity(trials as usize);
        let mut flagged_trials = 0u32;
        let mut flagged_total = 0usize;
        for trial in 0..trials {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(u64::from(trial));
            let selection = match policy {
                ComparePolicy::Forecast(model) => SelectionPolicy::Forecast(model.clone()),
                ComparePolicy::CurrentLowest => SelectionPolicy::CurrentLowest,
                ComparePolicy::Random => SelectionPolicy::Random(cfg.seed),
                ComparePolicy::Replay(targets) => SelectionPolicy::Replay(targets.clone()),
            };
            let mut engine = PolicyEngine::new(selection);
            let run = run_scenario_with_engine(&cfg, &mut engine)?;
            let finals = run.report.final_pct();
            let max = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
            final_max.push(max);
            spreads.push(max - min);
            let flags = run.report.flags().len();
            if flags > 0 {
                flagged_trials += 1;
            }
            flagged_total += flags;
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        entries.push(PolicyStats {
            policy: policy.label().to_string(),
            trials,
            mean_final_max_pct: mean(&final_max),
            max_final_max_pct: final_max.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_spread_pct: mean(&spreads),
            max_spread_pct: spreads.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            flagged_trials,
            mean_flagged_clusters: flagged_total as f64 / f64::from(trials),
        });
    }
    Ok(PolicyComparison { trials, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The five-candidate setup of the scheduling experiments: candidates
    /// at 35/40/50/60/70 percent, a separate source cluster running a
    /// 200-millicore app on 4000 millicores (one restore adds 5%).
    pub(crate) fn table_config(policy: PolicyKind) -> ScenarioConfig {
        let initials = [35.0, 40.0, 50.0, 60.0, 70.0];
        let mut clusters: Vec<ClusterConfig> = initials
            .iter()
            .enumerate()
            .map(|(i, pct)| ClusterConfig {
                name: format!("cluster{}", i + 1),
                order_index: i as u32,
                alloc_millicores: 4000,
                initial_utilization: *pct,
            })
            .collect();
        clusters.push(ClusterConfig {
            name: "cluster6".to_string(),
            order_index: 5,
            alloc_millicores: 4000,
            initial_utilization: 0.0,
        });
        ScenarioConfig {
            clusters,
            app: AppSpec {
                name: "dummy".to_string(),
                cpu_millicores: 200,
                restore_duration_s: 20.0,
            },
            source_cluster: "cluster6".to_string(),
            rounds: 10,
            policy,
            replay_targets: None,
            detection_interval_s: 15.0,
            overhead_s: 0.5,
            slot_seconds: 300,
            seed: 42,
            degradation_threshold: 0.80,
            model_path: None,
            strict_more: false,
        }
    }

    const TABLE2_SEQUENCE: [usize; 10] = [5, 1, 4, 4, 5, 5, 3, 4, 4, 4];

    fn replay_config() -> ScenarioConfig {
        let mut cfg = table_config(PolicyKind::Replay);
        cfg.replay_targets = Some(
            TABLE2_SEQUENCE
                .iter()
                .map(|i| format!("cluster{i}"))
                .collect(),
        );
        cfg
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"{
            "clusters": [
                {"name": "a", "alloc_millicores": 4000, "initial_utilization": 35},
                {"name": "b", "alloc_millicores": 4000, "initial_utilization": 0}
            ],
            "app": {"name": "nginx", "cpu_millicores": 200},
            "source_cluster": "b",
            "rounds": 1,
            "policy": "current"
        }"#;
        let cfg = parse_config(text, "<test>").unwrap();
        assert_eq!(cfg.detection_interval_s, 15.0);
        assert_eq!(cfg.overhead_s, 0.5);
        assert_eq!(cfg.slot_seconds, 300);
        assert_eq!(cfg.degradation_threshold, 0.80);
        assert_eq!(cfg.app.restore_duration_s, 20.0);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.clusters[1].order_index, 1);
    }

    #[test]
    fn unknown_policy_names_the_key() {
        let text = r#"{
            "clusters": [{"name": "a", "alloc_millicores": 4000, "initial_utilization": 35}],
            "app": {"name": "nginx", "cpu_millicores": 200},
            "source_cluster": "a",
            "rounds": 1,
            "policy": "fortune-teller"
        }"#;
        match parse_config(text, "<test>").unwrap_err() {
            ConfigError::Parse { key, .. } => assert_eq!(key, "policy"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{
            "clusters": [{"name": "a", "alloc_millicores": 4000, "initial_utilization": 35}],
            "app": {"name": "nginx", "cpu_millicores": 200},
            "source_cluster": "a",
            "rounds": 1,
            "policy": "current",
            "surprise": true
        }"#;
        assert!(matches!(
            parse_config(text, "<test>"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn missing_source_cluster_is_invalid() {
        let text = r#"{
            "clusters": [{"name": "a", "alloc_millicores": 4000, "initial_utilization": 35}],
            "app": {"name": "nginx", "cpu_millicores": 200},
            "source_cluster": "zzz",
            "rounds": 1,
            "policy": "current"
        }"#;
        assert!(matches!(
            parse_config(text, "<test>"),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn replay_needs_enough_targets() {
        let mut cfg = replay_config();
        cfg.replay_targets = Some(vec!["cluster1".to_string()]);
        let text = cfg.to_json();
        assert!(matches!(
            parse_config(&text, "<test>"),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn table_fixture_roundtrips_through_json() {
        let cfg = replay_config();
        let dumped = cfg.to_json();
        let reloaded = parse_config(&dumped, "<roundtrip>").unwrap();
        assert_eq!(reloaded, cfg);
        assert_eq!(reloaded.to_json(), dumped);
    }

    #[test]
    fn replay_reproduces_the_random_schedule_table() {
        let run = run_scenario(&replay_config()).unwrap();
        let report = &run.report;
        // Per-round utilization table, matching the recorded experiment.
        let expected_rows: [[f64; 5]; 10] = [
            [35.0, 40.0, 50.0, 60.0, 75.0],
            [40.0, 40.0, 50.0, 60.0, 75.0],
            [40.0, 40.0, 50.0, 65.0, 75.0],
            [40.0, 40.0, 50.0, 70.0, 75.0],
            [40.0, 40.0, 50.0, 70.0, 80.0],
            [40.0, 40.0, 50.0, 70.0, 85.0],
            [40.0, 40.0, 55.0, 70.0, 85.0],
            [40.0, 40.0, 55.0, 75.0, 85.0],
            [40.0, 40.0, 55.0, 80.0, 85.0],
            [40.0, 40.0, 55.0, 85.0, 85.0],
        ];
        for (row, expected) in report.rounds.iter().zip(&expected_rows) {
            assert_eq!(row.utilization_pct, expected.to_vec(), "round {}", row.round);
        }
        assert_eq!(report.final_pct(), &[40.0, 40.0, 55.0, 85.0, 85.0]);
        assert_eq!(report.flags(), vec!["cluster4", "cluster5"]);
        assert_eq!(
            report.under_threshold(),
            vec![true, true, true, false, false]
        );
    }

    #[test]
    fn current_lowest_reproduces_the_scheduled_table() {
        let run = run_scenario(&table_config(PolicyKind::CurrentLowest)).unwrap();
        let report = &run.report;
        let targets: Vec<String> = report
            .rounds
            .iter()
            .map(|r| r.target.clone().unwrap())
            .collect();
        let expected: Vec<String> = [1, 1, 2, 1, 2, 1, 2, 3, 1, 2]
            .iter()
            .map(|i| format!("cluster{i}"))
            .collect();
        assert_eq!(targets, expected);
        assert_eq!(report.final_pct(), &[60.0, 60.0, 55.0, 60.0, 70.0]);
        assert!(report.flags().is_empty());
        assert_eq!(report.under_threshold(), vec![true; 5]);
    }

    #[test]
    fn scheduled_spread_never_grows_on_this_fixture() {
        let run = run_scenario(&table_config(PolicyKind::CurrentLowest)).unwrap();
        let spread = |pcts: &[f64]| {
            pcts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - pcts.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let mut previous = spread(&run.report.initial_pct);
        for row in &run.report.rounds {
            let current = spread(&row.utilization_pct);
            assert!(
                current <= previous,
                "round {}: spread {current} grew past {previous}",
                row.round
            );
            previous = current;
        }
    }

    #[test]
    fn zero_rounds_reports_the_initial_state() {
        let mut cfg = table_config(PolicyKind::CurrentLowest);
        cfg.rounds = 0;
        let run = run_scenario(&cfg).unwrap();
        assert!(run.report.rounds.is_empty());
        assert!(run.events.is_empty());
        assert_eq!(run.report.final_pct(), &[35.0, 40.0, 50.0, 60.0, 70.0]);
        assert!(run.report.summary().is_none());
    }

    #[test]
    fn target_gains_exactly_the_apps_share_each_round() {
        let run = run_scenario(&table_config(PolicyKind::CurrentLowest)).unwrap();
        let report = &run.report;
        let mut previous = report.initial_pct.clone();
        for row in &report.rounds {
            let target_idx = report
                .clusters
                .iter()
                .position(|c| Some(c) == row.target.as_ref())
                .unwrap();
            for (i, (before, after)) in previous.iter().zip(&row.utilization_pct).enumerate() {
                let expected_gain = if i == target_idx { 5.0 } else { 0.0 };
                assert_eq!(after - before, expected_gain, "round {}", row.round);
            }
            previous = row.utilization_pct.clone();
        }
    }

    #[test]
    fn halted_rounds_leave_utilizations_unchanged() {
        // Source needs 8000 cores; nobody else has them.
        let mut cfg = table_config(PolicyKind::CurrentLowest);
        cfg.clusters[5].alloc_millicores = 8000;
        cfg.rounds = 3;
        let run = run_scenario(&cfg).unwrap();
        for row in &run.report.rounds {
            assert!(row.target.is_none());
            assert!(row.timeline.is_none());
            assert_eq!(row.utilization_pct, run.report.initial_pct);
        }
        assert!(run.report.summary().is_none());
    }

    #[test]
    fn identical_seeds_give_byte_identical_reports() {
        let cfg = table_config(PolicyKind::CurrentLowest);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(a.report.to_csv(), b.report.to_csv());
    }

    #[test]
    fn comparison_covers_single_policy_lists() {
        let cfg = table_config(PolicyKind::CurrentLowest);
        let comparison =
            compare_policies(&cfg, &[ComparePolicy::CurrentLowest], 3).unwrap();
        assert_eq!(comparison.entries.len(), 1);
        let stats = &comparison.entries[0];
        assert_eq!(stats.policy, "current");
        assert_eq!(stats.flagged_trials, 0);
        assert_eq!(stats.mean_spread_pct, 15.0);
        assert!(comparison.render_text().contains("current"));
    }

    #[test]
    fn random_trials_vary_with_the_trial_seed() {
        let cfg = table_config(PolicyKind::Random);
        let comparison = compare_policies(&cfg, &[ComparePolicy::Random], 20).unwrap();
        let stats = &comparison.entries[0];
        // Uniform picks pile load unevenly somewhere across 20 trials.
        assert!(stats.max_spread_pct >= stats.mean_spread_pct);
        assert!(stats.max_final_max_pct > 70.0);
    }
}
