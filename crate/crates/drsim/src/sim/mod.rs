//! Deterministic discrete-time model of managed clusters, their
//! applications, failures and a simulated backup repository.
//!
//! Time is integer milliseconds so that every timeline identity holds
//! exactly. Utilization is tracked in integer micro-fractions (1e6 = 100%)
//! so that the equal-load ties the scheduling experiments depend on are
//! exact rather than floating-point accidents.

mod backup;

pub use backup::{BackupRecord, BackupStore};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Micro-fraction scale: this many units equal 100% utilization.
pub const UTIL_FULL: u32 = 1_000_000;

pub fn secs_to_ms(seconds: f64) -> u64 {
    debug_assert!(seconds.is_finite() && seconds >= 0.0);
    (seconds * 1000.0).round() as u64
}

pub fn ms_to_secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

pub(crate) fn util_to_pct(util: u32) -> f64 {
    f64::from(util) / 10_000.0
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown cluster `{name}`")]
    UnknownCluster { name: String },
    #[error("cluster `{name}` is already disconnected")]
    AlreadyDisconnected { name: String },
    #[error("app `{app}` is not running on cluster `{cluster}`")]
    AppNotRunning { cluster: String, app: String },
    #[error("no backup found for cluster `{cluster}`")]
    BackupNotFound { cluster: String },
    #[error("invalid cluster specs: {reason}")]
    InvalidSpec { reason: String },
}

/// Static description of one managed cluster. `order_index` is its
/// position in the managed list and drives tie-breaking downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub name: String,
    pub order_index: u32,
    pub alloc_millicores: u32,
    /// Baseline load as a fraction in [0, 1].
    pub initial_utilization: f64,
}

/// An application the simulator can back up and restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub name: String,
    /// Load the app adds to its host while running.
    pub cpu_millicores: u32,
    pub restore_duration_s: f64,
}

impl AppSpec {
    pub fn restore_duration_ms(&self) -> u64 {
        secs_to_ms(self.restore_duration_s)
    }
}

/// One running copy of an app. Restores create fresh instances, so the
/// same app restored twice adds its load twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppInstance {
    pub instance: String,
    pub spec: AppSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterStatus {
    Active,
    Disconnected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    spec: ClusterSpec,
    initial_util: u32,
    status: ClusterStatus,
    failed_at_ms: Option<u64>,
    failure_reported: bool,
    history: Vec<u32>,
    apps: Vec<AppInstance>,
}

impl ClusterState {
    fn new(spec: ClusterSpec) -> Self {
        let initial_util = (spec.initial_utilization * f64::from(UTIL_FULL)).round() as u32;
        Self {
            spec,
            initial_util,
            status: ClusterStatus::Active,
            failed_at_ms: None,
            failure_reported: false,
            history: Vec::new(),
            apps: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &ClusterSpec {
        &self.spec
    }

    pub fn status(&self) -> ClusterStatus {
        self.status
    }

    pub fn is_active(&self) -> bool {
        self.status == ClusterStatus::Active
    }

    pub fn failed_at_ms(&self) -> Option<u64> {
        self.failed_at_ms
    }

    pub fn apps(&self) -> &[AppInstance] {
        &self.apps
    }

    /// Per-slot utilization samples as fractions, oldest first.
    pub fn history_fractions(&self) -> Vec<f64> {
        self.history
            .iter()
            .map(|u| f64::from(*u) / f64::from(UTIL_FULL))
            .collect()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Current utilization in micro-fraction units: baseline plus running
    /// app load over allocation, clamped to 100%. A disconnected cluster's
    /// apps stop contributing.
    pub fn utilization_u(&self) -> u32 {
        let mut util = u64::from(self.initial_util);
        if self.status == ClusterStatus::Active {
            let load_mc: u64 = self.apps.iter().map(|a| u64::from(a.spec.cpu_millicores)).sum();
            util += load_mc * u64::from(UTIL_FULL) / u64::from(self.spec.alloc_millicores);
        }
        util.min(u64::from(UTIL_FULL)) as u32
    }

    pub fn utilization(&self) -> f64 {
        f64::from(self.utilization_u()) / f64::from(UTIL_FULL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    now_ms: u64,
    slot_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct PendingRestore {
    target_idx: usize,
    instance: AppInstance,
    complete_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HistoryNoise {
    seed: u64,
    amplitude_u: u32,
}

/// The simulated multi-cluster world, advanced by a single driver.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    clock: SimClock,
    clusters: Vec<ClusterState>,
    backups: BackupStore,
    pending: Vec<PendingRestore>,
    noise: Option<HistoryNoise>,
    backup_seq: u64,
}

impl World {
    pub fn new(specs: Vec<ClusterSpec>, slot_seconds: u32) -> Result<Self, SimError> {
        if specs.is_empty() {
            return Err(SimError::InvalidSpec {
                reason: "need at least one cluster".into(),
            });
        }
        if slot_seconds == 0 {
            return Err(SimError::InvalidSpec {
                reason: "slot_seconds must be > 0".into(),
            });
        }
        for spec in &specs {
            if spec.alloc_millicores == 0 {
                return Err(SimError::InvalidSpec {
                    reason: format!("cluster `{}` has zero allocation", spec.name),
                });
            }
            if !(0.0..=1.0).contains(&spec.initial_utilization) {
                return Err(SimError::InvalidSpec {
                    reason: format!(
                        "cluster `{}` initial utilization {} outside [0, 1]",
                        spec.name, spec.initial_utilization
                    ),
                });
            }
        }
        for (i, a) in specs.iter().enumerate() {
            for b in &specs[i + 1..] {
                if a.name == b.name {
                    return Err(SimError::InvalidSpec {
                        reason: format!("duplicate cluster name `{}`", a.name),
                    });
                }
                if a.order_index == b.order_index {
                    return Err(SimError::InvalidSpec {
                        reason: format!("duplicate order index {}", a.order_index),
                    });
                }
            }
        }
        let mut clusters: Vec<ClusterState> = specs.into_iter().map(ClusterState::new).collect();
        clusters.sort_by_key(|c| c.spec.order_index);
        let mut world = Self {
            clock: SimClock {
                now_ms: 0,
                slot_ms: u64::from(slot_seconds) * 1000,
            },
            clusters,
            backups: BackupStore::default(),
            pending: Vec::new(),
            noise: None,
            backup_seq: 0,
        };
        world.sample_if_due();
        Ok(world)
    }

    /// Adds seeded noise to history samples (not to the true utilization);
    /// for forecast-robustness experiments.
    pub fn set_history_noise(&mut self, seed: u64, amplitude: f64) {
        assert!((0.0..1.0).contains(&amplitude));
        self.noise = Some(HistoryNoise {
            seed,
            amplitude_u: (amplitude * f64::from(UTIL_FULL)) as u32,
        });
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms
    }

    pub fn now_s(&self) -> f64 {
        ms_to_secs(self.clock.now_ms)
    }

    pub fn slot_ms(&self) -> u64 {
        self.clock.slot_ms
    }

    pub fn clusters(&self) -> impl Iterator<Item = &ClusterState> {
        self.clusters.iter()
    }

    pub fn cluster(&self, name: &str) -> Option<&ClusterState> {
        self.clusters.iter().find(|c| c.name() == name)
    }

    fn cluster_idx(&self, name: &str) -> Result<usize, SimError> {
        self.clusters
            .iter()
            .position(|c| c.name() == name)
            .ok_or_else(|| SimError::UnknownCluster {
                name: name.to_string(),
            })
    }

    pub fn backups(&self) -> &BackupStore {
        &self.backups
    }

    pub fn utilization(&self, name: &str) -> Result<f64, SimError> {
        Ok(self.clusters[self.cluster_idx(name)?].utilization())
    }

    pub fn utilization_u(&self, name: &str) -> Result<u32, SimError> {
        Ok(self.clusters[self.cluster_idx(name)?].utilization_u())
    }

    /// Moves the clock forward, appending one history sample per crossed
    /// slot boundary and applying restore completions in chronological
    /// order. Advancing by zero leaves the world unchanged.
    pub fn advance_ms(&mut self, dt_ms: u64) {
        let target = self.clock.now_ms + dt_ms;
        while self.clock.now_ms < target {
            let next_boundary = (self.clock.now_ms / self.clock.slot_ms + 1) * self.clock.slot_ms;
            let mut step = target.min(next_boundary);
            if let Some(due) = self.pending.iter().map(|p| p.complete_at_ms).min() {
                if due > self.clock.now_ms && due < step {
                    step = due;
                }
            }
            self.clock.now_ms = step;
            self.apply_due_restores();
            self.sample_if_due();
        }
    }

    pub fn advance_to_ms(&mut self, t_ms: u64) {
        assert!(t_ms >= self.clock.now_ms, "time is monotonic");
        self.advance_ms(t_ms - self.clock.now_ms);
    }

    fn apply_due_restores(&mut self) {
        let now = self.clock.now_ms;
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].complete_at_ms <= now {
                let restore = self.pending.remove(i);
                let cluster = &mut self.clusters[restore.target_idx];
                debug_assert!(cluster.is_active(), "restore targets stay active");
                cluster.apps.push(restore.instance);
            } else {
                i += 1;
            }
        }
    }

    fn sample_if_due(&mut self) {
        let expected = (self.clock.now_ms / self.clock.slot_ms + 1) as usize;
        for idx in 0..self.clusters.len() {
            while self.clusters[idx].history.len() < expected {
                let sample_idx = self.clusters[idx].history.len();
                let value = self.sampled_value(idx, sample_idx);
                self.clusters[idx].history.push(value);
            }
        }
    }

    fn sampled_value(&self, cluster_idx: usize, sample_idx: usize) -> u32 {
        let util = self.clusters[cluster_idx].utilization_u();
        match self.noise {
            None => util,
            Some(noise) if noise.amplitude_u == 0 => util,
            Some(noise) => {
                // Keyed per (seed, cluster, sample) so values do not depend
                // on sampling order.
                let key = noise
                    .seed
                    .wrapping_add((cluster_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
                    .wrapping_add((sample_idx as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                let amp = i64::from(noise.amplitude_u);
                let offset = rng.random_range(-amp..=amp);
                (i64::from(util) + offset).clamp(0, i64::from(UTIL_FULL)) as u32
            }
        }
    }

    /// Marks a cluster disconnected as of `at_ms`, first advancing the
    /// world to that instant. Its apps stop contributing load from then
    /// on; other clusters are untouched.
    pub fn inject_failure(&mut self, name: &str, at_ms: u64) -> Result<(), SimError> {
        let idx = self.cluster_idx(name)?;
        assert!(at_ms >= self.clock.now_ms, "time is monotonic");
        if self.clusters[idx].status == ClusterStatus::Disconnected {
            return Err(SimError::AlreadyDisconnected {
                name: name.to_string(),
            });
        }
        self.advance_to_ms(at_ms);
        let cluster = &mut self.clusters[idx];
        cluster.status = ClusterStatus::Disconnected;
        cluster.failed_at_ms = Some(at_ms);
        cluster.failure_reported = false;
        Ok(())
    }

    /// Disconnected clusters whose failure no monitoring poll has reported
    /// yet, in managed-list order.
    pub fn unreported_failures(&self) -> Vec<(String, u64)> {
        self.clusters
            .iter()
            .filter(|c| !c.is_active() && !c.failure_reported)
            .filter_map(|c| c.failed_at_ms.map(|t| (c.name().to_string(), t)))
            .collect()
    }

    pub(crate) fn mark_failure_reported(&mut self, name: &str) -> Result<(), SimError> {
        let idx = self.cluster_idx(name)?;
        self.clusters[idx].failure_reported = true;
        Ok(())
    }

    /// Returns a cluster to service with exactly one fresh copy of its own
    /// app running. Used between experiment rounds.
    pub fn rearm(&mut self, name: &str, app: &AppSpec) -> Result<(), SimError> {
        let idx = self.cluster_idx(name)?;
        let cluster = &mut self.clusters[idx];
        cluster.status = ClusterStatus::Active;
        cluster.failed_at_ms = None;
        cluster.failure_reported = false;
        cluster.apps = vec![AppInstance {
            instance: format!("{}@{}", app.name, name),
            spec: app.clone(),
        }];
        Ok(())
    }

    pub fn add_app_instance(&mut self, name: &str, instance: AppInstance) -> Result<(), SimError> {
        let idx = self.cluster_idx(name)?;
        self.clusters[idx].apps.push(instance);
        Ok(())
    }

    pub fn remove_app_instance(&mut self, name: &str, instance: &str) -> Result<(), SimError> {
        let idx = self.cluster_idx(name)?;
        self.clusters[idx].apps.retain(|a| a.instance != instance);
        Ok(())
    }

    /// Stores a backup of `app_name`, which must currently run on the
    /// cluster. Backup names are unique within the store.
    pub fn create_backup(&mut self, cluster: &str, app_name: &str) -> Result<BackupRecord, SimError> {
        let idx = self.cluster_idx(cluster)?;
        let app = self.clusters[idx]
            .apps
            .iter()
            .find(|a| a.spec.name == app_name)
            .ok_or_else(|| SimError::AppNotRunning {
                cluster: cluster.to_string(),
                app: app_name.to_string(),
            })?
            .spec
            .clone();
        let record = BackupRecord {
            source_cluster: cluster.to_string(),
            app,
            created_at_ms: self.clock.now_ms,
            backup_name: format!("{cluster}-{app_name}-{:04}", self.backup_seq),
        };
        self.backup_seq += 1;
        self.backups.push(record.clone());
        Ok(record)
    }

    /// Schedules a restored app instance to start running on `target` at
    /// `complete_at_ms`; its load appears at completion.
    pub(crate) fn schedule_restore(
        &mut self,
        target: &str,
        instance: AppInstance,
        complete_at_ms: u64,
    ) -> Result<(), SimError> {
        let target_idx = self.cluster_idx(target)?;
        self.pending.push(PendingRestore {
            target_idx,
            instance,
            complete_at_ms,
        });
        if complete_at_ms <= self.clock.now_ms {
            self.apply_due_restores();
        }
        Ok(())
    }

    /// The most recent `lookback` utilization observations for a cluster:
    /// slot-boundary history samples plus the live reading as the newest
    /// entry, front-padded by repeating the earliest observation when the
    /// history is still shorter than the window.
    pub fn recent_window(&self, name: &str, lookback: usize) -> Result<Vec<f64>, SimError> {
        assert!(lookback >= 1);
        let idx = self.cluster_idx(name)?;
        let cluster = &self.clusters[idx];
        let mut obs: Vec<f64> = cluster.history_fractions();
        if self.clock.now_ms % self.clock.slot_ms != 0 {
            obs.push(cluster.utilization());
        }
        if obs.len() > lookback {
            obs.drain(..obs.len() - lookback);
        } else {
            let pad = lookback - obs.len();
            let earliest = obs[0];
            for _ in 0..pad {
                obs.insert(0, earliest);
            }
        }
        Ok(obs)
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            now_s: self.now_s(),
            slot_seconds: (self.clock.slot_ms / 1000) as u32,
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterSnapshot {
                    name: c.name().to_string(),
                    order_index: c.spec.order_index,
                    alloc_millicores: c.spec.alloc_millicores,
                    status: c.status,
                    utilization_pct: util_to_pct(c.utilization_u()),
                    running_apps: c.apps.iter().map(|a| a.instance.clone()).collect(),
                    history_pct: c.history.iter().map(|u| util_to_pct(*u)).collect(),
                })
                .collect(),
            backups: self.backups.records().to_vec(),
        }
    }
}

/// Read-only serializable view of the world, for reports and debugging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSnapshot {
    pub now_s: f64,
    pub slot_seconds: u32,
    pub clusters: Vec<ClusterSnapshot>,
    pub backups: Vec<BackupRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSnapshot {
    pub name: String,
    pub order_index: u32,
    pub alloc_millicores: u32,
    pub status: ClusterStatus,
    pub utilization_pct: f64,
    pub running_apps: Vec<String>,
    pub history_pct: Vec<f64>,
}
