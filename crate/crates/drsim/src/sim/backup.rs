//! Simulated object-store backup repository.

use serde::{Deserialize, Serialize};

use super::{AppSpec, SimError};

/// One stored backup. Names are unique within a store; `created_at_ms` is
/// simulation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupRecord {
    pub source_cluster: String,
    pub app: AppSpec,
    pub created_at_ms: u64,
    pub backup_name: String,
}

impl BackupRecord {
    pub fn created_at_s(&self) -> f64 {
        self.created_at_ms as f64 / 1000.0
    }
}

/// Append-only backup repository. The store outlives cluster failures: a
/// disconnected cluster's backups stay readable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackupStore {
    records: Vec<BackupRecord>,
}

impl BackupStore {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[BackupRecord] {
        &self.records
    }

    pub(crate) fn push(&mut self, record: BackupRecord) {
        debug_assert!(
            self.get(&record.backup_name).is_none(),
            "backup names are unique"
        );
        self.records.push(record);
    }

    pub fn get(&self, backup_name: &str) -> Option<&BackupRecord> {
        self.records.iter().find(|r| r.backup_name == backup_name)
    }

    /// The newest backup for `cluster`; creation-time ties go to the later
    /// insertion.
    pub fn latest(&self, cluster: &str) -> Result<&BackupRecord, SimError> {
        self.records
            .iter()
            .filter(|r| r.source_cluster == cluster)
            .fold(None, |best: Option<&BackupRecord>, r| match best {
                Some(b) if b.created_at_ms > r.created_at_ms => Some(b),
                _ => Some(r),
            })
            .ok_or_else(|| SimError::BackupNotFound {
                cluster: cluster.to_string(),
            })
    }
}
