//! Experiment reports: per-round targets, utilization tables, recovery
//! timelines, and text / JSON / CSV renderings.

use serde::{Deserialize, Serialize};

use crate::recovery::RecoveryTimeline;

use super::ScenarioError;

/// Results of one multi-round scenario. Holds primary data only; flags
/// and timing summaries are derived on demand so every rendering agrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    /// Report columns (the source cluster is excluded), managed-list order.
    pub clusters: Vec<String>,
    pub threshold_pct: f64,
    pub initial_pct: Vec<f64>,
    pub rounds: Vec<RoundRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u32,
    /// `None` marks a round halted by an alert.
    pub target: Option<String>,
    pub utilization_pct: Vec<f64>,
    pub timeline: Option<RecoveryTimeline>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingSummary {
    pub completed_rounds: usize,
    /// Mean recovery time A, seconds.
    pub mean_recovery_s: f64,
    /// Mean restoration time B, seconds.
    pub mean_restoration_s: f64,
    /// Mean A - B, seconds.
    pub mean_gap_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl ScenarioReport {
    /// Utilizations after the last round (the initial state when no round
    /// ran).
    pub fn final_pct(&self) -> &[f64] {
        self.rounds
            .last()
            .map(|r| r.utilization_pct.as_slice())
            .unwrap_or(&self.initial_pct)
    }

    /// Per-cluster `utilization < threshold` marks for the final state;
    /// `true` renders as `O`.
    pub fn under_threshold(&self) -> Vec<bool> {
        self.final_pct()
            .iter()
            .map(|pct| *pct < self.threshold_pct)
            .collect()
    }

    /// Clusters at or over the degradation threshold after the last round.
    pub fn flags(&self) -> Vec<String> {
        self.clusters
            .iter()
            .zip(self.under_threshold())
            .filter(|(_, under)| !under)
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn summary(&self) -> Option<TimingSummary> {
        let timelines: Vec<&RecoveryTimeline> =
            self.rounds.iter().filter_map(|r| r.timeline.as_ref()).collect();
        if timelines.is_empty() {
            return None;
        }
        let n = timelines.len() as f64;
        let mean = |f: &dyn Fn(&RecoveryTimeline) -> u64| {
            timelines.iter().map(|t| f(t) as f64).sum::<f64>() / n / 1000.0
        };
        Some(TimingSummary {
            completed_rounds: timelines.len(),
            mean_recovery_s: mean(&RecoveryTimeline::recovery_ms),
            mean_restoration_s: mean(&RecoveryTimeline::restoration_ms),
            mean_gap_s: mean(&|t: &RecoveryTimeline| t.recovery_ms() - t.restoration_ms()),
        })
    }

    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.render_text(),
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn render_text(&self) -> String {
        let label_width = self
            .rounds
            .iter()
            .map(|r| r.round.to_string().len())
            .chain(["Round".len(), "Initial".len(), "Under".len() + 5])
            .max()
            .unwrap_or(8)
            + 2;
        let target_width = self
            .rounds
            .iter()
            .filter_map(|r| r.target.as_deref())
            .map(str::len)
            .chain(["Target".len(), "HALTED".len()])
            .max()
            .unwrap_or(6)
            + 2;
        let col_widths: Vec<usize> = self.clusters.iter().map(|c| c.len().max(4) + 2).collect();

        let mut out = String::new();
        let mut line = format!("{:<label_width$}{:<target_width$}", "Round", "Target");
        for (name, w) in self.clusters.iter().zip(&col_widths) {
            line.push_str(&format!("{name:>w$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');

        let mut push_row = |label: &str, target: &str, cells: &[String]| {
            let mut line = format!("{label:<label_width$}{target:<target_width$}");
            for (cell, w) in cells.iter().zip(&col_widths) {
                line.push_str(&format!("{cell:>w$}"));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        };

        let pct_cells = |pcts: &[f64]| -> Vec<String> {
            pcts.iter().map(|p| format!("{p:.0}%")).collect()
        };
        push_row("Initial", "-", &pct_cells(&self.initial_pct));
        for row in &self.rounds {
            push_row(
                &row.round.to_string(),
                row.target.as_deref().unwrap_or("HALTED"),
                &pct_cells(&row.utilization_pct),
            );
        }
        let marks: Vec<String> = self
            .under_threshold()
            .iter()
            .map(|under| if *under { "O".to_string() } else { "X".to_string() })
            .collect();
        push_row(&format!("Under {:.0}%", self.threshold_pct), "-", &marks);

        let flags = self.flags();
        if flags.is_empty() {
            out.push_str(&format!(
                "\nFlagged (>= {:.0}% utilization): none\n",
                self.threshold_pct
            ));
        } else {
            out.push_str(&format!(
                "\nFlagged (>= {:.0}% utilization): {}\n",
                self.threshold_pct,
                flags.join(", ")
            ));
        }
        if let Some(summary) = self.summary() {
            out.push_str(&format!(
                "Timing over {} completed rounds: mean recovery {:.2} s, mean restoration {:.2} s, mean difference {:.2} s\n",
                summary.completed_rounds,
                summary.mean_recovery_s,
                summary.mean_restoration_s,
                summary.mean_gap_s
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text).map_err(|e| super::ConfigError::Parse {
            path: "<report>".to_string(),
            key: String::new(),
            reason: e.to_string(),
        })?)
    }

    /// CSV carrying the same data as the JSON form: a header row naming
    /// the cluster columns, a threshold row, the initial state, then one
    /// row per round with the timeline timestamps.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .from_writer(Vec::new());
        let mut header = vec!["round".to_string(), "target".to_string(), "halted".to_string()];
        header.extend(self.clusters.iter().cloned());
        header.extend(
            [
                "failed_at_ms",
                "detected_at_ms",
                "command_issued_at_ms",
                "restore_completed_at_ms",
            ]
            .map(String::from),
        );
        w.write_record(&header).expect("csv write");
        w.write_record(["threshold", &self.threshold_pct.to_string()])
            .expect("csv write");

        let mut initial = vec!["initial".to_string(), String::new(), String::new()];
        initial.extend(self.initial_pct.iter().map(f64::to_string));
        initial.extend([String::new(), String::new(), String::new(), String::new()]);
        w.write_record(&initial).expect("csv write");

        for row in &self.rounds {
            let mut record = vec![
                row.round.to_string(),
                row.target.clone().unwrap_or_default(),
                row.target.is_none().to_string(),
            ];
            record.extend(row.utilization_pct.iter().map(f64::to_string));
            match &row.timeline {
                Some(t) => record.extend([
                    t.failed_at_ms.to_string(),
                    t.detected_at_ms.to_string(),
                    t.command_issued_at_ms.to_string(),
                    t.restore_completed_at_ms.to_string(),
                ]),
                None => record.extend([String::new(), String::new(), String::new(), String::new()]),
            }
            w.write_record(&record).expect("csv write");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, ScenarioError> {
        let bad = |reason: String| {
            ScenarioError::Config(super::ConfigError::Parse {
                path: "<report>".to_string(),
                key: String::new(),
                reason,
            })
        };
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_reader(text.as_bytes());
        let records: Vec<csv::StringRecord> = reader
            .records()
            .collect::<Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        if records.len() < 3 {
            return Err(bad("truncated report table".to_string()));
        }
        let header = &records[0];
        if header.len() < 8 {
            return Err(bad("header too short".to_string()));
        }
        let cluster_count = header.len() - 7;
        let clusters: Vec<String> = (3..3 + cluster_count)
            .map(|i| header[i].to_string())
            .collect();
        if records[1].get(0) != Some("threshold") {
            return Err(bad("missing threshold row".to_string()));
        }
        let threshold_pct: f64 = records[1]
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad("bad threshold value".to_string()))?;
        if records[2].get(0) != Some("initial") {
            return Err(bad("missing initial row".to_string()));
        }
        let parse_pcts = |record: &csv::StringRecord| -> Result<Vec<f64>, ScenarioError> {
            (3..3 + cluster_count)
                .map(|i| {
                    record
                        .get(i)
                        .unwrap_or("")
                        .parse::<f64>()
                        .map_err(|_| bad(format!("bad utilization in row `{record:?}`")))
                })
                .collect()
        };
        let initial_pct = parse_pcts(&records[2])?;
        let mut rounds = Vec::new();
        for record in &records[3..] {
            let round: u32 = record
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| bad("bad round index".to_string()))?;
            let halted = record.get(2) == Some("true");
            let target = if halted {
                None
            } else {
                Some(record.get(1).unwrap_or("").to_string())
            };
            let utilization_pct = parse_pcts(record)?;
            let timeline_fields: Vec<&str> = (3 + cluster_count..7 + cluster_count)
                .map(|i| record.get(i).unwrap_or(""))
                .collect();
            let timeline = if timeline_fields.iter().all(|f| f.is_empty()) {
                None
            } else {
                let ms: Vec<u64> = timeline_fields
                    .iter()
                    .map(|f| f.parse::<u64>().map_err(|_| bad("bad timeline value".to_string())))
                    .collect::<Result<_, _>>()?;
                Some(RecoveryTimeline {
                    failed_at_ms: ms[0],
                    detected_at_ms: ms[1],
                    command_issued_at_ms: ms[2],
                    restore_completed_at_ms: ms[3],
                })
            };
            rounds.push(RoundRow {
                round,
                target,
                utilization_pct,
                timeline,
            });
        }
        Ok(Self {
            clusters,
            threshold_pct,
            initial_pct,
            rounds,
        })
    }
}
