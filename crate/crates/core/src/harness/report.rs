use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use super::model::ModelParams;
use crate::tasks::{JointLoss, Task};
use crate::{Error, Result};

/// Mean loss components over one epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub main: f64,
    pub denoise: f64,
    pub l2: f64,
    pub total: f64,
}

impl EpochLog {
    pub fn from_mean(epoch: usize, losses: &[JointLoss]) -> Self {
        let n = losses.len().max(1) as f64;
        let mean = |f: fn(&JointLoss) -> f64| losses.iter().map(f).sum::<f64>() / n;
        Self {
            epoch,
            main: mean(|l| l.main),
            denoise: mean(|l| l.denoise),
            l2: mean(|l| l.l2),
            total: mean(|l| l.total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub label: String,
    pub users: usize,
    pub recall: f64,
    pub ndcg: f64,
}

/// Wall-clock measurements; the only part of a report that varies between
/// identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub epoch_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub task: Task,
    pub metrics: BTreeMap<String, f64>,
    /// Metrics that have no value on this test set.
    pub undefined_metrics: Vec<String>,
    pub buckets: Vec<BucketReport>,
    pub test_size: usize,
    /// Users (link task) left out of evaluation for lack of a held-out edge.
    pub excluded_users: usize,
    pub seed: u64,
    pub config_fingerprint: String,
    pub dataset_fingerprint: String,
    pub loss_trace: Vec<EpochLog>,
    pub eval_trace: Vec<EvalPoint>,
    pub config: RunConfig,
    pub timing: Timing,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// The report with timing cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    /// `name=value` lines for terminal output.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("variant={}", self.variant),
            format!("seed={}", self.seed),
            format!("test_size={}", self.test_size),
        ];
        if self.task == Task::Link {
            out.push(format!("excluded_users={}", self.excluded_users));
        }
        out.extend(self.metrics.iter().map(|(k, v)| format!("{k}={v:.6}")));
        out.extend(
            self.undefined_metrics
                .iter()
                .map(|k| format!("{k}=undefined")),
        );
        for b in &self.buckets {
            out.push(format!("bucket[{}].users={}", b.label, b.users));
            out.push(format!("bucket[{}].recall={:.6}", b.label, b.recall));
            out.push(format!("bucket[{}].ndcg={:.6}", b.label, b.ndcg));
        }
        if let Some(last) = self.loss_trace.last() {
            out.push(format!("final_loss={:.6}", last.total));
        }
        out.push(format!("config_fingerprint={}", self.config_fingerprint));
        out.push(format!("dataset_fingerprint={}", self.dataset_fingerprint));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        json_pretty(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Trained parameters with the configuration and data they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub dataset_fingerprint: String,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::invalid(format!("checkpoint serialization: {e}")))?;
        write_text(path.as_ref(), &text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn json_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("report serialization: {e}")))
}

/// JSON array of reports, e.g. one per grid point.
pub fn reports_to_json(reports: &[EvalReport]) -> Result<String> {
    json_pretty(reports)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}
