use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Mean and population standard deviation of per-vehicle test accuracy.
    pub mean_acc: f64,
    pub std_acc: f64,
    /// Accuracy of each regional model on its members' pooled test data.
    pub region_accs: Vec<f64>,
    /// Mean training-split loss of the models trained this round.
    pub mean_loss: f64,
    /// Aggregation weights of each region's members, on aggregation rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<Vec<f64>>>,
    /// Mean test accuracy of the hypernetwork-personalized vehicle models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personalized_mean_acc: Option<f64>,
    /// Per-vehicle test accuracy of the evaluated models.
    pub av_accs: Vec<f64>,
}

impl RoundMetrics {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics are always serialisable")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<RoundMetrics>,
}

impl MetricsLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&RoundMetrics> {
        self.records.last()
    }

    /// Mean accuracy of the final round.
    pub fn final_mean_acc(&self) -> Option<f64> {
        self.last().map(|r| r.mean_acc)
    }

    /// The JSON-lines stream, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_json_line());
            s.push('\n');
        }
        s
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records })
    }
}
