//! Per-round metrics and their newline-delimited JSON persistence.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: u64,
    /// Local iterations per client so far (`round * n`).
    pub local_iterations: u64,
    /// Participating client ids, ascending.
    pub participants: Vec<usize>,
    /// Mean mini-batch loss seen by participants during local training.
    pub local_loss: f64,
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Serialized upload size of each participant, in `participants` order.
    pub uplink_bits: Vec<u64>,
    pub round_uplink_bits: u64,
    /// Analytic estimate for the same messages (payload only, no headers).
    pub theoretical_bits: f64,
    /// Bits that dense 32-bit updates sent after every local iteration
    /// would have cost this round.
    pub dense_baseline_bits: u64,
    /// Nonzero entries sent this round, summed over participants.
    pub nonzeros: u64,
    pub cumulative_uplink_bits: u64,
    pub cumulative_dense_bits: u64,
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: u64,
    pub local_iterations: u64,
    /// Communication delay `n`.
    pub local_iters_per_round: usize,
    /// Gradient sparsity `p` (1 for dense strategies).
    pub sparsity: f64,
    pub mode: String,
    pub final_train_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub total_uplink_bits: u64,
    pub total_dense_bits: u64,
    pub total_theoretical_bits: f64,
    pub compression_ratio: f64,
}

impl RunSummary {
    /// Final validation error: `1 - accuracy` for classification, loss for
    /// regression.
    pub fn final_val_error(&self) -> Option<f64> {
        match (self.final_val_accuracy, self.final_val_loss) {
            (Some(acc), _) => Some(1.0 - acc),
            (None, loss) => loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum LogLine {
    Round(RoundRecord),
    Summary(RunSummary),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rounds: Vec<RoundRecord>,
    pub summary: Option<RunSummary>,
}

impl MetricsLog {
    pub fn write_line(out: &mut impl Write, line: &LogLine) -> Result<()> {
        let text = serde_json::to_string(line).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out, "{text}").map_err(|e| Error::io("<metrics>", e))
    }

    pub fn write_ndjson(&self, out: &mut impl Write) -> Result<()> {
        for r in &self.rounds {
            Self::write_line(out, &LogLine::Round(r.clone()))?;
        }
        if let Some(s) = &self.summary {
            Self::write_line(out, &LogLine::Summary(s.clone()))?;
        }
        Ok(())
    }

    pub fn read_ndjson(input: impl BufRead) -> Result<Self> {
        let mut log = MetricsLog::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<metrics>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("metrics line {}: {e}", i + 1)))?;
            match parsed {
                LogLine::Round(r) => log.rounds.push(r),
                LogLine::Summary(s) => log.summary = Some(s),
            }
        }
        log.validate()?;
        Ok(log)
    }

    /// Rounds strictly increasing and cumulative bits non-decreasing.
    pub fn validate(&self) -> Result<()> {
        for w in self.rounds.windows(2) {
            if w[1].round <= w[0].round {
                return Err(Error::Parse(format!(
                    "round {} follows round {}",
                    w[1].round, w[0].round
                )));
            }
            if w[1].cumulative_uplink_bits < w[0].cumulative_uplink_bits
                || w[1].cumulative_dense_bits < w[0].cumulative_dense_bits
            {
                return Err(Error::Parse(format!(
                    "cumulative bits decrease at round {}",
                    w[1].round
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(round: u64, cumulative: u64) -> RoundRecord {
        RoundRecord {
            round,
            local_iterations: round,
            participants: vec![0],
            local_loss: 0.5,
            train_loss: None,
            train_accuracy: None,
            val_loss: Some(0.25),
            val_accuracy: Some(0.875),
            uplink_bits: vec![cumulative],
            round_uplink_bits: 10,
            theoretical_bits: 8.0,
            dense_baseline_bits: 100,
            nonzeros: 1,
            cumulative_uplink_bits: cumulative,
            cumulative_dense_bits: 100 * round,
            compression_ratio: 10.0,
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let log = MetricsLog {
            rounds: vec![record(1, 10), record(2, 20)],
            summary: None,
        };
        let mut buf = Vec::new();
        log.write_ndjson(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        assert_eq!(MetricsLog::read_ndjson(&buf[..]).unwrap(), log);
    }

    #[test]
    fn rejects_non_increasing_rounds() {
        let log = MetricsLog {
            rounds: vec![record(2, 10), record(2, 20)],
            summary: None,
        };
        assert!(log.validate().is_err());
    }
}
