//! Grid summaries, the per-diagonal report and the asymptotic cost table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{expected_position_bits, total_bits_model};
use crate::error::{Error, Result};

/// Final validation error per (temporal, gradient) sparsity cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    /// Row headers: temporal sparsity `1/n`.
    pub temporal: Vec<f64>,
    /// Column headers: gradient sparsity `p`.
    pub gradient: Vec<f64>,
    /// `errors[row][col]`; `None` for cells that were not run.
    pub errors: Vec<Vec<Option<f64>>>,
}

const CORNER: &str = "temporal\\gradient";

impl GridSummary {
    /// Builds the matrix from `(n, p, error)` triples. Rows are ordered by
    /// decreasing temporal sparsity, columns by decreasing `p`.
    pub fn from_cells(cells: &[(usize, f64, f64)]) -> Self {
        let mut ns: Vec<usize> = cells.iter().map(|c| c.0).collect();
        ns.sort_unstable();
        ns.dedup();
        let mut ps: Vec<f64> = cells.iter().map(|c| c.1).collect();
        ps.sort_by(|a, b| b.total_cmp(a));
        ps.dedup();
        let mut errors = vec![vec![None; ps.len()]; ns.len()];
        for &(n, p, e) in cells {
            let r = ns.iter().position(|&x| x == n).expect("n present");
            let c = ps.iter().position(|&x| x == p).expect("p present");
            errors[r][c] = Some(e);
        }
        Self {
            temporal: ns.iter().map(|&n| 1.0 / n as f64).collect(),
            gradient: ps,
            errors,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![CORNER.to_string()];
        header.extend(self.gradient.iter().map(|p| p.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (t, row) in self.temporal.iter().zip(&self.errors) {
            let mut rec = vec![t.to_string()];
            rec.extend(
                row.iter()
                    .map(|e| e.map_or_else(String::new, |v| v.to_string())),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut rows = r.records();
        let header = rows
            .next()
            .ok_or_else(|| Error::Parse("empty grid summary".into()))?
            .map_err(csv_err)?;
        let gradient = header
            .iter()
            .skip(1)
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        let mut temporal = Vec::new();
        let mut errors = Vec::new();
        for rec in rows {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != gradient.len() + 1 {
                return Err(Error::Parse(format!(
                    "grid summary row has {} fields, expected {}",
                    rec.len(),
                    gradient.len() + 1
                )));
            }
            temporal.push(parse_f64(&rec[0])?);
            errors.push(
                rec.iter()
                    .skip(1)
                    .map(|f| {
                        if f.trim().is_empty() {
                            Ok(None)
                        } else {
                            parse_f64(f).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            temporal,
            gradient,
            errors,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("`{s}` is not a number")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalGroup {
    pub total_sparsity: f64,
    pub cells: usize,
    pub mean: f64,
    /// max - min of the errors in the group.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalReport {
    pub groups: Vec<DiagonalGroup>,
    /// Mean spread over groups with at least two cells.
    pub mean_within_spread: f64,
    /// max - min of the group means.
    pub between_range: f64,
    /// Mean spread across each row (fixed temporal sparsity).
    pub mean_row_spread: f64,
    /// Mean spread down each column (fixed gradient sparsity).
    pub mean_column_spread: f64,
}

impl DiagonalReport {
    /// Whether cells of equal total sparsity agree more closely than cells
    /// of different total sparsity.
    pub fn total_sparsity_predicts_error(&self) -> bool {
        self.mean_within_spread < self.between_range
    }
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Groups cells by the product of their temporal and gradient sparsity.
pub fn diagonal_report(summary: &GridSummary) -> DiagonalReport {
    let mut groups: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
    for (t, row) in summary.temporal.iter().zip(&summary.errors) {
        for (g, e) in summary.gradient.iter().zip(row) {
            if let Some(e) = e {
                let total = t * g;
                // products like 0.1 * 0.01 and 0.01 * 0.1 differ in the last bit
                let key = (total.log10() * 1e6).round() as i64;
                groups.entry(key).or_insert((total, Vec::new())).1.push(*e);
            }
        }
    }
    let groups: Vec<DiagonalGroup> = groups
        .into_values()
        .rev()
        .map(|(total, errs)| DiagonalGroup {
            total_sparsity: total,
            cells: errs.len(),
            mean: mean(&errs),
            spread: spread(&errs),
        })
        .collect();
    let within: Vec<f64> = groups
        .iter()
        .filter(|g| g.cells >= 2)
        .map(|g| g.spread)
        .collect();
    let means: Vec<f64> = groups.iter().map(|g| g.mean).collect();
    let row_spreads: Vec<f64> = summary
        .errors
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|r| r.len() >= 2)
        .map(|r| spread(&r))
        .collect();
    let col_spreads: Vec<f64> = (0..summary.gradient.len())
        .map(|c| {
            summary
                .errors
                .iter()
                .filter_map(|row| row[c])
                .collect::<Vec<_>>()
        })
        .filter(|c| c.len() >= 2)
        .map(|c| spread(&c))
        .collect();
    DiagonalReport {
        mean_within_spread: mean(&within),
        between_range: spread(&means),
        mean_row_spread: mean(&row_spreads),
        mean_column_spread: mean(&col_spreads),
        groups,
    }
}

impl fmt::Display for DiagonalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>14} {:>6} {:>10} {:>10}",
            "total", "cells", "mean", "spread"
        )?;
        for g in &self.groups {
            writeln!(
                f,
                "{:>14.3e} {:>6} {:>10.4} {:>10.4}",
                g.total_sparsity, g.cells, g.mean, g.spread
            )?;
        }
        writeln!(
            f,
            "mean spread within equal total sparsity: {:.4}",
            self.mean_within_spread
        )?;
        writeln!(
            f,
            "range of means across total sparsity:    {:.4}",
            self.between_range
        )?;
        writeln!(
            f,
            "mean spread along rows:                  {:.4}",
            self.mean_row_spread
        )?;
        writeln!(
            f,
            "mean spread along columns:               {:.4}",
            self.mean_column_spread
        )?;
        write!(
            f,
            "total sparsity predicts error: {}",
            if self.total_sparsity_predicts_error() {
                "yes"
            } else {
                "no"
            }
        )
    }
}

/// Position cost per entry: a fixed width, or the Golomb expectation at
/// the row's gradient sparsity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionBits {
    Fixed(f64),
    Named(PositionCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionCode {
    Golomb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Row {
    pub name: String,
    /// Fraction of iterations that communicate.
    pub temporal: f64,
    /// Fraction of entries sent per message.
    pub gradient: f64,
    pub value_bits: f64,
    pub position_bits: PositionBits,
}

impl Table1Row {
    pub fn new(
        name: &str,
        temporal: f64,
        gradient: f64,
        value_bits: f64,
        position_bits: PositionBits,
    ) -> Self {
        Self {
            name: name.to_string(),
            temporal,
            gradient,
            value_bits,
            position_bits,
        }
    }
}

/// The comparison rows used when a config lists none.
pub fn default_table1_rows() -> Vec<Table1Row> {
    use PositionBits::*;
    vec![
        Table1Row::new("Baseline", 1.0, 1.0, 32.0, Fixed(0.0)),
        Table1Row::new("8-bit quantization", 1.0, 1.0, 8.0, Fixed(0.0)),
        Table1Row::new("1-bit quantization", 1.0, 1.0, 1.0, Fixed(0.0)),
        Table1Row::new("Gradient Dropping", 1.0, 0.001, 32.0, Fixed(16.0)),
        Table1Row::new("Federated Averaging (n=10)", 0.1, 1.0, 32.0, Fixed(0.0)),
        Table1Row::new("Federated Averaging (n=1000)", 0.001, 1.0, 32.0, Fixed(0.0)),
        Table1Row::new(
            "Sparse Binary (1%, 1%)",
            0.01,
            0.01,
            0.0,
            Named(PositionCode::Golomb),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Line {
    pub name: String,
    pub temporal: f64,
    pub gradient: f64,
    pub value_bits: f64,
    pub position_bits: f64,
    /// Bits per parameter per iteration.
    pub bits_per_parameter: f64,
    pub compression: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub lines: Vec<Table1Line>,
}

pub fn table1_report(rows: &[Table1Row]) -> Result<Table1Report> {
    let baseline = total_bits_model(1.0, 1.0, 1.0, 0.0, 32.0, 1.0);
    let lines = rows
        .iter()
        .map(|r| {
            let position_bits = match r.position_bits {
                PositionBits::Fixed(b) => b,
                PositionBits::Named(PositionCode::Golomb) => expected_position_bits(r.gradient)?,
            };
            let bits = total_bits_model(
                1.0,
                r.temporal,
                r.gradient,
                position_bits,
                r.value_bits,
                1.0,
            );
            Ok(Table1Line {
                name: r.name.clone(),
                temporal: r.temporal,
                gradient: r.gradient,
                value_bits: r.value_bits,
                position_bits,
                bits_per_parameter: bits,
                compression: baseline / bits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1Report { lines })
}

impl fmt::Display for Table1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<30} {:>9} {:>9} {:>6} {:>9} {:>12} {:>12}",
            "method", "temporal", "gradient", "value", "position", "bits/param", "compression"
        )?;
        for l in &self.lines {
            writeln!(
                f,
                "{:<30} {:>8.3}% {:>8.3}% {:>6} {:>9.3} {:>12.3e} {:>11}x",
                l.name,
                100.0 * l.temporal,
                100.0 * l.gradient,
                l.value_bits,
                l.position_bits,
                l.bits_per_parameter,
                l.compression.floor()
            )?;
        }
        Ok(())
    }
}
