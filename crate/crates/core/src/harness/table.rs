use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environments::Mode;

use super::HarnessError;

/// First line of `results.csv`.
pub const RESULTS_SCHEMA: &str = "# disentangle-results v1";
/// First line of `trials.csv`.
pub const TRIALS_SCHEMA: &str = "# disentangle-trials v1";
/// First line of `timing.csv`.
pub const TIMING_SCHEMA: &str = "# disentangle-timing v1";

/// Obstacle count of a row, or the aggregate over all counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CountKey {
    Count(usize),
    All,
}

impl fmt::Display for CountKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountKey::Count(n) => write!(f, "{n}"),
            CountKey::All => f.write_str("all"),
        }
    }
}

impl FromStr for CountKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(CountKey::All);
        }
        s.parse()
            .map(CountKey::Count)
            .map_err(|_| format!("bad obstacle count '{s}'"))
    }
}

impl Serialize for CountKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CountKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Success within `budget` paths for one (mode, count, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: Mode,
    pub obstacles: CountKey,
    pub method: String,
    pub budget: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean executed paths over the trials counted as successes; empty when
    /// none succeeded.
    pub mean_paths_on_success: Option<f64>,
    /// Mean segment-cost samples per planning call over the cell's trials.
    pub mean_plan_samples: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn modes(&self) -> Vec<Mode> {
        let mut modes: Vec<Mode> = self.rows.iter().map(|r| r.mode).collect();
        modes.sort();
        modes.dedup();
        modes
    }

    /// Largest `b` present for a mode.
    pub fn max_budget(&self, mode: Mode) -> Option<usize> {
        self.rows.iter().filter(|r| r.mode == mode).map(|r| r.budget).max()
    }

    pub fn get(&self, mode: Mode, count: CountKey, method: &str, budget: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.obstacles == count && r.method == method && r.budget == budget)
    }

    /// Row at the largest budget for the cell.
    pub fn at_budget(&self, mode: Mode, count: CountKey, method: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode && r.obstacles == count && r.method == method)
            .max_by_key(|r| r.budget)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        writeln!(out, "{RESULTS_SCHEMA}")?;
        write_records(out, &self.rows)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, HarnessError> {
        Ok(ResultsTable {
            rows: read_records(input, RESULTS_SCHEMA)?,
        })
    }
}

/// One line of the raw trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub mode: Mode,
    pub obstacles: usize,
    pub method: String,
    pub trial: usize,
    pub scenario_seed: u64,
    /// Scenario draws rejected as infeasible before this one.
    pub redraws: usize,
    pub seed: u64,
    pub success: bool,
    pub paths_executed: usize,
    pub collisions: usize,
    pub map_size: usize,
    pub plan_samples: usize,
}

/// One planning call; wall-clock values live only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub mode: Mode,
    pub obstacles: usize,
    pub method: String,
    pub trial: usize,
    pub attempt: usize,
    pub map_size: usize,
    pub samples: usize,
    pub plan_seconds: f64,
}

pub(crate) fn write_records<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_records<R: Read, T: for<'de> Deserialize<'de>>(
    mut input: R,
    schema: &str,
) -> Result<Vec<T>, HarnessError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    if first.trim_end() != schema {
        return Err(HarnessError::Schema {
            expected: schema.to_string(),
            found: first.to_string(),
        });
    }
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

pub fn write_trials<W: Write>(mut out: W, rows: &[TrialRow]) -> Result<(), HarnessError> {
    writeln!(out, "{TRIALS_SCHEMA}")?;
    write_records(out, rows)
}

pub fn read_trials<R: Read>(input: R) -> Result<Vec<TrialRow>, HarnessError> {
    read_records(input, TRIALS_SCHEMA)
}

pub fn write_timing<W: Write>(mut out: W, rows: &[TimingRow]) -> Result<(), HarnessError> {
    writeln!(out, "{TIMING_SCHEMA}")?;
    write_records(out, rows)
}

pub fn read_timing<R: Read>(input: R) -> Result<Vec<TimingRow>, HarnessError> {
    read_records(input, TIMING_SCHEMA)
}
