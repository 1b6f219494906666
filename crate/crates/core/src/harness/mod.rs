//! Experiment runner, statistics and rendering.
//!
//! [`run_experiment`] runs every (obstacle count, method, trial) cell of an
//! [`ExperimentConfig`], each trial on its own scenario and seed, and reduces
//! the outcomes into a [`ResultsTable`] of success-within-`b` rates with
//! bootstrap intervals. Trials are independent, so they run on a rayon pool
//! when the `parallel` feature is enabled; the reduction is ordered by
//! (count, method, trial), so the outputs do not depend on scheduling.
//!
//! Files written by [`ExperimentOutput::write_to`]:
//!
//! * `results.csv`: one row per (mode, count, method, b), plus pooled rows
//!   with count `all` when several counts were run.
//! * `trials.csv`: one row per trial.
//! * `timing.csv`: one row per planning call with wall-clock time. It is the
//!   only non-deterministic output.
//! * `dumps/`: scenario JSON, failure-map text, last path and planner trace for
//!   trial 0 of each cell, listed in `dumps/index.json`.

mod report;
mod stats;
mod svg;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::{
    generate_scenario, run_disentangle, Environment, Method, Mode, ScenarioError, ScenarioSpec, TrialResult,
    TrialSettings,
};
use crate::failure_map::{FailureMap, FailureMapError};
use crate::planner::Path;
use crate::seed;

pub use report::{family_of, sensitivity, summarize, Sensitivity};
pub use stats::{bootstrap_ci, quantile_sorted, success_rate, DEFAULT_RESAMPLES};
pub use svg::{render_map_svg, render_success_chart, GRID};
pub use table::{
    read_timing, read_trials, write_timing, write_trials, CountKey, ResultRow, ResultsTable, TimingRow, TrialRow,
    RESULTS_SCHEMA, TIMING_SCHEMA, TRIALS_SCHEMA,
};

/// Infeasible scenario draws tolerated per trial before giving up.
pub const MAX_SCENARIO_REDRAWS: usize = 100;

const SCENARIO_TAG: u64 = 0x5343_454e;
const CI_TAG: u64 = 0x4349;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected schema line: expected '{expected}', found '{found}'")]
    Schema { expected: String, found: String },
    #[error("unsupported mode {0}: map rendering is 2-D only")]
    UnsupportedMode(Mode),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Map(#[from] FailureMapError),
}

/// How trials are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon work pool; sequential when built without the `parallel` feature.
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    fn map<T: Sync, R: Send>(self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub counts: Vec<usize>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub budget: usize,
    pub base_seed: u64,
    pub settings: TrialSettings,
    /// Obstacle radius range override (m).
    pub radius_range: Option<(f64, f64)>,
    pub resamples: usize,
    pub level: f64,
    /// Produce scenario/map/trace dumps for trial 0 of each cell.
    pub dumps: bool,
    /// Compliant failure detection in every scenario.
    pub compliant: bool,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, counts: Vec<usize>, trials: usize, methods: Vec<Method>) -> Self {
        ExperimentConfig {
            mode,
            counts,
            trials,
            methods,
            budget: 20,
            base_seed: 0,
            settings: TrialSettings::default(),
            radius_range: None,
            resamples: DEFAULT_RESAMPLES,
            level: 0.95,
            dumps: false,
            compliant: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.counts.is_empty() || self.methods.is_empty() {
            return bad("need at least one obstacle count and one method");
        }
        let mut counts = self.counts.clone();
        counts.sort_unstable();
        counts.dedup();
        if counts.len() != self.counts.len() {
            return bad("obstacle counts must be distinct");
        }
        let mut labels: Vec<String> = self.methods.iter().map(Method::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return bad("methods must be distinct");
        }
        if self.resamples == 0 || !(self.level > 0.0 && self.level < 1.0) {
            return bad("bootstrap needs resamples >= 1 and level in (0, 1)");
        }
        self.settings
            .planner
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Seed of the trial's planner/walk randomness.
    pub fn method_seed(&self, count: usize, method: &Method, trial: usize) -> u64 {
        seed::derive(self.base_seed, &[count as u64, method.id(), trial as u64])
    }

    /// Seed of a scenario draw. Methods share scenarios so that comparisons
    /// are paired.
    pub fn scenario_seed(&self, count: usize, trial: usize, redraw: usize) -> u64 {
        seed::derive(self.base_seed, &[SCENARIO_TAG, count as u64, trial as u64, redraw as u64])
    }
}

/// Scenario of one (count, trial) pair.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub count: usize,
    pub trial: usize,
    pub seed: u64,
    pub redraws: usize,
    pub env: Environment,
}

/// Draws the scenario for `(count, trial)`, redrawing with a bumped seed
/// while placement is infeasible.
pub fn draw_scenario(cfg: &ExperimentConfig, count: usize, trial: usize) -> Result<Scenario, HarnessError> {
    let spec = ScenarioSpec {
        mode: cfg.mode,
        obstacles: count,
        radius_range: cfg.radius_range,
    };
    for redraw in 0..=MAX_SCENARIO_REDRAWS {
        let seed = cfg.scenario_seed(count, trial, redraw);
        match generate_scenario(&spec, seed) {
            Ok(mut env) => {
                env.exec.compliant = cfg.compliant;
                return Ok(Scenario {
                    count,
                    trial,
                    seed,
                    redraws: redraw,
                    env,
                })
            }
            Err(ScenarioError::Infeasible(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(HarnessError::Scenario(ScenarioError::Infeasible(MAX_SCENARIO_REDRAWS)))
}

/// A named text artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub name: String,
    pub contents: String,
}

/// Files belonging to one dumped trial, relative to `dumps/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub mode: Mode,
    pub obstacles: usize,
    pub method: String,
    pub scenario: String,
    pub map: String,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub trace: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub results: ResultsTable,
    pub trials: Vec<TrialRow>,
    pub timing: Vec<TimingRow>,
    pub dumps: Vec<Dump>,
    pub dump_index: Vec<DumpEntry>,
}

impl ExperimentOutput {
    /// Writes `results.csv`, `trials.csv`, `timing.csv` and `dumps/` into
    /// `dir`, creating it if needed.
    pub fn write_to(&self, dir: &FsPath) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        self.results.write_csv(fs::File::create(dir.join("results.csv"))?)?;
        write_trials(fs::File::create(dir.join("trials.csv"))?, &self.trials)?;
        write_timing(fs::File::create(dir.join("timing.csv"))?, &self.timing)?;
        if !self.dump_index.is_empty() {
            let dumps = dir.join("dumps");
            fs::create_dir_all(&dumps)?;
            for d in &self.dumps {
                fs::write(dumps.join(&d.name), &d.contents)?;
            }
            fs::write(
                dumps.join("index.json"),
                serde_json::to_string_pretty(&self.dump_index)? + "\n",
            )?;
        }
        Ok(())
    }
}

/// File-name form of a method label, e.g. `hard-0.01`.
pub fn method_slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

struct Job<'a> {
    scenario: &'a Scenario,
    method: Method,
    method_index: usize,
}

/// Runs the full experiment grid.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let keys: Vec<(usize, usize)> = cfg
        .counts
        .iter()
        .flat_map(|&c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let scenarios: Vec<Scenario> = exec
        .map(&keys, |&(c, t)| draw_scenario(cfg, c, t))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let by_key: BTreeMap<(usize, usize), &Scenario> = scenarios.iter().map(|s| ((s.count, s.trial), s)).collect();

    let mut jobs = Vec::with_capacity(scenarios.len() * cfg.methods.len());
    for &count in &cfg.counts {
        for (method_index, &method) in cfg.methods.iter().enumerate() {
            for trial in 0..cfg.trials {
                jobs.push(Job {
                    scenario: by_key[&(count, trial)],
                    method,
                    method_index,
                });
            }
        }
    }
    let results: Vec<TrialResult> = exec.map(&jobs, |job| {
        let s = job.scenario;
        let settings = TrialSettings {
            keep_trace: cfg.dumps && s.trial == 0,
            ..cfg.settings
        };
        let seed = cfg.method_seed(s.count, &job.method, s.trial);
        run_disentangle(&s.env, job.method, cfg.budget, seed, &settings)
    });

    let mut trials = Vec::with_capacity(jobs.len());
    let mut timing = Vec::new();
    let mut dumps = Vec::new();
    let mut dump_index = Vec::new();
    for (job, r) in jobs.iter().zip(&results) {
        let s = job.scenario;
        let label = job.method.label();
        let plan_samples: usize = r.plan_timings.iter().map(|t| t.samples).sum();
        trials.push(TrialRow {
            mode: cfg.mode,
            obstacles: s.count,
            method: label.clone(),
            trial: s.trial,
            scenario_seed: s.seed,
            redraws: s.redraws,
            seed: r.seed,
            success: r.success,
            paths_executed: r.paths_executed,
            collisions: r.collisions,
            map_size: r.map.len(),
            plan_samples,
        });
        for (attempt, t) in r.plan_timings.iter().enumerate() {
            timing.push(TimingRow {
                mode: cfg.mode,
                obstacles: s.count,
                method: label.clone(),
                trial: s.trial,
                attempt,
                map_size: t.map_size,
                samples: t.samples,
                plan_seconds: t.seconds,
            });
        }
        if cfg.dumps && s.trial == 0 {
            let stem = format!("{}-n{}", cfg.mode, s.count);
            let scenario = format!("{stem}-scenario.json");
            if job.method_index == 0 {
                dumps.push(Dump {
                    name: scenario.clone(),
                    contents: s.env.to_json() + "\n",
                });
            }
            let cell = format!("{stem}-{}", method_slug(&label));
            let map = format!("{cell}-map.txt");
            dumps.push(Dump {
                name: map.clone(),
                contents: r.map.to_text(cfg.mode.dim()),
            });
            let path = r.last_path.as_ref().map(|p| {
                let name = format!("{cell}-path.json");
                dumps.push(Dump {
                    name: name.clone(),
                    contents: serde_json::to_string_pretty(p).expect("path serializes") + "\n",
                });
                name
            });
            let trace = r.last_trace.as_ref().map(|t| {
                let name = format!("{cell}-trace.json");
                dumps.push(Dump {
                    name: name.clone(),
                    contents: serde_json::to_string(t).expect("trace serializes") + "\n",
                });
                name
            });
            dump_index.push(DumpEntry {
                mode: cfg.mode,
                obstacles: s.count,
                method: label,
                scenario,
                map,
                path,
                trace,
            });
        }
    }

    let results = aggregate(cfg, &trials);
    Ok(ExperimentOutput {
        results,
        trials,
        timing,
        dumps,
        dump_index,
    })
}

/// Reduces the trial log into success-within-`b` rows for `b = 1..=budget`.
/// Pooled rows (count `all`) are added when the log spans several counts.
pub fn aggregate(cfg: &ExperimentConfig, trials: &[TrialRow]) -> ResultsTable {
    let mut rows = Vec::new();
    let mut keys: Vec<CountKey> = cfg.counts.iter().map(|&c| CountKey::Count(c)).collect();
    if cfg.counts.len() > 1 {
        keys.push(CountKey::All);
    }
    for key in keys {
        for method in &cfg.methods {
            let label = method.label();
            let cell: Vec<&TrialRow> = trials
                .iter()
                .filter(|t| t.method == label && (key == CountKey::All || key == CountKey::Count(t.obstacles)))
                .collect();
            if cell.is_empty() {
                continue;
            }
            let calls: usize = cell.iter().map(|t| t.paths_executed).sum();
            let samples: usize = cell.iter().map(|t| t.plan_samples).sum();
            let mean_plan_samples = if calls == 0 { 0.0 } else { samples as f64 / calls as f64 };
            let key_bits = match key {
                CountKey::Count(n) => n as u64,
                CountKey::All => u64::MAX,
            };
            for b in 1..=cfg.budget {
                let outcomes: Vec<bool> = cell.iter().map(|t| t.success && t.paths_executed <= b).collect();
                let rate = success_rate(&outcomes);
                let ci_seed = seed::derive(cfg.base_seed, &[CI_TAG, key_bits, method.id(), b as u64]);
                let (lo, hi) = bootstrap_ci(&outcomes, cfg.resamples, cfg.level, ci_seed);
                let hits: Vec<usize> = cell
                    .iter()
                    .zip(&outcomes)
                    .filter(|(_, &o)| o)
                    .map(|(t, _)| t.paths_executed)
                    .collect();
                let mean_paths_on_success =
                    (!hits.is_empty()).then(|| hits.iter().sum::<usize>() as f64 / hits.len() as f64);
                rows.push(ResultRow {
                    mode: cfg.mode,
                    obstacles: key,
                    method: label.clone(),
                    budget: b,
                    trials: cell.len(),
                    success_rate: rate,
                    // interpolated quantiles can sit a hair off the sample mean
                    ci_lo: lo.min(rate),
                    ci_hi: hi.max(rate),
                    mean_paths_on_success,
                    mean_plan_samples,
                });
            }
        }
    }
    ResultsTable { rows }
}

/// Reads `results.csv` from an output directory.
pub fn load_results(dir: &FsPath) -> Result<ResultsTable, HarnessError> {
    ResultsTable::read_csv(fs::File::open(dir.join("results.csv"))?)
}

/// Renders the charts and map snapshots of an output directory into
/// `dir/plots/` and returns the written files.
///
/// Writes one success-versus-budget chart per (mode, count) and, for 2-D
/// dumps, one map SVG per dumped trial.
pub fn plot_dir(dir: &FsPath) -> Result<Vec<PathBuf>, HarnessError> {
    let table = load_results(dir)?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    for mode in table.modes() {
        let mut counts: Vec<CountKey> = table.rows.iter().filter(|r| r.mode == mode).map(|r| r.obstacles).collect();
        counts.sort();
        counts.dedup();
        for count in counts {
            if let Some(svg) = render_success_chart(&table, mode, count) {
                let file = plots.join(format!("success-{mode}-n{count}.svg"));
                fs::write(&file, svg)?;
                written.push(file);
            }
        }
    }
    let index = dir.join("dumps").join("index.json");
    if index.exists() {
        let entries: Vec<DumpEntry> = serde_json::from_str(&fs::read_to_string(&index)?)?;
        for e in entries.iter().filter(|e| e.mode == Mode::TwoD) {
            let dumps = dir.join("dumps");
            let env = Environment::from_json(&fs::read_to_string(dumps.join(&e.scenario))?)?;
            let (map, _) = FailureMap::from_text(&fs::read_to_string(dumps.join(&e.map))?)?;
            let path: Option<Path> = match &e.path {
                Some(p) => Some(serde_json::from_str(&fs::read_to_string(dumps.join(p))?)?),
                None => None,
            };
            let svg = render_map_svg(&map, &env, path.as_ref())?;
            let file = plots.join(format!("map-{}-n{}-{}.svg", e.mode, e.obstacles, method_slug(&e.method)));
            fs::write(&file, svg)?;
            written.push(file);
        }
    }
    Ok(written)
}
