//! Experiment harness: TOML-configured trial batches over parameter grids,
//! CSV aggregation, scaling-trend sweeps, and the isolation Monte Carlo.
//!
//! A configuration names a scenario and a parameter grid; every grid point
//! runs a fixed number of seeded trials (in parallel, aggregated in seed
//! order) and produces one [`AggregateRow`]. Inconsistent grid points are
//! skipped with a logged reason; an experiment fails only when nothing runs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    make_impossibility_adversary, make_random_churn_adversary, make_reduction_adversary,
    sample_k_connected, Adversary, StaticAdversary,
};
use crate::graph::is_interval_k_connected;
use crate::hitting_game::{
    informed_player, play_game_with_oracle, uniform_player, GameError, GameParams, Player,
};
use crate::protocol::{
    run_broadcast_with, Outcome, ProtocolError, ProtocolParams, RoundClass, RunOptions, Tau,
    TrialRecord,
};
use crate::rng::{derive_seed, labels, NodeRandomness};

/// Errors from configuration, grid expansion, or trial execution.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad config: {0}")]
    Config(String),
    #[error("the parameter grid is empty")]
    EmptyGrid,
    #[error("all {0} grid points were skipped")]
    AllPointsSkipped(usize),
    #[error("a sweep must vary exactly one of k, tau, n; {0}")]
    BadAxis(String),
    #[error("a sweep needs at least 3 grid points, got {0}")]
    TooFewPoints(usize),
    #[error("trace of point {point}, trial {trial} failed its declared connectivity certificate")]
    TraceCertification { point: usize, trial: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// What a configuration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Broadcast trials against a configured adversary.
    Broadcast,
    /// Hitting-game trials for a configured player.
    HittingGame,
    /// Broadcast against the uninformable-set adversary (expected to never
    /// complete).
    Impossibility,
    /// Churn traces checked against their declared interval connectivity.
    ConnectivityCheck,
}

impl Scenario {
    fn name(self) -> &'static str {
        match self {
            Scenario::Broadcast => "broadcast",
            Scenario::HittingGame => "hitting-game",
            Scenario::Impossibility => "impossibility",
            Scenario::ConnectivityCheck => "connectivity-check",
        }
    }
}

/// τ in config files: a round count or the string `"unbounded"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauCfg {
    Finite(u64),
    Named(String),
}

impl TauCfg {
    pub fn to_tau(&self) -> Result<Tau, ExperimentError> {
        match self {
            TauCfg::Finite(t) => Ok(Tau::Finite(*t)),
            TauCfg::Named(s) if s.eq_ignore_ascii_case("unbounded") => Ok(Tau::Unbounded),
            TauCfg::Named(s) => Err(ExperimentError::Config(format!(
                "tau must be a round count or \"unbounded\", got {s:?}"
            ))),
        }
    }
}

/// Lists of parameter values; the grid is their cartesian product. Lists
/// irrelevant to the scenario are ignored; empty relevant lists fall back to
/// documented defaults, except the required ones (`n`, or `beta`/`ell`/`phi`
/// for the hitting game).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub tau: Vec<TauCfg>,
    pub t_window: Vec<u64>,
    /// `static`, `churn`, `impossibility`, or `reduction`.
    pub adversary: Vec<String>,
    pub extra_edge_prob: Vec<f64>,
    pub ell: Vec<u32>,
    pub c: Vec<f64>,
    pub beta: Vec<u32>,
    pub phi: Vec<u64>,
    /// `uniform` or `informed` (hitting game only).
    pub player: Vec<String>,
}

fn default_trials() -> usize {
    10
}
fn default_max_rounds() -> u64 {
    100_000
}
fn default_seed() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

/// One experiment: a scenario, a grid, and batch settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Record per-round diagnostics (busy fractions, isolation counts).
    /// Disable for very long runs to keep memory flat.
    #[serde(default = "default_true")]
    pub record_diagnostics: bool,
    /// Keep every raw trial record in the output (memory-heavy).
    #[serde(default)]
    pub keep_records: bool,
    /// Write every trial's dynamic trace into this directory and certify it
    /// against the adversary's declared interval connectivity.
    #[serde(default)]
    pub trace_dir: Option<PathBuf>,
    /// Default CSV output path (CLI `--out` overrides).
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// One resolved grid point.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub index: usize,
    pub adversary: String,
    pub player: String,
    pub n: usize,
    pub k: usize,
    pub tau: Tau,
    pub t_window: u64,
    pub extra_edge_prob: f64,
    pub ell: u32,
    pub c: f64,
    pub beta: u32,
    pub phi: u64,
}

impl GridPoint {
    fn describe(&self, scenario: Scenario) -> String {
        match scenario {
            Scenario::HittingGame => format!(
                "point {} ({}, beta={}, ell={}, phi={})",
                self.index, self.player, self.beta, self.ell, self.phi
            ),
            _ => format!(
                "point {} ({}, n={}, k={}, tau={}, T={})",
                self.index, self.adversary, self.n, self.k, self.tau, self.t_window
            ),
        }
    }
}

fn one_or<T: Clone>(list: &[T], default: T) -> Vec<T> {
    if list.is_empty() {
        vec![default]
    } else {
        list.to_vec()
    }
}

/// Expands the config's grid into resolved points, in deterministic order.
pub fn expand_grid(config: &ExperimentConfig) -> Result<Vec<GridPoint>, ExperimentError> {
    let g = &config.grid;
    let mut points = Vec::new();
    if config.scenario == Scenario::HittingGame {
        if g.beta.is_empty() || g.ell.is_empty() || g.phi.is_empty() {
            return Err(ExperimentError::EmptyGrid);
        }
        for player in one_or(&g.player, "uniform".into()) {
            for &beta in &g.beta {
                for &ell in &g.ell {
                    for &phi in &g.phi {
                        points.push(GridPoint {
                            index: points.len(),
                            adversary: String::new(),
                            player: player.clone(),
                            n: 0,
                            k: 0,
                            tau: Tau::Unbounded,
                            t_window: 0,
                            extra_edge_prob: 0.0,
                            ell,
                            c: 0.0,
                            beta,
                            phi,
                        });
                    }
                }
            }
        }
    } else {
        if g.n.is_empty() {
            return Err(ExperimentError::EmptyGrid);
        }
        let adversaries = match config.scenario {
            Scenario::Impossibility => vec!["impossibility".to_string()],
            _ => one_or(&g.adversary, "churn".into()),
        };
        for adversary in adversaries {
            for &n in &g.n {
                for &k in &one_or(&g.k, 1) {
                    for tau_cfg in &one_or(&g.tau, TauCfg::Named("unbounded".into())) {
                        let tau = tau_cfg.to_tau()?;
                        for &t_window in &one_or(&g.t_window, 1) {
                            for &extra in &one_or(&g.extra_edge_prob, 0.0) {
                                for &ell in &one_or(&g.ell, 2) {
                                    for &c in &one_or(&g.c, 4.0) {
                                        points.push(GridPoint {
                                            index: points.len(),
                                            adversary: adversary.clone(),
                                            player: String::new(),
                                            n,
                                            k,
                                            tau,
                                            t_window,
                                            extra_edge_prob: extra,
                                            ell,
                                            c,
                                            beta: 0,
                                            phi: 0,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    Ok(points)
}

/// One grid point's aggregate statistics, with the resolved parameters
/// echoed for provenance. Hitting-game rows reuse the shape: `adversary`
/// holds the player name, `fraction_completed` the win fraction, and the
/// round statistics describe rounds-to-win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub adversary: String,
    pub n: usize,
    pub k: usize,
    /// `"unbounded"` or the literal round count.
    pub tau: String,
    pub t_window: u64,
    pub psi: u64,
    pub script_t: u64,
    pub extra_edge_prob: f64,
    pub ell: u32,
    pub c: f64,
    pub beta: u32,
    pub phi: u64,
    pub trials: usize,
    /// Completed (or won / certified) trials over all trials, in `[0, 1]`.
    pub fraction_completed: f64,
    /// Statistics over completed trials only; 0 when none completed.
    pub mean_rounds: f64,
    pub median_rounds: f64,
    pub p10_rounds: f64,
    pub p90_rounds: f64,
    /// Busy rounds over simulated rounds (0 when diagnostics are off).
    pub busy_fraction: f64,
    /// Isolated rounds per elapsed phase (0 when diagnostics are off).
    pub isolations_per_phase: f64,
    pub bad_execution_rate: f64,
    pub base_seed: u64,
}

/// Writes rows as CSV with a header line.
pub fn write_rows_csv<W: std::io::Write>(out: W, rows: &[AggregateRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses rows back from CSV (exact round-trip of `write_rows_csv`).
pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<AggregateRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// A grid point that could not run, and why.
#[derive(Debug, Clone)]
pub struct SkippedPoint {
    pub point: String,
    pub reason: String,
}

/// Everything an experiment produced.
pub struct ExperimentOutput {
    pub rows: Vec<AggregateRow>,
    pub skipped: Vec<SkippedPoint>,
    /// Raw records, only when `keep_records` is set.
    pub records: Vec<TrialRecord>,
}

/// The seed of one trial: independent per (experiment seed, point, trial).
pub fn trial_seed(base: u64, point: usize, trial: u64) -> u64 {
    derive_seed(derive_seed(base, point as u64), trial)
}

fn rounds_run(outcome: &Outcome) -> u64 {
    match outcome {
        Outcome::Completed { round } => *round,
        Outcome::NotCompleted { max_rounds, .. } => *max_rounds,
        Outcome::Halted { round, .. } => *round,
    }
}

struct TrialOut {
    completed: Option<u64>,
    rounds: u64,
    busy_rounds: u64,
    diagnosed_rounds: u64,
    isolations: u64,
    bad: bool,
    certified: Option<bool>,
    record: Option<TrialRecord>,
}

fn build_adversary(point: &GridPoint, seed: u64) -> Result<Box<dyn Adversary>, String> {
    match point.adversary.as_str() {
        "static" => Ok(Box::new(StaticAdversary::new(sample_k_connected(point.n, point.k, seed)))),
        "churn" => {
            make_random_churn_adversary(point.n, point.k, point.t_window, point.extra_edge_prob)
                .map(|a| Box::new(a) as Box<dyn Adversary>)
                .map_err(|e| e.to_string())
        }
        "impossibility" => make_impossibility_adversary(point.n, point.k, point.t_window, 0)
            .map(|a| Box::new(a) as Box<dyn Adversary>)
            .map_err(|e| e.to_string()),
        "reduction" => make_reduction_adversary(point.n, point.ell, point.c, point.t_window)
            .map(|a| Box::new(a) as Box<dyn Adversary>)
            .map_err(|e| e.to_string()),
        other => Err(format!("unknown adversary {other:?}")),
    }
}

fn build_player(name: &str, seed: u64) -> Result<Box<dyn Player>, String> {
    match name {
        "uniform" => Ok(Box::new(uniform_player(seed))),
        "informed" => Ok(Box::new(informed_player(seed))),
        other => Err(format!("unknown player {other:?}")),
    }
}

/// Mean of a slice, 0 when empty.
fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Linear-interpolation percentile of a sorted slice, 0 when empty.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        len => {
            let pos = q.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

enum PointOutcome {
    Row(Box<AggregateRow>, Vec<TrialRecord>),
    Skipped(String),
}

fn run_broadcast_point(
    config: &ExperimentConfig,
    point: &GridPoint,
) -> Result<PointOutcome, ExperimentError> {
    let params = match ProtocolParams::new(point.n, point.k, point.tau, point.t_window, 0) {
        Ok(p) => p,
        Err(e) => return Ok(PointOutcome::Skipped(e.to_string())),
    };
    if let Err(reason) = build_adversary(point, trial_seed(config.seed, point.index, 0)) {
        return Ok(PointOutcome::Skipped(reason));
    }
    if let Some(dir) = &config.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let want_trace = config.trace_dir.is_some() || config.scenario == Scenario::ConnectivityCheck;

    let trials: Vec<Result<TrialOut, ExperimentError>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, point.index, t);
            let mut adversary = build_adversary(point, seed).expect("probed above");
            let opts = RunOptions {
                record_trace: want_trace,
                skip_diagnostics: !config.record_diagnostics,
                ..Default::default()
            };
            let record =
                run_broadcast_with(adversary.as_mut(), &params, seed, config.max_rounds, opts)?;
            let mut certified = None;
            if let Some(trace) = &record.trace {
                if let Some((t_window, k)) = adversary.declared_connectivity() {
                    certified = Some(is_interval_k_connected(trace, t_window, k).is_ok());
                }
                if let Some(dir) = &config.trace_dir {
                    if certified == Some(false) {
                        return Err(ExperimentError::TraceCertification {
                            point: point.index,
                            trial: t,
                        });
                    }
                    let name = format!(
                        "{}-point{}-trial{}.trace.json",
                        config.scenario.name(),
                        point.index,
                        t
                    );
                    trace.save(dir.join(name))?;
                }
            }
            let busy_rounds =
                record.diagnostics.iter().filter(|d| d.classification == RoundClass::Busy).count()
                    as u64;
            let isolations =
                record.diagnostics.iter().filter(|d| d.isolated_node.is_some()).count() as u64;
            Ok(TrialOut {
                completed: record.outcome.completion_round(),
                rounds: rounds_run(&record.outcome),
                busy_rounds,
                diagnosed_rounds: record.diagnostics.len() as u64,
                isolations,
                bad: record.bad_execution,
                certified,
                record: config.keep_records.then_some(TrialRecord {
                    trace: None,
                    transmitters: None,
                    ..record
                }),
            })
        })
        .collect();
    let trials = trials.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut completed: Vec<f64> =
        trials.iter().filter_map(|t| t.completed).map(|r| r as f64).collect();
    completed.sort_by(f64::total_cmp);
    let succeeded = match config.scenario {
        // Success means the trace certified at its declared (T, k).
        Scenario::ConnectivityCheck => trials.iter().filter(|t| t.certified == Some(true)).count(),
        _ => completed.len(),
    };
    let total_rounds: u64 = trials.iter().map(|t| t.diagnosed_rounds).sum();
    let total_busy: u64 = trials.iter().map(|t| t.busy_rounds).sum();
    let total_iso: u64 = trials.iter().map(|t| t.isolations).sum();
    let total_phases: u64 = trials.iter().map(|t| t.rounds.div_ceil(params.psi)).sum();
    let row = AggregateRow {
        scenario: config.scenario.name().into(),
        adversary: point.adversary.clone(),
        n: point.n,
        k: point.k,
        tau: point.tau.to_string(),
        t_window: point.t_window,
        psi: params.psi,
        script_t: params.script_t,
        extra_edge_prob: point.extra_edge_prob,
        ell: point.ell,
        c: point.c,
        beta: 0,
        phi: 0,
        trials: trials.len(),
        fraction_completed: succeeded as f64 / trials.len() as f64,
        mean_rounds: mean(&completed),
        median_rounds: percentile(&completed, 0.5),
        p10_rounds: percentile(&completed, 0.1),
        p90_rounds: percentile(&completed, 0.9),
        busy_fraction: if total_rounds == 0 {
            0.0
        } else {
            total_busy as f64 / total_rounds as f64
        },
        isolations_per_phase: if total_phases == 0 {
            0.0
        } else {
            total_iso as f64 / total_phases as f64
        },
        bad_execution_rate: trials.iter().filter(|t| t.bad).count() as f64 / trials.len() as f64,
        base_seed: config.seed,
    };
    let records = trials.into_iter().filter_map(|t| t.record).collect();
    Ok(PointOutcome::Row(Box::new(row), records))
}

fn run_game_point(
    config: &ExperimentConfig,
    point: &GridPoint,
) -> Result<PointOutcome, ExperimentError> {
    if let Err(e) = GameParams::new(point.beta, point.ell, point.phi, 0) {
        return Ok(PointOutcome::Skipped(e.to_string()));
    }
    if let Err(reason) = build_player(&point.player, 0) {
        return Ok(PointOutcome::Skipped(reason));
    }
    let oracle = point.player == "informed";
    let wins: Vec<Result<Option<u64>, ExperimentError>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.seed, point.index, t);
            let params = GameParams::new(point.beta, point.ell, point.phi, seed)?;
            let mut player = build_player(&point.player, seed).expect("probed above");
            let run = play_game_with_oracle(player.as_mut(), &params, config.max_rounds, oracle)?;
            Ok(run.outcome.win_round())
        })
        .collect();
    let wins = wins.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut won: Vec<f64> = wins.iter().flatten().map(|&r| r as f64).collect();
    won.sort_by(f64::total_cmp);
    let row = AggregateRow {
        scenario: config.scenario.name().into(),
        adversary: point.player.clone(),
        n: 0,
        k: 0,
        tau: "-".into(),
        t_window: 0,
        psi: 0,
        script_t: 0,
        extra_edge_prob: 0.0,
        ell: point.ell,
        c: 0.0,
        beta: point.beta,
        phi: point.phi,
        trials: wins.len(),
        fraction_completed: won.len() as f64 / wins.len() as f64,
        mean_rounds: mean(&won),
        median_rounds: percentile(&won, 0.5),
        p10_rounds: percentile(&won, 0.1),
        p90_rounds: percentile(&won, 0.9),
        busy_fraction: 0.0,
        isolations_per_phase: 0.0,
        bad_execution_rate: 0.0,
        base_seed: config.seed,
    };
    Ok(PointOutcome::Row(Box::new(row), Vec::new()))
}

/// Runs every grid point of the configuration; deterministic in the seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    if config.trials == 0 {
        return Err(ExperimentError::Config("trials must be ≥ 1".into()));
    }
    let points = expand_grid(config)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut records = Vec::new();
    for point in &points {
        let outcome = match config.scenario {
            Scenario::HittingGame => run_game_point(config, point)?,
            _ => run_broadcast_point(config, point)?,
        };
        match outcome {
            PointOutcome::Row(row, recs) => {
                rows.push(*row);
                records.extend(recs);
            }
            PointOutcome::Skipped(reason) => {
                let point = point.describe(config.scenario);
                log::warn!("skipping {point}: {reason}");
                skipped.push(SkippedPoint { point, reason });
            }
        }
    }
    if rows.is_empty() {
        return Err(ExperimentError::AllPointsSkipped(skipped.len()));
    }
    Ok(ExperimentOutput { rows, skipped, records })
}

// ---------------------------------------------------------------------------
// Scaling sweeps
// ---------------------------------------------------------------------------

/// Which single parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    /// Connectivity k: median completion rounds should not increase.
    K,
    /// Phase length ψ (varied through τ or the window T): medians should
    /// not increase.
    Psi,
    /// Network size n: medians should grow super-linearly.
    N,
}

/// The sweep's trend check, alongside the medians it inspected.
#[derive(Debug, Clone, Serialize)]
pub struct TrendVerdict {
    pub axis: SweepAxis,
    /// (axis value, median completion rounds), sorted by axis value.
    pub points: Vec<(f64, f64)>,
    /// For K/Psi sweeps: medians never increase along the axis.
    pub non_increasing: Option<bool>,
    /// For N sweeps: Spearman correlation of n against median/n.
    pub spearman_rho: Option<f64>,
    /// One-sided p-value of that correlation (exact permutation ≤ 8 points).
    pub p_value: Option<f64>,
    pub pass: bool,
}

impl std::fmt::Display for TrendVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} sweep over {:?}: ", self.axis, self.points)?;
        match self.axis {
            SweepAxis::K | SweepAxis::Psi => {
                write!(f, "non-increasing = {}", self.non_increasing.unwrap_or(false))?
            }
            SweepAxis::N => write!(
                f,
                "spearman(n, median/n) = {:.3}, p = {:.4}",
                self.spearman_rho.unwrap_or(f64::NAN),
                self.p_value.unwrap_or(f64::NAN)
            )?,
        }
        write!(f, " → {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn detect_axis(config: &ExperimentConfig) -> Result<SweepAxis, ExperimentError> {
    let g = &config.grid;
    let distinct = |n: usize| n > 1;
    let k_varies = distinct(g.k.iter().collect::<BTreeSet<_>>().len());
    let n_varies = distinct(g.n.iter().collect::<BTreeSet<_>>().len());
    // The phase length is swept through either of its two inputs: the
    // obliviousness τ or the stability window T.
    let psi_varies =
        distinct(g.tau.iter().map(|t| format!("{t:?}")).collect::<BTreeSet<_>>().len())
            || distinct(g.t_window.iter().collect::<BTreeSet<_>>().len());
    match (k_varies, psi_varies, n_varies) {
        (true, false, false) => Ok(SweepAxis::K),
        (false, true, false) => Ok(SweepAxis::Psi),
        (false, false, true) => Ok(SweepAxis::N),
        other => Err(ExperimentError::BadAxis(format!("varying (k, psi, n) = {other:?}"))),
    }
}

/// Average ranks (ties averaged).
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// One-sided p-value for a positive Spearman correlation: exact permutation
/// distribution up to 8 points, a normal approximation beyond.
pub fn spearman_p_value(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len();
    let observed = spearman(x, y);
    if m <= 1 {
        return 1.0;
    }
    if m <= 8 {
        let mut perm: Vec<usize> = (0..m).collect();
        let mut at_least = 0u64;
        let mut total = 0u64;
        permute(&mut perm, 0, &mut |p| {
            let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
            if spearman(x, &yp) >= observed - 1e-12 {
                at_least += 1;
            }
            total += 1;
        });
        at_least as f64 / total as f64
    } else {
        // Large-sample: z = ρ·√(m−1) is approximately standard normal.
        let z = observed * ((m - 1) as f64).sqrt();
        0.5 * erfc_approx(z / std::f64::consts::SQRT_2)
    }
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Abramowitz–Stegun 7.1.26-style complementary error function (|err| < 1.5e-7).
fn erfc_approx(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    if sign < 0.0 {
        1.0 + erf
    } else {
        1.0 - erf
    }
}

/// Runs a one-axis sweep and checks the expected completion-time trend.
pub fn sweep_scaling(
    config: &ExperimentConfig,
) -> Result<(Vec<AggregateRow>, TrendVerdict), ExperimentError> {
    let axis = detect_axis(config)?;
    let points = expand_grid(config)?;
    if points.len() < 3 {
        return Err(ExperimentError::TooFewPoints(points.len()));
    }
    let output = run_experiment(config)?;
    let mut pairs: Vec<(f64, f64)> = output
        .rows
        .iter()
        .map(|row| {
            let x = match axis {
                SweepAxis::K => row.k as f64,
                SweepAxis::Psi => row.psi as f64,
                SweepAxis::N => row.n as f64,
            };
            (x, row.median_rounds)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let verdict = match axis {
        SweepAxis::K | SweepAxis::Psi => {
            let ok = pairs.windows(2).all(|w| w[1].1 <= w[0].1);
            TrendVerdict {
                axis,
                points: pairs,
                non_increasing: Some(ok),
                spearman_rho: None,
                p_value: None,
                pass: ok,
            }
        }
        SweepAxis::N => {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            // Super-linear growth: rounds per node still grow with n.
            let per_node: Vec<f64> = pairs.iter().map(|p| p.1 / p.0).collect();
            let rho = spearman(&xs, &per_node);
            let p = spearman_p_value(&xs, &per_node);
            let pass = rho > 0.0 && p <= 0.05;
            TrendVerdict {
                axis,
                points: pairs,
                non_increasing: None,
                spearman_rho: Some(rho),
                p_value: Some(p),
                pass,
            }
        }
    };
    Ok((output.rows, verdict))
}

// ---------------------------------------------------------------------------
// Isolation Monte Carlo
// ---------------------------------------------------------------------------

/// Result of the isolation Monte Carlo.
#[derive(Debug, Clone, Serialize)]
pub struct IsolationEstimate {
    pub n: usize,
    pub epsilon: f64,
    pub script_t: u64,
    /// Number of staircase nodes in the cohort.
    pub cohort: usize,
    pub trials: u64,
    /// Trials in which node i was isolated inside its window.
    pub per_node_isolated: Vec<u64>,
    /// Trials in which every tracked node was isolated inside its window.
    pub trials_all_isolated: u64,
    /// `trials_all_isolated / trials`.
    pub frequency: f64,
    /// The guaranteed bound `1 − ε/n`.
    pub lemma_floor: f64,
    /// Set when `script_t` is below the `⌈12·ln(n/ε)⌉` requirement.
    pub below_lemma_floor: bool,
}

/// A deterministic cohort of harmonic staircases: node i starts at
/// `starts[i]` and transmits with probability `1/(1+⌊(t−start−1)/𝒯⌋)` from
/// round `start+1` on. Busy/free classification depends only on this
/// schedule, so each node's window — the shortest interval after its start
/// in which free rounds have caught up with busy rounds — is precomputed.
struct IsolationSchedule {
    starts: Vec<u64>,
    script_t: u64,
    /// Per node, the window `(start, end]` to search for an isolation round.
    window_ends: Vec<u64>,
    horizon: u64,
}

fn staircase_prob(t: u64, start: u64, script_t: u64) -> f64 {
    if t <= start {
        0.0
    } else {
        1.0 / (1 + (t - start - 1) / script_t) as f64
    }
}

impl IsolationSchedule {
    fn new(starts: Vec<u64>, script_t: u64) -> Self {
        assert!(!starts.is_empty() && script_t >= 1);
        let cap = starts.iter().max().unwrap() + 8 * script_t;
        let busy: Vec<bool> = (0..=cap)
            .map(|t| {
                let mass: f64 = starts.iter().map(|&s| staircase_prob(t, s, script_t)).sum();
                mass >= 1.0
            })
            .collect();
        let window_ends = starts
            .iter()
            .map(|&start| {
                let mut free = 0u64;
                let mut busy_count = 0u64;
                for t in start + 1..=cap {
                    if busy[t as usize] {
                        busy_count += 1;
                    } else {
                        free += 1;
                    }
                    if free >= busy_count {
                        return t;
                    }
                }
                panic!("no half-free round within {cap} rounds of start {start}");
            })
            .collect::<Vec<u64>>();
        let horizon = *window_ends.iter().max().unwrap();
        Self { starts, script_t, window_ends, horizon }
    }

    /// One run: per node, the first window round where it transmitted alone.
    fn run(&self, draws: &NodeRandomness) -> Vec<Option<u64>> {
        let mut isolated: Vec<Option<u64>> = vec![None; self.starts.len()];
        for t in 1..=self.horizon {
            let mut transmitters = self
                .starts
                .iter()
                .enumerate()
                .filter(|&(i, &s)| {
                    draws.draw_unit(i as u32, t) < staircase_prob(t, s, self.script_t)
                })
                .map(|(i, _)| i);
            if let (Some(i), None) = (transmitters.next(), transmitters.next()) {
                let in_window = self.starts[i] < t && t <= self.window_ends[i];
                if in_window && isolated[i].is_none() {
                    isolated[i] = Some(t);
                }
            }
        }
        isolated
    }
}

/// Staggered cohort used by the estimate: 8 staircases spaced 5𝒯 apart.
/// Each node's own head keeps its first 𝒯 rounds busy; after it, the seven
/// decayed competitors sum to at most ≈ 0.9 (steps 1/7, 1/12, 1/17, …), so
/// rounds stay free and the half-free window closes at `start + 2𝒯` with
/// the node still at probability 1/2.
fn staggered_starts(script_t: u64) -> Vec<u64> {
    (0..8).map(|i| 5 * i * script_t).collect()
}

/// Measures how often every cohort node transmits alone within its half-free
/// window, the event the decay guarantee promises with probability ≥ 1−ε/n.
pub fn estimate_isolation(n: usize, epsilon: f64, trials: u64, seed: u64) -> IsolationEstimate {
    let script_t = (12.0 * (n as f64 / epsilon).ln()).ceil() as u64;
    estimate_isolation_with_script_t(n, epsilon, script_t, trials, seed)
}

/// As [`estimate_isolation`], with an explicit 𝒯 (flagged when it is below
/// the guarantee's `⌈12·ln(n/ε)⌉` requirement).
pub fn estimate_isolation_with_script_t(
    n: usize,
    epsilon: f64,
    script_t: u64,
    trials: u64,
    seed: u64,
) -> IsolationEstimate {
    assert!(n >= 1 && epsilon > 0.0 && trials >= 1 && script_t >= 1);
    let floor_t = (12.0 * (n as f64 / epsilon).ln()).ceil() as u64;
    let schedule = IsolationSchedule::new(staggered_starts(script_t), script_t);
    let base = derive_seed(seed, labels::ISOLATION);
    let per_trial: Vec<Vec<Option<u64>>> = (0..trials)
        .into_par_iter()
        .map(|t| schedule.run(&NodeRandomness::new(derive_seed(base, t))))
        .collect();
    let cohort = schedule.starts.len();
    let mut per_node_isolated = vec![0u64; cohort];
    let mut trials_all_isolated = 0u64;
    for trial in &per_trial {
        for (i, hit) in trial.iter().enumerate() {
            if hit.is_some() {
                per_node_isolated[i] += 1;
            }
        }
        if trial.iter().all(Option::is_some) {
            trials_all_isolated += 1;
        }
    }
    IsolationEstimate {
        n,
        epsilon,
        script_t,
        cohort,
        trials,
        per_node_isolated,
        trials_all_isolated,
        frequency: trials_all_isolated as f64 / trials as f64,
        lemma_floor: 1.0 - epsilon / n as f64,
        below_lemma_floor: script_t < floor_t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::run_broadcast;

    fn base_config(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig {
            scenario,
            trials: 3,
            max_rounds: 50_000,
            seed: 7,
            record_diagnostics: true,
            keep_records: false,
            trace_dir: None,
            out: None,
            grid: GridSpec::default(),
        }
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            scenario = "broadcast"
            trials = 5
            max_rounds = 1000

            [grid]
            n = [16]
            k = [1, 2]
            tau = ["unbounded", 4]
            t_window = [4]
            adversary = ["churn"]
        "#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.scenario, Scenario::Broadcast);
        assert_eq!(config.trials, 5);
        assert_eq!(config.seed, default_seed());
        let points = expand_grid(&config).unwrap();
        assert_eq!(points.len(), 4); // k × tau
        assert_eq!(points[0].tau, Tau::Unbounded);
        assert_eq!(points[1].tau, Tau::Finite(4));
        assert!(points.iter().enumerate().all(|(i, p)| p.index == i));
    }

    #[test]
    fn empty_grid_is_an_error() {
        let config = base_config(Scenario::Broadcast);
        assert!(matches!(expand_grid(&config), Err(ExperimentError::EmptyGrid)));
        let text = "scenario = \"hitting-game\"\n[grid]\nbeta = [8]\n";
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(expand_grid(&config), Err(ExperimentError::EmptyGrid)));
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = vec![
            AggregateRow {
                scenario: "broadcast".into(),
                adversary: "churn".into(),
                n: 64,
                k: 2,
                tau: "unbounded".into(),
                t_window: 8,
                psi: 8,
                script_t: 100,
                extra_edge_prob: 0.1 + 0.2,
                ell: 2,
                c: 4.0,
                beta: 0,
                phi: 0,
                trials: 30,
                fraction_completed: 29.0 / 30.0,
                mean_rounds: 123.456789012345,
                median_rounds: 117.0,
                p10_rounds: 80.5,
                p90_rounds: 200.25,
                busy_fraction: 1.0 / 3.0,
                isolations_per_phase: 0.015625,
                bad_execution_rate: 0.0,
                base_seed: 42,
            },
            AggregateRow {
                scenario: "hitting-game".into(),
                adversary: "uniform".into(),
                n: 0,
                k: 0,
                tau: "-".into(),
                t_window: 0,
                psi: 0,
                script_t: 0,
                extra_edge_prob: 0.0,
                ell: 8,
                c: 0.0,
                beta: 256,
                phi: 85,
                trials: 200,
                fraction_completed: 1.0,
                mean_rounds: 1392.4,
                median_rounds: 1300.0,
                p10_rounds: 900.0,
                p90_rounds: 2000.0,
                busy_fraction: 0.0,
                isolations_per_phase: 0.0,
                bad_execution_rate: 0.0,
                base_seed: 1,
            },
        ];
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &rows).unwrap();
        let parsed = read_rows_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn broadcast_points_complete_and_are_deterministic() {
        let mut config = base_config(Scenario::Broadcast);
        config.grid.n = vec![16];
        config.grid.k = vec![1, 2];
        config.grid.tau = vec![TauCfg::Finite(4)];
        config.grid.t_window = vec![4];
        config.grid.adversary = vec!["churn".into()];
        config.grid.extra_edge_prob = vec![0.05];
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.rows.len(), 2);
        for row in &out.rows {
            assert_eq!(row.fraction_completed, 1.0, "row {row:?}");
            assert!(row.median_rounds >= 1.0);
            assert_eq!(row.trials, 3);
        }
        let again = run_experiment(&config).unwrap();
        assert_eq!(out.rows, again.rows);
    }

    #[test]
    fn impossibility_points_never_complete() {
        let mut config = base_config(Scenario::Impossibility);
        config.trials = 2;
        config.max_rounds = 2000;
        config.grid.n = vec![12];
        config.grid.k = vec![2];
        config.grid.t_window = vec![8];
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].fraction_completed, 0.0);
        assert_eq!(out.rows[0].mean_rounds, 0.0);
    }

    #[test]
    fn inconsistent_points_skip_with_reason() {
        let mut config = base_config(Scenario::Impossibility);
        config.trials = 1;
        config.max_rounds = 200;
        config.grid.n = vec![12];
        config.grid.k = vec![2];
        config.grid.t_window = vec![8, 10]; // 10 ≥ n−k: invalid
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].reason.contains("T < n−k"));

        config.grid.t_window = vec![10, 11]; // nothing valid
        assert!(matches!(run_experiment(&config), Err(ExperimentError::AllPointsSkipped(2))));
    }

    #[test]
    fn kept_records_match_standalone_runs() {
        let mut config = base_config(Scenario::Broadcast);
        config.keep_records = true;
        config.trials = 2;
        config.grid.n = vec![12];
        config.grid.k = vec![1];
        config.grid.tau = vec![TauCfg::Finite(3)];
        config.grid.t_window = vec![3];
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.records.len(), 2);

        // Trial 1 rerun in isolation is bit-identical: each trial is a pure
        // function of its own derived seed.
        let seed = trial_seed(config.seed, 0, 1);
        let mut adv = make_random_churn_adversary(12, 1, 3, 0.0).unwrap();
        let params = ProtocolParams::new(12, 1, Tau::Finite(3), 3, 0).unwrap();
        let standalone = run_broadcast(&mut adv, &params, seed, config.max_rounds).unwrap();
        assert_eq!(out.records[1], standalone);
    }

    #[test]
    fn traces_are_dumped_and_certified() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(Scenario::ConnectivityCheck);
        config.trials = 2;
        config.max_rounds = 400;
        config.trace_dir = Some(dir.path().to_path_buf());
        config.grid.n = vec![10];
        config.grid.k = vec![1];
        config.grid.tau = vec![TauCfg::Finite(3)];
        config.grid.t_window = vec![3];
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.rows[0].fraction_completed, 1.0, "all traces certify");
        for trial in 0..2 {
            let path =
                dir.path().join(format!("connectivity-check-point0-trial{trial}.trace.json"));
            let trace = crate::graph::DynamicTrace::load(&path).unwrap();
            assert!(is_interval_k_connected(&trace, 3, 1).is_ok());
        }
    }

    #[test]
    fn hitting_game_points_aggregate_wins() {
        let mut config = base_config(Scenario::HittingGame);
        config.trials = 4;
        config.max_rounds = 100_000;
        config.grid.beta = vec![16];
        config.grid.ell = vec![4];
        config.grid.phi = vec![5];
        config.grid.player = vec!["uniform".into(), "informed".into()];
        let out = run_experiment(&config).unwrap();
        assert_eq!(out.rows.len(), 2);
        for row in &out.rows {
            assert_eq!(row.fraction_completed, 1.0, "small games are always won");
            assert!(row.mean_rounds >= 16.0, "needs at least β successful rounds");
        }
    }

    #[test]
    fn sweep_axis_detection_and_size_guards() {
        let mut config = base_config(Scenario::Broadcast);
        config.grid.n = vec![12];
        config.grid.k = vec![1, 2];
        config.grid.tau = vec![TauCfg::Finite(2), TauCfg::Finite(4)];
        assert!(matches!(sweep_scaling(&config), Err(ExperimentError::BadAxis(_))));

        config.grid.tau = vec![TauCfg::Finite(2)];
        assert!(matches!(sweep_scaling(&config), Err(ExperimentError::TooFewPoints(2))));
    }

    #[test]
    fn sweep_produces_ordered_medians() {
        let mut config = base_config(Scenario::Broadcast);
        config.trials = 3;
        config.max_rounds = 200_000;
        config.grid.n = vec![12];
        config.grid.k = vec![1, 2, 3];
        config.grid.tau = vec![TauCfg::Finite(4)];
        config.grid.t_window = vec![4];
        let (rows, verdict) = sweep_scaling(&config).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(verdict.axis, SweepAxis::K);
        assert_eq!(verdict.points.len(), 3);
        assert_eq!(verdict.points[0].0, 1.0);
        assert_eq!(verdict.points[2].0, 3.0);
        assert_eq!(verdict.pass, verdict.non_increasing.unwrap());
    }

    #[test]
    fn spearman_matches_hand_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let inc = [2.0, 4.0, 5.0, 7.0, 11.0];
        let dec = [9.0, 7.0, 5.0, 3.0, 1.0];
        assert!((spearman(&x, &inc) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &dec) + 1.0).abs() < 1e-12);
        // Perfect order among 5 points: exact permutation p = 1/120.
        let p = spearman_p_value(&x, &inc);
        assert!((p - 1.0 / 120.0).abs() < 1e-9, "p = {p}");
        assert!(spearman_p_value(&x, &dec) > 0.9);
        // Ties average: constant series correlates with nothing.
        assert_eq!(spearman(&x, &[3.0; 5]), 0.0);
    }

    #[test]
    fn single_staircase_is_isolated_immediately() {
        // One node, probability-1 head: it transmits alone in its first
        // round, every time.
        let schedule = IsolationSchedule::new(vec![0], 10);
        assert_eq!(schedule.window_ends, vec![20], "head busy 𝒯, then 𝒯 free to balance");
        for seed in 0..20 {
            let hits = schedule.run(&NodeRandomness::new(seed));
            assert_eq!(hits, vec![Some(1)]);
        }
    }

    #[test]
    fn staggered_cohort_windows_close_after_two_script_t() {
        let script_t = 50;
        let schedule = IsolationSchedule::new(staggered_starts(script_t), script_t);
        for (i, (&start, &end)) in schedule.starts.iter().zip(&schedule.window_ends).enumerate() {
            assert_eq!(end, start + 2 * script_t, "node {i}: head busy 𝒯, next 𝒯 free");
        }
    }

    #[test]
    fn isolation_estimate_meets_its_floor_at_small_scale() {
        let est = estimate_isolation(16, 1.0 / 16.0, 60, 5);
        assert_eq!(est.script_t, (12.0 * 256f64.ln()).ceil() as u64);
        assert!(!est.below_lemma_floor);
        assert!(est.frequency >= 0.95, "isolation frequency {} too small", est.frequency);
        let reduced = estimate_isolation_with_script_t(16, 1.0 / 16.0, 10, 5, 5);
        assert!(reduced.below_lemma_floor);
    }
}
