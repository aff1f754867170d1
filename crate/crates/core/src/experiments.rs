//! Seeded Monte-Carlo experiments: convergence traces, power sweeps and
//! antenna/user sweeps, plus a single-trial artifact dump.
//!
//! Every scheme and sweep point of one experiment sees the same channel
//! realizations (trial `t` always draws from the streams of `(seed, t)`).
//! Trials run on a rayon pool; results are reduced in trial order, so
//! aggregates do not depend on the number of threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fpa_noma, oma_fpa, BaselineResult, Scheme};
use crate::channel::{sample_geometry, ChannelGeometry};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::noma::rates;
use crate::optimizer::{
    run_best_order, EventKind, OrderOutcome, RunOptions, RunStatus, SolveRecord,
};
use crate::rng::aux_stream;
use crate::surrogate::GammaExpansionTerms;

/// Per-trial outcome of every requested scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub results: Vec<BaselineResult>,
    /// Outcomes of each decoding order tried by the movable-antenna scheme.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<OrderOutcome>,
}

impl TrialResult {
    pub fn get(&self, scheme: Scheme) -> Option<&BaselineResult> {
        self.results.iter().find(|r| r.scheme == scheme)
    }
}

/// Trial that raised an error instead of producing a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub beamforming_rejections: usize,
    pub position_rejections: usize,
    pub solver_failures: usize,
    pub randomizations: usize,
    pub restoration_steps: usize,
}

impl SolverStats {
    fn absorb(&mut self, rec: &SolveRecord) {
        self.restoration_steps += rec.restoration_steps;
        for e in &rec.events {
            match e.kind {
                EventKind::BeamformingRejected { .. } => self.beamforming_rejections += 1,
                EventKind::PositionRejected { .. } => self.position_rejections += 1,
                EventKind::BeamformingSolverFailure { .. }
                | EventKind::PositionSolverFailure { .. } => self.solver_failures += 1,
                EventKind::Randomized { .. } => self.randomizations += 1,
                EventKind::Restoration { .. } => {}
            }
        }
    }
}

/// Mean and standard error over the feasible trials of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

/// Empty points serialize their NaN statistics as `null`.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One aggregate row. Which of the optional keys are set depends on the
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub num_antennas: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub num_users: Option<usize>,
    #[serde(rename = "P_s_dbm", skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(deserialize_with = "nan_from_null")]
    pub mean_sum_rate: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub stderr: f64,
    pub n_trials: usize,
    pub n_infeasible: usize,
}

/// Results for one sweep point `(M, K, P_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "M")]
    pub num_antennas: usize,
    #[serde(rename = "K")]
    pub num_users: usize,
    #[serde(rename = "P_s_dbm")]
    pub power_dbm: f64,
    pub config_hash: String,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl SweepPoint {
    /// Sum rates of `scheme` over feasible trials, in trial order.
    pub fn sum_rates(&self, scheme: Scheme) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| t.get(scheme))
            .filter(|r| r.status != RunStatus::Infeasible)
            .map(|r| r.sum_rate)
            .collect()
    }

    pub fn infeasible(&self, scheme: Scheme) -> usize {
        self.trials
            .iter()
            .filter_map(|t| t.get(scheme))
            .filter(|r| r.status == RunStatus::Infeasible)
            .count()
            + self.failures.len()
    }

    pub fn summary(&self, scheme: Scheme) -> Summary {
        Summary::of(&self.sum_rates(scheme))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub wall_time_s: f64,
    pub solver_stats: SolverStats,
    /// Infeasible or failed trials per scheme, summed over sweep points.
    pub infeasible_trials: BTreeMap<Scheme, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<AggregateRow>,
    pub points: Vec<SweepPoint>,
}

impl ExperimentReport {
    fn new(
        experiment: &str,
        cfg: &ScenarioConfig,
        points: Vec<SweepPoint>,
        rows: Vec<AggregateRow>,
        start: Instant,
    ) -> Self {
        let mut stats = SolverStats::default();
        let mut infeasible = BTreeMap::new();
        for p in &points {
            for t in &p.trials {
                for r in &t.results {
                    if let Some(rec) = &r.record {
                        stats.absorb(rec);
                    }
                }
            }
            for s in Scheme::ALL {
                if p.trials.iter().any(|t| t.get(s).is_some()) {
                    *infeasible.entry(s).or_insert(0) += p.infeasible(s);
                }
            }
        }
        Self {
            metadata: ReportMetadata {
                experiment: experiment.to_string(),
                config_hash: cfg.config_hash(),
                seed: cfg.seed,
                trials: cfg.trials,
                wall_time_s: start.elapsed().as_secs_f64(),
                solver_stats: stats,
                infeasible_trials: infeasible,
            },
            rows,
            points,
        }
    }

    /// CSV with the given columns, in order.
    pub fn to_csv(&self, columns: &[&str]) -> String {
        let mut out = columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = columns
                .iter()
                .map(|c| match *c {
                    "M" => r.num_antennas.map(|v| v.to_string()).unwrap_or_default(),
                    "K" => r.num_users.map(|v| v.to_string()).unwrap_or_default(),
                    "P_s_dbm" => r.power_dbm.map(|v| v.to_string()).unwrap_or_default(),
                    "iteration" => r.iteration.map(|v| v.to_string()).unwrap_or_default(),
                    "scheme" => r.scheme.map(|v| v.to_string()).unwrap_or_default(),
                    "mean_sum_rate" => r.mean_sum_rate.to_string(),
                    "stderr" => r.stderr.to_string(),
                    "n_trials" => r.n_trials.to_string(),
                    "n_infeasible" => r.n_infeasible.to_string(),
                    other => panic!("unknown column {other}"),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, columns: &[&str]) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&csv, self.to_csv(columns))?;
        std::fs::write(&json, serde_json::to_string_pretty(self)?)?;
        Ok((csv, json))
    }
}

pub const CONVERGENCE_COLUMNS: [&str; 4] = ["M", "iteration", "mean_sum_rate", "stderr"];
pub const POWER_COLUMNS: [&str; 5] = ["P_s_dbm", "scheme", "mean_sum_rate", "stderr", "n_trials"];
pub const ANTENNA_COLUMNS: [&str; 6] = ["M", "K", "scheme", "mean_sum_rate", "stderr", "n_trials"];

/// Randomization seed of one trial, from its auxiliary stream.
pub fn trial_randomization_seed(seed: u64, trial: u64) -> u64 {
    aux_stream(seed, trial).gen()
}

/// Run the requested schemes on trial `trial` of `cfg`.
pub fn run_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    schemes: &[Scheme],
    options: &RunOptions,
) -> Result<TrialResult> {
    let geoms = sample_geometry(cfg, cfg.seed, trial);
    run_trial_on(cfg, trial, &geoms, schemes, options)
}

pub fn run_trial_on(
    cfg: &ScenarioConfig,
    trial: u64,
    geoms: &[ChannelGeometry],
    schemes: &[Scheme],
    options: &RunOptions,
) -> Result<TrialResult> {
    let opts = RunOptions {
        randomization_seed: trial_randomization_seed(cfg.seed, trial),
        ..*options
    };
    let mut results = Vec::with_capacity(schemes.len());
    let mut orders = Vec::new();
    for &s in schemes {
        results.push(match s {
            Scheme::MaNoma => {
                let best = run_best_order(cfg, geoms, None, &opts)?;
                orders = best.candidates;
                let rec = best.best;
                BaselineResult {
                    scheme: s,
                    sum_rate: if rec.is_feasible() {
                        rec.objective()
                    } else {
                        0.0
                    },
                    per_user_rates: rec.final_rates.own.clone(),
                    status: rec.status,
                    record: Some(rec),
                }
            }
            Scheme::FpaNoma => fpa_noma(cfg, geoms, &opts)?,
            Scheme::OmaFpa => oma_fpa(cfg, geoms)?,
        });
    }
    Ok(TrialResult {
        trial,
        results,
        orders,
    })
}

/// All trials of one sweep point, in parallel, returned in trial order.
pub fn run_point(
    cfg: &ScenarioConfig,
    schemes: &[Scheme],
    options: &RunOptions,
) -> Result<SweepPoint> {
    cfg.validate()?;
    let outcomes: Vec<(u64, Result<TrialResult>)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| (t, run_trial(cfg, t, schemes, options)))
        .collect();
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, o) in outcomes {
        match o {
            Ok(r) => trials.push(r),
            Err(e @ Error::Config(_)) | Err(e @ Error::InvalidInput(_)) => return Err(e),
            Err(e) => {
                log::warn!("trial {t} failed: {e}");
                failures.push(TrialFailure {
                    trial: t,
                    error: e.to_string(),
                });
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::Solver(format!(
            "all {} trials failed",
            failures.len()
        )));
    }
    Ok(SweepPoint {
        num_antennas: cfg.num_antennas,
        num_users: cfg.num_users,
        power_dbm: cfg.power_dbm,
        config_hash: cfg.config_hash(),
        trials,
        failures,
    })
}

fn nonempty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        Err(Error::Config(format!("{what} list must not be empty")))
    } else {
        Ok(())
    }
}

/// Mean movable-antenna objective per iteration for each `M`. Traces that
/// stopped early are extended with their final value.
pub fn cmd_convergence(
    cfg: &ScenarioConfig,
    ms: &[usize],
    options: &RunOptions,
) -> Result<ExperimentReport> {
    nonempty(ms, "antenna count")?;
    let start = Instant::now();
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &m in ms {
        let c = ScenarioConfig {
            num_antennas: m,
            ..cfg.clone()
        };
        let point = run_point(&c, &[Scheme::MaNoma], options)?;
        let traces: Vec<&Vec<f64>> = point
            .trials
            .iter()
            .filter_map(|t| t.get(Scheme::MaNoma))
            .filter_map(|r| r.record.as_ref())
            .filter(|r| r.is_feasible())
            .map(|r| &r.objective_trace)
            .collect();
        let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        let n_infeasible = point.infeasible(Scheme::MaNoma);
        for it in 0..len {
            let vals: Vec<f64> = traces.iter().map(|t| t[it.min(t.len() - 1)]).collect();
            let s = Summary::of(&vals);
            rows.push(AggregateRow {
                num_antennas: Some(m),
                num_users: None,
                power_dbm: None,
                iteration: Some(it),
                scheme: None,
                mean_sum_rate: s.mean,
                stderr: s.stderr,
                n_trials: s.n,
                n_infeasible,
            });
        }
        points.push(point);
    }
    Ok(ExperimentReport::new(
        "convergence",
        cfg,
        points,
        rows,
        start,
    ))
}

fn scheme_rows(point: &SweepPoint, rows: &mut Vec<AggregateRow>, with_power: bool, with_mk: bool) {
    for s in Scheme::ALL {
        let sum = point.summary(s);
        rows.push(AggregateRow {
            num_antennas: with_mk.then_some(point.num_antennas),
            num_users: with_mk.then_some(point.num_users),
            power_dbm: with_power.then_some(point.power_dbm),
            iteration: None,
            scheme: Some(s),
            mean_sum_rate: sum.mean,
            stderr: sum.stderr,
            n_trials: sum.n,
            n_infeasible: point.infeasible(s),
        });
    }
}

/// All three schemes at each transmit power (dBm).
pub fn cmd_sweep_power(
    cfg: &ScenarioConfig,
    powers: &[f64],
    options: &RunOptions,
) -> Result<ExperimentReport> {
    nonempty(powers, "power")?;
    let start = Instant::now();
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &p in powers {
        let c = ScenarioConfig {
            power_dbm: p,
            ..cfg.clone()
        };
        let point = run_point(&c, &Scheme::ALL, options)?;
        scheme_rows(&point, &mut rows, true, false);
        points.push(point);
    }
    Ok(ExperimentReport::new(
        "sweep-power",
        cfg,
        points,
        rows,
        start,
    ))
}

/// All three schemes on the `(M, K)` grid.
pub fn cmd_sweep_antennas(
    cfg: &ScenarioConfig,
    ms: &[usize],
    ks: &[usize],
    options: &RunOptions,
) -> Result<ExperimentReport> {
    nonempty(ms, "antenna count")?;
    nonempty(ks, "user count")?;
    let start = Instant::now();
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &k in ks {
        for &m in ms {
            let c = ScenarioConfig {
                num_antennas: m,
                num_users: k,
                ..cfg.clone()
            };
            let point = run_point(&c, &Scheme::ALL, options)?;
            scheme_rows(&point, &mut rows, false, true);
            points.push(point);
        }
    }
    Ok(ExperimentReport::new(
        "sweep-antennas",
        cfg,
        points,
        rows,
        start,
    ))
}

/// Curvature diagnostics of one antenna at one iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDiagnostics {
    pub antenna: usize,
    /// Global bound `delta_{k,i}` used by the position program, `[k][i]`.
    pub delta: Vec<Vec<f64>>,
    /// Frobenius norm of the exact Hessian at the current position, `[k][i]`.
    pub hessian_frobenius: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDump {
    pub iteration: usize,
    pub objective: f64,
    pub snapshot: crate::optimizer::IterateSnapshot,
    pub surrogates: Vec<SurrogateDiagnostics>,
}

/// Full single-trial artifact. Contains no timing, so two runs with the same
/// configuration serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleDump {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub trial: u64,
    pub geometry: Vec<ChannelGeometry>,
    pub record: SolveRecord,
    pub orders: Vec<OrderOutcome>,
    pub iterations: Vec<IterationDump>,
}

impl SingleDump {
    /// Sum rate recomputed from the final positions and beamformers.
    pub fn recomputed_objective(&self) -> Result<f64> {
        let ch = crate::channel::channels(&self.record.final_apv, &self.geometry)?;
        Ok(rates(
            &ch,
            &self.record.final_bf,
            &self.record.order,
            &self.config.noise_vec(),
        )
        .sum_rate())
    }
}

/// Trial 0 of `cfg` with every iterate recorded.
pub fn cmd_single(cfg: &ScenarioConfig, options: &RunOptions) -> Result<SingleDump> {
    cfg.validate()?;
    let trial = 0;
    let geometry = sample_geometry(cfg, cfg.seed, trial);
    let opts = RunOptions {
        keep_snapshots: true,
        randomization_seed: trial_randomization_seed(cfg.seed, trial),
        ..*options
    };
    let best = run_best_order(cfg, &geometry, None, &opts)?;
    let rec = best.best;
    let iterations = rec
        .snapshots
        .iter()
        .enumerate()
        .map(|(it, snap)| IterationDump {
            iteration: it,
            objective: rec.objective_trace[it],
            surrogates: (0..snap.apv.len())
                .map(|m| {
                    let terms: Vec<Vec<GammaExpansionTerms>> = snap
                        .bf
                        .vectors
                        .iter()
                        .map(|w| {
                            geometry
                                .iter()
                                .map(|g| GammaExpansionTerms::new(m, &snap.apv, g, w))
                                .collect()
                        })
                        .collect();
                    let u = snap.apv.positions[m];
                    SurrogateDiagnostics {
                        antenna: m,
                        delta: terms
                            .iter()
                            .map(|row| row.iter().map(|t| t.curvature_bound()).collect())
                            .collect(),
                        hessian_frobenius: terms
                            .iter()
                            .map(|row| row.iter().map(|t| t.hessian_frobenius(&u)).collect())
                            .collect(),
                    }
                })
                .collect(),
            snapshot: snap.clone(),
        })
        .collect();
    Ok(SingleDump {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        trial,
        geometry,
        record: rec,
        orders: best.candidates,
        iterations,
    })
}
