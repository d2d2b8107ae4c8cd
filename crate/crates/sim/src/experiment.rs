//! Monte Carlo sweeps over channel draws.

use std::io::Write;
use std::time::Instant;

use noma_mec::benchmarks::{full_offload, local_only, oma_binary, oma_partial};
use noma_mec::binary::{
    exhaustive_with, solve_bnb, solve_greedy, solve_relaxation, BinarySettings, NomaSubproblem,
    MAX_BNB_USERS, MAX_EXHAUSTIVE_USERS,
};
use noma_mec::model::{SystemConfig, UserProfile};
use noma_mec::partial::{solve_p1, P1Settings};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::{ExperimentSpec, SolverKind, SweepVar};
use crate::SimError;

/// Largest tolerated share of failed trials per grid point and solver.
pub const MAX_FAILURE_RATE: f64 = 0.1;

pub const CSV_HEADER: [&str; 7] = [
    "grid_value",
    "solver",
    "mean_energy_j",
    "std_energy_j",
    "mean_runtime_s",
    "trials_ok",
    "trials_failed",
];

/// Outcome of one solver on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial: usize,
    pub solver: SolverKind,
    /// Weighted sum-energy (J); `None` when the solver failed.
    pub energy: Option<f64>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub grid_value: f64,
    pub solver: SolverKind,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_runtime_s: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub trials: Vec<TrialRecord>,
    /// Grid points where a solver was skipped by the automatic caps.
    pub skipped: Vec<(f64, SolverKind)>,
}

impl ExperimentResult {
    /// Per-trial energy of `solver` at grid index `g`.
    pub fn energy(&self, g: usize, trial: usize, solver: SolverKind) -> Option<f64> {
        self.trials
            .iter()
            .find(|r| r.grid_index == g && r.trial == trial && r.solver == solver)
            .and_then(|r| r.energy)
    }

    pub fn row(&self, grid_value: f64, solver: SolverKind) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.grid_value == grid_value && r.solver == solver)
    }
}

/// Profiles and configuration of trial `trial` at grid value `v`.
pub fn trial_instance(
    spec: &ExperimentSpec,
    v: f64,
    trial: usize,
) -> Result<(Vec<UserProfile<f64>>, SystemConfig<f64>), SimError> {
    let scenario = spec.sweep_var.apply(&spec.scenario, v)?;
    let (mut profiles, config) = scenario.instance::<f64>(spec.seed, trial as u64)?;
    if spec.sweep_var == SweepVar::Weight {
        for (k, u) in profiles.iter_mut().enumerate() {
            u.weight = if k == 0 { v } else { 1.0 - v };
        }
    }
    Ok((profiles, config))
}

/// Weighted sum-energy found by `solver`.
pub fn run_solver(
    solver: SolverKind,
    profiles: &[UserProfile<f64>],
    config: &SystemConfig<f64>,
    spec: &ExperimentSpec,
) -> noma_mec::Result<f64> {
    let outer = P1Settings::with_epsilon(spec.epsilon);
    let inner = P1Settings::with_epsilon(spec.inner_epsilon);
    let lift = |cap: usize| {
        if spec.force_exhaustive {
            profiles.len().max(cap)
        } else {
            cap
        }
    };
    let binary = BinarySettings {
        inner,
        max_users: lift(MAX_BNB_USERS),
        ..BinarySettings::default()
    };
    Ok(match solver {
        SolverKind::P1 => solve_p1(profiles, config, &outer)?.weighted_total,
        SolverKind::Full => full_offload(profiles, config, &outer)?.weighted_total,
        SolverKind::Local => local_only(profiles, config).weighted_total,
        SolverKind::OmaPartial => oma_partial(profiles, config)?.weighted_total,
        SolverKind::Bnb => solve_bnb(profiles, config, &binary)?.value,
        SolverKind::OmaBinary => oma_binary(profiles, config, &binary)?.value,
        SolverKind::Greedy => solve_greedy(profiles, config, &inner)?.value,
        SolverKind::Relaxation => solve_relaxation(profiles, config, &inner)?.value,
        SolverKind::Exhaustive => {
            let solver = NomaSubproblem {
                profiles,
                config,
                settings: inner,
            };
            exhaustive_with(&solver, lift(MAX_EXHAUSTIVE_USERS))?.value
        }
    })
}

fn run_trial(
    spec: &ExperimentSpec,
    g: usize,
    trial: usize,
    solvers: &[SolverKind],
) -> Vec<TrialRecord> {
    let instance = trial_instance(spec, spec.grid[g], trial);
    solvers
        .iter()
        .map(|&solver| {
            let start = Instant::now();
            let out = instance
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|(p, c)| run_solver(solver, p, c, spec).map_err(|e| e.to_string()));
            let runtime_s = start.elapsed().as_secs_f64();
            let (energy, error) = match out {
                Ok(e) if e.is_finite() => (Some(e), None),
                Ok(e) => (None, Some(format!("non-finite energy {e}"))),
                Err(e) => (None, Some(e)),
            };
            TrialRecord {
                grid_index: g,
                trial,
                solver,
                energy,
                runtime_s,
                error,
            }
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (grid value, trial) pair in parallel and aggregates in grid
/// and solver order, so results do not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, SimError> {
    spec.validate()?;
    let mut active: Vec<Vec<SolverKind>> = Vec::new();
    let mut skipped = Vec::new();
    for &v in &spec.grid {
        let users = spec.sweep_var.apply(&spec.scenario, v)?.users;
        let (on, off): (Vec<SolverKind>, Vec<SolverKind>) =
            spec.solvers.iter().partition(|s| spec.enabled(**s, users));
        skipped.extend(off.into_iter().map(|s| (v, s)));
        active.push(on);
    }
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();
    let trials: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(g, t)| run_trial(spec, g, t, &active[g]))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut rows = Vec::new();
    for (g, &v) in spec.grid.iter().enumerate() {
        for &solver in &active[g] {
            let recs: Vec<&TrialRecord> = trials
                .iter()
                .filter(|r| r.grid_index == g && r.solver == solver)
                .collect();
            let ok: Vec<f64> = recs.iter().filter_map(|r| r.energy).collect();
            let failed = recs.len() - ok.len();
            if failed as f64 > MAX_FAILURE_RATE * spec.trials as f64 {
                let first = recs
                    .iter()
                    .find_map(|r| r.error.clone())
                    .unwrap_or_default();
                return Err(SimError::TooManyFailures {
                    grid_value: v,
                    solver,
                    failed,
                    trials: spec.trials,
                    first_error: first,
                });
            }
            let (mean, std) = mean_std(&ok);
            let runtime = recs.iter().map(|r| r.runtime_s).sum::<f64>() / recs.len() as f64;
            rows.push(ResultRow {
                grid_value: v,
                solver,
                mean_energy_j: mean,
                std_energy_j: std,
                mean_runtime_s: runtime,
                trials_ok: ok.len(),
                trials_failed: failed,
            });
        }
    }
    Ok(ExperimentResult {
        rows,
        trials,
        skipped,
    })
}

/// Writes the aggregate table. Run-times are `NA` unless `record_runtime`,
/// which keeps repeated runs byte-identical.
pub fn write_csv<W: Write>(
    result: &ExperimentResult,
    record_runtime: bool,
    out: W,
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        let runtime = if record_runtime {
            r.mean_runtime_s.to_string()
        } else {
            "NA".to_string()
        };
        w.write_record([
            r.grid_value.to_string(),
            r.solver.to_string(),
            r.mean_energy_j.to_string(),
            r.std_energy_j.to_string(),
            runtime,
            r.trials_ok.to_string(),
            r.trials_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(result: &ExperimentResult, record_runtime: bool) -> Result<String, SimError> {
    let mut buf = Vec::new();
    write_csv(result, record_runtime, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Record written next to every CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub library_version: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub skipped: Vec<(f64, SolverKind)>,
}

impl Manifest {
    pub fn new(command: &str, spec: &ExperimentSpec, skipped: &[(f64, SolverKind)]) -> Self {
        Self {
            command: command.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: spec.seed,
            spec: spec.clone(),
            skipped: skipped.to_vec(),
        }
    }
}

/// Mean wall-clock seconds of one solver at one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub grid_value: f64,
    pub solver: SolverKind,
    pub mean_runtime_s: f64,
    /// Mean run-time divided by the first solver's at the same grid value.
    pub ratio: f64,
    pub trials: usize,
}

/// Times each solver on the same instances, one at a time. Each instance is
/// solved `repeats` times and the fastest run counts, which filters out
/// scheduler noise.
pub fn run_timing(spec: &ExperimentSpec, repeats: usize) -> Result<Vec<TimingRow>, SimError> {
    spec.validate()?;
    let repeats = repeats.max(1);
    let mut rows = Vec::new();
    for &v in &spec.grid {
        let users = spec.sweep_var.apply(&spec.scenario, v)?.users;
        let solvers: Vec<SolverKind> = spec
            .solvers
            .iter()
            .copied()
            .filter(|s| spec.enabled(*s, users))
            .collect();
        let mut totals = vec![0.0; solvers.len()];
        for trial in 0..spec.trials {
            let (p, c) = trial_instance(spec, v, trial)?;
            for (i, &solver) in solvers.iter().enumerate() {
                let mut best = f64::INFINITY;
                for _ in 0..repeats {
                    let start = Instant::now();
                    run_solver(solver, &p, &c, spec)?;
                    best = best.min(start.elapsed().as_secs_f64());
                }
                totals[i] += best;
            }
        }
        let base = totals.first().copied().unwrap_or(1.0);
        for (i, &solver) in solvers.iter().enumerate() {
            rows.push(TimingRow {
                grid_value: v,
                solver,
                mean_runtime_s: totals[i] / spec.trials as f64,
                ratio: totals[i] / base,
                trials: spec.trials,
            });
        }
    }
    Ok(rows)
}
