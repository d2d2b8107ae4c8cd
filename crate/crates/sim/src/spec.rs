//! Experiment descriptions and the flat key/value config format.

use std::fmt;
use std::str::FromStr;

use noma_mec::scenario::Scenario;
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Above these user counts the exact solvers are skipped unless forced.
pub const EXHAUSTIVE_AUTO_CAP: usize = 10;
pub const BNB_AUTO_CAP: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    P1,
    Bnb,
    Greedy,
    Relaxation,
    Exhaustive,
    Local,
    Full,
    OmaPartial,
    OmaBinary,
}

impl SolverKind {
    pub const ALL: [SolverKind; 9] = [
        SolverKind::P1,
        SolverKind::Bnb,
        SolverKind::Greedy,
        SolverKind::Relaxation,
        SolverKind::Exhaustive,
        SolverKind::Local,
        SolverKind::Full,
        SolverKind::OmaPartial,
        SolverKind::OmaBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::P1 => "p1",
            SolverKind::Bnb => "bnb",
            SolverKind::Greedy => "greedy",
            SolverKind::Relaxation => "relaxation",
            SolverKind::Exhaustive => "exhaustive",
            SolverKind::Local => "local",
            SolverKind::Full => "full",
            SolverKind::OmaPartial => "oma_partial",
            SolverKind::OmaBinary => "oma_binary",
        }
    }

    /// Whether the solver picks binary offloading decisions.
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            SolverKind::Bnb
                | SolverKind::Greedy
                | SolverKind::Relaxation
                | SolverKind::Exhaustive
                | SolverKind::OmaBinary
        )
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown solver `{s}`")))
    }
}

/// Parameter varied along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    TaskBits,
    BlockLength,
    Users,
    Antennas,
    /// `α_1 = v`, every other user `1 − v`.
    Weight,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::TaskBits => "task_bits",
            SweepVar::BlockLength => "block_length",
            SweepVar::Users => "users",
            SweepVar::Antennas => "antennas",
            SweepVar::Weight => "weight",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepVar::TaskBits => (1..=7).map(|i| i as f64 * 1e5).collect(),
            SweepVar::BlockLength => (1..=6).map(|i| i as f64 * 0.1).collect(),
            SweepVar::Users => (1..=6).map(|i| 2.0 * i as f64).collect(),
            SweepVar::Antennas => (1..=8).map(f64::from).collect(),
            SweepVar::Weight => (0..=100).map(|i| i as f64 / 100.0).collect(),
        }
    }

    /// The scenario at grid value `v`. Weights are applied per trial.
    pub fn apply(self, base: &Scenario, v: f64) -> Result<Scenario, SimError> {
        let count = || -> Result<usize, SimError> {
            if v >= 1.0 && v.fract() == 0.0 && v <= 1e6 {
                Ok(v as usize)
            } else {
                Err(SimError::InvalidSpec(format!(
                    "{} must be a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        let mut s = base.clone();
        match self {
            SweepVar::TaskBits => s.task_bits = v,
            SweepVar::BlockLength => s.block_length = v,
            SweepVar::Users => s.users = count()?,
            SweepVar::Antennas => s.antennas = count()?,
            SweepVar::Weight => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SimError::InvalidSpec(format!(
                        "weight must lie in [0, 1], got {v}"
                    )));
                }
            }
        }
        Ok(s)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Ok(
            match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                "task_bits" | "l" => SweepVar::TaskBits,
                "block_length" | "block_t" | "t" => SweepVar::BlockLength,
                "users" | "k" => SweepVar::Users,
                "antennas" | "n_antennas" | "n" => SweepVar::Antennas,
                "weight" | "alpha" => SweepVar::Weight,
                other => {
                    return Err(SimError::InvalidSpec(format!(
                        "unknown sweep variable `{other}`"
                    )))
                }
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub sweep_var: SweepVar,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub solvers: Vec<SolverKind>,
    /// Gap for the partial-offloading solves.
    pub epsilon: f64,
    /// Gap for the inner solves of the binary methods.
    pub inner_epsilon: f64,
    /// Run exhaustive and branch-and-bound beyond their automatic caps.
    pub force_exhaustive: bool,
    pub record_runtime: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            sweep_var: SweepVar::TaskBits,
            grid: SweepVar::TaskBits.default_grid(),
            trials: 50,
            seed: 0,
            solvers: vec![
                SolverKind::P1,
                SolverKind::Local,
                SolverKind::Full,
                SolverKind::OmaPartial,
            ],
            epsilon: 0.01,
            inner_epsilon: 1e-4,
            force_exhaustive: false,
            record_runtime: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.grid.is_empty() {
            return Err(SimError::InvalidSpec("grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(SimError::InvalidSpec(
                "at least one trial is required".into(),
            ));
        }
        if self.solvers.is_empty() {
            return Err(SimError::InvalidSpec("no solvers selected".into()));
        }
        if !(self.epsilon > 0.0) || !(self.inner_epsilon > 0.0) {
            return Err(SimError::InvalidSpec("tolerances must be positive".into()));
        }
        for &v in &self.grid {
            let s = self.sweep_var.apply(&self.scenario, v)?;
            s.config::<f64>()?;
            s.path_loss()?;
        }
        Ok(())
    }

    /// Whether `solver` runs at a grid point with `users` users.
    pub fn enabled(&self, solver: SolverKind, users: usize) -> bool {
        match solver {
            SolverKind::Exhaustive => self.force_exhaustive || users <= EXHAUSTIVE_AUTO_CAP,
            SolverKind::Bnb | SolverKind::OmaBinary => {
                self.force_exhaustive || users <= BNB_AUTO_CAP
            }
            _ => true,
        }
    }

    /// Sets one parameter by its flag name (without the leading dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let value = value.trim();
        let num = || -> Result<f64, SimError> {
            value.parse::<f64>().map_err(|_| {
                SimError::InvalidSpec(format!("`{key}` expects a number, got `{value}`"))
            })
        };
        let int = || -> Result<u64, SimError> {
            value.parse::<u64>().map_err(|_| {
                SimError::InvalidSpec(format!("`{key}` expects an integer, got `{value}`"))
            })
        };
        let flag = || -> Result<bool, SimError> {
            match value {
                "" | "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(SimError::InvalidSpec(format!(
                    "`{key}` expects true or false, got `{value}`"
                ))),
            }
        };
        let s = &mut self.scenario;
        match key.as_str() {
            "sweep-var" => {
                let var: SweepVar = value.parse()?;
                if self.grid == self.sweep_var.default_grid() {
                    self.grid = var.default_grid();
                }
                self.sweep_var = var;
            }
            "grid" => self.grid = parse_grid(value)?,
            "trials" => self.trials = int()? as usize,
            "seed" => self.seed = int()?,
            "solvers" => {
                self.solvers = value
                    .split(',')
                    .filter(|x| !x.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()?
            }
            "epsilon" => self.epsilon = num()?,
            "inner-epsilon" => self.inner_epsilon = num()?,
            "force-exhaustive" => self.force_exhaustive = flag()?,
            "record-runtime" => self.record_runtime = flag()?,
            "k" | "users" => s.users = int()? as usize,
            "n-antennas" | "antennas" => s.antennas = int()? as usize,
            "block-t" | "block-length" => s.block_length = num()?,
            "task-bits" => s.task_bits = num()?,
            "window-ratio" => s.window_ratio = num()?,
            "bandwidth" => s.bandwidth = num()?,
            "noise-psd-dbm" => s.noise_psd_dbm = num()?,
            "reference-gain-db" => s.reference_gain_db = num()?,
            "reference-distance" => s.reference_distance = num()?,
            "path-loss-exponent" => s.path_loss_exponent = num()?,
            "cycles-per-bit" => s.cycles_per_bit = num()?,
            "capacitance" => s.capacitance = num()?,
            "weight" => s.weight = num()?,
            "min-distance" => s.min_distance = num()?,
            "max-distance" => s.max_distance = num()?,
            _ => return Err(SimError::InvalidSpec(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }
}

/// Comma-separated values, or `start:step:stop` inclusive of `stop`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, SimError> {
    let bad = |t: &str| SimError::InvalidSpec(format!("bad grid value `{t}`"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| bad(p)))
            .collect::<Result<_, _>>()?;
        let (start, step, stop) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(SimError::InvalidSpec(format!("bad grid range `{text}`")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
        .collect()
}

/// `key = value` lines; `#` starts a comment. Keys are flag names.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, SimError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| SimError::Config {
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse_as_lists_and_ranges() {
        assert_eq!(parse_grid("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_grid("1e5:1e5:4e5").unwrap(), vec![1e5, 2e5, 3e5, 4e5]);
        assert_eq!(parse_grid("0:0.25:1").unwrap().len(), 5);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn switching_the_variable_keeps_only_explicit_grids() {
        let mut spec = ExperimentSpec::default();
        spec.set("sweep-var", "weight").unwrap();
        assert_eq!(spec.grid.len(), 101);
        spec.validate().unwrap();
        let mut spec = ExperimentSpec::default();
        spec.set("grid", "0.5").unwrap();
        spec.set("sweep-var", "weight").unwrap();
        assert_eq!(spec.grid, vec![0.5]);
    }

    #[test]
    fn config_lines_map_onto_the_spec() {
        let text = "# fig 6\nsweep-var = users\ngrid = 2,4,6\ntrials=5\nsolvers = p1, oma-partial\nblock-t = 0.5 # seconds\n";
        let mut spec = ExperimentSpec::default();
        for (k, v) in parse_config(text).unwrap() {
            spec.set(&k, &v).unwrap();
        }
        assert_eq!(spec.sweep_var, SweepVar::Users);
        assert_eq!(spec.grid, vec![2.0, 4.0, 6.0]);
        assert_eq!(spec.trials, 5);
        assert_eq!(spec.solvers, vec![SolverKind::P1, SolverKind::OmaPartial]);
        assert_eq!(spec.scenario.block_length, 0.5);
        spec.validate().unwrap();
        assert!(matches!(
            parse_config("oops"),
            Err(SimError::Config { line: 1, .. })
        ));
        assert!(spec.set("nonsense", "1").is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ExperimentSpec::default();
        spec.sweep_var = SweepVar::Users;
        spec.grid = vec![2.5];
        assert!(spec.validate().is_err());
        spec.grid = vec![];
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec {
            trials: 0,
            ..ExperimentSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn exact_solvers_are_capped() {
        let mut spec = ExperimentSpec::default();
        assert!(spec.enabled(SolverKind::Exhaustive, 10));
        assert!(!spec.enabled(SolverKind::Exhaustive, 11));
        assert!(spec.enabled(SolverKind::Bnb, 14));
        assert!(!spec.enabled(SolverKind::Bnb, 15));
        spec.force_exhaustive = true;
        assert!(spec.enabled(SolverKind::Exhaustive, 11));
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
    }
}
