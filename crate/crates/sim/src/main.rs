use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use noma_mec::benchmarks::{full_offload, local_only, oma_binary, oma_partial};
use noma_mec::binary::{
    solve_bnb, solve_exhaustive, solve_greedy, solve_relaxation, BinarySettings,
};
use noma_mec::channel::{read_channels, write_channels};
use noma_mec::model::UserProfile;
use noma_mec::partial::{solve_p1, P1Settings};
use noma_mec_sim::converge::write_trace_csv;
use noma_mec_sim::{
    csv_string, run_convergence_trace, run_experiment, run_timing, ExperimentSpec, Manifest,
    SolverKind,
};

#[derive(Parser)]
#[command(
    name = "noma-mec",
    version,
    about = "Energy-minimal offloading experiments for NOMA uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average energies over channel draws along a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Dual-solver convergence on one instance.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Trial index of the instance.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Initial dual ball radius, in units of each user's price scale.
        #[arg(long, default_value_t = noma_mec::partial::DEFAULT_RADIUS)]
        radius: f64,
    },
    /// Wall-clock comparison of solvers on the same instances.
    Timing {
        #[command(flatten)]
        common: Common,
        /// Solves per instance; the fastest counts.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Solve one instance read from a channel file and print the solution as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Rows of interleaved real/imaginary channel entries, one user per row.
        #[arg(long)]
        channels: PathBuf,
        #[arg(long, default_value = "p1")]
        solver: String,
    },
    /// Draw one trial's channels and write them in the channel file format.
    DrawChannels {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(Args, Default)]
struct Common {
    /// Flat `key = value` file with the same names as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// task_bits, block_length, users, antennas or weight.
    #[arg(long)]
    sweep_var: Option<String>,
    /// Comma-separated values or start:step:stop.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated: p1,bnb,greedy,relaxation,exhaustive,local,full,oma_partial,oma_binary.
    #[arg(long)]
    solvers: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_antennas: Option<usize>,
    #[arg(long)]
    block_t: Option<f64>,
    #[arg(long)]
    task_bits: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    inner_epsilon: Option<f64>,
    /// Run exhaustive search and branch-and-bound beyond their automatic user caps.
    #[arg(long)]
    force_exhaustive: bool,
    /// Report mean run-times in the CSV instead of NA.
    #[arg(long)]
    record_runtime: bool,
}

impl Common {
    /// Defaults, then the config file, then explicit flags.
    fn spec(&self) -> Result<(ExperimentSpec, Option<PathBuf>)> {
        let mut spec = ExperimentSpec::default();
        let mut out = None;
        if let Some(path) = &self.config {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            for (k, v) in noma_mec_sim::spec::parse_config(&text)? {
                if k == "out" {
                    out = Some(PathBuf::from(v));
                } else {
                    spec.set(&k, &v)?;
                }
            }
        }
        let flags: [(&str, Option<String>); 11] = [
            ("sweep-var", self.sweep_var.clone()),
            ("grid", self.grid.clone()),
            ("trials", self.trials.map(|x| x.to_string())),
            ("seed", self.seed.map(|x| x.to_string())),
            ("solvers", self.solvers.clone()),
            ("k", self.k.map(|x| x.to_string())),
            ("n-antennas", self.n_antennas.map(|x| x.to_string())),
            ("block-t", self.block_t.map(|x| x.to_string())),
            ("task-bits", self.task_bits.map(|x| x.to_string())),
            ("epsilon", self.epsilon.map(|x| x.to_string())),
            ("inner-epsilon", self.inner_epsilon.map(|x| x.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                spec.set(k, &v)?;
            }
        }
        spec.force_exhaustive |= self.force_exhaustive;
        spec.record_runtime |= self.record_runtime;
        Ok((spec, self.out.clone().or(out)))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn write_manifest(out: Option<&Path>, manifest: &Manifest) -> Result<()> {
    if let Some(path) = out {
        let mut name = path.as_os_str().to_owned();
        name.push(".manifest.json");
        fs::write(&name, serde_json::to_string_pretty(manifest)? + "\n")
            .with_context(|| format!("writing {}", Path::new(&name).display()))?;
    }
    Ok(())
}

fn solve_one(common: &Common, channels: &Path, solver: &str) -> Result<serde_json::Value> {
    let (spec, _) = common.spec()?;
    let s = &spec.scenario;
    let text =
        fs::read_to_string(channels).with_context(|| format!("reading {}", channels.display()))?;
    let h = read_channels::<f64>(&text)?;
    let Some(n) = h.first().map(|c| c.dim()) else {
        bail!("channel file has no users");
    };
    let profiles = h
        .into_iter()
        .map(|c| UserProfile::new(s.task_bits, s.cycles_per_bit, s.capacitance, s.weight, c))
        .collect::<noma_mec::Result<Vec<_>>>()?;
    let config = noma_mec::model::SystemConfig::with_window_ratio(
        s.block_length,
        s.window_ratio,
        s.bandwidth,
        n,
    )?;
    let outer = P1Settings::with_epsilon(spec.epsilon);
    let inner = P1Settings::with_epsilon(spec.inner_epsilon);
    let binary = BinarySettings {
        inner,
        ..BinarySettings::default()
    };
    let (p, c) = (&profiles, &config);
    Ok(match solver.parse::<SolverKind>()? {
        SolverKind::P1 => serde_json::to_value(solve_p1(p, c, &outer)?)?,
        SolverKind::Full => serde_json::to_value(full_offload(p, c, &outer)?)?,
        SolverKind::Local => serde_json::to_value(local_only(p, c))?,
        SolverKind::OmaPartial => serde_json::to_value(oma_partial(p, c)?)?,
        SolverKind::Bnb => serde_json::to_value(solve_bnb(p, c, &binary)?)?,
        SolverKind::Greedy => serde_json::to_value(solve_greedy(p, c, &inner)?)?,
        SolverKind::Relaxation => serde_json::to_value(solve_relaxation(p, c, &inner)?)?,
        SolverKind::Exhaustive => serde_json::to_value(solve_exhaustive(p, c, &inner)?)?,
        SolverKind::OmaBinary => serde_json::to_value(oma_binary(p, c, &binary)?)?,
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep { common } => {
            let (spec, out) = common.spec()?;
            let result = run_experiment(&spec)?;
            for (v, s) in &result.skipped {
                eprintln!(
                    "skipped {s} at {}={v}; pass --force-exhaustive to run it",
                    spec.sweep_var
                );
            }
            emit(out.as_deref(), &csv_string(&result, spec.record_runtime)?)?;
            write_manifest(
                out.as_deref(),
                &Manifest::new("sweep", &spec, &result.skipped),
            )?;
        }
        Command::Converge {
            common,
            trial,
            radius,
        } => {
            let (spec, out) = common.spec()?;
            let settings = P1Settings {
                epsilon: spec.epsilon,
                initial_radius: radius,
                ..P1Settings::default()
            };
            let trace = run_convergence_trace(&spec.scenario, spec.seed, trial, &settings)?;
            let mut buf = Vec::new();
            write_trace_csv(&trace, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8(buf)?)?;
            eprintln!(
                "reference energy {:.6e} J; within {} after {} iterations; certified after {}",
                trace.reference_energy,
                spec.epsilon,
                trace
                    .iterations_to_tolerance
                    .map_or("-".into(), |n| n.to_string()),
                trace.certified_iterations
            );
            write_manifest(out.as_deref(), &Manifest::new("converge", &spec, &[]))?;
        }
        Command::Timing { common, repeats } => {
            let (spec, out) = common.spec()?;
            let rows = run_timing(&spec, repeats)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["grid_value", "solver", "mean_runtime_s", "ratio", "trials"])?;
            for r in &rows {
                w.write_record([
                    r.grid_value.to_string(),
                    r.solver.to_string(),
                    r.mean_runtime_s.to_string(),
                    r.ratio.to_string(),
                    r.trials.to_string(),
                ])?;
            }
            emit(out.as_deref(), &String::from_utf8(w.into_inner()?)?)?;
            write_manifest(out.as_deref(), &Manifest::new("timing", &spec, &[]))?;
        }
        Command::Solve {
            common,
            channels,
            solver,
        } => {
            let value = solve_one(&common, &channels, &solver)?;
            emit(
                common.out.as_deref(),
                &(serde_json::to_string_pretty(&value)? + "\n"),
            )?;
        }
        Command::DrawChannels { common, trial } => {
            let (spec, out) = common.spec()?;
            let profiles = spec.scenario.draw::<f64>(spec.seed, trial)?;
            let h: Vec<_> = profiles.into_iter().map(|u| u.channel).collect();
            emit(out.as_deref(), &write_channels(&h))?;
        }
    }
    Ok(())
}
