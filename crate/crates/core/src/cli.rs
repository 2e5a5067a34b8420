//! Command-line front end: `run`, `sweep`, `compare` and `validate`.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::demand::{DesignChoice, ScenarioCode};
use crate::engine::{write_trajectory_csv, RunResult};
use crate::error::{Error, Result};
use crate::experiment::{
    compare, default_lane_pairs, emit_csv, read_csv, records, run_one, run_sweep, write_comparison, SweepSpec,
};
use crate::network::build_design;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sim", version, about = "Signalized intersection short-lane simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one design, scenario code and seed and print lane metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write the lane metrics as CSV here as well.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the controller interval trace as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write every vehicle's position and speed at every step as CSV.
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
    },
    /// Run a sweep over designs, codes and seeds and write results CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare a variant against the baseline, per code.
    ///
    /// Either pass two results files, or a design to simulate both sides.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "variant")]
        baseline: Option<PathBuf>,
        #[arg(long, requires = "baseline")]
        variant: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a config file and build its designs without simulating.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Sweep spec JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, extended, rto-i, rto-ii or diverge.
    #[arg(long)]
    design: Option<String>,
    /// Three-digit scenario code such as 112.
    #[arg(long)]
    code: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replay shared arrival schedules across designs.
    #[arg(long)]
    controlled: bool,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    count_pre_entry_delay: bool,
}

impl Common {
    fn spec(&self) -> Result<SweepSpec> {
        let mut spec = match &self.config {
            Some(path) => SweepSpec::load(path)?,
            None => SweepSpec::default(),
        };
        if let Some(d) = self.design()? {
            spec.designs = vec![d];
        }
        if let Some(c) = self.code()? {
            spec.codes = vec![c];
        }
        if let Some(s) = self.seed {
            spec.seeds = vec![s];
        }
        if self.controlled {
            spec.controlled = true;
        }
        if let Some(dt) = self.dt {
            spec.sim.dt = dt;
        }
        if let Some(h) = self.horizon {
            spec.sim.horizon = h;
        }
        if self.count_pre_entry_delay {
            spec.sim.count_pre_entry_delay = true;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn design(&self) -> Result<Option<DesignChoice>> {
        self.design
            .as_deref()
            .map(|d| {
                DesignChoice::from_cli_name(d).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "unknown design `{d}`; expected baseline, extended, rto-i, rto-ii or diverge"
                    ))
                })
            })
            .transpose()
    }

    fn code(&self) -> Result<Option<ScenarioCode>> {
        self.code.as_deref().map(str::parse).transpose()
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::file(path, e))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            common,
            out,
            trace_out,
            trajectory_out,
        } => {
            let mut spec = common.spec()?;
            spec.sim.trace_controller = trace_out.is_some();
            spec.sim.trace_vehicles = trajectory_out.is_some();
            let choice = spec.designs[0];
            let code = spec.codes[0];
            let seed = spec.seeds[0];
            let result = run_one(&spec, choice, code, seed)?;
            print_run(&result, choice).map_err(|e| Error::file("<stdout>", e))?;
            if let Some(path) = out {
                emit_csv(&records(std::slice::from_ref(&result)), &path)?;
            }
            if let (Some(path), Some(trace)) = (trace_out, &result.controller_trace) {
                trace.write_csv(create(&path)?).map_err(|e| Error::file(&path, e))?;
            }
            if let (Some(path), Some(rows)) = (trajectory_out, &result.trajectory) {
                let design = build_design(choice.variant, &spec.geometry)?;
                write_trajectory_csv(&design, rows, create(&path)?).map_err(|e| Error::file(&path, e))?;
            }
            Ok(())
        }
        Command::Sweep { common, out, jobs } => {
            let spec = common.spec()?;
            let results = run_sweep(&spec, jobs)?;
            emit_csv(&records(&results), &out)
        }
        Command::Compare {
            common,
            baseline,
            variant,
            out,
            jobs,
        } => {
            let (base, var) = match (baseline, variant) {
                (Some(b), Some(v)) => (read_csv(&b)?, read_csv(&v)?),
                _ => {
                    let spec = common.spec()?;
                    let choice = common.design()?.ok_or_else(|| {
                        Error::InvalidConfig("compare needs --design or --baseline/--variant files".into())
                    })?;
                    let side = |d: DesignChoice| -> Result<_> {
                        let s = SweepSpec {
                            designs: vec![d],
                            ..spec.clone()
                        };
                        Ok(records(&run_sweep(&s, jobs)?))
                    };
                    (side(DesignChoice::BASELINE)?, side(choice)?)
                }
            };
            let variant = var
                .first()
                .map(|r| r.design)
                .ok_or_else(|| Error::Comparison("variant results are empty".into()))?;
            let comparison = compare(&base, &var, &default_lane_pairs(variant))?;
            match out {
                Some(path) => write_comparison(&comparison, create(&path)?).map_err(|e| Error::file(&path, e))?,
                None => write_comparison(&comparison, io::stdout().lock()).map_err(|e| Error::file("<stdout>", e))?,
            }
            for s in &comparison.summary {
                eprintln!(
                    "{} vs {}: decreased in {} of {} codes, increased in {}",
                    s.pair.variant, s.pair.baseline, s.decreased, s.codes, s.increased
                );
            }
            Ok(())
        }
        Command::Validate { common } => {
            let spec = common.spec()?;
            println!(
                "ok: {} designs, {} codes, {} seeds ({} runs)",
                spec.designs.len(),
                spec.codes.len(),
                spec.seeds.len(),
                spec.run_count()
            );
            Ok(())
        }
    }
}

fn print_run(r: &RunResult, choice: DesignChoice) -> io::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "design {} code {} seed {}",
        choice,
        r.code.map(|c| c.to_string()).unwrap_or_default(),
        r.seed
    )?;
    writeln!(
        out,
        "{:<12} {:>6} {:>14} {:>14}",
        "lane", "n", "mean_delay_s", "max_queue_ft"
    )?;
    for l in &r.lanes {
        writeln!(
            out,
            "{:<12} {:>6} {:>14.3} {:>14.3}",
            l.lane, l.n_vehicles, l.mean_delay_s, l.max_queue_ft
        )?;
    }
    writeln!(
        out,
        "arrived {} discharged {} in network {} waiting to enter {}",
        r.arrived, r.discharged, r.in_network, r.deferred
    )
}
