use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use switchback::bounds::{self, ModelBounds, Target};
use switchback::config::{load_experiment, load_homogeneous_spec, load_spec};
use switchback::design::{assign, AssignmentPlan, SwitchbackDesign};
use switchback::estimand::{self, DEFAULT_PRE_PERIOD};
use switchback::estimator::dm_estimate;
use switchback::harness::{emit_plot_data, Experiment};
use switchback::mdp::{estimate_mixing_time, Simulator, Trajectory, DEFAULT_MAX_LAG};
use switchback::rng::derive_seed;
use switchback::{Error, Result};

#[derive(Parser)]
#[command(name = "switchback", version, about = "Switchback experiment design, simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Copy)]
struct DesignArgs {
    /// Horizon T.
    #[arg(long = "horizon", short = 'T')]
    horizon: usize,
    /// Block length l.
    #[arg(long = "block-length", short = 'l')]
    block_length: usize,
    /// Burn-in b.
    #[arg(long = "burn-in", short = 'b', default_value_t = 0)]
    burn_in: usize,
    /// Allow horizons that are not a multiple of l.
    #[arg(long)]
    lenient: bool,
}

impl DesignArgs {
    fn design(&self) -> Result<SwitchbackDesign> {
        if self.lenient {
            SwitchbackDesign::lenient(self.horizon, self.block_length, self.burn_in)
        } else {
            SwitchbackDesign::new(self.horizon, self.block_length, self.burn_in)
        }
    }
}

#[derive(clap::Args)]
struct ModelArgs {
    /// TOML file with model constants.
    #[arg(long, conflicts_with = "spec")]
    model: Option<PathBuf>,
    /// Derive the constants from a spec file instead.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Offset of the filtered-target burn-in rule (used with --spec).
    #[arg(long, default_value_t = 0.0)]
    c_star: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
}

impl ModelArgs {
    fn resolve(&self, horizon: usize) -> Result<ModelBounds> {
        match (&self.model, &self.spec) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)?;
                let mb: ModelBounds = toml::from_str(&text)?;
                mb.validate()?;
                Ok(mb)
            }
            (None, Some(path)) => {
                ModelBounds::from_schedule(&load_spec(path)?, horizon, self.max_lag, self.c_star, DEFAULT_PRE_PERIOD)
            }
            (None, None) => Err(Error::InvalidInput("pass --model or --spec".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one switchback trajectory and write `t,w,s,y` CSV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hold the treatment at 0 or 1 instead of randomizing blocks.
        #[arg(long)]
        constant: Option<u8>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Difference-in-means estimate from a trajectory CSV.
    Estimate {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long = "block-length", short = 'l')]
        block_length: usize,
        #[arg(long = "burn-in", short = 'b', default_value_t = 0)]
        burn_in: usize,
        /// Emit `tau_hat,k1,k0,degenerate` CSV instead of JSON.
        #[arg(long)]
        csv: bool,
    },
    /// Exact estimands of a spec for a design.
    Oracle {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = DEFAULT_PRE_PERIOD)]
        pre_period: usize,
        /// Also write the `t,tau_t` trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Bias and variance bounds for a design.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value = "gate")]
        target: Target,
        /// Write bound curves at the recommended designs for these horizons as CSV.
        #[arg(long, value_delimiter = ',')]
        curve: Vec<usize>,
    },
    /// Recommended (l, b) for a horizon and target.
    Design {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "horizon", short = 'T')]
        horizon: usize,
        #[arg(long, default_value = "gate")]
        target: Target,
    },
    /// Run a Monte Carlo grid from an experiment file.
    Experiment {
        config: PathBuf,
        /// Grid CSV path; overrides `output` in the file. Stdout when neither is set.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        envelope: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Normal-approximation diagnostics for one cell.
    CltCheck {
        config: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Include per-replicate standardized errors in the output.
        #[arg(long)]
        full: bool,
    },
    /// Contraction profile and fitted mixing time of a spec.
    Mixing {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
        max_lag: usize,
    },
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { spec, design, seed, constant, out } => {
            let schedule = load_spec(&spec)?;
            let design = design.design()?;
            let treatments = match constant {
                Some(w @ (0 | 1)) => vec![w; design.horizon()],
                Some(w) => return Err(Error::InvalidInput(format!("--constant must be 0 or 1, got {w}"))),
                None => assign(&design, derive_seed(seed, &[0])).treatments,
            };
            let traj = Simulator::for_schedule(&schedule).run(&treatments, derive_seed(seed, &[1]))?;
            let mut w = writer(out.as_deref())?;
            traj.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Estimate { trajectory, block_length, burn_in, csv } => {
            let traj = Trajectory::read_csv(File::open(&trajectory)?, 0)?;
            let design = SwitchbackDesign::lenient(traj.horizon(), block_length, burn_in)?;
            let plan = AssignmentPlan::from_treatments(&design, &traj.treatments)?;
            let report = dm_estimate(&traj, &plan, &design)?;
            if csv {
                report.write_csv_row(io::stdout(), true)?;
            } else {
                print_json(&report)?;
            }
        }
        Command::Oracle { spec, design, pre_period, trace } => {
            let schedule = load_spec(&spec)?;
            let report = estimand::estimand_report(&schedule, &design.design()?, pre_period)?;
            if let Some(path) = trace {
                let mut w = writer(Some(&path))?;
                report.write_trace_csv(&mut w)?;
                w.flush()?;
            }
            print_json(&report)?;
        }
        Command::Bounds { model, design, target, curve } => {
            let mb = model.resolve(design.horizon)?;
            if curve.is_empty() {
                print_json(&bounds::mse_bound(&mb, &design.design()?, target)?)?;
            } else {
                bounds::write_bound_curve(io::stdout(), &mb, target, &curve)?;
            }
        }
        Command::Design { model, horizon, target } => {
            let mb = model.resolve(horizon)?;
            let choice = match target {
                Target::Gate => bounds::optimal_design_gate(horizon, mb.t_mix)?,
                Target::Fate => bounds::optimal_design_fate(horizon, &mb)?,
            };
            print_json(&choice)?;
        }
        Command::Experiment { config, out, envelope, plot, parallelism } => {
            let (mut file, schedule) = load_experiment(&config)?;
            if let Some(p) = parallelism {
                file.experiment.parallelism = p;
            }
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let out = out.or_else(|| file.output.as_ref().map(|p| base.join(p)));
            let result = Experiment::new(schedule, file.experiment)?.run_grid()?;
            let mut w = writer(out.as_deref())?;
            result.write_csv(&mut w)?;
            w.flush()?;
            if let Some(path) = envelope {
                let mut w = writer(Some(&path))?;
                result.write_envelope_csv(&mut w)?;
                w.flush()?;
            }
            if let Some(path) = plot {
                let mut w = writer(Some(&path))?;
                emit_plot_data(&mut w, std::slice::from_ref(&result))?;
                w.flush()?;
            }
        }
        Command::CltCheck { config, design, parallelism, full } => {
            let (mut file, schedule) = load_experiment(&config)?;
            if let Some(p) = parallelism {
                file.experiment.parallelism = p;
            }
            let mut diag = Experiment::new(schedule, file.experiment)?.clt_check(&design.design()?)?;
            if !full {
                diag.standardized.clear();
            }
            print_json(&diag)?;
        }
        Command::Mixing { spec, max_lag } => {
            let spec = load_homogeneous_spec(&spec)?;
            print_json(&estimate_mixing_time(&spec, max_lag)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
