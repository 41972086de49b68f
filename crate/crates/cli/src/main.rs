mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rtdlab::dist::DistFamily;

use crate::commands::{Ctx, DirectDist};
use crate::config::ExperimentConfig;
use crate::store::{CliError, Layout};

/// Runtime-distribution experiments with probSAT.
#[derive(Parser, Debug)]
#[command(name = "rtdlab", version)]
struct Cli {
    /// JSON experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every stage seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism). Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ManifestArg {
    /// Instance manifest (default: filter.json, else manifest.json, in --out).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct SolverArgs {
    /// probSAT break exponent.
    #[arg(long)]
    cb: Option<f64>,
    /// probSAT make exponent.
    #[arg(long)]
    cm: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random 3-SAT instances as DIMACS files plus manifest.json.
    Generate {
        /// Variable counts (comma separated).
        #[arg(long, value_delimiter = ',')]
        n: Vec<u32>,
        /// Clause-to-variable ratios (comma separated).
        #[arg(long, value_delimiter = ',')]
        ratio: Vec<f64>,
        /// Instances per (n, ratio) pair.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Keeps the instances the complete solver proves satisfiable.
    Filter {
        #[command(flatten)]
        manifest: ManifestArg,
        #[arg(long)]
        node_budget: Option<u64>,
    },
    /// Samples runtime distributions, one JSON per instance.
    Sample {
        #[command(flatten)]
        manifest: ManifestArg,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        runs: Option<usize>,
        /// Per-run flip limit.
        #[arg(long)]
        timeout: Option<u64>,
        /// Skip instances whose output already exists.
        #[arg(long)]
        resume: bool,
    },
    /// Fits lognormal, Weibull and GP to each sample.
    Fit {
        #[command(flatten)]
        manifest: ManifestArg,
        /// KS significance level.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Optimal restart times from the fits, or from one given distribution.
    RestartTime {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Family to use instead of the KS winner.
        #[arg(long)]
        family: Option<DistFamily>,
        /// With --family and --scale: evaluate this distribution and print.
        #[arg(long)]
        shape: Option<f64>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        location: f64,
    },
    /// Instance features, one JSON per instance.
    Features {
        #[command(flatten)]
        manifest: ManifestArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Probe budget in flips per variable.
        #[arg(long)]
        probe_flips_per_var: Option<u64>,
        #[arg(long)]
        resume: bool,
    },
    /// Trains the forest and the parameter networks.
    Train {
        #[command(flatten)]
        manifest: ManifestArg,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Predicted distribution and restart policy per instance.
    Predict {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Model file (default: model.json in --out).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Runs restart policies head to head; the first policy is the candidate.
    Evaluate {
        #[command(flatten)]
        manifest: ManifestArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// e.g. predicted,luby:20n,none,fixed:5000
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        /// Total flip budget per run.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Per-family KS summary and per-subset speedup tables from the fits.
    Report {
        #[command(flatten)]
        manifest: ManifestArg,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_solver(cfg: &mut ExperimentConfig, s: &SolverArgs) {
    set(&mut cfg.solver.cb, s.cb);
    set(&mut cfg.solver.cm, s.cm);
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    match &cli.command {
        Command::Generate { n, ratio, count } => {
            if !n.is_empty() {
                cfg.instances.n = n.clone();
            }
            if !ratio.is_empty() {
                cfg.instances.ratio = ratio.clone();
            }
            set(&mut cfg.instances.count, *count);
        }
        Command::Filter { node_budget, .. } => set(&mut cfg.filter.node_budget, *node_budget),
        Command::Sample { solver, runs, timeout, .. } => {
            apply_solver(&mut cfg, solver);
            set(&mut cfg.sampling.runs, *runs);
            set(&mut cfg.sampling.timeout, *timeout);
        }
        Command::Fit { alpha, .. } => set(&mut cfg.fit.alpha, *alpha),
        Command::Features { solver, probe_flips_per_var, .. } => {
            apply_solver(&mut cfg, solver);
            set(&mut cfg.features.probe_flips_per_var, *probe_flips_per_var);
        }
        Command::Train { trees, max_epochs, patience, .. } => {
            set(&mut cfg.train.trees, *trees);
            set(&mut cfg.train.max_epochs, *max_epochs);
            set(&mut cfg.train.patience, *patience);
        }
        Command::Evaluate { solver, policies, runs, budget, .. } => {
            apply_solver(&mut cfg, solver);
            if !policies.is_empty() {
                cfg.evaluate.policies = policies.clone();
            }
            set(&mut cfg.evaluate.runs, *runs);
            set(&mut cfg.evaluate.budget, *budget);
        }
        Command::RestartTime { .. } | Command::Predict { .. } | Command::Report { .. } => {}
    }
    cfg.validate()?;
    if let Some(w) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Ctx { cfg, layout: Layout::new(cli.out.clone()) };
    match cli.command {
        Command::Generate { .. } => commands::generate(&ctx),
        Command::Filter { manifest, .. } => commands::filter(&ctx, manifest.manifest.as_deref()),
        Command::Sample { manifest, resume, .. } => {
            commands::sample(&ctx, manifest.manifest.as_deref(), resume)
        }
        Command::Fit { manifest, .. } => commands::fit(&ctx, manifest.manifest.as_deref()),
        Command::RestartTime { manifest, family, shape, scale, location } => commands::restart_time(
            &ctx,
            manifest.manifest.as_deref(),
            DirectDist { family, shape, scale, location },
        ),
        Command::Features { manifest, resume, .. } => {
            commands::features(&ctx, manifest.manifest.as_deref(), resume)
        }
        Command::Train { manifest, .. } => commands::train(&ctx, manifest.manifest.as_deref()),
        Command::Predict { manifest, model } => {
            commands::predict(&ctx, manifest.manifest.as_deref(), model.as_deref())
        }
        Command::Evaluate { manifest, .. } => commands::evaluate(&ctx, manifest.manifest.as_deref()),
        Command::Report { manifest } => commands::report(&ctx, manifest.manifest.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rtdlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
