//! Command line front end for the spectrum access simulator.
//!
//! Every command reads an optional TOML config (`--config`); without one the
//! fixture network and default parameters are used. Single-network commands
//! use the first topology of the config's first sweep point.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvws_core::equilibrium::{exhaustive_optimal, run_br_trials};
use tvws_core::game::{payoff_breakdown, ExpectedGame};
use tvws_core::harness::output::{
    emit_outputs, fmt_f64, write_equilibrium_csv, write_equilibrium_summary_csv, write_eval_csv,
    write_verify_report, TraceWriter,
};
use tvws_core::harness::verify::{verify_opg, OpgReport};
use tvws_core::harness::{run_experiment, ExperimentConfig, Method, NetworkSource, Sweep};
use tvws_core::learning::{run_learning_with, LearningParams, MixedStrategyTable};
use tvws_core::seeds::derive_seed;
use tvws_core::{ActiveSet, ChannelProfile, Error, Network, Result};

const DEFAULT_DEVIATIONS: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "simcli",
    version,
    about = "Distributed spectrum access simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write random topologies as network files.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of access points (overrides the config).
        #[arg(long)]
        n_aps: Option<usize>,
        /// Topologies to draw (overrides the config).
        #[arg(long)]
        topologies: Option<usize>,
    },
    /// Print SINR, throughput and weighted interference for a profile in one
    /// activity state.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: Option<PathBuf>,
        /// Comma separated channels, one per user.
        #[arg(long)]
        profile: Option<String>,
        /// Comma separated 1-based active users (default: all).
        #[arg(long)]
        active: Option<String>,
    },
    /// Run the distributed learning automata once.
    Learn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        /// Per-slot trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Randomized best-response trials.
    Equilibrium {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Exhaustive search for the throughput-optimal profile.
    Optimal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Run the configured sweep and write records, summary and JSON.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Check the potential game sign and factor-of-two properties.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        deviations: Option<usize>,
        /// Also check the robust game under the configured expectation mode.
        #[arg(long)]
        robust: bool,
    },
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn new(common: &Common, network: Option<&Path>) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::fixture_default(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        if let Some(path) = network {
            cfg.network = NetworkSource::File {
                path: path.to_path_buf(),
            };
            if matches!(cfg.sweep, Some(Sweep::NAps { .. })) {
                cfg.sweep = None;
            }
        }
        cfg.validate()?;
        let out = common
            .output
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { cfg, out })
    }

    fn network(&self) -> Result<Network> {
        let point = self.cfg.sweep_points()[0];
        self.cfg
            .networks_at(&point)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Config("config yields no network".into()))
    }

    fn mkdir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }
}

/// Prints written paths; a closed stdout is not an error worth dying for.
fn show(paths: &[&Path]) {
    let mut out = std::io::stdout().lock();
    for p in paths {
        let _ = writeln!(out, "{}", p.display());
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn generate(common: &Common, n_aps: Option<usize>, topologies: Option<usize>) -> Result<()> {
    let mut ctx = Context::new(common, None)?;
    let (n, t, params) = match &ctx.cfg.network {
        NetworkSource::Random {
            n_aps,
            topologies,
            params,
        } => (*n_aps, *topologies, params.clone()),
        _ => (8, 1, Default::default()),
    };
    ctx.cfg.network = NetworkSource::Random {
        n_aps: n_aps.unwrap_or(n),
        topologies: topologies.unwrap_or(t),
        params,
    };
    ctx.cfg.validate()?;
    ctx.mkdir()?;
    for point in ctx.cfg.sweep_points() {
        for (t, net) in ctx.cfg.networks_at(&point)?.iter().enumerate() {
            let path = ctx.out.join(format!("network_n{}_t{t}.toml", net.len()));
            net.save(&path)?;
            show(&[&path]);
        }
    }
    Ok(())
}

fn eval(
    common: &Common,
    network: Option<&Path>,
    profile: Option<&str>,
    active: Option<&str>,
) -> Result<()> {
    let ctx = Context::new(common, network)?;
    let net = ctx.network()?;
    let prof = match profile {
        Some(p) => ChannelProfile::new(&net, parse_list(p, "profile")?)?,
        None => ChannelProfile::lowest(&net),
    };
    let b = match active {
        Some(a) => {
            let members = parse_list(a, "active")?;
            if members.contains(&0) {
                return Err(Error::InvalidParameter("active users are 1-based".into()));
            }
            let members: Vec<usize> = members.iter().map(|m| m - 1).collect();
            ActiveSet::from_members(net.len(), &members)?
        }
        None => ActiveSet::full(net.len()),
    };
    let rows = b
        .members()
        .map(|n| payoff_breakdown(&net, &b, &prof, n))
        .collect::<Result<Vec<_>>>()?;
    if common.output.is_some() {
        ctx.mkdir()?;
        let path = ctx.out.join("eval.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_eval_csv(&rows, file)
    } else {
        write_eval_csv(&rows, std::io::stdout().lock())
    }
}

fn learn(
    common: &Common,
    network: Option<&Path>,
    iterations: Option<usize>,
    step_size: Option<f64>,
    trace: Option<&Path>,
) -> Result<()> {
    let ctx = Context::new(common, network)?;
    let net = ctx.network()?;
    let seed = derive_seed(ctx.cfg.seed, "learning", 0);
    let params = LearningParams::new(
        iterations.unwrap_or(ctx.cfg.iterations),
        step_size.unwrap_or(ctx.cfg.step_size),
        seed,
    );
    ctx.mkdir()?;
    let trace_path = trace
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.trace.as_ref().map(|p| ctx.out.join(p)));
    let mut writer = match &trace_path {
        Some(path) => Some(TraceWriter::create(
            path,
            &MixedStrategyTable::init_uniform(&net, params.step_size)?,
        )?),
        None => None,
    };
    let mut failure = Ok(());
    let outcome = run_learning_with(&net, &params, |record, table| {
        if let (Some(w), Ok(())) = (writer.as_mut(), &failure) {
            failure = w.write_slot(record, table);
        }
    })?;
    failure?;
    if let Some(w) = writer {
        w.finish()?;
    }
    let game = ExpectedGame::new(&net, ctx.cfg.expectation)?;
    let value = game.network_throughput(&outcome.final_profile)?;
    let path = ctx.out.join("learn.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "seed",
        "iterations",
        "step_size",
        "converged",
        "converged_slot",
        "profile",
        "expected_throughput_bps",
    ])?;
    w.write_record([
        seed.to_string(),
        params.iterations.to_string(),
        fmt_f64(params.step_size),
        outcome.converged().to_string(),
        outcome
            .converged_slot
            .map(|s| s.to_string())
            .unwrap_or_default(),
        outcome.final_profile.to_field(),
        fmt_f64(value),
    ])?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    show(&[&path]);
    Ok(())
}

fn equilibrium(common: &Common, network: Option<&Path>, trials: Option<usize>) -> Result<()> {
    let ctx = Context::new(common, network)?;
    let net = ctx.network()?;
    let game = ExpectedGame::new(&net, ctx.cfg.expectation)?;
    // Same seed stream as the first topology of the first sweep point in
    // `experiment`, so the two commands agree.
    let seed = derive_seed(ctx.cfg.seed, "best_response", 0);
    let results = run_br_trials(
        &game,
        trials.unwrap_or(ctx.cfg.br_trials()),
        seed,
        ctx.cfg.max_br_rounds,
    )?;
    let values = results.iter().map(|t| t.expected_throughput_bps);
    let best = values.clone().reduce(f64::max);
    let worst = values.reduce(f64::min);
    let optimal = if ctx.cfg.methods.contains(&Method::Optimal) {
        Some(exhaustive_optimal(&net, ctx.cfg.expectation)?.1)
    } else {
        None
    };
    ctx.mkdir()?;
    let trials_path = ctx.out.join("equilibrium.csv");
    write_equilibrium_csv(&results, &trials_path)?;
    let summary_path = ctx.out.join("equilibrium_summary.csv");
    write_equilibrium_summary_csv(best, worst, optimal, &summary_path)?;
    show(&[&trials_path, &summary_path]);
    Ok(())
}

fn optimal(common: &Common, network: Option<&Path>) -> Result<()> {
    let ctx = Context::new(common, network)?;
    let net = ctx.network()?;
    let (prof, value) = exhaustive_optimal(&net, ctx.cfg.expectation)?;
    ctx.mkdir()?;
    let path = ctx.out.join("optimal.csv");
    write_equilibrium_summary_csv(None, None, Some(value), &path)?;
    let profile_path = ctx.out.join("optimal_profile.csv");
    let mut f = std::fs::File::create(&profile_path).map_err(|e| Error::io(&profile_path, e))?;
    writeln!(f, "user,channel")
        .and_then(|_| {
            prof.as_slice()
                .iter()
                .enumerate()
                .try_for_each(|(n, c)| writeln!(f, "{},{c}", n + 1))
        })
        .map_err(|e| Error::io(&profile_path, e))?;
    show(&[&path, &profile_path]);
    Ok(())
}

fn experiment(common: &Common) -> Result<()> {
    let ctx = Context::new(common, None)?;
    let result = run_experiment(&ctx.cfg)?;
    ctx.mkdir()?;
    let written = emit_outputs(&result, &ctx.cfg.formats, &ctx.out)?;
    show(&written.iter().map(PathBuf::as_path).collect::<Vec<_>>());
    Ok(())
}

/// Returns whether the report was clean.
fn verify(
    common: &Common,
    network: Option<&Path>,
    deviations: Option<usize>,
    robust: bool,
) -> Result<bool> {
    let ctx = Context::new(common, network)?;
    let deviations = deviations
        .or(ctx.cfg.deviations)
        .unwrap_or(DEFAULT_DEVIATIONS);
    if deviations == 0 {
        return Err(Error::InvalidParameter(
            "deviations must be at least 1".into(),
        ));
    }
    let mut report = OpgReport::default();
    let robust = robust.then_some(ctx.cfg.expectation);
    for (index, point) in ctx.cfg.sweep_points().iter().enumerate() {
        for (t, net) in ctx.cfg.networks_at(point)?.iter().enumerate() {
            let seed = derive_seed(ctx.cfg.seed, "verify", (index as u64) << 32 | t as u64);
            report.merge(verify_opg(net, deviations, seed, robust)?);
        }
    }
    ctx.mkdir()?;
    write_verify_report(&report, &ctx.out)?;
    let _ = writeln!(
        std::io::stdout(),
        "state checks {}, robust checks {}, violations {}",
        report.state_checked,
        report.robust_checked,
        report.violations.len()
    );
    Ok(report.is_clean())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate {
            common,
            n_aps,
            topologies,
        } => generate(common, *n_aps, *topologies).map(|_| true),
        Command::Eval {
            common,
            network,
            profile,
            active,
        } => eval(
            common,
            network.as_deref(),
            profile.as_deref(),
            active.as_deref(),
        )
        .map(|_| true),
        Command::Learn {
            common,
            network,
            iterations,
            step_size,
            trace,
        } => learn(
            common,
            network.as_deref(),
            *iterations,
            *step_size,
            trace.as_deref(),
        )
        .map(|_| true),
        Command::Equilibrium {
            common,
            network,
            trials,
        } => equilibrium(common, network.as_deref(), *trials).map(|_| true),
        Command::Optimal { common, network } => optimal(common, network.as_deref()).map(|_| true),
        Command::Experiment { common } => experiment(common).map(|_| true),
        Command::Verify {
            common,
            network,
            deviations,
            robust,
        } => verify(common, network.as_deref(), *deviations, *robust),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("simcli: {e}");
            ExitCode::from(1)
        }
    }
}
