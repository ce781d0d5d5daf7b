//! Experiment orchestration: sweeps over activity levels, scenarios or
//! network sizes, with the optimal, best-response and learning methods run
//! at every point.
//!
//! `normalized_throughput` on a record is the value divided by the
//! exhaustive optimum of the same topology, empty when the optimum was not
//! computed. The summary's `learning_normalized` divides each learning run by
//! the best NE found on its topology, since the optimum is out of reach at
//! scale. The `*_interference_free` columns divide by `sum_n lambda_n R_n^max`
//! instead, the throughput the same users would get with no interference.

pub mod config;
pub mod output;
pub mod verify;

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{exhaustive_optimal, run_br_trials};
use crate::error::{Error, Result};
use crate::game::{max_throughput, ExpectedGame};
use crate::learning::{run_learning, LearningParams};
use crate::network::Network;
use crate::seeds::derive_seed;

pub use config::{Activity, ExperimentConfig, Format, Method, NetworkSource, Sweep, SweepPoint};

/// One method run on one topology at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub method: Method,
    pub sweep_value: f64,
    pub topology: usize,
    pub trial: usize,
    pub seed: u64,
    pub expected_throughput_bps: f64,
    /// Value over the exhaustive optimum of the same topology.
    pub normalized_throughput: Option<f64>,
    /// Best-response passes, or learning slots until convergence (the full
    /// budget when the run did not converge).
    pub rounds_or_slots: u64,
    pub converged: bool,
}

/// Aggregate over all topologies and trials of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub sweep_value: f64,
    pub optimal: Option<f64>,
    pub best_ne: Option<f64>,
    pub worst_ne: Option<f64>,
    pub learning_mean: Option<f64>,
    pub learning_std: Option<f64>,
    /// Learning over best NE, per topology.
    pub learning_normalized: Option<f64>,
    pub best_ne_interference_free: Option<f64>,
    pub learning_interference_free: Option<f64>,
    pub learning_converged_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub sweep_key: String,
    pub records: Vec<RunRecord>,
    pub summary: Vec<Summary>,
}

/// Per-topology outcome before aggregation.
struct TopologyRun {
    records: Vec<RunRecord>,
    interference_free: f64,
    optimal: Option<f64>,
    best: Option<f64>,
    worst: Option<f64>,
    learning: Vec<f64>,
    learning_converged: usize,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn run_topology(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    point_index: usize,
    topology: usize,
    net: &Network,
) -> Result<TopologyRun> {
    let value = point.value();
    let game = ExpectedGame::new(net, cfg.expectation)?;
    let stream = (point_index as u64) << 32 | topology as u64;
    let interference_free: f64 = (0..net.len())
        .map(|n| net.ap(n).active_prob * max_throughput(net, n))
        .sum();

    let mut run = TopologyRun {
        records: Vec::new(),
        interference_free,
        optimal: None,
        best: None,
        worst: None,
        learning: Vec::new(),
        learning_converged: 0,
    };

    if cfg.methods.contains(&Method::Optimal) {
        let (_, opt) = exhaustive_optimal(net, cfg.expectation)?;
        run.optimal = Some(opt);
    }
    let normalize = |v: f64| run.optimal.map(|o| v / o);

    let mut records = Vec::new();
    if let Some(opt) = run.optimal {
        records.push(RunRecord {
            method: Method::Optimal,
            sweep_value: value,
            topology,
            trial: 0,
            seed: 0,
            expected_throughput_bps: opt,
            normalized_throughput: Some(1.0),
            rounds_or_slots: 0,
            converged: true,
        });
    }

    if cfg.methods.contains(&Method::BestResponse) {
        let seed = derive_seed(cfg.seed, "best_response", stream);
        let trials = run_br_trials(&game, cfg.br_trials(), seed, cfg.max_br_rounds)?;
        if let Some(t) = trials.iter().find(|t| !t.converged) {
            return Err(Error::Capacity(format!(
                "best response trial {} did not converge within {} rounds",
                t.trial, cfg.max_br_rounds
            )));
        }
        for t in &trials {
            records.push(RunRecord {
                method: Method::BestResponse,
                sweep_value: value,
                topology,
                trial: t.trial,
                seed: t.seed,
                expected_throughput_bps: t.expected_throughput_bps,
                normalized_throughput: normalize(t.expected_throughput_bps),
                rounds_or_slots: t.rounds as u64,
                converged: t.converged,
            });
        }
        let values = trials.iter().map(|t| t.expected_throughput_bps);
        run.best = values.clone().reduce(f64::max);
        run.worst = values.reduce(f64::min);
    }

    if cfg.methods.contains(&Method::Learning) {
        let outcomes: Vec<(u64, f64, Option<u64>)> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(cfg.seed, "learning", stream << 20 | trial as u64);
                let params = LearningParams::new(cfg.iterations, cfg.step_size, seed);
                let outcome = run_learning(net, &params)?;
                let value = game.network_throughput(&outcome.final_profile)?;
                Ok((seed, value, outcome.converged_slot))
            })
            .collect::<Result<_>>()?;
        for (trial, &(seed, v, slot)) in outcomes.iter().enumerate() {
            records.push(RunRecord {
                method: Method::Learning,
                sweep_value: value,
                topology,
                trial,
                seed,
                expected_throughput_bps: v,
                normalized_throughput: normalize(v),
                rounds_or_slots: slot.unwrap_or(cfg.iterations as u64),
                converged: slot.is_some(),
            });
            run.learning.push(v);
        }
        run.learning_converged = outcomes.iter().filter(|o| o.2.is_some()).count();
    }
    run.records = records;
    Ok(run)
}

fn summarize(value: f64, runs: &[TopologyRun]) -> Summary {
    let learning: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.learning.iter().copied())
        .collect();
    let learning_mean = mean(learning.iter().copied());
    let learning_std = learning_mean.map(|m| {
        (learning.iter().map(|x| (x - m).powi(2)).sum::<f64>() / learning.len() as f64).sqrt()
    });
    let total_learning: usize = runs.iter().map(|r| r.learning.len()).sum();
    Summary {
        sweep_value: value,
        optimal: mean(runs.iter().filter_map(|r| r.optimal)),
        best_ne: mean(runs.iter().filter_map(|r| r.best)),
        worst_ne: mean(runs.iter().filter_map(|r| r.worst)),
        learning_mean,
        learning_std,
        learning_normalized: mean(runs.iter().flat_map(|r| {
            r.best
                .into_iter()
                .flat_map(move |b| r.learning.iter().map(move |v| v / b))
        })),
        best_ne_interference_free: mean(
            runs.iter()
                .filter_map(|r| r.best.map(|b| b / r.interference_free)),
        ),
        learning_interference_free: mean(
            runs.iter()
                .flat_map(|r| r.learning.iter().map(move |v| v / r.interference_free)),
        ),
        learning_converged_fraction: (total_learning > 0).then(|| {
            runs.iter().map(|r| r.learning_converged).sum::<usize>() as f64 / total_learning as f64
        }),
    }
}

/// Runs every sweep point of `cfg`. Deterministic given the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (index, point) in cfg.sweep_points().iter().enumerate() {
        let at_point = |e: Error| Error::Config(format!("at {point}: {e}"));
        let nets = cfg.networks_at(point).map_err(at_point)?;
        let runs: Vec<TopologyRun> = nets
            .par_iter()
            .enumerate()
            .map(|(t, net)| run_topology(cfg, point, index, t, net))
            .collect::<Result<_>>()
            .map_err(at_point)?;
        summary.push(summarize(point.value(), &runs));
        for run in runs {
            records.extend(run.records);
        }
    }
    // Output order: sweep point, then method, then topology and trial.
    records.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.method.cmp(&b.method))
            .then(a.topology.cmp(&b.topology))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(ExperimentResult {
        name: cfg.name.clone(),
        sweep_key: cfg.sweep_key().to_string(),
        records,
        summary,
    })
}
