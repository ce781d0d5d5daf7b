//! Centralized baselines: pure Nash equilibrium checks, best-response
//! dynamics on the robust game and the exhaustive network optimum.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{state_utility, ChannelProfile, Expectation, ExpectedGame};
use crate::network::{ActiveSet, Network};
use crate::seeds::{derive_seed, rng_from_seed, rng_stream};

/// A deviation only counts as an improvement if it gains more than this
/// fraction of the payoff. Keeps best response from chasing rounding noise.
pub const IMPROVEMENT_REL: f64 = 1e-12;

/// Largest joint strategy space [`exhaustive_optimal`] will search.
pub const MAX_PROFILES: u64 = 10_000_000;

pub fn improves(current: f64, candidate: f64) -> bool {
    candidate - current > IMPROVEMENT_REL * current.abs().max(candidate.abs())
}

/// Which game a profile is checked against.
pub enum Game<'a> {
    /// Fixed active set, payoff is the instantaneous throughput.
    StateBased(&'a ActiveSet),
    /// Expected throughput over random active sets.
    Robust(&'a ExpectedGame<'a>),
}

impl Game<'_> {
    fn payoff(
        &self,
        net: &Network,
        prof: &ChannelProfile,
        n: usize,
        channel: usize,
    ) -> Result<f64> {
        match self {
            Game::StateBased(b) => Ok(state_utility(net, b, &prof.with_choice(n, channel), n)),
            Game::Robust(g) => g.utility_on(prof, n, channel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub user: usize,
    pub channel: usize,
    pub gain: f64,
}

/// Result of an equilibrium check. `witness` is set iff the profile is not a
/// pure NE: the lowest-index user that can improve, with its best move.
#[derive(Debug, Clone, PartialEq)]
pub struct NeVerdict {
    pub witness: Option<Deviation>,
}

impl NeVerdict {
    pub fn is_ne(&self) -> bool {
        self.witness.is_none()
    }
}

pub fn is_pure_ne(net: &Network, prof: &ChannelProfile, game: &Game<'_>) -> Result<NeVerdict> {
    for n in 0..net.len() {
        let current = game.payoff(net, prof, n, prof.channel(n))?;
        let mut best: Option<Deviation> = None;
        for &c in net.channels(n) {
            if c == prof.channel(n) {
                continue;
            }
            let value = game.payoff(net, prof, n, c)?;
            if improves(current, value) && best.is_none_or(|d| value - current > d.gain) {
                best = Some(Deviation {
                    user: n,
                    channel: c,
                    gain: value - current,
                });
            }
        }
        if best.is_some() {
            return Ok(NeVerdict { witness: best });
        }
    }
    Ok(NeVerdict { witness: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    RoundRobin,
    /// A fresh uniformly random permutation of users every pass.
    Random {
        seed: u64,
    },
}

/// History of one best-response run. `profiles[0]` is the start; every later
/// entry is the profile after one accepted switch.
#[derive(Debug, Clone)]
pub struct BrTrace {
    pub profiles: Vec<ChannelProfile>,
    pub potential_values: Vec<f64>,
    pub converged: bool,
    /// Number of passes over the users, including the final quiet pass.
    pub rounds: usize,
}

impl BrTrace {
    pub fn final_profile(&self) -> &ChannelProfile {
        self.profiles.last().expect("trace holds the start profile")
    }

    pub fn switches(&self) -> usize {
        self.profiles.len() - 1
    }
}

/// The channel user `n` would pick: the payoff maximizer, staying put on
/// ties with the current channel and otherwise taking the lowest index.
fn best_response(
    game: &ExpectedGame<'_>,
    prof: &ChannelProfile,
    n: usize,
) -> Result<Option<usize>> {
    let net = game.network();
    let current = game.utility(prof, n)?;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_channel = prof.channel(n);
    for &c in net.channels(n) {
        let v = if c == prof.channel(n) {
            current
        } else {
            game.utility_on(prof, n, c)?
        };
        if v > best_value {
            best_value = v;
            best_channel = c;
        }
    }
    if best_channel != prof.channel(n) && improves(current, best_value) {
        Ok(Some(best_channel))
    } else {
        Ok(None)
    }
}

pub fn best_response_dynamics(
    game: &ExpectedGame<'_>,
    start: &ChannelProfile,
    order: UpdateOrder,
    max_rounds: usize,
) -> Result<BrTrace> {
    let net = game.network();
    ChannelProfile::new(net, start.as_slice().to_vec())?;
    let mut users: Vec<usize> = (0..net.len()).collect();
    let mut order_rng = match order {
        UpdateOrder::Random { seed } => Some(rng_from_seed(seed)),
        UpdateOrder::RoundRobin => None,
    };

    let mut prof = start.clone();
    let mut trace = BrTrace {
        profiles: vec![prof.clone()],
        potential_values: vec![game.potential(&prof)],
        converged: false,
        rounds: 0,
    };
    while trace.rounds < max_rounds {
        trace.rounds += 1;
        if let Some(rng) = order_rng.as_mut() {
            users.shuffle(rng);
        }
        let mut changed = false;
        for &n in &users {
            if let Some(c) = best_response(game, &prof, n)? {
                prof = prof.with_choice(n, c);
                trace.potential_values.push(game.potential(&prof));
                trace.profiles.push(prof.clone());
                changed = true;
            }
        }
        if !changed {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

/// One randomized best-response trial as reported by the harness and CLI.
#[derive(Debug, Clone, Serialize)]
pub struct BrTrial {
    pub trial: usize,
    pub seed: u64,
    pub rounds: usize,
    pub converged: bool,
    pub expected_throughput_bps: f64,
    #[serde(skip)]
    pub profile: ChannelProfile,
}

/// Runs `trials` best-response dynamics from random starts with random
/// update orders. Trial `t` uses seed `derive_seed(master_seed, "br", t)`.
pub fn run_br_trials(
    game: &ExpectedGame<'_>,
    trials: usize,
    master_seed: u64,
    max_rounds: usize,
) -> Result<Vec<BrTrial>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(master_seed, "br", t as u64);
            let start = ChannelProfile::random(game.network(), &mut rng_stream(seed, 0));
            let order = UpdateOrder::Random {
                seed: derive_seed(seed, "order", 0),
            };
            let trace = best_response_dynamics(game, &start, order, max_rounds)?;
            let profile = trace.final_profile().clone();
            Ok(BrTrial {
                trial: t,
                seed,
                rounds: trace.rounds,
                converged: trace.converged,
                expected_throughput_bps: game.network_throughput(&profile)?,
                profile,
            })
        })
        .collect()
}

fn profile_count(net: &Network) -> Option<u64> {
    net.aps()
        .iter()
        .try_fold(1u64, |acc, ap| acc.checked_mul(ap.channels.len() as u64))
}

fn profile_at(net: &Network, mut index: u64) -> ChannelProfile {
    // Mixed radix with user 0 most significant, so index order is
    // lexicographic order of profiles.
    let mut choices = vec![0; net.len()];
    for n in (0..net.len()).rev() {
        let set = net.channels(n);
        let k = set.len() as u64;
        choices[n] = set[(index % k) as usize];
        index /= k;
    }
    ChannelProfile::new(net, choices).expect("enumerated profile is valid")
}

/// Profile maximizing expected network throughput, by exhaustive search.
/// Ties go to the lexicographically smallest profile.
pub fn exhaustive_optimal(net: &Network, mode: Expectation) -> Result<(ChannelProfile, f64)> {
    let total = profile_count(net)
        .filter(|&c| c <= MAX_PROFILES)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "joint strategy space exceeds {MAX_PROFILES} profiles"
            ))
        })?;
    let game = ExpectedGame::new(net, mode)?;
    let (index, value) = (0..total)
        .into_par_iter()
        .map(|i| game.network_throughput(&profile_at(net, i)).map(|v| (i, v)))
        .try_reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                let keep_a = a.1 > b.1 || (a.1 == b.1 && a.0 < b.0);
                Ok(if keep_a { a } else { b })
            },
        )?;
    Ok((profile_at(net, index), value))
}
