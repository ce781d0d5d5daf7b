//! Physical-layer payoffs and the two spectrum access games.
//!
//! The state-based game fixes an active set and pays each active user its
//! Shannon throughput. Its potential is the aggregate weighted interference
//! `phi = sum_n v_n`, `v_n = -sum_{i co-channel} P_i P_n d_in^-alpha`.
//!
//! The robust game pays each user its throughput in expectation over active
//! sets; its potential is the expectation of `phi`. Expectations are computed
//! by an [`ExpectedGame`] in one of three [`Expectation`] modes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ActiveSet, Network};
use crate::numerics::{exact_sum, CompensatedSum};
use crate::seeds::rng_from_seed;

/// Base of the logarithm in the throughput formula (bits per second).
pub const LOG_BASE: f64 = 2.0;

/// Largest network for which [`Expectation::Exact`] enumerates all states.
pub const MAX_EXACT_USERS: usize = 12;

/// Largest co-channel group [`Expectation::Factored`] will enumerate.
pub const MAX_FACTORED_PEERS: usize = 24;

/// One channel per user (1-based channel numbers), including inactive users.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelProfile(Vec<usize>);

impl ChannelProfile {
    pub fn new(net: &Network, choices: Vec<usize>) -> Result<Self> {
        if choices.len() != net.len() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries for {} users",
                choices.len(),
                net.len()
            )));
        }
        for (n, &c) in choices.iter().enumerate() {
            if !net.channels(n).contains(&c) {
                return Err(Error::InvalidProfile(format!(
                    "channel {c} not available to user {}",
                    n + 1
                )));
            }
        }
        Ok(Self(choices))
    }

    /// Every user on its lowest available channel.
    pub fn lowest(net: &Network) -> Self {
        Self((0..net.len()).map(|n| net.channels(n)[0]).collect())
    }

    pub fn random<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> Self {
        Self(
            (0..net.len())
                .map(|n| {
                    let set = net.channels(n);
                    set[rng.random_range(0..set.len())]
                })
                .collect(),
        )
    }

    #[inline]
    pub fn channel(&self, n: usize) -> usize {
        self.0[n]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn set(&mut self, net: &Network, n: usize, channel: usize) -> Result<()> {
        if !net.channels(n).contains(&channel) {
            return Err(Error::InvalidProfile(format!(
                "channel {channel} not available to user {}",
                n + 1
            )));
        }
        self.0[n] = channel;
        Ok(())
    }

    /// Copy with user `n` moved to `channel`. The caller guarantees validity.
    pub fn with_choice(&self, n: usize, channel: usize) -> Self {
        let mut p = self.clone();
        p.0[n] = channel;
        p
    }

    /// Space-separated channel list, used in CSV output.
    pub fn to_field(&self) -> String {
        self.0
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Per-user physical-layer quantities in one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffBreakdown {
    pub user: usize,
    pub channel: usize,
    pub sinr: f64,
    pub throughput_bps: f64,
    /// `v_n`, never positive.
    pub weighted_interference: f64,
    pub co_channel_peers: Vec<usize>,
}

fn ensure_active(b: &ActiveSet, n: usize) -> Result<()> {
    if b.contains(n) {
        Ok(())
    } else {
        Err(Error::InactiveUser { user: n + 1 })
    }
}

/// Users other than `n` that are active and on `n`'s channel.
pub fn co_channel_set(b: &ActiveSet, prof: &ChannelProfile, n: usize) -> Result<Vec<usize>> {
    ensure_active(b, n)?;
    Ok(peers_on(b, prof, n, prof.channel(n)))
}

fn peers_on(b: &ActiveSet, prof: &ChannelProfile, n: usize, channel: usize) -> Vec<usize> {
    b.members()
        .filter(|&i| i != n && prof.channel(i) == channel)
        .collect()
}

// sum_i P_i d_in^-alpha over the given interferers.
#[inline]
fn interference(net: &Network, n: usize, peers: impl Iterator<Item = usize>) -> f64 {
    peers
        .map(|i| net.ap(i).tx_power * net.path_gain(i, n))
        .sum()
}

#[inline]
fn sinr_given(net: &Network, n: usize, interference: f64) -> f64 {
    net.signal_power(n) / (interference + net.noise_watts())
}

pub fn throughput_from_sinr(net: &Network, sinr: f64) -> f64 {
    net.bandwidth_hz() * (1.0 + sinr).log(LOG_BASE)
}

pub fn sinr(net: &Network, b: &ActiveSet, prof: &ChannelProfile, n: usize) -> Result<f64> {
    let peers = co_channel_set(b, prof, n)?;
    Ok(sinr_given(net, n, interference(net, n, peers.into_iter())))
}

pub fn throughput(net: &Network, b: &ActiveSet, prof: &ChannelProfile, n: usize) -> Result<f64> {
    Ok(throughput_from_sinr(net, sinr(net, b, prof, n)?))
}

/// Interference-free throughput of user `n`.
pub fn max_throughput(net: &Network, n: usize) -> f64 {
    throughput_from_sinr(net, sinr_given(net, n, 0.0))
}

/// State-based game payoff; identical to [`throughput`].
pub fn utility(net: &Network, b: &ActiveSet, prof: &ChannelProfile, n: usize) -> Result<f64> {
    throughput(net, b, prof, n)
}

/// Payoff with inactive users earning nothing.
pub fn state_utility(net: &Network, b: &ActiveSet, prof: &ChannelProfile, n: usize) -> f64 {
    if !b.contains(n) {
        return 0.0;
    }
    let i = interference(net, n, peers_on(b, prof, n, prof.channel(n)).into_iter());
    throughput_from_sinr(net, sinr_given(net, n, i))
}

#[inline]
fn pair_weight(net: &Network, i: usize, n: usize) -> f64 {
    net.ap(i).tx_power * net.ap(n).tx_power * net.path_gain(i, n)
}

pub fn weighted_interference(
    net: &Network,
    b: &ActiveSet,
    prof: &ChannelProfile,
    n: usize,
) -> Result<f64> {
    let peers = co_channel_set(b, prof, n)?;
    Ok(-peers
        .into_iter()
        .map(|i| pair_weight(net, i, n))
        .sum::<f64>())
}

/// Aggregate weighted interference of the active users; zero for an empty set.
pub fn potential_phi(net: &Network, b: &ActiveSet, prof: &ChannelProfile) -> f64 {
    b.members()
        .map(|n| {
            -peers_on(b, prof, n, prof.channel(n))
                .into_iter()
                .map(|i| pair_weight(net, i, n))
                .sum::<f64>()
        })
        .sum()
}

fn phi_terms(net: &Network, b: &ActiveSet, prof: &ChannelProfile, out: &mut Vec<f64>, sign: f64) {
    for n in b.members() {
        for i in peers_on(b, prof, n, prof.channel(n)) {
            out.push(-sign * pair_weight(net, i, n));
        }
    }
}

/// `phi(a') - phi(a)` for user `n` moving to `channel`, with both potentials
/// recomputed in full and the difference correctly rounded.
pub fn potential_delta(
    net: &Network,
    b: &ActiveSet,
    prof: &ChannelProfile,
    n: usize,
    channel: usize,
) -> f64 {
    let moved = prof.with_choice(n, channel);
    let mut terms = Vec::new();
    phi_terms(net, b, &moved, &mut terms, 1.0);
    phi_terms(net, b, prof, &mut terms, -1.0);
    exact_sum(terms)
}

/// `v_n(a') - v_n(a)` for user `n` moving to `channel`, correctly rounded.
pub fn weighted_interference_delta(
    net: &Network,
    b: &ActiveSet,
    prof: &ChannelProfile,
    n: usize,
    channel: usize,
) -> Result<f64> {
    ensure_active(b, n)?;
    let before = peers_on(b, prof, n, prof.channel(n));
    let after = peers_on(b, prof, n, channel);
    let terms = after
        .into_iter()
        .map(|i| -pair_weight(net, i, n))
        .chain(before.into_iter().map(|i| pair_weight(net, i, n)));
    Ok(exact_sum(terms))
}

pub fn payoff_breakdown(
    net: &Network,
    b: &ActiveSet,
    prof: &ChannelProfile,
    n: usize,
) -> Result<PayoffBreakdown> {
    let peers = co_channel_set(b, prof, n)?;
    let i = interference(net, n, peers.iter().copied());
    let sinr = sinr_given(net, n, i);
    Ok(PayoffBreakdown {
        user: n,
        channel: prof.channel(n),
        sinr,
        throughput_bps: throughput_from_sinr(net, sinr),
        weighted_interference: -peers.iter().map(|&i| pair_weight(net, i, n)).sum::<f64>(),
        co_channel_peers: peers,
    })
}

/// How expectations over random active sets are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expectation {
    /// Enumerate all `2^N` states. Requires `N <= MAX_EXACT_USERS`.
    Exact,
    /// Exact as well, but each user's payoff only depends on the activity of
    /// its co-channel peers, so only their `2^K` sub-states are enumerated.
    Factored,
    /// Sample mean over `samples` active sets drawn from `seed`. The same
    /// sample set is reused for every user and profile.
    MonteCarlo { samples: usize, seed: u64 },
}

enum States {
    // (bitmask, probability) for every state with non-zero probability
    Enumerated(Vec<(u64, f64)>),
    Factored,
    Sampled(Vec<ActiveSet>),
}

/// The robust game on one network, with state enumeration or samples
/// prepared once and shared by all payoff evaluations.
pub struct ExpectedGame<'a> {
    net: &'a Network,
    states: States,
}

impl<'a> ExpectedGame<'a> {
    pub fn new(net: &'a Network, mode: Expectation) -> Result<Self> {
        let states = match mode {
            Expectation::Exact => {
                let n = net.len();
                if n > MAX_EXACT_USERS {
                    return Err(Error::Capacity(format!(
                        "exact expectation enumerates 2^N states and is limited to N <= \
                         {MAX_EXACT_USERS} (got N = {n}); use factored or monte_carlo mode"
                    )));
                }
                let states = (0..1u64 << n)
                    .map(|bits| (bits, net.state_probability(&ActiveSet::from_bits(n, bits))))
                    .filter(|&(_, p)| p > 0.0)
                    .collect();
                States::Enumerated(states)
            }
            Expectation::Factored => States::Factored,
            Expectation::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::InvalidParameter(
                        "monte_carlo needs samples >= 1".into(),
                    ));
                }
                let mut rng = rng_from_seed(seed);
                States::Sampled(
                    (0..samples)
                        .map(|_| net.sample_active_set(&mut rng))
                        .collect(),
                )
            }
        };
        Ok(Self { net, states })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Expected throughput of user `n` under `prof`.
    pub fn utility(&self, prof: &ChannelProfile, n: usize) -> Result<f64> {
        self.utility_on(prof, n, prof.channel(n))
    }

    /// Expected throughput of user `n` if it moved to `channel` while every
    /// other user keeps its choice in `prof`.
    pub fn utility_on(&self, prof: &ChannelProfile, n: usize, channel: usize) -> Result<f64> {
        let net = self.net;
        let peers: Vec<usize> = (0..net.len())
            .filter(|&i| i != n && prof.channel(i) == channel)
            .collect();
        let lambda_n = net.ap(n).active_prob;
        match &self.states {
            States::Enumerated(states) => {
                let mut acc = CompensatedSum::new();
                for &(bits, p) in states {
                    if bits >> n & 1 == 0 {
                        continue;
                    }
                    let i = interference(
                        net,
                        n,
                        peers.iter().copied().filter(|&i| bits >> i & 1 == 1),
                    );
                    acc.add(p * throughput_from_sinr(net, sinr_given(net, n, i)));
                }
                Ok(acc.value())
            }
            States::Factored => {
                let k = peers.len();
                if k > MAX_FACTORED_PEERS {
                    return Err(Error::Capacity(format!(
                        "{k} co-channel peers exceed the factored limit of {MAX_FACTORED_PEERS}"
                    )));
                }
                let mut acc = CompensatedSum::new();
                for sub in 0..1u64 << k {
                    let mut p = lambda_n;
                    let mut i_sum = 0.0;
                    for (j, &i) in peers.iter().enumerate() {
                        let lam = net.ap(i).active_prob;
                        if sub >> j & 1 == 1 {
                            p *= lam;
                            i_sum += net.ap(i).tx_power * net.path_gain(i, n);
                        } else {
                            p *= 1.0 - lam;
                        }
                    }
                    if p > 0.0 {
                        acc.add(p * throughput_from_sinr(net, sinr_given(net, n, i_sum)));
                    }
                }
                Ok(acc.value())
            }
            States::Sampled(samples) => {
                let mut acc = CompensatedSum::new();
                for b in samples {
                    if !b.contains(n) {
                        continue;
                    }
                    let i = interference(net, n, peers.iter().copied().filter(|&i| b.contains(i)));
                    acc.add(throughput_from_sinr(net, sinr_given(net, n, i)));
                }
                Ok(acc.value() / samples.len() as f64)
            }
        }
    }

    /// Expected aggregate weighted interference.
    pub fn potential(&self, prof: &ChannelProfile) -> f64 {
        let net = self.net;
        let n = net.len();
        match &self.states {
            States::Enumerated(states) => {
                let mut acc = CompensatedSum::new();
                for &(bits, p) in states {
                    let b = ActiveSet::from_bits(n, bits);
                    acc.add(p * potential_phi(net, &b, prof));
                }
                acc.value()
            }
            States::Factored => {
                // phi is a sum of pair terms, each active with prob lambda_i lambda_n.
                let mut acc = CompensatedSum::new();
                for u in 0..n {
                    for i in 0..n {
                        if i != u && prof.channel(i) == prof.channel(u) {
                            let lam = net.ap(i).active_prob * net.ap(u).active_prob;
                            acc.add(-lam * pair_weight(net, i, u));
                        }
                    }
                }
                acc.value()
            }
            States::Sampled(samples) => {
                let acc: CompensatedSum = samples
                    .iter()
                    .map(|b| potential_phi(net, b, prof))
                    .collect();
                acc.value() / samples.len() as f64
            }
        }
    }

    /// Sum of all users' expected throughputs.
    pub fn network_throughput(&self, prof: &ChannelProfile) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for n in 0..self.net.len() {
            acc.add(self.utility(prof, n)?);
        }
        Ok(acc.value())
    }
}

pub fn expected_utility(
    net: &Network,
    prof: &ChannelProfile,
    n: usize,
    mode: Expectation,
) -> Result<f64> {
    ExpectedGame::new(net, mode)?.utility(prof, n)
}

pub fn expected_potential(net: &Network, prof: &ChannelProfile, mode: Expectation) -> Result<f64> {
    Ok(ExpectedGame::new(net, mode)?.potential(prof))
}

pub fn expected_network_throughput(
    net: &Network,
    prof: &ChannelProfile,
    mode: Expectation,
) -> Result<f64> {
    ExpectedGame::new(net, mode)?.network_throughput(prof)
}

/// Sign of `delta`, counting it as zero when `|delta| <= rel * scale`.
pub fn tolerant_sign(delta: f64, scale: f64, rel: f64) -> i8 {
    if delta.abs() <= rel * scale.abs() || delta == 0.0 {
        0
    } else if delta > 0.0 {
        1
    } else {
        -1
    }
}
