//! Distributed stochastic learning automata.
//!
//! Every active user draws a channel from its mixed strategy, observes its
//! own throughput, normalizes it by the interference-free rate and applies a
//! linear reward-inaction update. Inactive users leave their strategy alone.
//! No user sees anything but its own action and payoff.

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{max_throughput, state_utility, ChannelProfile};
use crate::network::{ActiveSet, Network};
use crate::seeds::{rng_stream, SimRng};

/// A strategy row counts as converged once its largest entry exceeds this.
pub const DEFAULT_CONVERGENCE_THRESHOLD: f64 = 0.99;

pub const DEFAULT_STEP_SIZE: f64 = 0.1;

/// Per-user channel probabilities, indexed like the user's channel list.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategyTable {
    rows: Vec<Vec<f64>>,
    channels: Vec<Vec<usize>>,
    step_size: f64,
    slot: u64,
}

impl MixedStrategyTable {
    /// Uniform strategies over each user's available channels, slot 1.
    pub fn init_uniform(net: &Network, step_size: f64) -> Result<Self> {
        if !(step_size > 0.0 && step_size < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step size {step_size} outside (0, 1)"
            )));
        }
        let channels: Vec<Vec<usize>> = net.aps().iter().map(|ap| ap.channels.clone()).collect();
        let rows = channels
            .iter()
            .map(|set| vec![1.0 / set.len() as f64; set.len()])
            .collect();
        Ok(Self {
            rows,
            channels,
            step_size,
            slot: 1,
        })
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn channels(&self, n: usize) -> &[usize] {
        &self.channels[n]
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn probability(&self, n: usize, channel: usize) -> Option<f64> {
        let k = self.channels[n].iter().position(|&c| c == channel)?;
        Some(self.rows[n][k])
    }

    pub fn max_entry(&self, n: usize) -> f64 {
        self.rows[n].iter().copied().fold(0.0, f64::max)
    }

    pub fn all_converged(&self, threshold: f64) -> bool {
        (0..self.rows.len()).all(|n| self.max_entry(n) > threshold)
    }

    /// Most likely channel per user, lowest channel on ties.
    pub fn argmax_profile(&self, net: &Network) -> ChannelProfile {
        let choices = self
            .rows
            .iter()
            .zip(&self.channels)
            .map(|(row, set)| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                set[best]
            })
            .collect();
        ChannelProfile::new(net, choices).expect("table channels come from the network")
    }

    /// Samples a channel from user `n`'s row. Zero-probability channels are
    /// never returned.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> usize {
        let row = &self.rows[n];
        let u = rng.random::<f64>();
        let mut cum = 0.0;
        for (k, &q) in row.iter().enumerate() {
            cum += q;
            if u < cum && q > 0.0 {
                return self.channels[n][k];
            }
        }
        // u landed in the rounding gap above the accumulated sum.
        let k = row.iter().rposition(|&q| q > 0.0).expect("row has mass");
        self.channels[n][k]
    }

    /// Linear reward-inaction update of user `n` after playing `chosen` and
    /// receiving normalized payoff `r`.
    pub fn sla_update(&mut self, n: usize, chosen: usize, r: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "normalized payoff {r} outside [0, 1]"
            )));
        }
        let k = self.channels[n]
            .iter()
            .position(|&c| c == chosen)
            .ok_or_else(|| {
                Error::InvalidProfile(format!("channel {chosen} not available to user {}", n + 1))
            })?;
        let gain = self.step_size * r;
        if gain == 0.0 {
            return Ok(());
        }
        for (m, q) in self.rows[n].iter_mut().enumerate() {
            if m == k {
                *q += gain * (1.0 - *q);
            } else {
                *q -= gain * *q;
            }
        }
        Ok(())
    }
}

/// `R_n / R_n^max`, clamped to `[0, 1]`.
pub fn normalized_payoff(
    net: &Network,
    b: &ActiveSet,
    prof: &ChannelProfile,
    n: usize,
) -> Result<f64> {
    let r = crate::game::throughput(net, b, prof, n)?;
    Ok((r / max_throughput(net, n)).clamp(0.0, 1.0))
}

/// What happened in one slot. Vectors are aligned with `choices`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub active: ActiveSet,
    /// `(user, channel)` for every active user, ascending by user.
    pub choices: Vec<(usize, usize)>,
    pub raw_throughput: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Learning state of a whole network, advanced one slot at a time.
///
/// Randomness comes from one seed split into independent ChaCha streams:
/// stream 0 drives activity, stream `1 + n` drives user `n`'s channel draws.
pub struct Learner<'a> {
    net: &'a Network,
    table: MixedStrategyTable,
    rmax: Vec<f64>,
    activity_rng: SimRng,
    choice_rngs: Vec<SimRng>,
}

impl<'a> Learner<'a> {
    pub fn new(net: &'a Network, step_size: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            net,
            table: MixedStrategyTable::init_uniform(net, step_size)?,
            rmax: (0..net.len()).map(|n| max_throughput(net, n)).collect(),
            activity_rng: rng_stream(seed, 0),
            choice_rngs: (0..net.len())
                .map(|n| rng_stream(seed, 1 + n as u64))
                .collect(),
        })
    }

    pub fn table(&self) -> &MixedStrategyTable {
        &self.table
    }

    /// Each active user draws a channel from its current strategy.
    pub fn choose(&mut self, active: &ActiveSet) -> Vec<(usize, usize)> {
        active
            .members()
            .map(|n| (n, self.table.draw(n, &mut self.choice_rngs[n])))
            .collect()
    }

    /// Simultaneous throughputs of the active users given their choices,
    /// raw and normalized.
    pub fn payoffs(&self, active: &ActiveSet, choices: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
        let mut joint = ChannelProfile::lowest(self.net);
        for &(n, c) in choices {
            joint = joint.with_choice(n, c);
        }
        choices
            .iter()
            .map(|&(n, _)| {
                let raw = state_utility(self.net, active, &joint, n);
                (raw, (raw / self.rmax[n]).clamp(0.0, 1.0))
            })
            .unzip()
    }

    /// Applies the updates for one slot and advances the slot counter.
    pub fn apply(&mut self, choices: &[(usize, usize)], normalized: &[f64]) -> Result<()> {
        for (&(n, c), &r) in choices.iter().zip(normalized) {
            self.table.sla_update(n, c, r)?;
        }
        self.table.slot += 1;
        Ok(())
    }

    /// Plays one slot with a given active set.
    pub fn step_with(&mut self, active: ActiveSet) -> Result<SlotRecord> {
        let slot = self.table.slot;
        let choices = self.choose(&active);
        let (raw_throughput, normalized) = self.payoffs(&active, &choices);
        self.apply(&choices, &normalized)?;
        Ok(SlotRecord {
            slot,
            active,
            choices,
            raw_throughput,
            normalized,
        })
    }

    /// Plays one slot with a freshly sampled active set.
    pub fn step(&mut self) -> Result<SlotRecord> {
        let active = self.net.sample_active_set(&mut self.activity_rng);
        self.step_with(active)
    }

    pub fn into_table(self) -> MixedStrategyTable {
        self.table
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub iterations: usize,
    pub step_size: f64,
    pub seed: u64,
    pub convergence_threshold: f64,
}

impl LearningParams {
    pub fn new(iterations: usize, step_size: f64, seed: u64) -> Self {
        Self {
            iterations,
            step_size,
            seed,
            convergence_threshold: DEFAULT_CONVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearningOutcome {
    pub table: MixedStrategyTable,
    pub final_profile: ChannelProfile,
    /// First slot after which every row's largest entry exceeded the
    /// convergence threshold, if that happened.
    pub converged_slot: Option<u64>,
    pub slots: usize,
}

impl LearningOutcome {
    pub fn converged(&self) -> bool {
        self.converged_slot.is_some()
    }
}

/// Runs the full iteration budget, calling `observe` after every slot with
/// the slot record and the updated table.
pub fn run_learning_with<F>(
    net: &Network,
    params: &LearningParams,
    mut observe: F,
) -> Result<LearningOutcome>
where
    F: FnMut(&SlotRecord, &MixedStrategyTable),
{
    if params.iterations == 0 {
        return Err(Error::InvalidParameter(
            "iterations must be at least 1".into(),
        ));
    }
    let mut learner = Learner::new(net, params.step_size, params.seed)?;
    let mut converged_slot = None;
    for _ in 0..params.iterations {
        let record = learner.step()?;
        if converged_slot.is_none() && learner.table.all_converged(params.convergence_threshold) {
            converged_slot = Some(record.slot);
        }
        observe(&record, &learner.table);
    }
    let table = learner.into_table();
    Ok(LearningOutcome {
        final_profile: table.argmax_profile(net),
        table,
        converged_slot,
        slots: params.iterations,
    })
}

pub fn run_learning(net: &Network, params: &LearningParams) -> Result<LearningOutcome> {
    run_learning_with(net, params, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{fixture_fig2, AccessPoint};

    fn two_users() -> Network {
        let aps = (0..2)
            .map(|i| AccessPoint {
                id: i,
                x_m: 100.0 * i as f64,
                y_m: 0.0,
                tx_power: 0.1,
                channels: vec![1, 2],
                active_prob: 1.0,
                rx_distance: 20.0,
            })
            .collect();
        Network::new(aps, 2, 6e6, -100.0, 4.0).unwrap()
    }

    #[test]
    fn uniform_initialization() {
        let net = fixture_fig2();
        let t = MixedStrategyTable::init_uniform(&net, 0.1).unwrap();
        assert_eq!(t.slot(), 1);
        assert_eq!(t.row(1), &[1.0 / 3.0; 3]);
        assert_eq!(t.row(0), &[0.5, 0.5]);
        for row in t.rows() {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        assert!(MixedStrategyTable::init_uniform(&net, 0.0).is_err());
        assert!(MixedStrategyTable::init_uniform(&net, 1.0).is_err());
    }

    #[test]
    fn update_rule_arithmetic() {
        let net = fixture_fig2();
        let mut t = MixedStrategyTable::init_uniform(&net, 0.1).unwrap();
        t.sla_update(1, 2, 1.0).unwrap();
        let row = t.row(1);
        assert!((row[0] - 0.4).abs() < 1e-15);
        assert!((row[1] - 0.3).abs() < 1e-15);
        assert!((row[2] - 0.3).abs() < 1e-15);

        let before = t.clone();
        t.sla_update(1, 3, 0.0).unwrap();
        assert_eq!(t, before);

        assert!(t.sla_update(1, 3, 1.5).is_err());
        assert!(t.sla_update(1, 3, -0.1).is_err());
        assert!(t.sla_update(1, 1, 0.5).is_err());
    }

    #[test]
    fn pure_rows_are_absorbing() {
        let net = fixture_fig2();
        let mut t = MixedStrategyTable::init_uniform(&net, 0.1).unwrap();
        t.rows[3] = vec![0.0, 1.0];
        let mut rng = rng_stream(1, 0);
        for r in [0.0, 0.3, 1.0] {
            let c = t.draw(3, &mut rng);
            assert_eq!(c, 4);
            t.sla_update(3, c, r).unwrap();
            assert_eq!(t.row(3), &[0.0, 1.0]);
        }
    }

    #[test]
    fn normalized_payoff_values() {
        let net = two_users();
        let alone = ActiveSet::from_members(2, &[0]).unwrap();
        let shared = ChannelProfile::new(&net, vec![1, 1]).unwrap();
        assert_eq!(normalized_payoff(&net, &alone, &shared, 0).unwrap(), 1.0);
        let both = ActiveSet::full(2);
        let r = normalized_payoff(&net, &both, &shared, 0).unwrap();
        let expected = (1.0f64 + 6.25e-7 / (1e-9 + 1e-13)).log2() / (1.0f64 + 6.25e6).log2();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.41150387).abs() < 1e-8);
    }

    #[test]
    fn single_channel_user_stays_pure() {
        let net = fixture_fig2();
        let mut t = MixedStrategyTable::init_uniform(&net, 0.1).unwrap();
        t.channels[0] = vec![1];
        t.rows[0] = vec![1.0];
        t.sla_update(0, 1, 0.7).unwrap();
        assert_eq!(t.row(0), &[1.0]);
    }

    #[test]
    fn never_active_user_keeps_uniform_row() {
        let net = fixture_fig2();
        let mut learner = Learner::new(&net, 0.1, 3).unwrap();
        let initial = learner.table().row(5).to_vec();
        for _ in 0..500 {
            // every user except 6 is active
            let mut mask = vec![true; 8];
            mask[5] = false;
            learner.step_with(ActiveSet::from_mask(mask)).unwrap();
        }
        assert_eq!(learner.table().row(5), initial.as_slice());
        assert_ne!(learner.table().row(0), &[0.5, 0.5]);
    }

    #[test]
    fn zero_payoffs_freeze_the_table() {
        let net = fixture_fig2();
        let mut learner = Learner::new(&net, 0.1, 3).unwrap();
        let initial = learner.table().rows().to_vec();
        for _ in 0..200 {
            let active = ActiveSet::full(8);
            let choices = learner.choose(&active);
            let zeros = vec![0.0; choices.len()];
            learner.apply(&choices, &zeros).unwrap();
        }
        assert_eq!(learner.table().rows(), initial.as_slice());
        assert_eq!(learner.table().slot(), 201);
    }

    #[test]
    fn records_are_consistent() {
        let net = fixture_fig2();
        let mut learner = Learner::new(&net, 0.1, 8).unwrap();
        for k in 1..=50 {
            let rec = learner.step().unwrap();
            assert_eq!(rec.slot, k);
            assert_eq!(rec.choices.len(), rec.active.count());
            for (i, &(n, c)) in rec.choices.iter().enumerate() {
                assert!(net.channels(n).contains(&c));
                let expected = rec.raw_throughput[i] / max_throughput(&net, n);
                assert!((rec.normalized[i] - expected.min(1.0)).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&rec.normalized[i]));
            }
        }
    }

    #[test]
    fn learning_is_deterministic_per_seed() {
        let net = fixture_fig2();
        let params = LearningParams::new(300, 0.1, 21);
        let a = run_learning(&net, &params).unwrap();
        let b = run_learning(&net, &params).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.final_profile, b.final_profile);
        let c = run_learning(&net, &LearningParams::new(300, 0.1, 22)).unwrap();
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn longer_runs_extend_shorter_ones() {
        let net = fixture_fig2();
        let mut short = Vec::new();
        run_learning_with(&net, &LearningParams::new(100, 0.1, 5), |r, _| {
            short.push(r.clone())
        })
        .unwrap();
        let mut long = Vec::new();
        run_learning_with(&net, &LearningParams::new(150, 0.1, 5), |r, _| {
            long.push(r.clone())
        })
        .unwrap();
        assert_eq!(short.as_slice(), &long[..100]);
    }

    #[test]
    fn argmax_ties_take_lowest_channel() {
        let net = fixture_fig2();
        let t = MixedStrategyTable::init_uniform(&net, 0.1).unwrap();
        assert_eq!(t.argmax_profile(&net), ChannelProfile::lowest(&net));
    }

    #[test]
    fn rejects_zero_iterations() {
        let net = fixture_fig2();
        assert!(run_learning(&net, &LearningParams::new(0, 0.1, 1)).is_err());
    }
}
