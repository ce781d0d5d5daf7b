//! Empirical check that both spectrum access games are ordinal potential
//! games: random unilateral deviations must move each user's payoff and the
//! potential in the same direction.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::game::{
    potential_delta, state_utility, tolerant_sign, weighted_interference,
    weighted_interference_delta, ChannelProfile, Expectation, ExpectedGame,
};
use crate::network::{ActiveSet, Network};
use crate::seeds::rng_from_seed;

/// Differences below this fraction of the compared magnitudes count as zero.
pub const SIGN_ZERO_REL: f64 = 1e-15;

/// Allowed relative mismatch in `delta phi = 2 delta v_n`.
pub const FACTOR_TWO_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// sign(delta u_n) != sign(delta phi) or sign(delta v_n) != sign(delta phi)
    StateSign,
    /// delta phi != 2 delta v_n
    FactorTwo,
    /// sign(delta omega_n) != sign(delta Phi)
    RobustSign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub sample: usize,
    pub user: usize,
    pub from_channel: usize,
    pub to_channel: usize,
    pub payoff_delta: f64,
    pub potential_delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OpgReport {
    pub state_checked: usize,
    pub robust_checked: usize,
    pub violations: Vec<Violation>,
}

impl OpgReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: OpgReport) {
        self.state_checked += other.state_checked;
        self.robust_checked += other.robust_checked;
        self.violations.extend(other.violations);
    }
}

struct Sample {
    active: ActiveSet,
    profile: ChannelProfile,
    user: usize,
    to: usize,
}

fn draw_sample<R: Rng>(net: &Network, movers: &[usize], rng: &mut R) -> Sample {
    let profile = ChannelProfile::random(net, rng);
    let user = movers[rng.random_range(0..movers.len())];
    let others: Vec<usize> = net
        .channels(user)
        .iter()
        .copied()
        .filter(|&c| c != profile.channel(user))
        .collect();
    let to = others[rng.random_range(0..others.len())];
    // The deviating user must be active; everyone else follows the model.
    let mut mask = net.sample_active_set(rng).mask().to_vec();
    mask[user] = true;
    Sample {
        active: ActiveSet::from_mask(mask),
        profile,
        user,
        to,
    }
}

/// Checks `deviations` random `(active set, profile, user, new channel)`
/// tuples against the state-based game. With `robust` set, each tuple is also
/// checked against the robust game under that expectation mode.
pub fn verify_opg(
    net: &Network,
    deviations: usize,
    seed: u64,
    robust: Option<Expectation>,
) -> Result<OpgReport> {
    let mut report = OpgReport::default();
    let movers: Vec<usize> = (0..net.len())
        .filter(|&n| net.channels(n).len() > 1)
        .collect();
    if movers.is_empty() {
        return Ok(report);
    }
    let game = robust
        .map(|mode| ExpectedGame::new(net, mode))
        .transpose()?;
    let mut rng = rng_from_seed(seed);

    for sample in 0..deviations {
        let Sample {
            active,
            profile,
            user,
            to,
        } = draw_sample(net, &movers, &mut rng);
        let from = profile.channel(user);
        let moved = profile.with_choice(user, to);
        let violation = |kind, payoff_delta, potential_delta| Violation {
            kind,
            sample,
            user,
            from_channel: from,
            to_channel: to,
            payoff_delta,
            potential_delta,
        };

        let u0 = state_utility(net, &active, &profile, user);
        let u1 = state_utility(net, &active, &moved, user);
        let du = u1 - u0;
        let dv = weighted_interference_delta(net, &active, &profile, user, to)?;
        let dphi = potential_delta(net, &active, &profile, user, to);
        // Zero thresholds scale with the deviating user's own interference,
        // not with the network-wide potential.
        let v0 = weighted_interference(net, &active, &profile, user)?;
        let v1 = weighted_interference(net, &active, &moved, user)?;
        let local = 2.0 * v0.abs().max(v1.abs());

        let s_u = tolerant_sign(du, u0.abs().max(u1.abs()), SIGN_ZERO_REL);
        let s_v = tolerant_sign(dv, local / 2.0, SIGN_ZERO_REL);
        let s_phi = tolerant_sign(dphi, local, SIGN_ZERO_REL);
        report.state_checked += 1;
        if s_u != s_phi || s_v != s_phi {
            report
                .violations
                .push(violation(ViolationKind::StateSign, du, dphi));
        }
        let two_dv = 2.0 * dv;
        if (dphi - two_dv).abs() > FACTOR_TWO_REL * dphi.abs().max(two_dv.abs()) {
            report
                .violations
                .push(violation(ViolationKind::FactorTwo, dv, dphi));
        }

        if let Some(game) = &game {
            let w0 = game.utility(&profile, user)?;
            let w1 = game.utility(&moved, user)?;
            let p0 = game.potential(&profile);
            let p1 = game.potential(&moved);
            let s_w = tolerant_sign(w1 - w0, w0.abs().max(w1.abs()), SIGN_ZERO_REL);
            let s_p = tolerant_sign(p1 - p0, p0.abs().max(p1.abs()), SIGN_ZERO_REL);
            report.robust_checked += 1;
            if s_w != s_p {
                report
                    .violations
                    .push(violation(ViolationKind::RobustSign, w1 - w0, p1 - p0));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{fixture_fig2, AccessPoint};

    #[test]
    fn fixture_state_game_has_no_violations() {
        let net = fixture_fig2();
        let report = verify_opg(&net, 2000, 1, Some(Expectation::Exact)).unwrap();
        assert_eq!(report.state_checked, 2000);
        assert_eq!(report.robust_checked, 2000);
        let state: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.kind != ViolationKind::RobustSign)
            .collect();
        assert!(state.is_empty(), "{:?}", state.first());
    }

    /// Expected throughput is concave in interference while the potential is
    /// linear, so averaging over activity can split their signs. User 1 leaves
    /// one strong interferer for two weaker ones whose summed gain is slightly
    /// smaller: the potential rises, but the chance of being hit at all goes
    /// from lambda to 1 - (1 - lambda)^2 and the expected throughput falls.
    #[test]
    fn robust_sign_can_disagree_with_expected_potential() {
        let d: f64 = 200.0;
        let d_a = d / 2f64.powf(0.25) * 0.99;
        let ap = |id, x_m, y_m, channels: Vec<usize>| AccessPoint {
            id,
            x_m,
            y_m,
            tx_power: 0.1,
            channels,
            active_prob: 0.5,
            rx_distance: 20.0,
        };
        let aps = vec![
            ap(0, 0.0, 0.0, vec![1, 2]),
            ap(1, 0.0, d_a, vec![1]),
            ap(2, d, 0.0, vec![2]),
            ap(3, -d, 0.0, vec![2]),
        ];
        let net = Network::new(aps, 2, 6e6, -100.0, 4.0).unwrap();
        let game = ExpectedGame::new(&net, Expectation::Exact).unwrap();
        let prof = ChannelProfile::new(&net, vec![1, 1, 2, 2]).unwrap();
        let moved = prof.with_choice(0, 2);
        let dw = game.utility(&moved, 0).unwrap() - game.utility(&prof, 0).unwrap();
        let dphi = game.potential(&moved) - game.potential(&prof);
        assert!(dw < -1e6, "{dw}");
        assert!(dphi > 0.0, "{dphi}");
        let report = verify_opg(&net, 200, 5, Some(Expectation::Exact)).unwrap();
        assert!(report
            .violations
            .iter()
            .all(|v| v.kind == ViolationKind::RobustSign));
        assert!(!report.is_clean());
    }

    #[test]
    fn moving_onto_a_peer_hurts_both() {
        let aps = (0..2)
            .map(|i| AccessPoint {
                id: i,
                x_m: 80.0 * i as f64,
                y_m: 0.0,
                tx_power: 0.2,
                channels: vec![1, 2],
                active_prob: 1.0,
                rx_distance: 20.0,
            })
            .collect();
        let net = Network::new(aps, 2, 6e6, -100.0, 4.0).unwrap();
        let b = ActiveSet::full(2);
        let prof = ChannelProfile::new(&net, vec![1, 2]).unwrap();
        let moved = prof.with_choice(0, 2);
        let du = state_utility(&net, &b, &moved, 0) - state_utility(&net, &b, &prof, 0);
        assert!(du < 0.0);
        assert!(potential_delta(&net, &b, &prof, 0, 2) < 0.0);
    }

    #[test]
    fn full_activity_robust_check_matches_state_check() {
        let net = fixture_fig2().with_uniform_activity(1.0).unwrap();
        let game = ExpectedGame::new(&net, Expectation::Exact).unwrap();
        let b = ActiveSet::full(8);
        let mut rng = rng_from_seed(12);
        for _ in 0..100 {
            let prof = ChannelProfile::random(&net, &mut rng);
            for n in 0..8 {
                for &c in net.channels(n) {
                    let moved = prof.with_choice(n, c);
                    let dw = game.utility(&moved, n).unwrap() - game.utility(&prof, n).unwrap();
                    let du = state_utility(&net, &b, &moved, n) - state_utility(&net, &b, &prof, n);
                    assert!((dw - du).abs() <= 1e-6 * du.abs().max(1.0));
                }
            }
        }
        assert!(verify_opg(&net, 500, 3, Some(Expectation::Exact))
            .unwrap()
            .is_clean());
    }

    #[test]
    fn single_channel_networks_have_nothing_to_check() {
        let aps = vec![AccessPoint {
            id: 0,
            x_m: 0.0,
            y_m: 0.0,
            tx_power: 0.1,
            channels: vec![3],
            active_prob: 0.5,
            rx_distance: 20.0,
        }];
        let net = Network::new(aps, 5, 6e6, -100.0, 4.0).unwrap();
        let report = verify_opg(&net, 10, 0, None).unwrap();
        assert_eq!(report.state_checked, 0);
    }
}
