//! Randomized invariants of the state-based game and the learning update.

use proptest::prelude::*;

use tvws_core::game::{potential_delta, state_utility, throughput, weighted_interference_delta};
use tvws_core::learning::MixedStrategyTable;
use tvws_core::network::{generate_random_network, GenParams};
use tvws_core::seeds::rng_from_seed;
use tvws_core::{ActiveSet, ChannelProfile, Network};

fn network(n: usize, seed: u64) -> Network {
    let params = GenParams {
        area_side_m: 250.0,
        num_channels: 3,
        ..GenParams::default()
    };
    generate_random_network(n, seed, &params).unwrap()
}

/// A deviation: network, active set with the mover active, profile, mover
/// and target channel.
fn deviation(n: usize, seed: u64) -> (Network, ActiveSet, ChannelProfile, usize, usize) {
    use rand::Rng;
    let net = network(n, seed);
    let mut rng = rng_from_seed(seed.wrapping_add(1));
    let prof = ChannelProfile::random(&net, &mut rng);
    let user = rng.random_range(0..n);
    let set = net.channels(user);
    let to = set[rng.random_range(0..set.len())];
    let mut mask = net.sample_active_set(&mut rng).mask().to_vec();
    mask[user] = true;
    (net, ActiveSet::from_mask(mask), prof, user, to)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn payoff_and_potential_move_together(n in 1usize..9, seed in any::<u64>()) {
        let (net, b, prof, user, to) = deviation(n, seed);
        let moved = prof.with_choice(user, to);
        let du = state_utility(&net, &b, &moved, user) - state_utility(&net, &b, &prof, user);
        let dphi = potential_delta(&net, &b, &prof, user, to);
        // Both deltas are exact or correctly rounded; a zero on one side
        // must be a zero on the other.
        prop_assert_eq!(du > 0.0, dphi > 0.0, "du {} dphi {}", du, dphi);
        prop_assert_eq!(du < 0.0, dphi < 0.0, "du {} dphi {}", du, dphi);
    }

    #[test]
    fn potential_change_is_twice_the_movers_change(n in 1usize..9, seed in any::<u64>()) {
        let (net, b, prof, user, to) = deviation(n, seed);
        let dphi = potential_delta(&net, &b, &prof, user, to);
        let dv = weighted_interference_delta(&net, &b, &prof, user, to).unwrap();
        prop_assert!((dphi - 2.0 * dv).abs() <= 1e-12 * dphi.abs().max(2.0 * dv.abs()));
    }

    #[test]
    fn a_new_interferer_never_helps(n in 2usize..9, seed in any::<u64>()) {
        let (net, b, prof, user, _) = deviation(n, seed);
        let others: Vec<usize> = (0..n).filter(|&i| i != user && !b.contains(i)).collect();
        prop_assume!(!others.is_empty());
        let joiner = others[0];
        prop_assume!(net.channels(joiner).contains(&prof.channel(user)));
        let shared = prof.with_choice(joiner, prof.channel(user));
        let mut mask = b.mask().to_vec();
        mask[joiner] = true;
        let more = ActiveSet::from_mask(mask);
        let before = throughput(&net, &b, &shared, user).unwrap();
        let after = throughput(&net, &more, &shared, user).unwrap();
        prop_assert!(after < before);
    }

    #[test]
    fn reward_inaction_stays_on_the_simplex(
        seed in any::<u64>(),
        step in 0.0001f64..0.9999,
        updates in prop::collection::vec((0usize..8, 0usize..5, 0.0f64..=1.0), 1..200),
    ) {
        let net = network(8, seed);
        let mut table = MixedStrategyTable::init_uniform(&net, step).unwrap();
        for (n, k, r) in updates {
            let set = net.channels(n);
            let chosen = set[k % set.len()];
            let before = table.row(n).to_vec();
            let q = table.probability(n, chosen).unwrap();
            table.sla_update(n, chosen, r).unwrap();
            let row = table.row(n);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            // The chosen entry never falls, the others never rise.
            prop_assert!(table.probability(n, chosen).unwrap() >= q);
            for (j, &c) in set.iter().enumerate() {
                if c != chosen {
                    prop_assert!(row[j] <= before[j]);
                }
            }
        }
    }
}
