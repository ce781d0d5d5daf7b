//! Reference implementations used as test oracles. Everything here is
//! recomputed from the raw access point records with plain loops, so it
//! shares no code with the library's cached gains or enumeration logic.

#![allow(dead_code)]

use tvws_core::Network;

pub fn noise_watts(net: &Network) -> f64 {
    10f64.powf(net.noise_dbm() / 10.0) / 1000.0
}

pub fn gain(net: &Network, i: usize, j: usize) -> f64 {
    let (a, b) = (net.ap(i), net.ap(j));
    let d = ((a.x_m - b.x_m).powi(2) + (a.y_m - b.y_m).powi(2)).sqrt();
    d.powf(-net.pathloss_exp())
}

/// Active co-channel peers of `n`, found by scanning every user.
pub fn peers(active: &[bool], prof: &[usize], n: usize) -> Vec<usize> {
    (0..prof.len())
        .filter(|&i| i != n && active[i] && prof[i] == prof[n])
        .collect()
}

pub fn sinr(net: &Network, active: &[bool], prof: &[usize], n: usize) -> f64 {
    let ap = net.ap(n);
    let signal = ap.tx_power * ap.rx_distance.powf(-net.pathloss_exp());
    let interference: f64 = peers(active, prof, n)
        .into_iter()
        .map(|i| net.ap(i).tx_power * gain(net, i, n))
        .sum();
    signal / (interference + noise_watts(net))
}

/// Throughput of `n` in one state; zero when `n` is inactive.
pub fn state_utility(net: &Network, active: &[bool], prof: &[usize], n: usize) -> f64 {
    if !active[n] {
        return 0.0;
    }
    net.bandwidth_hz() * (1.0 + sinr(net, active, prof, n)).log2()
}

pub fn weighted_interference(net: &Network, active: &[bool], prof: &[usize], n: usize) -> f64 {
    -peers(active, prof, n)
        .into_iter()
        .map(|i| net.ap(i).tx_power * net.ap(n).tx_power * gain(net, i, n))
        .sum::<f64>()
}

pub fn phi(net: &Network, active: &[bool], prof: &[usize]) -> f64 {
    (0..prof.len())
        .filter(|&n| active[n])
        .map(|n| weighted_interference(net, active, prof, n))
        .sum()
}

/// Every activity state with its probability, by direct enumeration.
pub fn states(net: &Network) -> Vec<(Vec<bool>, f64)> {
    let n = net.len();
    assert!(n <= 16, "oracle enumeration limited to 16 users");
    (0..1u32 << n)
        .map(|bits| {
            let mask: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let p = (0..n)
                .map(|i| {
                    let l = net.ap(i).active_prob;
                    if mask[i] {
                        l
                    } else {
                        1.0 - l
                    }
                })
                .product();
            (mask, p)
        })
        .collect()
}

pub fn expected_utility(net: &Network, prof: &[usize], n: usize) -> f64 {
    states(net)
        .iter()
        .map(|(m, p)| p * state_utility(net, m, prof, n))
        .sum()
}

pub fn expected_potential(net: &Network, prof: &[usize]) -> f64 {
    states(net).iter().map(|(m, p)| p * phi(net, m, prof)).sum()
}

pub fn expected_network_throughput(net: &Network, prof: &[usize]) -> f64 {
    (0..net.len()).map(|n| expected_utility(net, prof, n)).sum()
}

/// Whether `candidate` beats `current` by more than rounding noise.
pub fn strictly_better(current: f64, candidate: f64) -> bool {
    candidate - current > 1e-12 * current.abs().max(candidate.abs())
}

/// Exhaustive unilateral deviation check in the robust game: returns the
/// first `(user, channel)` that strictly improves, if any.
pub fn profitable_deviation(net: &Network, prof: &[usize]) -> Option<(usize, usize)> {
    let all = states(net);
    let eu = |p: &[usize], n: usize| -> f64 {
        all.iter()
            .map(|(m, q)| q * state_utility(net, m, p, n))
            .sum()
    };
    for n in 0..net.len() {
        let current = eu(prof, n);
        for &c in net.channels(n) {
            if c == prof[n] {
                continue;
            }
            let mut moved = prof.to_vec();
            moved[n] = c;
            if strictly_better(current, eu(&moved, n)) {
                return Some((n, c));
            }
        }
    }
    None
}
