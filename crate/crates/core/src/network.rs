//! Network topology, geo-location database answers and user activity.
//!
//! User ids are 0-based in memory and 1-based in files and CLI output.
//! Channel numbers are 1-based everywhere (`1..=num_channels`).

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

const FIXTURE_FIG2: &str = include_str!("../fixtures/fig2_network.toml");

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One cognitive access point together with its dedicated receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub id: usize,
    pub x_m: f64,
    pub y_m: f64,
    /// Maximum allowed transmit power from the database, in watts.
    pub tx_power: f64,
    /// Available channels, ascending, 1-based.
    pub channels: Vec<usize>,
    pub active_prob: f64,
    /// Distance to the dedicated receiver in meters.
    pub rx_distance: f64,
}

impl AccessPoint {
    fn validate(&self, num_channels: usize) -> Result<()> {
        let id = self.id + 1;
        if !(self.tx_power > 0.0 && self.tx_power.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "AP {id}: tx power must be positive"
            )));
        }
        if !(self.rx_distance > 0.0 && self.rx_distance.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "AP {id}: rx distance must be positive"
            )));
        }
        if !(self.active_prob > 0.0 && self.active_prob <= 1.0) {
            return Err(Error::InvalidNetwork(format!(
                "AP {id}: active probability {} outside (0, 1]",
                self.active_prob
            )));
        }
        if !(self.x_m.is_finite() && self.y_m.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "AP {id}: non-finite position"
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::InvalidNetwork(format!("AP {id}: empty channel set")));
        }
        if self.channels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidNetwork(format!(
                "AP {id}: channels must be strictly ascending without duplicates"
            )));
        }
        if self.channels.iter().any(|&c| c == 0 || c > num_channels) {
            return Err(Error::InvalidNetwork(format!(
                "AP {id}: channel outside 1..={num_channels}"
            )));
        }
        Ok(())
    }
}

/// Immutable network description with cached pairwise path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    aps: Vec<AccessPoint>,
    num_channels: usize,
    bandwidth_hz: f64,
    noise_dbm: f64,
    noise_watts: f64,
    pathloss_exp: f64,
    dist: Vec<Vec<f64>>,
    // d_in^-alpha, symmetric, zero diagonal.
    gain: Vec<Vec<f64>>,
    // P_n d_n^-alpha
    signal: Vec<f64>,
}

impl Network {
    pub fn new(
        mut aps: Vec<AccessPoint>,
        num_channels: usize,
        bandwidth_hz: f64,
        noise_dbm: f64,
        pathloss_exp: f64,
    ) -> Result<Self> {
        if aps.is_empty() {
            return Err(Error::InvalidNetwork("network has no access points".into()));
        }
        if num_channels == 0 {
            return Err(Error::InvalidNetwork(
                "num_channels must be positive".into(),
            ));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::InvalidNetwork("bandwidth must be positive".into()));
        }
        if !noise_dbm.is_finite() {
            return Err(Error::InvalidNetwork("noise level must be finite".into()));
        }
        if !(pathloss_exp > 0.0 && pathloss_exp.is_finite()) {
            return Err(Error::InvalidNetwork(
                "path loss exponent must be positive".into(),
            ));
        }
        for (i, ap) in aps.iter_mut().enumerate() {
            ap.id = i;
            ap.validate(num_channels)?;
        }

        let n = aps.len();
        let mut dist = vec![vec![0.0; n]; n];
        let mut gain = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (aps[i].x_m - aps[j].x_m).hypot(aps[i].y_m - aps[j].y_m);
                if d <= 0.0 {
                    return Err(Error::InvalidNetwork(format!(
                        "APs {} and {} are co-located",
                        i + 1,
                        j + 1
                    )));
                }
                let g = d.powf(-pathloss_exp);
                dist[i][j] = d;
                dist[j][i] = d;
                gain[i][j] = g;
                gain[j][i] = g;
            }
        }
        let signal = aps
            .iter()
            .map(|ap| ap.tx_power * ap.rx_distance.powf(-pathloss_exp))
            .collect();

        Ok(Self {
            aps,
            num_channels,
            bandwidth_hz,
            noise_dbm,
            noise_watts: dbm_to_watts(noise_dbm),
            pathloss_exp,
            dist,
            gain,
            signal,
        })
    }

    pub fn len(&self) -> usize {
        self.aps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aps.is_empty()
    }

    pub fn aps(&self) -> &[AccessPoint] {
        &self.aps
    }

    pub fn ap(&self, n: usize) -> &AccessPoint {
        &self.aps[n]
    }

    pub fn channels(&self, n: usize) -> &[usize] {
        &self.aps[n].channels
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_dbm
    }

    pub fn noise_watts(&self) -> f64 {
        self.noise_watts
    }

    pub fn pathloss_exp(&self) -> f64 {
        self.pathloss_exp
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    /// `d_ij^-alpha`; zero on the diagonal.
    #[inline]
    pub fn path_gain(&self, i: usize, j: usize) -> f64 {
        self.gain[i][j]
    }

    /// Received signal power `P_n d_n^-alpha` at user `n`'s own receiver.
    #[inline]
    pub fn signal_power(&self, n: usize) -> f64 {
        self.signal[n]
    }

    pub fn active_probs(&self) -> Vec<f64> {
        self.aps.iter().map(|ap| ap.active_prob).collect()
    }

    /// Same topology with per-user activity probabilities replaced.
    pub fn with_active_probs(&self, probs: &[f64]) -> Result<Network> {
        if probs.len() != self.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} activity probabilities, got {}",
                self.len(),
                probs.len()
            )));
        }
        let mut net = self.clone();
        for (ap, &p) in net.aps.iter_mut().zip(probs) {
            ap.active_prob = p;
            ap.validate(net.num_channels)?;
        }
        Ok(net)
    }

    pub fn with_uniform_activity(&self, prob: f64) -> Result<Network> {
        self.with_active_probs(&vec![prob; self.len()])
    }

    /// Probability of exactly the users in `b` being active.
    pub fn state_probability(&self, b: &ActiveSet) -> f64 {
        self.aps
            .iter()
            .enumerate()
            .map(|(n, ap)| {
                if b.contains(n) {
                    ap.active_prob
                } else {
                    1.0 - ap.active_prob
                }
            })
            .product()
    }

    /// Draws one slot's active set: each user independently with its own
    /// activity probability.
    pub fn sample_active_set<R: Rng + ?Sized>(&self, rng: &mut R) -> ActiveSet {
        let mask = self
            .aps
            .iter()
            .map(|ap| rng.random::<f64>() < ap.active_prob)
            .collect();
        ActiveSet { mask }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Network> {
        let file: NetworkFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        file.into_network()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&NetworkFile::from_network(self)).expect("network serializes")
    }

    pub fn load(path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Network::from_toml_str(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// The eight-AP fixture network used by the convergence and throughput
/// experiments. See `fixtures/fig2_network.toml`.
pub fn fixture_fig2() -> Network {
    Network::from_toml_str(FIXTURE_FIG2, Path::new("fixtures/fig2_network.toml"))
        .expect("bundled fixture is valid")
}

/// Subset of users transmitting in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSet {
    mask: Vec<bool>,
}

impl ActiveSet {
    pub fn empty(n: usize) -> Self {
        Self {
            mask: vec![false; n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            mask: vec![true; n],
        }
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &m in members {
            if m >= n {
                return Err(Error::InvalidParameter(format!(
                    "active user {} outside 1..={n}",
                    m + 1
                )));
            }
            mask[m] = true;
        }
        Ok(Self { mask })
    }

    /// Bit `i` of `bits` marks user `i` active. Requires `n <= 64`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        debug_assert!(n <= 64);
        Self {
            mask: (0..n).map(|i| bits >> i & 1 == 1).collect(),
        }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    #[inline]
    pub fn contains(&self, n: usize) -> bool {
        self.mask.get(n).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&a| a)
    }
}

/// Sum of state probabilities over all `2^N` active sets. Only for small `N`.
pub fn total_state_probability(net: &Network) -> Result<f64> {
    let n = net.len();
    if n > 24 {
        return Err(Error::Capacity(format!(
            "2^{n} states is too many to enumerate"
        )));
    }
    let acc: CompensatedSum = (0..1u64 << n)
        .map(|bits| net.state_probability(&ActiveSet::from_bits(n, bits)))
        .collect();
    Ok(acc.value())
}

/// Parameters for random topology generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub area_side_m: f64,
    pub num_channels: usize,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    pub pathloss_exp: f64,
    pub rx_distance_m: f64,
    /// Probability that each channel is vacant at each AP.
    pub vacancy_prob: f64,
    pub power_menu_mw: Vec<f64>,
    pub active_prob: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            area_side_m: 500.0,
            num_channels: 5,
            bandwidth_hz: 6e6,
            noise_dbm: -100.0,
            pathloss_exp: 4.0,
            rx_distance_m: 20.0,
            vacancy_prob: 0.7,
            power_menu_mw: vec![100.0, 200.0, 250.0, 300.0, 350.0, 280.0, 400.0],
            active_prob: 0.8,
        }
    }
}

/// Random topology: uniform positions over the square, i.i.d. channel
/// vacancy (empty sets are redrawn) and powers drawn uniformly from the menu.
pub fn generate_random_network(n_aps: usize, seed: u64, params: &GenParams) -> Result<Network> {
    if n_aps == 0 {
        return Err(Error::InvalidParameter("n_aps must be at least 1".into()));
    }
    if !(params.vacancy_prob > 0.0 && params.vacancy_prob <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "vacancy probability {} outside (0, 1]",
            params.vacancy_prob
        )));
    }
    if params.power_menu_mw.is_empty() {
        return Err(Error::InvalidParameter("power menu is empty".into()));
    }
    if params.area_side_m.is_nan() || params.area_side_m <= 0.0 {
        return Err(Error::InvalidParameter("area side must be positive".into()));
    }
    if params.num_channels == 0 {
        return Err(Error::InvalidParameter(
            "num_channels must be positive".into(),
        ));
    }

    let mut rng = crate::seeds::rng_from_seed(seed);
    let mut aps = Vec::with_capacity(n_aps);
    for id in 0..n_aps {
        let x_m = rng.random::<f64>() * params.area_side_m;
        let y_m = rng.random::<f64>() * params.area_side_m;
        let channels = loop {
            let set: Vec<usize> = (1..=params.num_channels)
                .filter(|_| rng.random::<f64>() < params.vacancy_prob)
                .collect();
            if !set.is_empty() {
                break set;
            }
        };
        let power_mw = *params
            .power_menu_mw
            .choose(&mut rng)
            .expect("non-empty menu");
        aps.push(AccessPoint {
            id,
            x_m,
            y_m,
            tx_power: power_mw / 1e3,
            channels,
            active_prob: params.active_prob,
            rx_distance: params.rx_distance_m,
        });
    }
    Network::new(
        aps,
        params.num_channels,
        params.bandwidth_hz,
        params.noise_dbm,
        params.pathloss_exp,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct ApRecord {
    id: usize,
    x_m: f64,
    y_m: f64,
    power_mw: f64,
    channels: Vec<usize>,
    active_prob: f64,
    rx_distance_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixture_version: Option<u32>,
    num_channels: usize,
    bandwidth_hz: f64,
    noise_dbm: f64,
    pathloss_exp: f64,
    aps: Vec<ApRecord>,
}

impl NetworkFile {
    fn from_network(net: &Network) -> Self {
        Self {
            schema_version: Some(1),
            fixture_version: None,
            num_channels: net.num_channels,
            bandwidth_hz: net.bandwidth_hz,
            noise_dbm: net.noise_dbm,
            pathloss_exp: net.pathloss_exp,
            aps: net
                .aps
                .iter()
                .map(|ap| ApRecord {
                    id: ap.id + 1,
                    x_m: ap.x_m,
                    y_m: ap.y_m,
                    power_mw: ap.tx_power * 1e3,
                    channels: ap.channels.clone(),
                    active_prob: ap.active_prob,
                    rx_distance_m: ap.rx_distance,
                })
                .collect(),
        }
    }

    fn into_network(self) -> Result<Network> {
        if let Some(v) = self.schema_version {
            if v != 1 {
                return Err(Error::InvalidNetwork(format!(
                    "unsupported schema_version {v}"
                )));
            }
        }
        let mut records = self.aps;
        records.sort_by_key(|r| r.id);
        for (i, r) in records.iter().enumerate() {
            if r.id != i + 1 {
                return Err(Error::InvalidNetwork(format!(
                    "AP ids must be 1..=N without gaps; found {}",
                    r.id
                )));
            }
        }
        let aps = records
            .into_iter()
            .map(|r| {
                let mut channels = r.channels;
                channels.sort_unstable();
                AccessPoint {
                    id: r.id - 1,
                    x_m: r.x_m,
                    y_m: r.y_m,
                    tx_power: r.power_mw / 1e3,
                    channels,
                    active_prob: r.active_prob,
                    rx_distance: r.rx_distance_m,
                }
            })
            .collect();
        Network::new(
            aps,
            self.num_channels,
            self.bandwidth_hz,
            self.noise_dbm,
            self.pathloss_exp,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;

    #[test]
    fn fixture_keeps_given_values() {
        let net = fixture_fig2();
        assert_eq!(net.len(), 8);
        assert_eq!(net.channels(0), &[1, 2]);
        assert_eq!(net.channels(1), &[2, 3, 4]);
        assert_eq!(net.channels(2), &[1, 3, 4]);
        assert_eq!(net.channels(3), &[3, 4]);
        assert!((net.ap(0).tx_power - 0.350).abs() < 1e-15);
        assert_eq!(net.num_channels(), 5);
        assert_eq!(net.bandwidth_hz(), 6e6);
        assert_eq!(net.pathloss_exp(), 4.0);
        assert!((net.noise_watts() - 1e-13).abs() < 1e-27);
    }

    #[test]
    fn distances_are_symmetric_and_euclidean() {
        let net = generate_random_network(12, 3, &GenParams::default()).unwrap();
        for i in 0..net.len() {
            assert_eq!(net.dist(i, i), 0.0);
            for j in 0..net.len() {
                assert_eq!(net.dist(i, j), net.dist(j, i));
                let (a, b) = (net.ap(i), net.ap(j));
                let euclid = ((a.x_m - b.x_m).powi(2) + (a.y_m - b.y_m).powi(2)).sqrt();
                assert!((net.dist(i, j) - euclid).abs() <= 1e-9 * euclid.max(1.0));
                assert_eq!(net.path_gain(i, j), net.path_gain(j, i));
            }
        }
    }

    #[test]
    fn random_network_respects_generation_contract() {
        let params = GenParams::default();
        let net = generate_random_network(8, 42, &params).unwrap();
        assert_eq!(net.len(), 8);
        for ap in net.aps() {
            assert!(!ap.channels.is_empty());
            assert!(ap.channels.iter().all(|&c| (1..=5).contains(&c)));
            assert!(params
                .power_menu_mw
                .iter()
                .any(|&p| (p / 1e3 - ap.tx_power).abs() < 1e-15));
            assert!((0.0..500.0).contains(&ap.x_m) && (0.0..500.0).contains(&ap.y_m));
        }
    }

    #[test]
    fn single_ap_network() {
        let net = generate_random_network(1, 9, &GenParams::default()).unwrap();
        assert_eq!(net.dist_matrix(), &[vec![0.0]]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_network(10, 77, &GenParams::default()).unwrap();
        let b = generate_random_network(10, 77, &GenParams::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml_string(), b.to_toml_string());
        let c = generate_random_network(10, 78, &GenParams::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generation_rejects_bad_params() {
        let p = GenParams::default();
        assert!(generate_random_network(0, 1, &p).is_err());
        let bad_theta = GenParams {
            vacancy_prob: 0.0,
            ..p.clone()
        };
        assert!(generate_random_network(3, 1, &bad_theta).is_err());
        let bad_theta = GenParams {
            vacancy_prob: 1.5,
            ..p.clone()
        };
        assert!(generate_random_network(3, 1, &bad_theta).is_err());
        let no_menu = GenParams {
            power_menu_mw: vec![],
            ..p
        };
        assert!(generate_random_network(3, 1, &no_menu).is_err());
    }

    #[test]
    fn low_vacancy_still_yields_non_empty_sets() {
        let p = GenParams {
            vacancy_prob: 0.05,
            ..GenParams::default()
        };
        let net = generate_random_network(30, 5, &p).unwrap();
        assert!(net.aps().iter().all(|ap| !ap.channels.is_empty()));
    }

    #[test]
    fn state_probability_degenerate_cases() {
        let net = fixture_fig2();
        let all = ActiveSet::full(8);
        assert!((net.state_probability(&all) - 0.16777216).abs() < 1e-15);
        let none = ActiveSet::empty(8);
        assert!((net.state_probability(&none) - 0.2f64.powi(8)).abs() < 1e-18);
    }

    #[test]
    fn state_probability_scenario_one_pair() {
        let lambdas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let net = fixture_fig2().with_active_probs(&lambdas).unwrap();
        let b = ActiveSet::from_members(8, &[0, 1]).unwrap();
        // Independent product of the factors.
        let mut expected = 0.1 * 0.2;
        for l in &lambdas[2..] {
            expected *= 1.0 - l;
        }
        assert!((net.state_probability(&b) - expected).abs() < 1e-15);
        assert!((total_state_probability(&net).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn always_active_users_always_sampled() {
        let net = fixture_fig2().with_uniform_activity(1.0).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            assert_eq!(net.sample_active_set(&mut rng).count(), 8);
        }
    }

    #[test]
    fn sampled_inclusion_rates_match() {
        let net = fixture_fig2().with_uniform_activity(0.5).unwrap();
        let mut rng = rng_from_seed(2);
        let draws = 100_000;
        let mut hits = [0usize; 8];
        for _ in 0..draws {
            for m in net.sample_active_set(&mut rng).members() {
                hits[m] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn toml_round_trip_preserves_network() {
        let net = generate_random_network(6, 11, &GenParams::default()).unwrap();
        let text = net.to_toml_string();
        let back = Network::from_toml_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back.to_toml_string(), text);
        assert_eq!(back.len(), net.len());
        for (a, b) in back.aps().iter().zip(net.aps()) {
            assert_eq!(a.channels, b.channels);
            assert!((a.tx_power - b.tx_power).abs() < 1e-15);
            assert_eq!(a.x_m, b.x_m);
        }
    }

    #[test]
    fn rejects_out_of_range_channels() {
        let text = FIXTURE_FIG2.replace("channels = [3, 4, 5]", "channels = [3, 6]");
        assert!(Network::from_toml_str(&text, Path::new("mem")).is_err());
        let text = FIXTURE_FIG2.replace("channels = [1, 2]", "channels = []");
        assert!(Network::from_toml_str(&text, Path::new("mem")).is_err());
    }
}
