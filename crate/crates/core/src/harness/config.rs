//! Experiment configuration files (TOML, `schema_version = 1`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Expectation;
use crate::network::{fixture_fig2, generate_random_network, GenParams, Network};
use crate::seeds::derive_seed;

pub const SCHEMA_VERSION: u32 = 1;

/// Heterogeneous activity scenarios 1-6 for the eight-AP fixture.
pub const SCENARIOS: [[f64; 8]; 6] = [
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
    [0.3, 0.3, 0.3, 0.6, 0.6, 0.9, 0.9, 0.9],
    [0.3, 0.4, 0.5, 0.5, 0.5, 0.6, 0.7, 0.8],
    [0.4, 0.4, 0.4, 0.6, 0.6, 0.6, 0.6, 0.6],
    [0.3, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7],
    [0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7],
];

pub fn scenario(id: usize) -> Result<&'static [f64; 8]> {
    id.checked_sub(1)
        .and_then(|i| SCENARIOS.get(i))
        .ok_or_else(|| Error::Config(format!("unknown activity scenario {id}; expected 1-6")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Optimal,
    BestResponse,
    Learning,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Optimal => "optimal",
            Method::BestResponse => "best_response",
            Method::Learning => "learning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    Fixture,
    File {
        path: PathBuf,
    },
    Random {
        n_aps: usize,
        #[serde(default = "one")]
        topologies: usize,
        #[serde(default)]
        params: GenParams,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activity {
    Uniform { value: f64 },
    PerUser { values: Vec<f64> },
    Scenario { id: usize },
}

impl Activity {
    pub fn apply(&self, net: &Network) -> Result<Network> {
        match self {
            Activity::Uniform { value } => net.with_uniform_activity(*value),
            Activity::PerUser { values } => net.with_active_probs(values),
            Activity::Scenario { id } => net.with_active_probs(scenario(*id)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    Lambda { values: Vec<f64> },
    Scenario { values: Vec<usize> },
    NAps { values: Vec<usize> },
}

impl Sweep {
    pub fn key(&self) -> &'static str {
        match self {
            Sweep::Lambda { .. } => "lambda",
            Sweep::Scenario { .. } => "scenario",
            Sweep::NAps { .. } => "n_aps",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Lambda { values } => values.len(),
            Sweep::Scenario { values } => values.len(),
            Sweep::NAps { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Optimal, Method::BestResponse, Method::Learning]
}

fn default_trials() -> usize {
    1
}

fn default_iterations() -> usize {
    2000
}

fn default_step_size() -> f64 {
    crate::learning::DEFAULT_STEP_SIZE
}

fn default_max_rounds() -> usize {
    1000
}

fn default_expectation() -> Expectation {
    Expectation::Exact
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkSource,
    #[serde(default)]
    pub activity: Option<Activity>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Learning runs per sweep point and topology.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Best-response trials per sweep point and topology; defaults to `trials`.
    #[serde(default)]
    pub br_trials: Option<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_max_rounds")]
    pub max_br_rounds: usize,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_expectation")]
    pub expectation: Expectation,
    /// Number of random deviations checked by `verify`.
    #[serde(default)]
    pub deviations: Option<usize>,
    /// Learning trace file written by `learn`.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        // Relative network paths are relative to the config file.
        if let NetworkSource::File { path } = &mut cfg.network {
            if path.is_relative() {
                if let Some(dir) = origin.parent() {
                    *path = dir.join(&*path);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// A minimal config on the fixture network, used when no file is given.
    pub fn fixture_default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "fixture".into(),
            seed: 0,
            network: NetworkSource::Fixture,
            activity: None,
            methods: default_methods(),
            trials: default_trials(),
            br_trials: None,
            iterations: default_iterations(),
            step_size: default_step_size(),
            max_br_rounds: default_max_rounds(),
            sweep: None,
            expectation: default_expectation(),
            deviations: None,
            trace: None,
            output: None,
            formats: default_formats(),
        }
    }

    pub fn br_trials(&self) -> usize {
        self.br_trials.unwrap_or(self.trials)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.trials == 0 || self.br_trials() == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.step_size > 0.0 && self.step_size < 1.0) {
            return bad(format!("step_size {} outside (0, 1)", self.step_size));
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        if let NetworkSource::Random {
            n_aps, topologies, ..
        } = &self.network
        {
            if *n_aps == 0 || *topologies == 0 {
                return bad("random networks need n_aps >= 1 and topologies >= 1".into());
            }
        }
        match &self.activity {
            Some(Activity::Uniform { value }) if !(*value > 0.0 && *value <= 1.0) => {
                return bad(format!("activity {value} outside (0, 1]"));
            }
            Some(Activity::PerUser { values })
                if values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) =>
            {
                return bad("per-user activity outside (0, 1]".into());
            }
            Some(Activity::Scenario { id }) => {
                scenario(*id)?;
            }
            _ => {}
        }
        match &self.sweep {
            Some(s) if s.is_empty() => return bad("sweep has no values".into()),
            Some(Sweep::Lambda { values }) if values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) => {
                return bad("lambda sweep values must lie in (0, 1]".into());
            }
            Some(Sweep::Scenario { values }) => {
                for &id in values {
                    scenario(id)?;
                }
            }
            Some(Sweep::NAps { values }) => {
                if values.contains(&0) {
                    return bad("n_aps sweep values must be >= 1".into());
                }
                if !matches!(self.network, NetworkSource::Random { .. }) {
                    return bad("an n_aps sweep needs a random network source".into());
                }
            }
            _ => {}
        }
        if let Expectation::MonteCarlo { samples: 0, .. } = self.expectation {
            return bad("monte_carlo expectation needs samples >= 1".into());
        }
        Ok(())
    }

    /// Networks for one sweep point, activity already applied.
    pub fn networks_at(&self, point: &SweepPoint) -> Result<Vec<Network>> {
        let bases: Vec<Network> = match &self.network {
            NetworkSource::Fixture => vec![fixture_fig2()],
            NetworkSource::File { path } => vec![Network::load(path)?],
            NetworkSource::Random {
                n_aps,
                topologies,
                params,
            } => {
                let n = match point {
                    SweepPoint::NAps(n) => *n,
                    _ => *n_aps,
                };
                (0..*topologies)
                    .map(|t| {
                        let seed = derive_seed(self.seed, "topology", (n as u64) << 32 | t as u64);
                        generate_random_network(n, seed, params)
                    })
                    .collect::<Result<_>>()?
            }
        };
        bases
            .iter()
            .map(|net| {
                let net = match &self.activity {
                    Some(a) => a.apply(net)?,
                    None => net.clone(),
                };
                match point {
                    SweepPoint::Lambda(l) => net.with_uniform_activity(*l),
                    SweepPoint::Scenario(id) => net.with_active_probs(scenario(*id)?),
                    SweepPoint::NAps(_) | SweepPoint::Single => Ok(net),
                }
            })
            .collect()
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        match &self.sweep {
            None => vec![SweepPoint::Single],
            Some(Sweep::Lambda { values }) => {
                values.iter().map(|&v| SweepPoint::Lambda(v)).collect()
            }
            Some(Sweep::Scenario { values }) => {
                values.iter().map(|&v| SweepPoint::Scenario(v)).collect()
            }
            Some(Sweep::NAps { values }) => values.iter().map(|&v| SweepPoint::NAps(v)).collect(),
        }
    }

    pub fn sweep_key(&self) -> &'static str {
        self.sweep.as_ref().map_or("point", Sweep::key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPoint {
    Single,
    Lambda(f64),
    Scenario(usize),
    NAps(usize),
}

impl SweepPoint {
    pub fn value(&self) -> f64 {
        match self {
            SweepPoint::Single => 0.0,
            SweepPoint::Lambda(l) => *l,
            SweepPoint::Scenario(id) => *id as f64,
            SweepPoint::NAps(n) => *n as f64,
        }
    }
}

impl std::fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepPoint::Single => write!(f, "single point"),
            SweepPoint::Lambda(l) => write!(f, "lambda = {l}"),
            SweepPoint::Scenario(id) => write!(f, "scenario {id}"),
            SweepPoint::NAps(n) => write!(f, "n_aps = {n}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG4: &str = r#"
schema_version = 1
name = "fig4"
seed = 4
methods = ["optimal", "best_response", "learning"]
trials = 2
br_trials = 3
iterations = 100

[network]
source = "fixture"

[sweep]
kind = "lambda"
values = [0.2, 0.8]
"#;

    #[test]
    fn parses_and_expands_sweeps() {
        let cfg = ExperimentConfig::from_toml_str(FIG4, Path::new("mem.cfg")).unwrap();
        assert_eq!(cfg.br_trials(), 3);
        assert_eq!(cfg.sweep_key(), "lambda");
        let points = cfg.sweep_points();
        assert_eq!(points.len(), 2);
        let nets = cfg.networks_at(&points[1]).unwrap();
        assert_eq!(nets.len(), 1);
        assert!(nets[0].active_probs().iter().all(|&l| l == 0.8));
    }

    #[test]
    fn scenarios_expand_verbatim() {
        assert_eq!(
            scenario(1).unwrap(),
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
        );
        assert_eq!(
            scenario(2).unwrap(),
            &[0.3, 0.3, 0.3, 0.6, 0.6, 0.9, 0.9, 0.9]
        );
        assert_eq!(
            scenario(3).unwrap(),
            &[0.3, 0.4, 0.5, 0.5, 0.5, 0.6, 0.7, 0.8]
        );
        assert_eq!(
            scenario(4).unwrap(),
            &[0.4, 0.4, 0.4, 0.6, 0.6, 0.6, 0.6, 0.6]
        );
        assert_eq!(
            scenario(5).unwrap(),
            &[0.3, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7]
        );
        assert_eq!(
            scenario(6).unwrap(),
            &[0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7]
        );
        assert!(scenario(0).is_err());
        assert!(scenario(7).is_err());

        let mut cfg = ExperimentConfig::fixture_default();
        cfg.sweep = Some(Sweep::Scenario { values: vec![2] });
        let nets = cfg.networks_at(&cfg.sweep_points()[0]).unwrap();
        assert_eq!(nets[0].active_probs(), SCENARIOS[1].to_vec());
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad_version = FIG4.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::from_toml_str(&bad_version, Path::new("x")).is_err());
        let zero_trials = FIG4.replace("trials = 2", "trials = 0");
        assert!(ExperimentConfig::from_toml_str(&zero_trials, Path::new("x")).is_err());
        let bad_lambda = FIG4.replace("[0.2, 0.8]", "[0.0, 0.8]");
        assert!(ExperimentConfig::from_toml_str(&bad_lambda, Path::new("x")).is_err());
        let n_sweep_on_fixture = FIG4.replace(
            "kind = \"lambda\"\nvalues = [0.2, 0.8]",
            "kind = \"n_aps\"\nvalues = [4]",
        );
        assert!(ExperimentConfig::from_toml_str(&n_sweep_on_fixture, Path::new("x")).is_err());
        let unknown = format!("{FIG4}\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml_str(&unknown, Path::new("x")).is_err());
    }

    #[test]
    fn random_topologies_follow_the_n_sweep() {
        let text = r#"
schema_version = 1
seed = 9
[network]
source = "random"
n_aps = 3
topologies = 4
[sweep]
kind = "n_aps"
values = [5, 6]
[expectation]
mode = "monte_carlo"
samples = 100
seed = 1
"#;
        let cfg = ExperimentConfig::from_toml_str(text, Path::new("x")).unwrap();
        let nets = cfg.networks_at(&SweepPoint::NAps(6)).unwrap();
        assert_eq!(nets.len(), 4);
        assert!(nets.iter().all(|n| n.len() == 6));
        assert_ne!(nets[0], nets[1]);
        assert_eq!(
            cfg.expectation,
            Expectation::MonteCarlo {
                samples: 100,
                seed: 1
            }
        );
    }
}
