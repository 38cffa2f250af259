//! Experiment configuration, read from TOML.
//!
//! ```toml
//! lambdas = [0.0, 0.5, 0.9]
//! num_steps = 200000
//! record_every = 1000
//! num_seeds = 20
//! base_seed = 1
//! output_dir = "out"          # optional
//! init_scale = 0.0            # std. dev. of the Gaussian initial weights
//!
//! [mdp]                       # or: kind = "file", path = "mdp.txt"
//! kind = "random"
//! num_states = 10
//! num_agents = 8
//! branching = 5
//! reward_bound = 1.0
//! gamma = 0.5
//! seed = 7
//!
//! [features]                  # "aggregation" | "identity" | "random" | "file"
//! kind = "aggregation"
//! num_features = 4
//!
//! [graph]                     # "complete" | "ring" | "star" | "erdos_renyi" | "file"
//! kind = "ring"
//!
//! [schedule]                  # "constant" (alpha) | "diminishing" (alpha0) | "auto"
//! kind = "auto"
//! ```
//!
//! A diminishing schedule without `alpha0` uses `1/σ_min`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSpec {
    Random {
        num_states: usize,
        num_agents: usize,
        branching: usize,
        reward_bound: f64,
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    Identity,
    /// State `i` is mapped to the indicator of group `i mod L`.
    Aggregation { num_features: usize },
    /// Gaussian entries, normalised to row norms at most one.
    Random {
        num_features: usize,
        #[serde(default)]
        seed: u64,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete,
    Ring,
    Star,
    ErdosRenyi {
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { alpha: f64 },
    Diminishing { alpha0: Option<f64> },
    /// Largest constant step passing every step-size clause on a geometric grid.
    Auto,
}

fn default_record_every() -> u64 {
    1000
}

fn default_num_seeds() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mdp: MdpSpec,
    pub features: FeatureSpec,
    pub graph: GraphSpec,
    pub schedule: ScheduleSpec,
    pub lambdas: Vec<f64>,
    pub num_steps: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub init_scale: f64,
    /// Worker threads for independent trajectories; 0 picks the default.
    #[serde(default)]
    pub threads: usize,
}

impl RunConfig {
    /// Parses TOML; relative file paths are resolved against `base_dir`.
    pub fn parse(text: &str, origin: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        if let Some(dir) = base_dir {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let MdpSpec::File { path } = &mut self.mdp {
            fix(path);
        }
        if let FeatureSpec::File { path } = &mut self.features {
            fix(path);
        }
        if let GraphSpec::File { path } = &mut self.graph {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 1 {
            return Err(Error::Config("num_steps must be at least 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.num_seeds < 1 {
            return Err(Error::Config("num_seeds must be at least 1".into()));
        }
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambdas must not be empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be nonnegative".into()));
        }
        match self.schedule {
            ScheduleSpec::Constant { alpha } if !(alpha > 0.0) => {
                Err(Error::Config(format!("alpha must be positive, got {alpha}")))
            }
            ScheduleSpec::Diminishing { alpha0: Some(a) } if !(a > 0.0) => {
                Err(Error::Config(format!("alpha0 must be positive, got {a}")))
            }
            _ => Ok(()),
        }
    }

    /// The default desk instance: 10 states, 8 agents on a ring, 4
    /// aggregation features, `γ = 0.5`, `R = 1`, 2·10⁵ steps, 20 seeds.
    pub fn desk() -> Self {
        Self {
            mdp: MdpSpec::Random {
                num_states: 10,
                num_agents: 8,
                branching: 5,
                reward_bound: 1.0,
                gamma: 0.5,
                seed: 7,
            },
            features: FeatureSpec::Aggregation { num_features: 4 },
            graph: GraphSpec::Ring,
            schedule: ScheduleSpec::Auto,
            lambdas: vec![0.0, 0.5, 0.9],
            num_steps: 200_000,
            record_every: 1000,
            num_seeds: 20,
            base_seed: 1,
            output_dir: None,
            init_scale: 0.0,
            threads: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
lambdas = [0.0, 0.9]
num_steps = 500

[mdp]
kind = "random"
num_states = 6
num_agents = 3
branching = 3
reward_bound = 1.0
gamma = 0.7

[features]
kind = "random"
num_features = 2
seed = 5

[graph]
kind = "erdos_renyi"
p = 0.5

[schedule]
kind = "diminishing"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::parse(SAMPLE, "sample.toml", None).unwrap();
        assert_eq!(cfg.record_every, 1000);
        assert_eq!(cfg.num_seeds, 20);
        assert_eq!(cfg.schedule, ScheduleSpec::Diminishing { alpha0: None });
        assert_eq!(cfg.graph, GraphSpec::ErdosRenyi { p: 0.5, seed: 0 });
    }

    #[test]
    fn errors_carry_location() {
        let bad = SAMPLE.replace("num_steps = 500", "num_steps = \"many\"");
        let msg = RunConfig::parse(&bad, "sample.toml", None).unwrap_err().to_string();
        assert!(msg.contains("sample.toml") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn rejects_bad_values() {
        let bad = SAMPLE.replace("[0.0, 0.9]", "[1.5]");
        assert!(RunConfig::parse(&bad, "s", None).is_err());
        let bad = SAMPLE.replace("num_steps = 500", "num_steps = 0");
        assert!(RunConfig::parse(&bad, "s", None).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let text = SAMPLE.replace("kind = \"random\"\nnum_states = 6\nnum_agents = 3\nbranching = 3\nreward_bound = 1.0\ngamma = 0.7", "kind = \"file\"\npath = \"m.txt\"");
        let cfg = RunConfig::parse(&text, "s", Some(Path::new("/tmp/x"))).unwrap();
        assert_eq!(cfg.mdp, MdpSpec::File { path: PathBuf::from("/tmp/x/m.txt") });
    }
}
