//! Experiment configuration files.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{default_levels, generate_random_channel_model, DEFAULT_PERSISTENCE};
use crate::dqn::DqnConfig;
use crate::env::{EnvConfig, DEFAULT_TAU_CAP};
use crate::error::{Error, Result};
use crate::link::{dbm_to_watts, CodeParams};
use crate::plant::{generate_random_plant, PlantModel, RadiusRange};
use crate::ppo::PpoConfig;
use crate::rng::{derive_rng, Stream};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    PpoBinary,
    PpoNaive,
    DqnOma,
    Random,
    RoundRobin,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PpoBinary => "ppo-binary",
            Algorithm::PpoNaive => "ppo-naive",
            Algorithm::DqnOma => "dqn-oma",
            Algorithm::Random => "random",
            Algorithm::RoundRobin => "round-robin",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Algorithm::PpoBinary | Algorithm::PpoNaive | Algorithm::DqnOma)
    }
}

/// Explicit plant matrices, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub w: Option<Vec<Vec<f64>>>,
    pub v: Option<Vec<Vec<f64>>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("matrix {what} must be rectangular and non-empty")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl PlantSpec {
    pub fn build(&self) -> Result<PlantModel> {
        let a = matrix(&self.a, "a")?;
        let c = matrix(&self.c, "c")?;
        let w = match &self.w {
            Some(w) => matrix(w, "w")?,
            None => DMatrix::identity(a.nrows(), a.nrows()),
        };
        let v = match &self.v {
            Some(v) => matrix(v, "v")?,
            None => DMatrix::identity(c.nrows(), c.nrows()),
        };
        PlantModel::new(a, c, w, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub sensors: usize,
    pub channels: usize,
    /// Channel gain levels; their count is `H`.
    pub levels: Vec<f64>,
    pub persistence: f64,
    pub state_dim: usize,
    pub meas_dim: usize,
    pub radius: RadiusRange,
    pub tau_cap: u32,
    /// Seeds plant and channel-model generation.
    pub seed: u64,
    /// Overrides generated plants when non-empty.
    pub plants: Vec<PlantSpec>,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            sensors: 6,
            channels: 3,
            levels: default_levels(),
            persistence: DEFAULT_PERSISTENCE,
            state_dim: 2,
            meas_dim: 2,
            radius: RadiusRange::default(),
            tau_cap: DEFAULT_TAU_CAP,
            seed: 1,
            plants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    pub bits_per_symbol: f64,
    pub blocklength: f64,
    pub noise_dbm: f64,
    pub p_max_dbm: f64,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection {
            bits_per_symbol: 2.0,
            blocklength: 200.0,
            noise_dbm: -60.0,
            p_max_dbm: 23.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub algorithm: Algorithm,
    /// Seeds network initialization, exploration and minibatching.
    pub seed: u64,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            algorithm: Algorithm::PpoBinary,
            seed: 1,
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub steps: usize,
    pub seed: u64,
    /// Write the per-step evaluation trace.
    pub trace: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            steps: 10_000,
            seed: 2024,
            trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths resolve against the config file's directory.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub code: CodeSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            label: String::new(),
            env: EnvSection::default(),
            code: CodeSection::default(),
            agent: AgentSection::default(),
            eval: EvalSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves its output directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output.dir.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        if !(e.channels >= 1 && e.sensors > e.channels) {
            return Err(Error::Config(format!(
                "need sensors > channels >= 1, got {} and {}",
                e.sensors, e.channels
            )));
        }
        if e.levels.is_empty() || e.levels.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Config("gain levels must be positive".into()));
        }
        if !e.plants.is_empty() && e.plants.len() != e.sensors {
            return Err(Error::Config(format!(
                "{} explicit plants for {} sensors",
                e.plants.len(),
                e.sensors
            )));
        }
        if self.eval.steps == 0 {
            return Err(Error::Config("eval.steps must be positive".into()));
        }
        self.agent.ppo.validate()?;
        self.agent.dqn.validate()
    }

    /// SHA-256 of the canonical serialization, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSection::default();
        let text = canon.to_toml().unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn code_params(&self) -> CodeParams {
        CodeParams {
            bits_per_symbol: self.code.bits_per_symbol,
            blocklength: self.code.blocklength,
            noise_power: dbm_to_watts(self.code.noise_dbm),
        }
    }

    pub fn build_env(&self) -> Result<EnvConfig> {
        let e = &self.env;
        let plants = if e.plants.is_empty() {
            let mut rng = derive_rng(e.seed, Stream::Plant);
            (0..e.sensors)
                .map(|_| generate_random_plant(e.state_dim, e.meas_dim, e.radius, &mut rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            e.plants.iter().map(PlantSpec::build).collect::<Result<Vec<_>>>()?
        };
        let mut rng = derive_rng(e.seed, Stream::ChannelModel);
        let channel = generate_random_channel_model(
            e.sensors,
            e.channels,
            e.levels.clone(),
            e.persistence,
            &mut rng,
        )?;
        EnvConfig::new(
            plants,
            channel,
            self.code_params(),
            dbm_to_watts(self.code.p_max_dbm),
            e.tau_cap,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("schema_version = 1\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.eval.steps, 10_000);
        assert_eq!(cfg.agent.dqn.buffer_for(6, 3), 18_000);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ExperimentConfig::from_toml("schema_version = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("schema_version = 1\nbogus = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("schema_version = 1\n[env]\nsensors = 3\nchannels = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[env]\nsensors = 3\n").is_err());
        assert!(ExperimentConfig::from_toml(
            "schema_version = 1\n[agent]\nalgorithm = \"sarsa\"\n"
        )
        .is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let mut cfg = ExperimentConfig::default();
        cfg.agent.algorithm = Algorithm::DqnOma;
        cfg.agent.ppo.episodes = Some(7);
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.output.dir = PathBuf::from("elsewhere");
        assert_eq!(other.hash(), cfg.hash());
        other.eval.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn explicit_plants() {
        let text = r#"
schema_version = 1
[env]
sensors = 2
channels = 1
[[env.plants]]
a = [[1.2]]
c = [[1.0]]
[[env.plants]]
a = [[1.1]]
c = [[1.0]]
w = [[2.0]]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let env = cfg.build_env().unwrap();
        assert_eq!(env.sensors(), 2);
        assert_eq!(env.plants()[1].w[(0, 0)], 2.0);
    }

    #[test]
    fn env_build_is_seeded() {
        let cfg = ExperimentConfig::default();
        let a = cfg.build_env().unwrap();
        let b = cfg.build_env().unwrap();
        assert_eq!(a.cost_floor(), b.cost_floor());
        assert_eq!(a.observation_dim(), 24);
    }
}
