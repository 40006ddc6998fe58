//! TOML experiment configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BehaviorPolicy, NoiseSpec};
use crate::drac::{CriticMode, DracParams, Setting};
use crate::game::DecoupledGame;
use crate::learn::IrClassSpec;
use crate::quadratic::{coupled_noise, matched_budget, ActorParams, CriticArm};
use crate::random::{self, GameShape};
use crate::seeding::{self, streams};

use super::ExperimentError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSource {
    /// A game JSON file, relative paths resolved against the config file.
    File { path: PathBuf },
    /// A random game with rewards in `[0, 1]`, drawn from `seed`.
    Random {
        n_agents: usize,
        horizon: usize,
        #[serde(default = "one")]
        n_contexts: usize,
        #[serde(default = "one")]
        max_states: usize,
        max_actions: usize,
        rank: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSource {
    Uniform,
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub setting: Setting,
    /// Target accuracy (`ε` or `ε_RP`).
    pub epsilon: f64,
    #[serde(default = "unit")]
    pub concentrability: f64,
    /// Upper limit on the iteration count the schedule may ask for.
    #[serde(default = "default_cap")]
    pub max_iterations: usize,
}

fn unit() -> f64 {
    1.0
}

fn default_cap() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "exact")]
    pub critic: CriticMode,
    /// Take `T`, `η`, `λ` from the sample-complexity schedule instead.
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
}

fn exact() -> CriticMode {
    CriticMode::ExactDp
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSource,
    #[serde(default = "uniform_behavior")]
    pub behavior: BehaviorSource,
    /// Records per step.
    pub samples: usize,
    /// Overrides the game's observation noise.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub reward_class: IrClassSpec,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    pub train: TrainSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn uniform_behavior() -> BehaviorSource {
    BehaviorSource::Uniform
}

fn default_smoothing() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn config_error(path: &Path, msg: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(format!("{}: {msg}", path.display()))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e))?;
    toml::from_str(&text).map_err(|e| config_error(path, e))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: ExperimentConfig = read_toml(path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed required");
        }
        if !(self.smoothing >= 0.0) {
            return bad("smoothing must be >= 0");
        }
        if self.reward_class.rank == 0 || !(self.reward_class.ridge >= 0.0) {
            return bad("reward class needs rank >= 1 and ridge >= 0");
        }
        if let GameSource::File { path } = &self.game {
            if !self.resolve(path).is_file() {
                return bad(&format!("game file {} not found", self.resolve(path).display()));
            }
        }
        if let GameSource::Random { n_agents, horizon, n_contexts, max_states, max_actions, rank, .. } = self.game {
            if n_agents == 0 || horizon == 0 || n_contexts == 0 || max_states == 0 || max_actions == 0 || rank == 0 {
                return bad("random game sizes must all be positive");
            }
        }
        if let BehaviorSource::File { path } = &self.behavior {
            if !self.resolve(path).is_file() {
                return bad(&format!("behavior file {} not found", self.resolve(path).display()));
            }
        }
        let t = &self.train;
        match &t.schedule {
            Some(s) => {
                if !(s.epsilon > 0.0) || !(s.concentrability > 0.0) || s.max_iterations == 0 {
                    return bad("schedule needs epsilon > 0, concentrability > 0, max_iterations >= 1");
                }
            }
            None => {
                if t.iterations.is_none() || t.lambda.is_none() || t.eta.is_none() {
                    return bad("train needs iterations, lambda and eta unless a schedule is given");
                }
            }
        }
        Ok(())
    }

    /// Hash of the configuration as parsed (paths as written).
    pub fn hash(&self) -> String {
        crate::data::content_hash(self)
    }

    pub fn build_game(&self) -> Result<DecoupledGame, ExperimentError> {
        let mut game = match &self.game {
            GameSource::File { path } => super::load_json::<DecoupledGame>(&self.resolve(path))?,
            &GameSource::Random { n_agents, horizon, n_contexts, max_states, max_actions, rank, seed } => {
                let shape = GameShape { n_agents, horizon, n_contexts, max_states, max_actions, rank };
                random::game(&mut seeding::rng(seed, &[streams::GAME]), &shape)
            }
        };
        if let Some(noise) = &self.noise {
            game.noise = noise.clone();
        }
        game.validate().map_err(|e| ExperimentError::Config(format!("game: {e}")))?;
        Ok(game)
    }

    pub fn build_behavior(&self, game: &DecoupledGame) -> Result<BehaviorPolicy, ExperimentError> {
        let b = match &self.behavior {
            BehaviorSource::Uniform => BehaviorPolicy::uniform(&game.dynamics),
            BehaviorSource::File { path } => super::load_json::<BehaviorPolicy>(&self.resolve(path))?,
        };
        b.resolved_state_dists(&game.dynamics).map_err(|e| ExperimentError::Config(format!("behavior: {e}")))?;
        Ok(b)
    }

    /// Actor-critic parameters for one seed, resolving the schedule if requested.
    pub fn drac_params(&self, game: &DecoupledGame, seed: u64) -> Result<DracParams, ExperimentError> {
        let t = &self.train;
        let (iterations, lambda, eta) = match &t.schedule {
            Some(s) => {
                let sch = crate::drac::theoretical_hyperparams(
                    s.setting,
                    self.reward_class.rank,
                    game.n_agents(),
                    game.horizon(),
                    s.epsilon,
                    s.concentrability,
                )
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
                (sch.iterations.min(s.max_iterations), sch.lambda, sch.eta)
            }
            None => (t.iterations.unwrap_or(1), t.lambda.unwrap_or(0.0), t.eta.unwrap_or(1.0)),
        };
        let p = DracParams { iterations, lambda, eta, critic: t.critic, seed: seeding::derive(seed, &[streams::EPISODE]) };
        p.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub n_agents: Vec<usize>,
    /// Uniform noise half-width; derived from the budget and coupling when absent.
    #[serde(default)]
    pub noise: Option<f64>,
    /// Samples per dataset; defaults to the joint critic's parameter count.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "all_arms")]
    pub arms: Vec<CriticArm>,
    #[serde(default = "default_study_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub actor: ActorParams,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_coupling() -> f64 {
    0.1
}

fn all_arms() -> Vec<CriticArm> {
    CriticArm::ALL.to_vec()
}

fn default_study_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_ridge() -> f64 {
    1e-8
}

impl QuadraticConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let cfg: QuadraticConfig = read_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.n_agents.is_empty() || self.n_agents.iter().any(|&n| n < 2) {
            return bad("every N must be at least 2");
        }
        if let Some(s) = self.noise {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("noise must be finite and >= 0");
            }
        }
        if self.samples == Some(0) {
            return bad("samples must be at least 1");
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return bad("coupling must be positive");
        }
        if self.arms.is_empty() || self.seeds.is_empty() {
            return bad("need at least one arm and one seed");
        }
        let a = &self.actor;
        if !(a.learning_rate > 0.0) || !(a.alpha >= 0.0) || !(a.bc_weight >= 0.0) {
            return bad("actor needs learning_rate > 0, alpha >= 0, bc_weight >= 0");
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be >= 0");
        }
        Ok(())
    }

    /// `(M, σ)` for `N` agents. With neither given, `M` is the matched budget
    /// and `σ = coupling · M / N`; with one given the other follows from the coupling.
    pub fn budget(&self, n: usize) -> (usize, f64) {
        match (self.samples, self.noise) {
            (Some(m), Some(s)) => (m, s),
            (Some(m), None) => (m, coupled_noise(n, m, self.coupling)),
            (None, Some(s)) => (((s * n as f64 / self.coupling).round() as usize).max(1), s),
            (None, None) => {
                let m = matched_budget(n);
                (m, coupled_noise(n, m, self.coupling))
            }
        }
    }
}
