//! The continuous quadratic coordination game and its linear-feature critics.
//!
//! Agents pick `a_i ∈ [-1, 1]` and receive `r_i = a_i Σ_j a_j / √N` plus
//! `U(-σ, σ)` noise. Offline data comes from the uniform policy. Each critic
//! arm fits `Q̂_i` by least squares on a fixed feature basis, and the actor runs
//! deterministic policy-gradient ascent on `Q̂_i` with a behavior-cloning pull
//! toward the behavior mean, normalized as in TD3+BC.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap::quadratic_gap;
use crate::seeding::{self, streams};

#[derive(Debug, Error)]
pub enum QuadraticError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singular least-squares system for agent {0}")]
    Singular(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum CriticArm {
    /// All singles and pairwise products of the joint action.
    Joint,
    /// Own terms plus one pair term per other agent: `1, a_i, a_i², a_j, a_i a_j`.
    #[serde(rename = "2-ir", alias = "two_ir")]
    TwoIr,
    /// Own action only: `1, a_i, a_i²`.
    #[serde(rename = "1-ir", alias = "one_ir")]
    OneIr,
}

impl CriticArm {
    pub const ALL: [CriticArm; 3] = [CriticArm::Joint, CriticArm::TwoIr, CriticArm::OneIr];

    pub fn name(&self) -> &'static str {
        match self {
            CriticArm::Joint => "joint",
            CriticArm::TwoIr => "2-ir",
            CriticArm::OneIr => "1-ir",
        }
    }

    pub fn n_features(&self, n: usize) -> usize {
        match self {
            CriticArm::Joint => 1 + n + n * (n + 1) / 2,
            CriticArm::TwoIr => 3 + 2 * (n - 1),
            CriticArm::OneIr => 3,
        }
    }

    pub fn features(&self, i: usize, a: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        match self {
            CriticArm::Joint => {
                out.extend_from_slice(a);
                for j in 0..a.len() {
                    for k in j..a.len() {
                        out.push(a[j] * a[k]);
                    }
                }
            }
            CriticArm::TwoIr => {
                out.push(a[i]);
                out.push(a[i] * a[i]);
                out.extend((0..a.len()).filter(|&j| j != i).map(|j| a[j]));
                out.extend((0..a.len()).filter(|&j| j != i).map(|j| a[i] * a[j]));
            }
            CriticArm::OneIr => {
                out.push(a[i]);
                out.push(a[i] * a[i]);
            }
        }
    }

    /// `∂Q̂_i/∂a_i` at joint action `a` for coefficient vector `w`.
    pub fn own_gradient(&self, i: usize, a: &[f64], w: &[f64]) -> f64 {
        let n = a.len();
        match self {
            CriticArm::Joint => {
                let mut g = w[1 + i];
                let mut idx = 1 + n;
                for j in 0..n {
                    for k in j..n {
                        if j == i && k == i {
                            g += 2.0 * w[idx] * a[i];
                        } else if j == i {
                            g += w[idx] * a[k];
                        } else if k == i {
                            g += w[idx] * a[j];
                        }
                        idx += 1;
                    }
                }
                g
            }
            CriticArm::TwoIr => {
                let cross: f64 = (0..n).filter(|&j| j != i).enumerate().map(|(m, j)| w[2 + n + m] * a[j]).sum();
                w[1] + 2.0 * w[2] * a[i] + cross
            }
            CriticArm::OneIr => w[1] + 2.0 * w[2] * a[i],
        }
    }
}

/// Default sample budget: the joint critic's per-agent parameter count, so the
/// fully general critic has just enough data to be identifiable.
pub fn matched_budget(n_agents: usize) -> usize {
    CriticArm::Joint.n_features(n_agents)
}

/// Noise level that keeps `σN/M` at the given coupling.
pub fn coupled_noise(n_agents: usize, samples: usize, coupling: f64) -> f64 {
    coupling * samples as f64 / n_agents as f64
}

pub fn mean_reward(i: usize, a: &[f64]) -> f64 {
    a[i] * a.iter().sum::<f64>() / (a.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticHeader {
    pub n_agents: usize,
    pub noise: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSample {
    pub a: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticDataset {
    pub header: QuadraticHeader,
    pub samples: Vec<QuadraticSample>,
}

impl QuadraticDataset {
    /// Uniform-policy data: `a ~ U[-1,1]^N`, `r_i = mean + U(-σ, σ)`.
    pub fn generate(n_agents: usize, noise: f64, samples: usize, seed: u64) -> Result<Self, QuadraticError> {
        if n_agents == 0 || !(noise >= 0.0 && noise.is_finite()) || samples == 0 {
            return Err(QuadraticError::Config("need N >= 1, finite noise >= 0 and samples >= 1".into()));
        }
        let mut rng = seeding::rng(seed, &[streams::QUADRATIC]);
        let samples = (0..samples)
            .map(|_| {
                let a: Vec<f64> = (0..n_agents).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let r = (0..n_agents)
                    .map(|i| {
                        let eps = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
                        mean_reward(i, &a) + eps
                    })
                    .collect();
                QuadraticSample { a, r }
            })
            .collect();
        Ok(QuadraticDataset { header: QuadraticHeader { n_agents, noise, samples: 0, seed }, samples }.with_count())
    }

    fn with_count(mut self) -> Self {
        self.header.samples = self.samples.len();
        self
    }

    pub fn save(&self, path: &Path) -> Result<(), QuadraticError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &self.header).map_err(std::io::Error::other)?;
        writeln!(w)?;
        for s in &self.samples {
            serde_json::to_writer(&mut w, s).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, QuadraticError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header: QuadraticHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?).map_err(|e| QuadraticError::Parse { line: 1, msg: e.to_string() })?,
            None => return Err(QuadraticError::Parse { line: 1, msg: "missing header".into() }),
        };
        let mut samples = Vec::with_capacity(header.samples);
        for (k, l) in lines.enumerate() {
            let line = k + 2;
            let s: QuadraticSample = serde_json::from_str(&l?).map_err(|e| QuadraticError::Parse { line, msg: e.to_string() })?;
            if s.a.len() != header.n_agents || s.r.len() != header.n_agents {
                return Err(QuadraticError::Parse { line, msg: "wrong number of agents".into() });
            }
            samples.push(s);
        }
        if samples.len() != header.samples {
            return Err(QuadraticError::Parse {
                line: samples.len() + 2,
                msg: format!("expected {} samples, found {}", header.samples, samples.len()),
            });
        }
        Ok(QuadraticDataset { header, samples })
    }
}

/// Per-agent least-squares coefficients of a critic arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedCritic {
    pub arm: CriticArm,
    pub coefficients: Vec<Vec<f64>>,
    /// Mean absolute fitted value over the data, per agent (TD3+BC normalizer).
    pub mean_abs_q: Vec<f64>,
}

impl FittedCritic {
    pub fn value(&self, i: usize, a: &[f64]) -> f64 {
        let mut f = Vec::new();
        self.arm.features(i, a, &mut f);
        f.iter().zip(&self.coefficients[i]).map(|(x, w)| x * w).sum()
    }
}

pub fn fit_critic(data: &QuadraticDataset, arm: CriticArm, ridge: f64) -> Result<FittedCritic, QuadraticError> {
    let n = data.header.n_agents;
    let p = arm.n_features(n);
    let m = data.samples.len() as f64;
    let mut coefficients = Vec::with_capacity(n);
    let mut mean_abs_q = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(p);
    for i in 0..n {
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for s in &data.samples {
            arm.features(i, &s.a, &mut f);
            for u in 0..p {
                rhs[u] += f[u] * s.r[i] / m;
                for v in 0..p {
                    gram[(u, v)] += f[u] * f[v] / m;
                }
            }
        }
        for u in 0..p {
            gram[(u, u)] += ridge;
        }
        let w: Vec<f64> = gram.cholesky().ok_or(QuadraticError::Singular(i))?.solve(&rhs).iter().copied().collect();
        let mabs = data
            .samples
            .iter()
            .map(|s| {
                arm.features(i, &s.a, &mut f);
                f.iter().zip(&w).map(|(x, c)| x * c).sum::<f64>().abs()
            })
            .sum::<f64>()
            / m;
        coefficients.push(w);
        mean_abs_q.push(mabs);
    }
    Ok(FittedCritic { arm, coefficients, mean_abs_q })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorParams {
    pub steps: usize,
    pub learning_rate: f64,
    /// TD3+BC `α`: the critic term is scaled by `α / mean|Q̂|`.
    pub alpha: f64,
    /// Weight of the squared distance to the behavior mean (0 for the uniform policy).
    pub bc_weight: f64,
}

impl Default for ActorParams {
    fn default() -> Self {
        ActorParams { steps: 300, learning_rate: 0.01, alpha: 5.0, bc_weight: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorRun {
    /// Gap after each step; entry 0 is the initial policy.
    pub gaps: Vec<f64>,
    pub actions: Vec<f64>,
}

/// Gradient ascent on `(α/mean|Q̂_i|) Q̂_i(π) - w_bc π_i²` for every agent.
/// The behavior-cloning part is applied implicitly
/// (`π ← (π + lr·λ·∂Q̂) / (1 + 2·lr·w_bc)`) so that any weight, including an
/// infinite one, gives a stable step. Actions start at the behavior mean 0.
pub fn run_actor(critic: &FittedCritic, params: &ActorParams) -> Result<ActorRun, QuadraticError> {
    if !(params.learning_rate > 0.0) || !(params.alpha >= 0.0) || !(params.bc_weight >= 0.0) {
        return Err(QuadraticError::Config("learning rate must be > 0, alpha and bc weight >= 0".into()));
    }
    let n = critic.coefficients.len();
    let mut pi = vec![0.0; n];
    let gap = |pi: &[f64]| quadratic_gap(pi).expect("actions stay clamped");
    let mut gaps = Vec::with_capacity(params.steps + 1);
    gaps.push(gap(&pi));
    for _ in 0..params.steps {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let scale = if critic.mean_abs_q[i] > 0.0 { params.alpha / critic.mean_abs_q[i] } else { 0.0 };
                let g = critic.arm.own_gradient(i, &pi, &critic.coefficients[i]);
                let moved = pi[i] + params.learning_rate * scale * g;
                let denom = 1.0 + 2.0 * params.learning_rate * params.bc_weight;
                (moved / denom).clamp(-1.0, 1.0)
            })
            .collect();
        pi = next;
        gaps.push(gap(&pi));
    }
    Ok(ActorRun { gaps, actions: pi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_formula() {
        let r = mean_reward(0, &[1.0, 1.0]);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = [0.3, -0.5, 0.8, 0.1];
        for arm in CriticArm::ALL {
            let p = arm.n_features(4);
            let w: Vec<f64> = (0..p).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.3).collect();
            let critic = FittedCritic { arm, coefficients: vec![w.clone(); 4], mean_abs_q: vec![1.0; 4] };
            for i in 0..4 {
                let h = 1e-6;
                let mut up = a;
                let mut dn = a;
                up[i] += h;
                dn[i] -= h;
                let fd = (critic.value(i, &up) - critic.value(i, &dn)) / (2.0 * h);
                assert!((fd - arm.own_gradient(i, &a, &w)).abs() < 1e-8, "{arm:?} agent {i}");
            }
        }
    }

    #[test]
    fn pure_cloning_stays_at_zero() {
        let data = QuadraticDataset::generate(2, 0.1, 50, 3).unwrap();
        let critic = fit_critic(&data, CriticArm::TwoIr, 1e-8).unwrap();
        let run = run_actor(&critic, &ActorParams { bc_weight: f64::INFINITY, ..ActorParams::default() }).unwrap();
        assert_eq!(run.actions, vec![0.0, 0.0]);
        assert_eq!(*run.gaps.last().unwrap(), 1.0);
    }
}
