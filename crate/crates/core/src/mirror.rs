//! χ²-regularized mirror descent on the probability simplex.
//!
//! The update solves
//! `argmin_p  -<g, p> + λ χ²(p, ν) + (1/η) D(p, q)` over the simplex, where
//! `χ²(p, ν) = Σ_a p_a²/ν_a - 1` and `D(p, q) = Σ_a (p_a - q_a)²/ν_a` is the
//! Bregman divergence of `p ↦ Σ_a p_a²/ν_a`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MirrorError {
    #[error("infinite divergence: coordinate {index} has mass but reference weight 0")]
    InfiniteDivergence { index: usize },
    #[error("invalid update parameters: {0}")]
    Params(String),
    #[error("not a probability vector: {0}")]
    NotSimplex(String),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("loss {value} at round {round}, action {action} outside [0, {bound}]")]
    LossOutOfRange { round: usize, action: usize, value: f64, bound: f64 },
    #[error("non-finite gain at action {0}")]
    NonFiniteGain(usize),
}

pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(p: Vec<f64>) -> Result<Self, MirrorError> {
        if p.is_empty() {
            return Err(MirrorError::NotSimplex("empty".into()));
        }
        if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(MirrorError::NotSimplex(format!("entry {v}")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(MirrorError::NotSimplex(format!("sums to {s}")));
        }
        Ok(SimplexPoint(p))
    }

    pub fn uniform(n: usize) -> Self {
        SimplexPoint(vec![1.0 / n as f64; n])
    }

    pub fn vertex(n: usize, a: usize) -> Self {
        let mut p = vec![0.0; n];
        p[a] = 1.0;
        SimplexPoint(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = MirrorError;
    fn try_from(v: Vec<f64>) -> Result<Self, MirrorError> {
        SimplexPoint::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateParams {
    pub lambda: f64,
    pub eta: f64,
    /// Range bound on the gains, used by the regret audit.
    pub bound: f64,
}

impl UpdateParams {
    pub fn new(lambda: f64, eta: f64, bound: f64) -> Result<Self, MirrorError> {
        let p = UpdateParams { lambda, eta, bound };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MirrorError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MirrorError::Params(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(MirrorError::Params(format!("eta = {} must be finite and > 0", self.eta)));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(MirrorError::Params(format!("bound = {} must be finite and > 0", self.bound)));
        }
        if !(self.lambda + 1.0 / self.eta > 0.0) {
            return Err(MirrorError::Params("lambda + 1/eta must be positive".into()));
        }
        Ok(())
    }
}

pub fn chi_square(p: &[f64], nu: &[f64]) -> Result<f64, MirrorError> {
    if p.len() != nu.len() {
        return Err(MirrorError::Length(p.len(), nu.len()));
    }
    let mut acc = 0.0;
    for (a, (&pa, &na)) in p.iter().zip(nu).enumerate() {
        if na > 0.0 {
            acc += na * (pa / na - 1.0).powi(2);
        } else if pa > 0.0 {
            return Err(MirrorError::InfiniteDivergence { index: a });
        }
    }
    Ok(acc)
}

pub fn bregman(p: &[f64], q: &[f64], nu: &[f64]) -> Result<f64, MirrorError> {
    if p.len() != nu.len() || q.len() != nu.len() {
        return Err(MirrorError::Length(p.len().max(q.len()), nu.len()));
    }
    let mut acc = 0.0;
    for (a, ((&pa, &qa), &na)) in p.iter().zip(q).zip(nu).enumerate() {
        if na > 0.0 {
            acc += (pa - qa).powi(2) / na;
        } else if pa != qa {
            return Err(MirrorError::InfiniteDivergence { index: a });
        }
    }
    Ok(acc)
}

/// Value of the update objective at `p`.
pub fn update_objective(gains: &[f64], p: &[f64], q: &[f64], nu: &[f64], params: &UpdateParams) -> Result<f64, MirrorError> {
    let lin: f64 = gains.iter().zip(p).map(|(g, x)| g * x).sum();
    Ok(-lin + params.lambda * chi_square(p, nu)? + bregman(p, q, nu)? / params.eta)
}

/// Exact minimizer of the update objective.
///
/// For a multiplier `τ` on `Σ p = 1` the stationary point is affine in `τ`:
/// `p_a(τ) = ν_a (g_a - τ) / (2α) + q_a / (η α)` with `α = λ + 1/η`. The active
/// set starts with every coordinate in the support of `ν`; each pass solves for
/// `τ` in closed form and clamps every negative coordinate to zero.
pub fn regularized_update(gains: &[f64], q: &[f64], nu: &[f64], params: &UpdateParams) -> Result<SimplexPoint, MirrorError> {
    params.validate()?;
    let n = nu.len();
    if gains.len() != n || q.len() != n {
        return Err(MirrorError::Length(gains.len().max(q.len()), n));
    }
    if let Some(a) = gains.iter().position(|g| !g.is_finite()) {
        return Err(MirrorError::NonFiniteGain(a));
    }
    if let Some(a) = (0..n).find(|&a| nu[a] <= 0.0 && q[a] > 0.0) {
        return Err(MirrorError::InfiniteDivergence { index: a });
    }
    let alpha = params.lambda + 1.0 / params.eta;
    let eta = params.eta;
    let mut active: Vec<bool> = nu.iter().map(|&v| v > 0.0).collect();
    if !active.contains(&true) {
        return Err(MirrorError::NotSimplex("reference has no support".into()));
    }
    let mut p = vec![0.0; n];
    loop {
        let (mut s_nu, mut s_num) = (0.0, 0.0);
        for a in (0..n).filter(|&a| active[a]) {
            s_nu += nu[a];
            s_num += nu[a] * gains[a] + 2.0 * q[a] / eta;
        }
        let tau = (s_num - 2.0 * alpha) / s_nu;
        let mut clamped = false;
        for a in 0..n {
            if active[a] {
                let v = nu[a] * (gains[a] - tau) / (2.0 * alpha) + q[a] / (eta * alpha);
                if v <= 0.0 {
                    active[a] = false;
                    clamped = true;
                    p[a] = 0.0;
                } else {
                    p[a] = v;
                }
            } else {
                p[a] = 0.0;
            }
        }
        if !clamped {
            break;
        }
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(SimplexPoint(p))
}

/// Worst violation of the first-order optimality condition
/// `<-η g + (1+ηλ) ∇f(p) - ∇f(q), e_b - p> >= 0` over vertices `b` in the
/// support of `ν`, where `∇f(p)_a = 2 p_a / ν_a`. Zero means certified.
pub fn kkt_residual(gains: &[f64], q: &[f64], nu: &[f64], p: &[f64], params: &UpdateParams) -> f64 {
    let v: Vec<f64> = (0..nu.len())
        .map(|a| {
            if nu[a] > 0.0 {
                -params.eta * gains[a] + (1.0 + params.eta * params.lambda) * 2.0 * p[a] / nu[a] - 2.0 * q[a] / nu[a]
            } else {
                0.0
            }
        })
        .collect();
    let vp: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
    (0..nu.len())
        .filter(|&b| nu[b] > 0.0)
        .map(|b| vp - v[b])
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub iterates: Vec<SimplexPoint>,
}

impl RegretAudit {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Runs `T` updates from `p^1 = ν` on the given gain sequence and evaluates
/// both sides of the regularized no-regret inequality against comparator `μ`:
/// `Σ_t <l^t, μ - p^t> + λ Σ_{t≤T+1} χ²(p^t, ν) <= (Tλ + 1/η) χ²(μ, ν) + η T B² / 4`.
pub fn regret_audit(losses: &[Vec<f64>], nu: &[f64], params: &UpdateParams, mu: &[f64]) -> Result<RegretAudit, MirrorError> {
    params.validate()?;
    for (t, l) in losses.iter().enumerate() {
        if l.len() != nu.len() {
            return Err(MirrorError::Length(l.len(), nu.len()));
        }
        if let Some((a, &v)) = l.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v <= params.bound)) {
            return Err(MirrorError::LossOutOfRange { round: t, action: a, value: v, bound: params.bound });
        }
    }
    let nu_pt = SimplexPoint::new(nu.to_vec())?;
    let mut iterates = vec![nu_pt];
    let mut lhs = 0.0;
    for l in losses {
        let p = iterates.last().unwrap();
        lhs += l.iter().zip(mu).zip(p.as_slice()).map(|((l, m), x)| l * (m - x)).sum::<f64>();
        let next = regularized_update(l, p.as_slice(), nu, params)?;
        iterates.push(next);
    }
    for p in &iterates {
        lhs += params.lambda * chi_square(p.as_slice(), nu)?;
    }
    let t = losses.len() as f64;
    let rhs = (t * params.lambda + 1.0 / params.eta) * chi_square(mu, nu)? + params.eta * t * params.bound.powi(2) / 4.0;
    Ok(RegretAudit { lhs, rhs, iterates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_examples() {
        let u3 = [1.0 / 3.0; 3];
        assert!((chi_square(&[1.0, 0.0, 0.0], &u3).unwrap() - 2.0).abs() < 1e-12);
        assert!((chi_square(&[0.75, 0.25], &[0.5, 0.5]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(chi_square(&u3, &u3).unwrap(), 0.0);
        assert!(matches!(chi_square(&[0.5, 0.5], &[1.0, 0.0]), Err(MirrorError::InfiniteDivergence { index: 1 })));
    }

    #[test]
    fn bregman_examples() {
        let nu = [0.2, 0.3, 0.5];
        let p = [0.1, 0.6, 0.3];
        let q = [0.4, 0.4, 0.2];
        assert_eq!(bregman(&p, &p, &nu).unwrap(), 0.0);
        assert!((bregman(&p, &nu, &nu).unwrap() - chi_square(&p, &nu).unwrap()).abs() < 1e-15);
        assert_eq!(bregman(&p, &q, &nu).unwrap(), bregman(&q, &p, &nu).unwrap());
    }

    #[test]
    fn two_action_update() {
        let params = UpdateParams::new(1.0, 1.0, 1.0).unwrap();
        let p = regularized_update(&[1.0, 0.0], &[0.5, 0.5], &[0.5, 0.5], &params).unwrap();
        assert!((p.as_slice()[0] - 0.5625).abs() < 1e-15);
        assert!((p.as_slice()[1] - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn equal_gains_keep_reference() {
        let nu = [0.1, 0.2, 0.7];
        let params = UpdateParams::new(0.3, 2.0, 1.0).unwrap();
        let p = regularized_update(&[0.4; 3], &nu, &nu, &params).unwrap();
        for (a, b) in p.as_slice().iter().zip(&nu) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn clamps_and_respects_support() {
        let nu = [0.5, 0.5, 0.0];
        let params = UpdateParams::new(0.0, 100.0, 1.0).unwrap();
        let p = regularized_update(&[1.0, 0.0, 5.0], &[0.5, 0.5, 0.0], &nu, &params).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
        assert!(kkt_residual(&[1.0, 0.0, 5.0], &[0.5, 0.5, 0.0], &nu, p.as_slice(), &params) < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(UpdateParams::new(-1.0, 1.0, 1.0).is_err());
        assert!(UpdateParams::new(0.0, f64::INFINITY, 1.0).is_err());
        assert!(UpdateParams::new(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn regret_zero_losses() {
        let nu = [0.25; 4];
        let params = UpdateParams::new(0.5, 0.1, 1.0).unwrap();
        let audit = regret_audit(&vec![vec![0.0; 4]; 10], &nu, &params, &nu).unwrap();
        assert_eq!(audit.lhs, 0.0);
        assert!((audit.rhs - 0.1 * 10.0 / 4.0).abs() < 1e-15);
        assert!(regret_audit(&[vec![2.0, 0.0, 0.0, 0.0]], &nu, &params, &nu).is_err());
    }
}
