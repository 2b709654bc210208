//! Probability primitives: diagonal Gaussians, categoricals and Bernoullis
//! with reparameterized sampling, exact log-densities and closed-form KL
//! divergences.
//!
//! Plain-`f64` versions live on the types; graph-building versions used
//! inside training losses live in [`graph`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Variance is kept inside [1e-6, 1e6]; these are the matching log bounds.
pub const LOG_VAR_MIN: f64 = -13.815510557964274;
pub const LOG_VAR_MAX: f64 = 13.815510557964274;

const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal Gaussian over a latent vector: mean plus per-dimension
/// log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_var.len(), "mean/log_var dims differ");
        let log_var = log_var
            .into_iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect();
        DiagGaussian { mean, log_var }
    }

    /// Standard normal of dimension `dim`.
    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// Reparameterized sample: mean + exp(log_var / 2) * noise.
    pub fn rsample_with(&self, noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != self.dim() {
            return Err(Error::config(format!(
                "noise dim {} does not match distribution dim {}",
                noise.len(),
                self.dim()
            )));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_var)
            .zip(noise)
            .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
            .collect())
    }

    /// Draw standard-normal noise from `rng` and reparameterize.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let noise: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.rsample_with(&noise).expect("matching dims by construction")
    }

    /// Exact log-density at `x`.
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::config(format!(
                "log_prob dim {} does not match distribution dim {}",
                x.len(),
                self.dim()
            )));
        }
        let mut total = 0.0;
        for ((m, lv), xi) in self.mean.iter().zip(&self.log_var).zip(x) {
            let diff = xi - m;
            total += -0.5 * (LN_2PI + lv + diff * diff * (-lv).exp());
        }
        Ok(total)
    }
}

/// Closed-form KL(q || p) between diagonal Gaussians of equal dimension.
pub fn kl_gaussian(q: &DiagGaussian, p: &DiagGaussian) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL requires equal dims");
    let mut total = 0.0;
    for i in 0..q.dim() {
        let (mq, lq) = (q.mean[i], q.log_var[i]);
        let (mp, lp) = (p.mean[i], p.log_var[i]);
        let diff = mq - mp;
        total += 0.5 * (lp - lq + (lq.exp() + diff * diff) * (-lp).exp() - 1.0);
    }
    total
}

/// Categorical distribution on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    pub probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::config("categorical probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "categorical probabilities sum to {total}, expected 1"
            )));
        }
        Ok(CategoricalDist { probs })
    }

    pub fn uniform(k: usize) -> Self {
        CategoricalDist {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn delta(k: usize, index: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        CategoricalDist { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats, with 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

/// KL(q || p) for categoricals with equal support, 0 ln 0 = 0.
///
/// Errors with [`Error::InfiniteDivergence`] when q has mass on a cell
/// where p is zero; callers are expected to smooth p first.
pub fn kl_categorical(q: &CategoricalDist, p: &CategoricalDist) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::config("categorical KL requires equal support sizes"));
    }
    let mut total = 0.0;
    for (qi, pi) in q.probs.iter().zip(&p.probs) {
        if *qi == 0.0 {
            continue;
        }
        if *pi == 0.0 {
            return Err(Error::InfiniteDivergence);
        }
        total += qi * (qi / pi).ln();
    }
    Ok(total.max(0.0))
}

/// Bernoulli belief over a two-sided position, parameterized by the
/// probability of "left".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliDist {
    pub p_left: f64,
}

impl BernoulliDist {
    pub fn new(p_left: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_left) {
            return Err(Error::config(format!("Bernoulli p {p_left} outside [0, 1]")));
        }
        Ok(BernoulliDist { p_left })
    }

    pub fn as_categorical(&self) -> CategoricalDist {
        CategoricalDist {
            probs: vec![self.p_left, 1.0 - self.p_left],
        }
    }
}

/// Graph-building counterparts used inside differentiable losses.
///
/// These compose graph primitives, so the finite-difference oracle that
/// covers the graph covers them too.
pub mod graph {
    use crate::numerics::graph::{Graph, NodeId};

    use super::{LN_2PI, LOG_VAR_MAX, LOG_VAR_MIN};

    /// A (mean, log_var) node pair; log_var is already clamped to the
    /// legal variance range.
    #[derive(Debug, Clone, Copy)]
    pub struct GaussianNode {
        pub mean: NodeId,
        pub log_var: NodeId,
        pub dim: usize,
    }

    /// Split a 2d-dim head output into mean and clamped log-variance.
    pub fn gaussian_from_head(g: &mut Graph, head: NodeId, dim: usize) -> GaussianNode {
        debug_assert_eq!(g.len(head), 2 * dim);
        let mean = g.slice(head, 0, dim);
        let raw = g.slice(head, dim, dim);
        let log_var = g.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
        GaussianNode { mean, log_var, dim }
    }

    /// Standard normal as constant nodes.
    pub fn standard_gaussian(g: &mut Graph, dim: usize) -> GaussianNode {
        let mean = g.input_owned(vec![0.0; dim]);
        let log_var = g.input_owned(vec![0.0; dim]);
        GaussianNode { mean, log_var, dim }
    }

    /// Reparameterized sample with fixed noise: mean + exp(log_var/2) * eps.
    pub fn rsample(g: &mut Graph, d: GaussianNode, noise: &[f64]) -> NodeId {
        debug_assert_eq!(noise.len(), d.dim);
        let half = g.scale(d.log_var, 0.5);
        let std = g.exp(half);
        let eps = g.input(noise);
        let scaled = g.mul(std, eps);
        g.add(d.mean, scaled)
    }

    /// Gaussian log-density of a constant observation under `d`.
    pub fn log_prob(g: &mut Graph, d: GaussianNode, x: &[f64]) -> NodeId {
        debug_assert_eq!(x.len(), d.dim);
        let xn = g.input(x);
        log_prob_node(g, d, xn)
    }

    /// Gaussian log-density of a node-valued observation under `d`.
    pub fn log_prob_node(g: &mut Graph, d: GaussianNode, x: NodeId) -> NodeId {
        debug_assert_eq!(g.len(x), d.dim);
        let diff = g.sub(x, d.mean);
        let sq = g.mul(diff, diff);
        let neg_lv = g.scale(d.log_var, -1.0);
        let inv_var = g.exp(neg_lv);
        let quad = g.mul(sq, inv_var);
        let quad_lv = g.add(quad, d.log_var);
        let shifted = g.add_const(quad_lv, LN_2PI);
        let summed = g.sum(shifted);
        g.scale(summed, -0.5)
    }

    /// Closed-form KL(q || p) between two Gaussian node pairs.
    pub fn kl(g: &mut Graph, q: GaussianNode, p: GaussianNode) -> NodeId {
        debug_assert_eq!(q.dim, p.dim);
        // 0.5 * sum(lp - lq + (exp(lq) + (mq - mp)^2) * exp(-lp) - 1)
        let lv_diff = g.sub(p.log_var, q.log_var);
        let var_q = g.exp(q.log_var);
        let mean_diff = g.sub(q.mean, p.mean);
        let mean_sq = g.mul(mean_diff, mean_diff);
        let num = g.add(var_q, mean_sq);
        let neg_lp = g.scale(p.log_var, -1.0);
        let inv_var_p = g.exp(neg_lp);
        let ratio = g.mul(num, inv_var_p);
        let inner = g.add(lv_diff, ratio);
        let inner = g.add_const(inner, -1.0);
        let summed = g.sum(inner);
        g.scale(summed, 0.5)
    }
}
