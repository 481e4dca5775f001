//! Powered Dirichlet-Hawkes prior and the Bayes posterior over clusters.
//!
//! For a document arriving at `t` with live clusters `1..C`:
//!
//! ```text
//! P(c)     = λ_c(t)^r / (λ0 + Σ_c' λ_c'(t)^r)     existing cluster c
//! P(NEW)   = λ0       / (λ0 + Σ_c' λ_c'(t)^r)
//! ```
//!
//! `r = 1` is the Dirichlet-Hawkes prior and `r = 0` the Uniform process.
//! The posterior multiplies this prior with each candidate's textual
//! likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::scalar::{log_sum_exp, Scalar};

pub const DEFAULT_R: f64 = 1.0;
pub const DEFAULT_LAMBDA0: f64 = 0.01;
pub const DEFAULT_EPSILON_DEAD: f64 = 1e-10;

/// Exponents explored by default in sweeps.
pub const DEFAULT_R_GRID: [f64; 8] = [0.0, 0.3, 0.5, 0.7, 0.9, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdhpConfig<T> {
    /// Temporal-reliance exponent.
    pub r: T,
    /// New-cluster rate.
    pub lambda0: T,
    /// Clusters whose intensity falls below this floor leave the candidate set.
    pub epsilon_dead: T,
}

impl<T: Scalar> PdhpConfig<T> {
    pub fn new(r: T, lambda0: T, epsilon_dead: T) -> Result<Self> {
        let cfg = Self { r, lambda0, epsilon_dead };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_r(r: T) -> Self {
        Self { r, lambda0: T::of(DEFAULT_LAMBDA0), epsilon_dead: T::of(DEFAULT_EPSILON_DEAD) }
    }

    /// `ε_dead = 0` is accepted and disables pruning.
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= T::zero()) || !self.r.is_finite() {
            return Err(PdhpError::Config(format!("r must be finite and non-negative, got {}", self.r)));
        }
        if !(self.lambda0 > T::zero()) || !self.lambda0.is_finite() {
            return Err(PdhpError::Config(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if !(self.epsilon_dead >= T::zero()) || self.epsilon_dead >= self.lambda0 {
            return Err(PdhpError::Config(format!("epsilon_dead must lie in [0, lambda0), got {}", self.epsilon_dead)));
        }
        Ok(())
    }
}

impl Default for PdhpConfig<f64> {
    fn default() -> Self {
        Self::with_r(DEFAULT_R)
    }
}

/// A slot in the prior: an existing cluster or a fresh one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Candidate {
    Existing(usize),
    New,
}

/// Prior probabilities over live clusters followed by the NEW slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPrior<T> {
    pub candidates: Vec<Candidate>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ClusterPrior<T> {
    pub fn new_prob(&self) -> T {
        *self.probs.last().expect("NEW slot is always present")
    }
}

/// `λ^r` with `0^0 = 1`.
#[inline]
pub fn powered<T: Scalar>(lambda: T, r: T) -> T {
    if r == T::zero() {
        T::one()
    } else {
        lambda.powf(r)
    }
}

/// Prior over `(cluster id, intensity)` pairs plus NEW. Clusters below
/// `ε_dead` are dropped first. If every remaining power is zero (all
/// intensities zero with `r > 0`), NEW gets probability one.
pub fn prior_over_clusters<T: Scalar>(intensities: &[(usize, T)], config: &PdhpConfig<T>) -> Result<ClusterPrior<T>> {
    if let Some((id, l)) = intensities.iter().find(|(_, l)| !(*l >= T::zero()) || !l.is_finite()) {
        return Err(PdhpError::Domain(format!("cluster {id} has invalid intensity {l}")));
    }
    let live: Vec<(usize, T)> = intensities.iter().copied().filter(|&(_, l)| !(l < config.epsilon_dead)).collect();
    let powers: Vec<T> = live.iter().map(|&(_, l)| powered(l, config.r)).collect();
    let mass: T = powers.iter().copied().sum();
    let mut candidates: Vec<Candidate> = live.iter().map(|&(id, _)| Candidate::Existing(id)).collect();
    candidates.push(Candidate::New);
    let probs = if mass > T::zero() {
        let z = config.lambda0 + mass;
        let mut p: Vec<T> = powers.iter().map(|&w| w / z).collect();
        p.push(config.lambda0 / z);
        p
    } else {
        let mut p = vec![T::zero(); powers.len()];
        p.push(T::one());
        p
    };
    Ok(ClusterPrior { candidates, probs })
}

/// Normalized `prior · exp(loglik)`, computed in log space.
pub fn posterior_over_clusters<T: Scalar>(prior: &[T], textual_loglik: &[T]) -> Result<Vec<T>> {
    let joint = log_joint(prior, textual_loglik)?;
    let z = log_sum_exp(&joint);
    if !z.is_finite() {
        return Err(PdhpError::Domain("posterior has no finite mass".into()));
    }
    Ok(joint.iter().map(|&j| (j - z).exp()).collect())
}

/// `log Σ_c prior(c) · exp(loglik(c))`, the document's marginal likelihood.
pub fn log_marginal<T: Scalar>(prior: &[T], textual_loglik: &[T]) -> Result<T> {
    Ok(log_sum_exp(&log_joint(prior, textual_loglik)?))
}

fn log_joint<T: Scalar>(prior: &[T], textual_loglik: &[T]) -> Result<Vec<T>> {
    if prior.len() != textual_loglik.len() {
        return Err(PdhpError::Config(format!(
            "prior has {} entries but {} likelihoods were given",
            prior.len(),
            textual_loglik.len()
        )));
    }
    if prior.is_empty() {
        return Err(PdhpError::Config("no candidates".into()));
    }
    Ok(prior.iter().zip(textual_loglik).map(|(&p, &l)| p.ln() + l).collect())
}
