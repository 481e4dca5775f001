//! Collapsed Dirichlet-multinomial word model for one cluster.
//!
//! The cluster's word distribution is integrated out under a symmetric
//! Dirichlet(θ0) prior, so a document's predictive probability is the
//! sequential Pólya-urn product over its tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::scalar::Scalar;

pub type WordId = u32;

/// Default symmetric Dirichlet concentration per word. Small values make
/// young clusters lose to the empty-cluster predictive and fragment the
/// stream; large values leave text with little evidence against timing.
pub const DEFAULT_THETA0: f64 = 30.0;

/// Sufficient statistics of a cluster's text: per-word counts and total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterWordCounts {
    counts: HashMap<WordId, u32>,
    total: u64,
    vocab_size: u32,
}

impl ClusterWordCounts {
    pub fn new(vocab_size: u32) -> Self {
        assert!(vocab_size > 0, "vocabulary must be non-empty");
        Self { counts: HashMap::new(), total: 0, vocab_size }
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, w: WordId) -> u32 {
        self.counts.get(&w).copied().unwrap_or(0)
    }

    /// Number of distinct words with a positive count.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    fn check_tokens(&self, tokens: &[WordId]) -> Result<()> {
        match tokens.iter().find(|&&w| w >= self.vocab_size) {
            Some(w) => Err(PdhpError::Domain(format!("token {w} outside vocabulary of size {}", self.vocab_size))),
            None => Ok(()),
        }
    }

    pub fn update(&mut self, tokens: &[WordId]) -> Result<()> {
        self.check_tokens(tokens)?;
        for &w in tokens {
            *self.counts.entry(w).or_insert(0) += 1;
        }
        self.total += tokens.len() as u64;
        Ok(())
    }

    /// Removes a document's tokens. Fails without modifying anything if
    /// some word would go negative.
    pub fn downdate(&mut self, tokens: &[WordId]) -> Result<()> {
        self.check_tokens(tokens)?;
        for (w, m) in multiplicities(tokens) {
            let have = self.count(w);
            if have < m {
                return Err(PdhpError::Integrity(format!(
                    "cannot remove {m} occurrences of word {w}: cluster holds {have}"
                )));
            }
        }
        for &w in tokens {
            let c = self.counts.get_mut(&w).expect("checked above");
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&w);
            }
        }
        self.total -= tokens.len() as u64;
        Ok(())
    }

    /// Log predictive probability of `tokens` given this cluster:
    /// token `j` of word `w` contributes
    /// `log((n_w + m_w + θ0) / (N + j + V θ0))`, where `m_w` counts earlier
    /// occurrences of `w` in the same document.
    pub fn predictive_log_likelihood<T: Scalar>(&self, tokens: &[WordId], theta0: T) -> Result<T> {
        self.check_tokens(tokens)?;
        if !(theta0 > T::zero()) {
            return Err(PdhpError::Domain("theta0 must be positive".into()));
        }
        let base = T::of(self.total as f64) + T::of(self.vocab_size as f64) * theta0;
        let mut seen: Vec<(WordId, u32)> = Vec::with_capacity(tokens.len());
        let mut ll = T::zero();
        for (j, &w) in tokens.iter().enumerate() {
            let m = match seen.iter_mut().find(|(v, _)| *v == w) {
                Some((_, m)) => {
                    *m += 1;
                    *m - 1
                }
                None => {
                    seen.push((w, 1));
                    0
                }
            };
            let num = T::of((self.count(w) + m) as f64) + theta0;
            ll = ll + (num / (base + T::of_usize(j))).ln();
        }
        Ok(ll)
    }
}

fn multiplicities(tokens: &[WordId]) -> Vec<(WordId, u32)> {
    let mut out: Vec<(WordId, u32)> = Vec::new();
    for &w in tokens {
        match out.iter_mut().find(|(v, _)| *v == w) {
            Some((_, m)) => *m += 1,
            None => out.push((w, 1)),
        }
    }
    out
}
