//! Per-hypothesis cluster state and its lifecycle: open, assign, refit,
//! prune.

use serde::Serialize;

use crate::error::{PdhpError, Result};
use crate::point_process::{fit_weights, intensity_unchecked, EventHistory, KernelBank};
use crate::prior::PdhpConfig;
use crate::scalar::Scalar;
use crate::text_model::{ClusterWordCounts, WordId};

pub type ClusterId = usize;

/// Event history, kernel weights and word counts of one cluster.
#[derive(Debug, Clone)]
pub struct ClusterState<T> {
    pub id: ClusterId,
    pub history: EventHistory<T>,
    pub weights: Vec<T>,
    pub words: ClusterWordCounts,
    /// Cleared once the cluster is pruned; it is never reactivated.
    pub active: bool,
    pub created_at: T,
}

impl<T: Scalar> ClusterState<T> {
    pub fn n_docs(&self) -> usize {
        self.history.total_events()
    }
}

/// Summary row for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub id: ClusterId,
    pub n_docs: usize,
    pub n_tokens: u64,
    pub active: bool,
    pub created_at: f64,
    pub weights: Vec<f64>,
}

/// All clusters of one hypothesis. Ids are dense, assigned in creation
/// order and never reused.
#[derive(Debug, Clone)]
pub struct ClusterTable<T> {
    clusters: Vec<ClusterState<T>>,
    active: Vec<ClusterId>,
    bank: KernelBank<T>,
    vocab_size: u32,
    em_sweeps: usize,
    peak_history_len: usize,
}

impl<T: Scalar> ClusterTable<T> {
    pub fn new(bank: KernelBank<T>, vocab_size: u32, em_sweeps: usize) -> Self {
        Self { clusters: Vec::new(), active: Vec::new(), bank, vocab_size, em_sweeps, peak_history_len: 0 }
    }

    pub fn bank(&self) -> &KernelBank<T> {
        &self.bank
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    /// Clusters ever opened, including pruned ones.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn next_id(&self) -> ClusterId {
        self.clusters.len()
    }

    pub fn active_ids(&self) -> &[ClusterId] {
        &self.active
    }

    pub fn get(&self, id: ClusterId) -> Option<&ClusterState<T>> {
        self.clusters.get(id)
    }

    pub fn clusters(&self) -> &[ClusterState<T>] {
        &self.clusters
    }

    /// Largest number of events any cluster has retained at once.
    pub fn peak_history_len(&self) -> usize {
        self.peak_history_len
    }

    pub fn intensity(&self, id: ClusterId, t: T) -> T {
        let c = &self.clusters[id];
        intensity_unchecked(c.history.times(), c.history.window(), &c.weights, &self.bank, t)
    }

    /// `(id, λ_c(t))` for every live cluster.
    pub fn live_intensities(&self, t: T) -> Vec<(ClusterId, T)> {
        self.active.iter().map(|&id| (id, self.intensity(id, t))).collect()
    }

    pub fn open_cluster(&mut self, t: T, tokens: &[WordId], default_weights: &[T]) -> Result<ClusterId> {
        self.bank.check_weights(default_weights)?;
        let mut words = ClusterWordCounts::new(self.vocab_size);
        words.update(tokens)?;
        let mut history = EventHistory::new(self.bank.window());
        history.push(t)?;
        let id = self.clusters.len();
        self.clusters.push(ClusterState {
            id,
            history,
            weights: default_weights.to_vec(),
            words,
            active: true,
            created_at: t,
        });
        self.active.push(id);
        self.peak_history_len = self.peak_history_len.max(1);
        Ok(id)
    }

    /// Adds a document to a live cluster and refits its kernel weights on
    /// the events still inside the truncation window.
    pub fn assign_to_cluster(&mut self, id: ClusterId, t: T, tokens: &[WordId]) -> Result<()> {
        let em_sweeps = self.em_sweeps;
        let bank = &self.bank;
        let c = self.clusters.get_mut(id).ok_or_else(|| PdhpError::Config(format!("unknown cluster {id}")))?;
        if !c.active {
            return Err(PdhpError::Config(format!("cluster {id} was pruned")));
        }
        if let Some(last) = c.history.last() {
            if t < last {
                return Err(PdhpError::StreamOrder { t: t.to_f64_lossy(), last: last.to_f64_lossy() });
            }
        }
        c.words.update(tokens)?;
        c.history.push(t)?;
        c.history.evict_stale(t);
        if em_sweeps > 0 && c.history.len() >= 2 {
            let fit = fit_weights(&c.history, bank, &c.weights, em_sweeps, false)?;
            c.weights = fit.weights;
        }
        self.peak_history_len = self.peak_history_len.max(c.history.len());
        Ok(())
    }

    /// Removes clusters with `λ_c(t) < ε_dead` from the candidate set.
    pub fn prune_dead(&mut self, t: T, config: &PdhpConfig<T>) -> Vec<ClusterId> {
        let mut pruned = Vec::new();
        let mut keep = Vec::with_capacity(self.active.len());
        for &id in &self.active {
            if self.intensity(id, t) < config.epsilon_dead {
                pruned.push(id);
            } else {
                keep.push(id);
            }
        }
        for &id in &pruned {
            self.clusters[id].active = false;
        }
        self.active = keep;
        pruned
    }

    pub fn summaries(&self) -> Vec<ClusterSummary> {
        self.clusters
            .iter()
            .map(|c| ClusterSummary {
                id: c.id,
                n_docs: c.n_docs(),
                n_tokens: c.words.total(),
                active: c.active,
                created_at: c.created_at.to_f64_lossy(),
                weights: c.weights.iter().map(|w| w.to_f64_lossy()).collect(),
            })
            .collect()
    }
}
