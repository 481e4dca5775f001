//! Sequential Monte-Carlo over a document stream.
//!
//! Every particle carries one clustering hypothesis. For each incoming
//! document a particle samples an allocation from its posterior over
//! clusters, updates the chosen cluster (word counts, event history,
//! kernel weights) and multiplies its weight by the document's marginal
//! likelihood. After renormalization, any particle whose weight falls
//! below `ω = Σ_p L_p / (2 N)` is replaced by a copy of a survivor drawn
//! proportionally to weight, and weights are reset to uniform.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusters::{ClusterId, ClusterSummary, ClusterTable};
use crate::corpus::{sort_documents, LabeledDocument};
use crate::error::{PdhpError, Result};
use crate::point_process::{KernelBank, DEFAULT_TIMESCALES};
use crate::prior::{log_marginal, posterior_over_clusters, prior_over_clusters, Candidate, PdhpConfig};
use crate::rng::{derive_seed, substream};
use crate::scalar::log_sum_exp;
use crate::text_model::{ClusterWordCounts, DEFAULT_THETA0};

pub const DEFAULT_PARTICLES: usize = 8;
pub const DEFAULT_EM_SWEEPS: usize = 3;
/// Branching ratio spread over the kernels of a freshly opened cluster.
pub const DEFAULT_PRIOR_BRANCHING: f64 = 0.5;

const RESAMPLE_STREAM: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub pdhp: PdhpConfig<f64>,
    pub theta0: f64,
    pub bank: KernelBank<f64>,
    pub em_sweeps: usize,
    /// Kernel weights of a cluster before it has two events.
    pub default_weights: Vec<f64>,
    /// Closed vocabulary size; inferred from the corpus when absent.
    pub vocab_size: Option<u32>,
    /// Advance particles on the rayon pool. Results do not depend on it.
    pub parallel: bool,
    /// Emit a progress line every this many documents; 0 disables.
    pub progress_every: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        let l = DEFAULT_TIMESCALES.len();
        Self {
            n_particles: DEFAULT_PARTICLES,
            seed: 0,
            pdhp: PdhpConfig::default(),
            theta0: DEFAULT_THETA0,
            bank: KernelBank::default(),
            em_sweeps: DEFAULT_EM_SWEEPS,
            default_weights: vec![DEFAULT_PRIOR_BRANCHING / l as f64; l],
            vocab_size: None,
            parallel: false,
            progress_every: 0,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(PdhpError::Config("n_particles must be at least 1".into()));
        }
        if !(self.theta0 > 0.0) {
            return Err(PdhpError::Config("theta0 must be positive".into()));
        }
        self.pdhp.validate()?;
        self.bank.check_weights(&self.default_weights)
    }
}

/// One clustering hypothesis.
#[derive(Debug, Clone)]
pub struct Particle {
    pub table: ClusterTable<f64>,
    pub assignments: Vec<ClusterId>,
    /// Log of the normalized particle weight.
    pub log_weight: f64,
}

impl Particle {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Replacement pass outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplacementReport {
    pub threshold: f64,
    /// `(replaced slot, source slot)` pairs.
    pub replaced: Vec<(usize, usize)>,
}

/// One particle replacement, as reported in a [`StreamResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub step: usize,
    pub slot: usize,
    pub source: usize,
}

/// Replaces every particle whose normalized weight is below
/// `Σ_p w_p / (2N)` with a copy of a survivor drawn proportionally to
/// weight. If anything was replaced, all weights are reset to `1/N`.
pub fn resample_check<R: Rng>(particles: &mut [Particle], rng: &mut R) -> ReplacementReport {
    let n = particles.len();
    let weights: Vec<f64> = particles.iter().map(Particle::weight).collect();
    let threshold = weights.iter().sum::<f64>() / (2.0 * n as f64);
    let survivors: Vec<usize> = (0..n).filter(|&p| weights[p] >= threshold).collect();
    let survivor_mass: f64 = survivors.iter().map(|&p| weights[p]).sum();
    let mut replaced = Vec::new();
    for slot in 0..n {
        if weights[slot] >= threshold {
            continue;
        }
        let mut u = rng.gen::<f64>() * survivor_mass;
        let mut source = *survivors.last().expect("the heaviest particle always survives");
        for &s in &survivors {
            if u < weights[s] {
                source = s;
                break;
            }
            u -= weights[s];
        }
        replaced.push((slot, source));
    }
    if !replaced.is_empty() {
        let copies: Vec<Particle> = replaced.iter().map(|&(_, src)| particles[src].clone()).collect();
        for (&(slot, _), copy) in replaced.iter().zip(copies) {
            particles[slot] = copy;
        }
        let uniform = -(n as f64).ln();
        particles.iter_mut().for_each(|p| p.log_weight = uniform);
    }
    ReplacementReport { threshold, replaced }
}

/// Effective sample size `1 / Σ w²` of normalized weights.
pub fn effective_sample_size(particles: &[Particle]) -> f64 {
    1.0 / particles.iter().map(|p| p.weight().powi(2)).sum::<f64>()
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// ESS after reweighting, before replacement.
    pub ess: Vec<f64>,
    /// Clusters opened so far by the max-weight particle.
    pub clusters: Vec<usize>,
    /// Largest retained event history over all clusters of all particles.
    pub peak_history_len: usize,
}

/// Output of [`run_stream`]: the labeling of the max-weight particle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamResult {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub log_evidence: f64,
    pub replacements: Vec<Replacement>,
    #[serde(skip)]
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub clusters: Vec<ClusterSummary>,
}

/// Streaming particle filter state.
pub struct SmcEngine {
    config: SmcConfig,
    vocab_size: u32,
    particles: Vec<Particle>,
    rngs: Vec<ChaCha8Rng>,
    resample_rng: ChaCha8Rng,
    empty: ClusterWordCounts,
    last_t: Option<f64>,
    steps: usize,
    log_evidence: f64,
    replacements: Vec<Replacement>,
    diagnostics: Diagnostics,
}

/// What one step did.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub ess: f64,
    pub replacement: ReplacementReport,
}

impl SmcEngine {
    pub fn new(config: SmcConfig, vocab_size: u32) -> Result<Self> {
        let streams = (0..config.n_particles as u64).collect();
        Self::with_streams(config, vocab_size, streams)
    }

    /// Like [`SmcEngine::new`] with explicit RNG stream ids per particle slot.
    pub fn with_streams(config: SmcConfig, vocab_size: u32, streams: Vec<u64>) -> Result<Self> {
        config.validate()?;
        if streams.len() != config.n_particles {
            return Err(PdhpError::Config("one RNG stream per particle is required".into()));
        }
        if vocab_size == 0 {
            return Err(PdhpError::Config("vocabulary size must be positive".into()));
        }
        let n = config.n_particles;
        let table = ClusterTable::new(config.bank.clone(), vocab_size, config.em_sweeps);
        let particles = (0..n)
            .map(|_| Particle { table: table.clone(), assignments: Vec::new(), log_weight: -(n as f64).ln() })
            .collect();
        let rngs = streams.iter().map(|&s| substream(config.seed, s)).collect();
        let resample_rng = substream(derive_seed(config.seed, &[RESAMPLE_STREAM]), 0);
        Ok(Self {
            vocab_size,
            particles,
            rngs,
            resample_rng,
            empty: ClusterWordCounts::new(vocab_size),
            last_t: None,
            steps: 0,
            log_evidence: 0.0,
            replacements: Vec::new(),
            diagnostics: Diagnostics::default(),
            config,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn config(&self) -> &SmcConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Processes one document.
    pub fn step(&mut self, doc: &LabeledDocument) -> Result<StepReport> {
        if let Some(last) = self.last_t {
            if doc.t < last {
                return Err(PdhpError::StreamOrder { t: doc.t, last });
            }
        }
        if !doc.t.is_finite() {
            return Err(PdhpError::Domain("document timestamp must be finite".into()));
        }
        let new_loglik: f64 = self.empty.predictive_log_likelihood(&doc.tokens, self.config.theta0)?;
        let config = &self.config;
        let advance = |(p, rng): (&mut Particle, &mut ChaCha8Rng)| advance_particle(p, rng, doc, config, new_loglik);
        let margs: Vec<f64> = if config.parallel {
            self.particles.par_iter_mut().zip(self.rngs.par_iter_mut()).map(advance).collect::<Result<_>>()?
        } else {
            self.particles.iter_mut().zip(self.rngs.iter_mut()).map(advance).collect::<Result<_>>()?
        };

        let joint: Vec<f64> = self.particles.iter().zip(&margs).map(|(p, m)| p.log_weight + m).collect();
        let log_z = log_sum_exp(&joint);
        if !log_z.is_finite() {
            return Err(PdhpError::Domain(format!("document {} has zero likelihood under every particle", doc.id)));
        }
        for (p, j) in self.particles.iter_mut().zip(joint) {
            p.log_weight = j - log_z;
        }
        self.log_evidence += log_z;

        let ess = effective_sample_size(&self.particles);
        let replacement = resample_check(&mut self.particles, &mut self.resample_rng);
        self.replacements.extend(replacement.replaced.iter().map(|&(slot, source)| Replacement {
            step: self.steps,
            slot,
            source,
        }));

        let best = self.best_particle();
        self.diagnostics.ess.push(ess);
        self.diagnostics.clusters.push(self.particles[best].table.len());
        self.diagnostics.peak_history_len = self
            .particles
            .iter()
            .map(|p| p.table.peak_history_len())
            .fold(self.diagnostics.peak_history_len, usize::max);
        if self.config.progress_every > 0 && self.steps.is_multiple_of(self.config.progress_every) {
            eprintln!("step={} clusters={} ess={:.4}", self.steps, self.particles[best].table.len(), ess);
        }
        self.last_t = Some(doc.t);
        self.steps += 1;
        Ok(StepReport { ess, replacement })
    }

    /// Index of the max-weight particle; ties go to the lowest index.
    pub fn best_particle(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        best
    }

    pub fn finish(self) -> StreamResult {
        let best = self.best_particle();
        let particle = &self.particles[best];
        let labels = particle.assignments.clone();
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        StreamResult {
            n_clusters: distinct.len(),
            labels,
            log_evidence: self.log_evidence,
            replacements: self.replacements,
            clusters: particle.table.summaries(),
            diagnostics: self.diagnostics,
        }
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }
}

/// Samples an index from a probability vector with one uniform draw.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the last partial sum; take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

fn advance_particle(
    particle: &mut Particle,
    rng: &mut ChaCha8Rng,
    doc: &LabeledDocument,
    config: &SmcConfig,
    new_loglik: f64,
) -> Result<f64> {
    let table = &mut particle.table;
    table.prune_dead(doc.t, &config.pdhp);
    let prior = prior_over_clusters(&table.live_intensities(doc.t), &config.pdhp)?;
    let logliks = prior
        .candidates
        .iter()
        .map(|c| match c {
            Candidate::Existing(id) => {
                table.get(*id).expect("live cluster").words.predictive_log_likelihood(&doc.tokens, config.theta0)
            }
            Candidate::New => Ok(new_loglik),
        })
        .collect::<Result<Vec<f64>>>()?;
    let posterior = posterior_over_clusters(&prior.probs, &logliks)?;
    let marginal = log_marginal(&prior.probs, &logliks)?;
    let id = match prior.candidates[sample_index(&posterior, rng)] {
        Candidate::Existing(id) => {
            table.assign_to_cluster(id, doc.t, &doc.tokens)?;
            id
        }
        Candidate::New => table.open_cluster(doc.t, &doc.tokens, &config.default_weights)?,
    };
    particle.assignments.push(id);
    Ok(marginal)
}

/// Vocabulary size implied by the largest token id.
pub fn infer_vocab_size(docs: &[LabeledDocument]) -> u32 {
    docs.iter().flat_map(|d| d.tokens.iter()).copied().max().map_or(1, |m| m + 1)
}

/// Runs the filter over a corpus. Documents are sorted by timestamp first
/// (ties by id); labels follow that order.
pub fn run_stream(corpus: &[LabeledDocument], config: &SmcConfig) -> Result<StreamResult> {
    config.validate()?;
    if corpus.is_empty() {
        return Ok(StreamResult::default());
    }
    let mut docs = corpus.to_vec();
    sort_documents(&mut docs);
    let vocab_size = match config.vocab_size {
        Some(v) => v,
        None => infer_vocab_size(&docs),
    };
    let mut engine = SmcEngine::new(config.clone(), vocab_size)?;
    for doc in &docs {
        engine.step(doc)?;
    }
    Ok(engine.finish())
}
