//! Synthetic corpus laboratory.
//!
//! Each cluster owns a word distribution over a window of a global
//! vocabulary and an independent Hawkes process. Vocabulary windows are
//! offset to reach a target overlap, process realizations are shifted on
//! the time axis to reach a temporal overlap target, and every event gets
//! `words_per_doc` iid tokens from its cluster. Optionally a fraction of
//! documents has its text resampled from a random cluster, decoupling the
//! textual and temporal ground truths.
//!
//! The overlap of two distributions is `∫min(A, B) / ∫(A + B)`, in
//! `[0, 0.5]`.

use std::io::{BufWriter, Write};
use std::path::Path;

use num_rational::Ratio;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::point_process::{simulate_hawkes, HawkesParams, KernelBank};
use crate::rng::{derive_seed, substream};
use crate::scalar::Field;
use crate::text_model::WordId;

/// Normalization slack accepted by [`overlap`] for floating inputs.
pub const NORMALIZATION_TOL: f64 = 1e-6;
pub const DEFAULT_GRID_STEP: f64 = 5.0;
/// Accepted distance between achieved and requested temporal overlap.
pub const TEMPORAL_TOL: f64 = 0.02;
pub const BISECTION_ITERS: usize = 60;

/// Generation parameters. Serialized next to a corpus as `spec.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_clusters: usize,
    pub vocab_per_cluster: u32,
    pub words_per_doc: usize,
    pub horizon: f64,
    pub hawkes: HawkesParams<f64>,
    pub timescales: Vec<f64>,
    pub vocab_overlap: f64,
    pub temporal_overlap: f64,
    pub decorrelate_fraction: f64,
    /// Zipf exponent for within-window word frequencies; uniform when absent.
    pub zipf_exponent: Option<f64>,
    pub grid_step: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            vocab_per_cluster: 1000,
            words_per_doc: 20,
            horizon: 1500.0,
            hawkes: HawkesParams::default(),
            timescales: crate::point_process::DEFAULT_TIMESCALES.to_vec(),
            vocab_overlap: 0.0,
            temporal_overlap: 0.0,
            decorrelate_fraction: 0.0,
            zipf_exponent: None,
            grid_step: DEFAULT_GRID_STEP,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PdhpError::Config(m.to_string()));
        if self.n_clusters == 0 {
            return bad("n_clusters must be positive");
        }
        if self.vocab_per_cluster == 0 || self.words_per_doc == 0 {
            return bad("vocabulary size and words per document must be positive");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(0.0..=0.5).contains(&self.vocab_overlap) || !(0.0..=0.5).contains(&self.temporal_overlap) {
            return bad("overlap targets must lie in [0, 0.5]");
        }
        if !(0.0..=1.0).contains(&self.decorrelate_fraction) {
            return bad("decorrelate_fraction must lie in [0, 1]");
        }
        if !(self.grid_step > 0.0) {
            return bad("grid_step must be positive");
        }
        if let Some(s) = self.zipf_exponent {
            if !(s >= 0.0) {
                return bad("zipf exponent must be non-negative");
            }
        }
        self.hawkes.validate(&self.bank()?)
    }

    pub fn bank(&self) -> Result<KernelBank<f64>> {
        KernelBank::new(self.timescales.clone())
    }

    /// Size of the global vocabulary all clusters draw from.
    pub fn global_vocab_size(&self) -> u32 {
        let k = shared_words(self.vocab_per_cluster, self.vocab_overlap);
        (self.n_clusters as u32 - 1) * (self.vocab_per_cluster - k) + self.vocab_per_cluster
    }
}

/// A timestamped bag of words with optional ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: u64,
    pub t: f64,
    pub tokens: Vec<WordId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_cluster: Option<usize>,
}

/// Sorts by timestamp, breaking ties by id.
pub fn sort_documents(docs: &mut [LabeledDocument]) {
    docs.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
}

/// `Σ min(p, q) / Σ (p + q)` for two normalized mass vectors on a shared
/// support. Generic so exact rationals can be used.
pub fn overlap<F: Field>(p: &[F], q: &[F]) -> Result<F> {
    if p.len() != q.len() {
        return Err(PdhpError::Domain("distributions must share a support".into()));
    }
    let tol = F::from_f64(NORMALIZATION_TOL).unwrap_or_else(F::zero);
    for (name, d) in [("first", p), ("second", q)] {
        if d.iter().any(|x| *x < F::zero()) {
            return Err(PdhpError::Domain(format!("{name} distribution has negative mass")));
        }
        let total = d.iter().cloned().fold(F::zero(), |a, b| a + b);
        let gap = if total > F::one() { total.clone() - F::one() } else { F::one() - total.clone() };
        if gap > tol {
            return Err(PdhpError::Domain(format!("{name} distribution is not normalized: total {total:?}")));
        }
    }
    let mut common = F::zero();
    let mut sum = F::zero();
    for (a, b) in p.iter().zip(q) {
        common = common + if a < b { a.clone() } else { b.clone() };
        sum = sum + a.clone() + b.clone();
    }
    Ok(common / sum)
}

/// Number of shared words `k = round(2V · target)` for two uniform windows.
pub fn shared_words(vocab_per_cluster: u32, target: f64) -> u32 {
    ((2.0 * vocab_per_cluster as f64 * target).round() as u32).min(vocab_per_cluster)
}

/// Word distribution of one cluster: a window into the global vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDistribution {
    pub start: WordId,
    pub len: u32,
    /// Cumulative weights over the window; `None` means uniform.
    cdf: Option<Vec<f64>>,
}

impl WordDistribution {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> WordId {
        match &self.cdf {
            None => self.start + rng.gen_range(0..self.len),
            Some(cdf) => {
                let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
                let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                self.start + i as u32
            }
        }
    }

    /// Probability mass over `[0, global)`.
    pub fn masses(&self, global: u32) -> Vec<f64> {
        let mut out = vec![0.0; global as usize];
        match &self.cdf {
            None => {
                for w in self.start..self.start + self.len {
                    out[w as usize] = 1.0 / self.len as f64;
                }
            }
            Some(cdf) => {
                let total = cdf[cdf.len() - 1];
                let mut prev = 0.0;
                for (i, &c) in cdf.iter().enumerate() {
                    out[self.start as usize + i] = (c - prev) / total;
                    prev = c;
                }
            }
        }
        out
    }

    pub fn contains(&self, w: WordId) -> bool {
        w >= self.start && w < self.start + self.len
    }
}

/// Per-cluster vocabularies laid out on a shared global vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabularies {
    pub clusters: Vec<WordDistribution>,
    pub global_size: u32,
    /// Words shared by consecutive clusters.
    pub shared: u32,
}

/// Uniform windows of `V` words, consecutive windows offset by `V - k`
/// with `k = round(2V · target)`. With a Zipf exponent the within-window
/// frequencies follow a seeded random rank order instead.
pub fn make_vocabularies(
    n_clusters: usize,
    vocab_per_cluster: u32,
    target_overlap: f64,
    zipf_exponent: Option<f64>,
    seed: u64,
) -> Result<Vocabularies> {
    if !(0.0..=0.5).contains(&target_overlap) {
        return Err(PdhpError::Domain(format!("overlap target {target_overlap} outside [0, 0.5]")));
    }
    let k = shared_words(vocab_per_cluster, target_overlap);
    let stride = vocab_per_cluster - k;
    let clusters = (0..n_clusters)
        .map(|c| {
            let cdf = zipf_exponent.map(|s| {
                let mut rng = substream(seed, c as u64);
                let ranks = sample_indices(&mut rng, vocab_per_cluster as usize, vocab_per_cluster as usize);
                let mut acc = 0.0;
                ranks
                    .iter()
                    .map(|r| {
                        acc += 1.0 / ((r + 1) as f64).powf(s);
                        acc
                    })
                    .collect()
            });
            WordDistribution { start: c as u32 * stride, len: vocab_per_cluster, cdf }
        })
        .collect();
    Ok(Vocabularies {
        clusters,
        global_size: (n_clusters as u32).saturating_sub(1) * stride + vocab_per_cluster,
        shared: k,
    })
}

/// Exact overlap of two uniform windows of `V` words sharing `k`.
pub fn window_overlap_exact(vocab_per_cluster: u32, shared: u32) -> Result<Ratio<i64>> {
    let v = vocab_per_cluster as i64;
    let k = shared as i64;
    let global = (2 * v - k) as usize;
    let unit = Ratio::new(1, v);
    let mut p = vec![Ratio::from_integer(0); global];
    let mut q = p.clone();
    for w in 0..v as usize {
        p[w] = unit;
        q[w + (v - k) as usize] = unit;
    }
    overlap(&p, &q)
}

/// Normalized, smoothed empirical rates of two event sets on a shared
/// grid: counts per `grid_step` bin, then a centred 3-bin moving average.
pub fn binned_rates(a: &[f64], b: &[f64], grid_step: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = (((hi - lo) / grid_step).floor() as usize) + 1;
    let bin = |events: &[f64]| {
        let mut counts = vec![0.0; n_bins];
        for &t in events {
            let i = (((t - lo) / grid_step).floor() as usize).min(n_bins - 1);
            counts[i] += 1.0;
        }
        let smoothed: Vec<f64> = (0..n_bins)
            .map(|i| {
                let from = i.saturating_sub(1);
                let to = (i + 1).min(n_bins - 1);
                counts[from..=to].iter().sum::<f64>() / 3.0
            })
            .collect();
        let total: f64 = smoothed.iter().sum();
        smoothed.into_iter().map(|x| x / total).collect::<Vec<_>>()
    };
    (bin(a), bin(b))
}

/// Overlap of the binned empirical rates of two non-empty event sets.
pub fn temporal_overlap(a: &[f64], b: &[f64], grid_step: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PdhpError::Domain("temporal overlap needs two non-empty histories".into()));
    }
    let (p, q) = binned_rates(a, b, grid_step);
    overlap(&p, &q)
}

/// Outcome of [`shift_for_temporal_overlap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftResult {
    /// Offset to add to every event of the second history.
    pub delta: f64,
    pub achieved: f64,
    /// False when no offset came within [`TEMPORAL_TOL`] of the target.
    pub converged: bool,
}

/// Finds `δ` such that `b + δ` overlaps `a` at `target`, bisecting on
/// `δ ∈ [a_0 - b_0, a_0 - b_0 + span_a + span_b]` (aligned starts to
/// disjoint supports). Overlap decreases in `δ` only approximately, so
/// the best probe seen is returned.
pub fn shift_for_temporal_overlap(a: &[f64], b: &[f64], target: f64, grid_step: f64) -> Result<ShiftResult> {
    if !(target > 0.0 && target <= 0.5) {
        return Err(PdhpError::Domain(format!("temporal overlap target {target} outside (0, 0.5]")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(PdhpError::Domain("temporal overlap needs two non-empty histories".into()));
    }
    let span = |x: &[f64]| x[x.len() - 1] - x[0];
    let base = a[0] - b[0];
    let measure = |delta: f64| -> Result<f64> {
        let shifted: Vec<f64> = b.iter().map(|&t| t + delta).collect();
        temporal_overlap(a, &shifted, grid_step)
    };
    let mut best = ShiftResult { delta: base, achieved: measure(base)?, converged: false };
    let mut lo = base;
    let mut hi = base + span(a) + span(b) + grid_step;
    if best.achieved > target {
        for _ in 0..BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            let v = measure(mid)?;
            if (v - target).abs() < (best.achieved - target).abs() {
                best = ShiftResult { delta: mid, achieved: v, converged: false };
            }
            if v > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    best.converged = (best.achieved - target).abs() <= TEMPORAL_TOL;
    Ok(best)
}

/// Offset placing `b` strictly after `a`, with a margin wide enough that
/// smoothed rates do not touch.
pub fn disjoint_shift(a: &[f64], b: &[f64], grid_step: f64) -> f64 {
    a[a.len() - 1] - b[0] + 3.0 * grid_step
}

/// A generated corpus together with generation diagnostics.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub spec: CorpusSpec,
    pub documents: Vec<LabeledDocument>,
    pub vocabularies: Vocabularies,
    /// One entry per cluster after the first.
    pub shifts: Vec<ShiftResult>,
}

/// Streams used by [`generate`] under the corpus seed.
const SIM_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const TOKEN_STREAM: u64 = 2;
const DECORRELATE_STREAM: u64 = 3;

pub fn generate(spec: &CorpusSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let bank = spec.bank()?;
    let vocab = make_vocabularies(
        spec.n_clusters,
        spec.vocab_per_cluster,
        spec.vocab_overlap,
        spec.zipf_exponent,
        derive_seed(spec.seed, &[SHUFFLE_STREAM]),
    )?;

    let mut realizations: Vec<Vec<f64>> = Vec::with_capacity(spec.n_clusters);
    for c in 0..spec.n_clusters {
        let seed = derive_seed(spec.seed, &[SIM_STREAM, c as u64]);
        realizations.push(simulate_hawkes(&spec.hawkes, &bank, spec.horizon, seed)?.times().to_vec());
    }

    let mut shifts = Vec::new();
    for c in 1..spec.n_clusters {
        let (prev, cur) = (&realizations[c - 1], &realizations[c]);
        if prev.is_empty() || cur.is_empty() {
            shifts.push(ShiftResult { delta: 0.0, achieved: 0.0, converged: false });
            continue;
        }
        let shift = if spec.temporal_overlap == 0.0 {
            let delta = disjoint_shift(prev, cur, spec.grid_step);
            let shifted: Vec<f64> = cur.iter().map(|t| t + delta).collect();
            let achieved = temporal_overlap(prev, &shifted, spec.grid_step)?;
            ShiftResult { delta, achieved, converged: achieved <= TEMPORAL_TOL }
        } else {
            shift_for_temporal_overlap(prev, cur, spec.temporal_overlap, spec.grid_step)?
        };
        for t in realizations[c].iter_mut() {
            *t += shift.delta;
        }
        shifts.push(shift);
    }

    let mut events: Vec<(f64, usize)> =
        realizations.iter().enumerate().flat_map(|(c, ts)| ts.iter().map(move |&t| (t, c))).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut rng = substream(spec.seed, TOKEN_STREAM);
    let documents = events
        .into_iter()
        .enumerate()
        .map(|(i, (t, c))| LabeledDocument {
            id: i as u64,
            t,
            tokens: (0..spec.words_per_doc).map(|_| vocab.clusters[c].sample(&mut rng)).collect(),
            text_cluster: Some(c),
            time_cluster: Some(c),
        })
        .collect();

    let mut corpus = GeneratedCorpus { spec: spec.clone(), documents, vocabularies: vocab, shifts };
    if spec.decorrelate_fraction > 0.0 {
        let seed = derive_seed(spec.seed, &[DECORRELATE_STREAM]);
        decorrelate(&mut corpus, spec.decorrelate_fraction, seed)?;
    }
    Ok(corpus)
}

/// Resamples the text of `⌊f·n⌋` documents, chosen uniformly without
/// replacement, from a uniformly chosen cluster's vocabulary. Only valid
/// on corpora generated with zero textual and temporal overlap. Returns
/// the indices of resampled documents.
pub fn decorrelate(corpus: &mut GeneratedCorpus, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(PdhpError::Domain(format!("fraction {fraction} outside [0, 1]")));
    }
    if corpus.spec.vocab_overlap != 0.0 || corpus.spec.temporal_overlap != 0.0 || corpus.vocabularies.shared != 0 {
        return Err(PdhpError::Precondition(
            "decorrelation requires a corpus generated with zero vocabulary and temporal overlap".into(),
        ));
    }
    let n = corpus.documents.len();
    let k = (fraction * n as f64).floor() as usize;
    let n_clusters = corpus.vocabularies.clusters.len();
    let mut rng = substream(seed, 0);
    let mut chosen = sample_indices(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    for &i in &chosen {
        let c = rng.gen_range(0..n_clusters);
        let dist = &corpus.vocabularies.clusters[c];
        let doc = &mut corpus.documents[i];
        doc.tokens = (0..doc.tokens.len()).map(|_| dist.sample(&mut rng)).collect();
        doc.text_cluster = Some(c);
    }
    Ok(chosen)
}

pub fn write_jsonl(path: &Path, docs: &[LabeledDocument]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_spec(path: &Path, spec: &CorpusSpec) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(spec)?)?;
    Ok(())
}

pub fn read_spec(path: &Path) -> Result<CorpusSpec> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
