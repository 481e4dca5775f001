//! Univariate Hawkes processes over a bank of exponential decay kernels.
//!
//! A cluster's intensity is pure self-excitation,
//!
//! ```text
//! λ(t) = Σ_{t_i < t} Σ_l α_l κ_l(t - t_i),    κ_l(Δ) = exp(-Δ/τ_l) / τ_l
//! ```
//!
//! Every kernel integrates to one, so `Σ_l α_l` is the branching ratio.
//! Intensity queries only consult events inside a truncation window
//! `W = 10 · max τ_l`, which bounds per-event cost in long streams.
//! Likelihoods and the EM estimator use the untruncated kernels and the
//! closed-form compensator `∫_0^Δ κ_l = 1 - exp(-Δ/τ_l)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::scalar::Scalar;

/// Multiple of the longest timescale after which events stop contributing.
pub const WINDOW_FACTOR: f64 = 10.0;

/// Default kernel timescales, in time units.
pub const DEFAULT_TIMESCALES: [f64; 3] = [0.5, 2.0, 8.0];

/// A fixed, ordered set of normalized exponential kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct KernelBank<T> {
    timescales: Vec<T>,
}

impl<T: Scalar> KernelBank<T> {
    pub fn new(timescales: Vec<T>) -> Result<Self> {
        if timescales.is_empty() {
            return Err(PdhpError::Config("kernel bank needs at least one timescale".into()));
        }
        if timescales.iter().any(|&tau| !(tau > T::zero()) || !tau.is_finite()) {
            return Err(PdhpError::Config("kernel timescales must be positive and finite".into()));
        }
        if timescales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PdhpError::Config("kernel timescales must be strictly increasing".into()));
        }
        Ok(Self { timescales })
    }

    pub fn single(tau: T) -> Result<Self> {
        Self::new(vec![tau])
    }

    pub fn timescales(&self) -> &[T] {
        &self.timescales
    }

    pub fn len(&self) -> usize {
        self.timescales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timescales.is_empty()
    }

    /// Truncation window `W = 10 · max τ`.
    pub fn window(&self) -> T {
        T::of(WINDOW_FACTOR) * *self.timescales.last().expect("non-empty bank")
    }

    /// `(κ_1(Δ), …, κ_L(Δ))`.
    pub fn eval(&self, dt: T) -> Result<Vec<T>> {
        if !(dt >= T::zero()) {
            return Err(PdhpError::Domain(format!("kernel lag must be non-negative, got {dt}")));
        }
        Ok(self.timescales.iter().map(|&tau| (-dt / tau).exp() / tau).collect())
    }

    /// Mass of kernel `l` on `[0, dt]`.
    #[inline]
    pub fn integral(&self, l: usize, dt: T) -> T {
        let tau = self.timescales[l];
        T::one() - (-dt.max(T::zero()) / tau).exp()
    }

    pub fn check_weights(&self, weights: &[T]) -> Result<()> {
        if weights.len() != self.len() {
            return Err(PdhpError::Config(format!(
                "{} kernel weights supplied for a bank of {} kernels",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(PdhpError::Config("kernel weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

impl Default for KernelBank<f64> {
    fn default() -> Self {
        Self::new(DEFAULT_TIMESCALES.to_vec()).expect("default bank is valid")
    }
}

impl Default for KernelBank<f32> {
    fn default() -> Self {
        Self::new(DEFAULT_TIMESCALES.iter().map(|&x| x as f32).collect()).expect("default bank is valid")
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for KernelBank<T> {
    type Error = PdhpError;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<KernelBank<T>> for Vec<T> {
    fn from(bank: KernelBank<T>) -> Self {
        bank.timescales
    }
}

/// Sorted event times plus the truncation window used for intensity queries.
///
/// Serializes as a bare JSON array of timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory<T> {
    times: Vec<T>,
    window: T,
    /// Events dropped by [`EventHistory::evict_stale`].
    evicted: usize,
}

impl<T: Scalar> EventHistory<T> {
    pub fn new(window: T) -> Self {
        assert!(window > T::zero(), "truncation window must be positive");
        Self { times: Vec::new(), window, evicted: 0 }
    }

    /// Builds a history from possibly unsorted times; the sort is stable.
    pub fn from_times(mut times: Vec<T>, window: T) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(PdhpError::Domain("event times must be finite".into()));
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut h = Self::new(window);
        h.times = times;
        Ok(h)
    }

    pub fn push(&mut self, t: T) -> Result<()> {
        if !t.is_finite() {
            return Err(PdhpError::Domain("event time must be finite".into()));
        }
        if let Some(&last) = self.times.last() {
            if t < last {
                return Err(PdhpError::StreamOrder { t: t.to_f64_lossy(), last: last.to_f64_lossy() });
            }
        }
        self.times.push(t);
        Ok(())
    }

    /// Drops events that can no longer influence queries at times `≥ now`.
    pub fn evict_stale(&mut self, now: T) {
        let cut = self.times.partition_point(|&ti| now - ti >= self.window);
        if cut > 0 {
            self.times.drain(..cut);
            self.evicted += cut;
        }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn window(&self) -> T {
        self.window
    }

    /// Retained events.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Events ever pushed, including evicted ones.
    pub fn total_events(&self) -> usize {
        self.times.len() + self.evicted
    }

    pub fn last(&self) -> Option<T> {
        self.times.last().copied()
    }

    /// Shifts every event by `delta`.
    pub fn shifted(&self, delta: T) -> Self {
        Self { times: self.times.iter().map(|&t| t + delta).collect(), window: self.window, evicted: self.evicted }
    }
}

impl<T: Scalar + Serialize> Serialize for EventHistory<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.times.serialize(s)
    }
}

impl<T: Scalar> EventHistory<T> {
    /// Parses a JSON array of timestamps.
    pub fn from_json(json: &str, window: T) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let times: Vec<T> = serde_json::from_str(json)?;
        Self::from_times(times, window)
    }
}

/// Baseline rate and kernel weights of a simulated process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams<T> {
    pub baseline: T,
    pub weights: Vec<T>,
}

impl<T: Scalar> HawkesParams<T> {
    pub fn new(baseline: T, weights: Vec<T>) -> Self {
        Self { baseline, weights }
    }

    /// Spreads a total branching ratio evenly over `n_kernels` kernels.
    pub fn even(baseline: T, branching_ratio: T, n_kernels: usize) -> Self {
        let w = branching_ratio / T::of_usize(n_kernels);
        Self { baseline, weights: vec![w; n_kernels] }
    }

    pub fn branching_ratio(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Long-run event rate `μ / (1 - n)`.
    pub fn stationary_rate(&self) -> T {
        self.baseline / (T::one() - self.branching_ratio())
    }

    pub fn validate(&self, bank: &KernelBank<T>) -> Result<()> {
        bank.check_weights(&self.weights)?;
        if !(self.baseline >= T::zero()) || !self.baseline.is_finite() {
            return Err(PdhpError::Config("baseline must be finite and non-negative".into()));
        }
        if self.branching_ratio() >= T::one() {
            return Err(PdhpError::Config(format!(
                "branching ratio {} must be below 1 for a stationary process",
                self.branching_ratio()
            )));
        }
        Ok(())
    }
}

impl Default for HawkesParams<f64> {
    fn default() -> Self {
        Self::even(1.2, 0.5, DEFAULT_TIMESCALES.len())
    }
}

/// Self-excitation intensity at `t`, from events in `(t - W, t)`.
pub fn intensity<T: Scalar>(history: &EventHistory<T>, weights: &[T], bank: &KernelBank<T>, t: T) -> Result<T> {
    if weights.len() != bank.len() {
        return Err(PdhpError::Config(format!(
            "{} kernel weights supplied for a bank of {} kernels",
            weights.len(),
            bank.len()
        )));
    }
    Ok(intensity_unchecked(history.times(), history.window(), weights, bank, t))
}

pub(crate) fn intensity_unchecked<T: Scalar>(times: &[T], window: T, weights: &[T], bank: &KernelBank<T>, t: T) -> T {
    let end = times.partition_point(|&ti| ti < t);
    let mut total = T::zero();
    for &ti in times[..end].iter().rev() {
        let dt = t - ti;
        if dt >= window {
            break;
        }
        for (&a, &tau) in weights.iter().zip(bank.timescales()) {
            if a > T::zero() {
                total = total + a * (-dt / tau).exp() / tau;
            }
        }
    }
    total
}

/// Ogata thinning on `[0, horizon]`.
///
/// Between events an exponential-kernel intensity only decays, so the
/// intensity just after the latest event (or candidate) is an exact
/// upper bound until the next one.
pub fn simulate_hawkes<T: Scalar>(
    params: &HawkesParams<T>,
    bank: &KernelBank<T>,
    horizon: T,
    seed: u64,
) -> Result<EventHistory<T>> {
    params.validate(bank)?;
    let mut history = EventHistory::new(bank.window());
    if !(horizon > T::zero()) {
        return Ok(history);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taus = bank.timescales();
    let mut excitation = vec![T::zero(); bank.len()];
    let mut t = T::zero();
    loop {
        let bound = params.baseline + params.weights.iter().zip(&excitation).map(|(&a, &s)| a * s).sum::<T>();
        if !(bound > T::zero()) {
            break;
        }
        let u: f64 = rng.gen();
        let wait = -T::of(1.0 - u).ln() / bound;
        let next = t + wait;
        if next > horizon {
            break;
        }
        for (s, &tau) in excitation.iter_mut().zip(taus) {
            *s = *s * (-wait / tau).exp();
        }
        t = next;
        let lambda = params.baseline + params.weights.iter().zip(&excitation).map(|(&a, &s)| a * s).sum::<T>();
        let v: f64 = rng.gen();
        if T::of(v) * bound <= lambda {
            history.push(t)?;
            for (s, &tau) in excitation.iter_mut().zip(taus) {
                *s = *s + T::one() / tau;
            }
        }
    }
    Ok(history)
}

/// Walks sorted event times, yielding per-kernel excitation from strictly
/// earlier events at each event time. Simultaneous events do not excite
/// each other, matching [`intensity`].
fn for_each_excitation<T: Scalar>(times: &[T], bank: &KernelBank<T>, mut f: impl FnMut(usize, &[T])) {
    let taus = bank.timescales();
    let mut exc = vec![T::zero(); taus.len()];
    let mut pending = 0usize;
    let mut current = match times.first() {
        Some(&t) => t,
        None => return,
    };
    for (i, &ti) in times.iter().enumerate() {
        if ti > current {
            let dt = ti - current;
            let add = T::of_usize(pending);
            for (e, &tau) in exc.iter_mut().zip(taus) {
                *e = (*e + add / tau) * (-dt / tau).exp();
            }
            pending = 0;
            current = ti;
        }
        f(i, &exc);
        pending += 1;
    }
}

/// Point-process log-likelihood on `(t_1, horizon]` conditioned on the
/// first event, with an optional constant background rate.
///
/// Returns `-inf` when some event after the first has zero intensity.
pub fn log_likelihood<T: Scalar>(
    history: &EventHistory<T>,
    weights: &[T],
    baseline: T,
    bank: &KernelBank<T>,
    horizon: T,
) -> Result<T> {
    bank.check_weights(weights)?;
    let times = history.times();
    if times.len() < 2 {
        return Err(PdhpError::Domain("likelihood needs at least two events".into()));
    }
    let last = *times.last().expect("non-empty");
    if horizon < last {
        return Err(PdhpError::Domain("horizon precedes the last event".into()));
    }
    let mut sum_log = T::zero();
    let mut impossible = false;
    for_each_excitation(times, bank, |i, exc| {
        if i == 0 {
            return;
        }
        let lambda = baseline + weights.iter().zip(exc).map(|(&a, &e)| a * e).sum::<T>();
        if lambda > T::zero() {
            sum_log = sum_log + lambda.ln();
        } else {
            impossible = true;
        }
    });
    if impossible {
        return Ok(T::neg_infinity());
    }
    Ok(sum_log - compensator(times, weights, baseline, bank, horizon))
}

/// Pure self-excitation log-likelihood (no background rate).
pub fn self_excitation_log_likelihood<T: Scalar>(
    history: &EventHistory<T>,
    weights: &[T],
    bank: &KernelBank<T>,
    horizon: T,
) -> Result<T> {
    log_likelihood(history, weights, T::zero(), bank, horizon)
}

/// `∫_{t_1}^{horizon} λ(s) ds` in closed form.
fn compensator<T: Scalar>(times: &[T], weights: &[T], baseline: T, bank: &KernelBank<T>, horizon: T) -> T {
    let background = baseline * (horizon - times[0]);
    let excited: T = times
        .iter()
        .map(|&tj| weights.iter().enumerate().map(|(l, &a)| a * bank.integral(l, horizon - tj)).sum::<T>())
        .sum();
    background + excited
}

/// Compensator increments between consecutive events under known
/// parameters, including the background rate from time zero. For a
/// correctly specified model these are iid `Exp(1)`.
pub fn rescaled_interarrivals<T: Scalar>(
    history: &EventHistory<T>,
    params: &HawkesParams<T>,
    bank: &KernelBank<T>,
) -> Vec<T> {
    let times = history.times();
    let mut cumulative = Vec::with_capacity(times.len());
    // Λ(t_i) = μ t_i + Σ_{j<i} Σ_l α_l (1 - exp(-(t_i - t_j)/τ_l)); the
    // second term is tracked as count - Σ exp-decayed tails.
    let taus = bank.timescales();
    let mut tail = vec![T::zero(); taus.len()];
    let mut prev = T::zero();
    for (i, &ti) in times.iter().enumerate() {
        let dt = ti - prev;
        for (s, &tau) in tail.iter_mut().zip(taus) {
            *s = *s * (-dt / tau).exp();
        }
        let n = T::of_usize(i);
        let excited: T = params.weights.iter().zip(&tail).map(|(&a, &s)| a * (n - s)).sum();
        cumulative.push(params.baseline * ti + excited);
        for s in tail.iter_mut() {
            *s = *s + T::one();
        }
        prev = ti;
    }
    let mut out = Vec::with_capacity(cumulative.len());
    let mut last = T::zero();
    for c in cumulative {
        out.push(c - last);
        last = c;
    }
    out
}

/// Result of [`estimate_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit<T> {
    pub weights: Vec<T>,
    /// Fitted nuisance background rate; not part of the cluster intensity.
    pub baseline: T,
    /// False when the history was too short to update anything.
    pub informative: bool,
    /// Log-likelihood before the first sweep and after each sweep.
    pub trace: Vec<T>,
}

/// EM over latent parent attributions with closed-form M-steps.
///
/// Each event after the first is attributed either to a background rate
/// or to one kernel of one earlier event. The background absorbs
/// immigrant events so that the kernel weights measure excitation only;
/// it is returned separately. Starts from `init` (warm start) and runs
/// `n_sweeps` sweeps; the log-likelihood is non-decreasing.
pub fn estimate_weights<T: Scalar>(
    history: &EventHistory<T>,
    bank: &KernelBank<T>,
    init: &[T],
    n_sweeps: usize,
) -> Result<WeightFit<T>> {
    fit_weights(history, bank, init, n_sweeps, true)
}

/// [`estimate_weights`] without the likelihood trace, for the streaming
/// hot path.
pub(crate) fn fit_weights<T: Scalar>(
    history: &EventHistory<T>,
    bank: &KernelBank<T>,
    init: &[T],
    n_sweeps: usize,
    record_trace: bool,
) -> Result<WeightFit<T>> {
    bank.check_weights(init)?;
    let times = history.times();
    if times.len() < 2 {
        return Ok(WeightFit { weights: init.to_vec(), baseline: T::zero(), informative: false, trace: Vec::new() });
    }
    let first = times[0];
    let horizon = *times.last().expect("non-empty");
    let span = horizon - first;
    let n_after = T::of_usize(times.len() - 1);
    let mut weights = init.to_vec();
    let branching: T = weights.iter().copied().sum();
    let mut baseline =
        if span > T::zero() { n_after / span * (T::one() - branching.min(T::of(0.9))) } else { T::zero() };
    if n_sweeps == 0 {
        return Ok(WeightFit { weights, baseline, informative: true, trace: Vec::new() });
    }

    // Kernel compensator mass per kernel does not depend on the weights.
    let mass: Vec<T> = (0..bank.len()).map(|l| times.iter().map(|&tj| bank.integral(l, horizon - tj)).sum()).collect();

    let mut trace = Vec::with_capacity(n_sweeps + 1);
    if record_trace {
        trace.push(log_likelihood(history, &weights, baseline, bank, horizon)?);
    }
    let mut kernel_resp = vec![T::zero(); bank.len()];
    for _ in 0..n_sweeps {
        kernel_resp.iter_mut().for_each(|r| *r = T::zero());
        let mut background_resp = T::zero();
        for_each_excitation(times, bank, |i, exc| {
            if i == 0 {
                return;
            }
            let lambda = baseline + weights.iter().zip(exc).map(|(&a, &e)| a * e).sum::<T>();
            if lambda > T::zero() {
                background_resp = background_resp + baseline / lambda;
                for ((r, &a), &e) in kernel_resp.iter_mut().zip(&weights).zip(exc) {
                    *r = *r + a * e / lambda;
                }
            }
        });
        if span > T::zero() {
            baseline = background_resp / span;
        }
        for ((w, &r), &m) in weights.iter_mut().zip(&kernel_resp).zip(&mass) {
            if m > T::zero() {
                *w = r / m;
            }
        }
        if record_trace {
            trace.push(log_likelihood(history, &weights, baseline, bank, horizon)?);
        }
    }
    Ok(WeightFit { weights, baseline, informative: true, trace })
}
