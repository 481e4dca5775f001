//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Criteria can be selected by number:
//! `cargo test --test acceptance -- 5 8`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use pdhp::corpus::{generate, CorpusSpec};
use pdhp::eval::{nmi, spearman, sweep, CellAggregate, SweepGrid, SweepOptions};
use pdhp::point_process::{estimate_weights, intensity, self_excitation_log_likelihood, simulate_hawkes};
use pdhp::prior::{prior_over_clusters, DEFAULT_R_GRID};
use pdhp::rng::substream;
use pdhp::smc::{resample_check, Particle, SmcEngine};
use pdhp::{run_stream, ClusterTable, EventHistory, HawkesParams, KernelBank, PdhpConfig, SmcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_intensity, integrate, nmi_oracle};

/// Desk-scale horizon: about 1400 events per two-cluster corpus.
const DESK_HORIZON: f64 = 300.0;
const DESK_DATASETS: usize = 10;
const BASE_SEED: u64 = 2017;
/// "Low" temporal overlap for the high-vocabulary-overlap cell.
const LOW_TEMPORAL: f64 = 0.1;
/// Mid-overlap band, on the [0, 0.5] overlap scale.
const MID_BAND: [f64; 3] = [0.2, 0.25, 0.3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, name: "prior reductions", limit: secs(1), run: c1_reductions },
        Criterion { id: 2, name: "likelihood oracles", limit: secs(10), run: c2_likelihood_oracles },
        Criterion { id: 3, name: "simulator calibration", limit: secs(120), run: c3_simulator },
        Criterion { id: 4, name: "weight recovery", limit: secs(120), run: c4_weight_recovery },
        Criterion { id: 5, name: "well-separated sanity", limit: secs(300), run: c5_well_separated },
        Criterion { id: 6, name: "high vocab / low temporal overlap", limit: secs(1800), run: c6_high_vocab },
        Criterion { id: 7, name: "mid overlaps", limit: secs(1800), run: c7_mid_overlaps },
        Criterion { id: 8, name: "decorrelation", limit: secs(1800), run: c8_decorrelation },
        Criterion { id: 9, name: "SMC contract", limit: secs(60), run: c9_smc_contract },
        Criterion { id: 10, name: "metric axioms", limit: secs(1), run: c10_metric_axioms },
        Criterion { id: 11, name: "throughput", limit: secs(120), run: c11_throughput },
    ];
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(&e))));
        let elapsed = started.elapsed();
        let in_time = elapsed <= c.limit;
        let pass = result.pass && in_time;
        println!(
            "criterion {:>2} {} {}: {} [{:.1}s, limit {}s{}]",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            result.detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown".into())
}

fn c1_reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let c = rng.gen_range(1..20);
        let lambdas: Vec<f64> = (0..c).map(|_| rng.gen_range(1e-6..50.0)).collect();
        let lambda0 = rng.gen_range(1e-3..5.0);
        let input: Vec<(usize, f64)> = lambdas.iter().copied().enumerate().collect();

        let dhp = prior_over_clusters(&input, &PdhpConfig::new(1.0, lambda0, 1e-10).unwrap()).unwrap();
        let z = lambda0 + lambdas.iter().sum::<f64>();
        let mut want: Vec<f64> = lambdas.iter().map(|l| l / z).collect();
        want.push(lambda0 / z);
        worst = want.iter().zip(&dhp.probs).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);

        let up = prior_over_clusters(&input, &PdhpConfig::new(0.0, lambda0, 1e-10).unwrap()).unwrap();
        let z = c as f64 + lambda0;
        let mut want = vec![1.0 / z; c];
        want.push(lambda0 / z);
        worst = want.iter().zip(&up.probs).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    outcome(worst <= 1e-15, format!("max deviation {worst:.1e} over 1000 vectors at r=1 and r=0 (≤ 1e-15)"))
}

fn c2_likelihood_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bank = KernelBank::default();
    let taus = bank.timescales().to_vec();
    let (mut worst_i, mut worst_ll): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let n = rng.gen_range(2..60);
        let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
        times.sort_by(f64::total_cmp);
        let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..0.4)).collect();
        let h = EventHistory::from_times(times.clone(), 1e6).unwrap();

        let t = times.last().unwrap() + rng.gen_range(0.0..5.0);
        let got = intensity(&h, &weights, &bank, t).unwrap();
        let want = brute_intensity(&times, &weights, &taus, t);
        worst_i = worst_i.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));

        let horizon = times.last().unwrap() + rng.gen_range(0.0..10.0);
        let got = self_excitation_log_likelihood(&h, &weights, &bank, horizon).unwrap();
        let lambda = |s: f64| brute_intensity(&times, &weights, &taus, s);
        let mut knots = times.clone();
        knots.push(horizon);
        let comp: f64 = knots.windows(2).map(|w| integrate(&lambda, w[0], w[1])).sum();
        let want = times[1..].iter().map(|&s| lambda(s).ln()).sum::<f64>() - comp;
        worst_ll = worst_ll.max((got - want).abs() / want.abs());
    }
    outcome(
        worst_i <= 1e-9 && worst_ll <= 1e-6,
        format!("intensity rel err {worst_i:.1e} (≤ 1e-9), log-likelihood rel err {worst_ll:.1e} (≤ 1e-6)"),
    )
}

fn c3_simulator() -> Outcome {
    let params = HawkesParams::even(1.2, 0.5, 3);
    let bank = KernelBank::default();
    let mean = (0..50).map(|s| simulate_hawkes(&params, &bank, 1500.0, s).unwrap().len() as f64).sum::<f64>() / 50.0;
    let rel = (mean - 3600.0).abs() / 3600.0;
    outcome(rel <= 0.10, format!("mean events {mean:.0} vs 3600, rel err {rel:.3} (≤ 0.10)"))
}

fn c4_weight_recovery() -> Outcome {
    let params = HawkesParams::even(1.2, 0.5, 3);
    let bank = KernelBank::default();
    let init = vec![0.5 / 3.0; 3];
    let mut errors: Vec<f64> = (0..20)
        .map(|s| {
            // 1.2 / (1 - 0.5) = 2.4 events per unit; the horizon targets 5000 events
            let full = simulate_hawkes(&params, &bank, 5000.0 / 2.4, 100 + s).unwrap();
            let fit = estimate_weights(&full, &bank, &init, 200).unwrap();
            (fit.weights.iter().sum::<f64>() - 0.5).abs() / 0.5
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = 0.5 * (errors[9] + errors[10]);
    outcome(median <= 0.25, format!("median relative error of Σα {median:.3} over 20 seeds (≤ 0.25)"))
}

fn desk_grid(r_values: Vec<f64>, v: &[f64], t: &[f64], f: &[f64]) -> SweepGrid {
    SweepGrid {
        r_values,
        vocab_overlaps: v.to_vec(),
        temporal_overlaps: t.to_vec(),
        decorrelate_fractions: f.to_vec(),
        n_datasets: DESK_DATASETS,
        base_seed: BASE_SEED,
        corpus: CorpusSpec { horizon: DESK_HORIZON, ..CorpusSpec::default() },
    }
}

fn run_grid(grid: &SweepGrid) -> Vec<CellAggregate> {
    let res = sweep(grid, &SmcConfig::default(), &SweepOptions { workers: None, record_runtime: false }).unwrap();
    let errors: Vec<_> = res.rows.iter().filter_map(|r| r.error.clone()).collect();
    assert!(errors.is_empty(), "failed runs: {errors:?}");
    res.aggregate()
}

fn mean_text(a: &CellAggregate) -> f64 {
    a.nmi_text.expect("scored").mean
}

/// `(best r, best mean, mean at r=0, mean at r=1)` for one cell.
fn cell_summary(cell: &[&CellAggregate]) -> (f64, f64, f64, f64) {
    let at = |r: f64| mean_text(cell.iter().find(|a| a.r == r).expect("r on grid"));
    let best = cell.iter().max_by(|a, b| mean_text(a).total_cmp(&mean_text(b))).expect("non-empty");
    (best.r, mean_text(best), at(0.0), at(1.0))
}

fn c5_well_separated() -> Outcome {
    let aggs = run_grid(&desk_grid(vec![1.0], &[0.0], &[0.0], &[0.0]));
    let m = mean_text(&aggs[0]);
    outcome(m >= 0.9, format!("mean nmi_text {m:.3} at r=1 over {DESK_DATASETS} datasets (≥ 0.9)"))
}

fn c6_high_vocab() -> Outcome {
    let aggs = run_grid(&desk_grid(DEFAULT_R_GRID.to_vec(), &[0.4], &[LOW_TEMPORAL], &[0.0]));
    let cell: Vec<&CellAggregate> = aggs.iter().collect();
    let (r_best, best, r0, r1) = cell_summary(&cell);
    let gain = best - r1;
    outcome(
        gain >= 0.05 && best >= r0 && best >= r1,
        format!("best r={r_best} {best:.3}, r=1 {r1:.3}, r=0 {r0:.3}, gain {gain:+.3} (≥ 0.05)"),
    )
}

fn c7_mid_overlaps() -> Outcome {
    let aggs = run_grid(&desk_grid(DEFAULT_R_GRID.to_vec(), &MID_BAND, &MID_BAND, &[0.0]));
    let mut cells = Vec::new();
    for &v in &MID_BAND {
        for &t in &MID_BAND {
            let cell: Vec<&CellAggregate> =
                aggs.iter().filter(|a| a.vocab_overlap == v && a.temporal_overlap == t).collect();
            let (r_best, best, r0, r1) = cell_summary(&cell);
            cells.push((v, t, r_best, best, best - r0.max(r1)));
        }
    }
    let center = cells.iter().find(|c| c.0 == 0.25 && c.1 == 0.25).expect("centre cell");
    let top = cells.iter().max_by(|a, b| a.4.total_cmp(&b.4)).expect("cells");
    let pass = center.4 >= 0.0 && top.4 >= 0.02;
    outcome(
        pass,
        format!(
            "0.25/0.25: best r={} {:.3}, margin {:+.3} over max(r=0, r=1); largest margin {:+.3} at {}/{} (r={}) (≥ 0.02)",
            center.2, center.3, center.4, top.4, top.0, top.1, top.2
        ),
    )
}

fn c8_decorrelation() -> Outcome {
    let aggs = run_grid(&desk_grid(DEFAULT_R_GRID.to_vec(), &[0.0], &[0.0], &[0.5]));
    let rs: Vec<f64> = aggs.iter().map(|a| a.r).collect();
    let deltas: Vec<f64> = aggs.iter().map(|a| a.delta_nmi.expect("scored").mean).collect();
    let rho = spearman(&rs, &deltas);
    let (low, high) = (deltas[0], deltas[deltas.len() - 1]);
    let listed: Vec<String> = rs.iter().zip(&deltas).map(|(r, d)| format!("{r}:{d:+.2}")).collect();
    outcome(
        rho <= -0.8 && low > 0.0 && high < 0.0,
        format!("Spearman {rho:.3} (≤ -0.8), ΔNMI by r [{}]", listed.join(" ")),
    )
}

fn particles_with(weights: &[f64]) -> Vec<Particle> {
    let table = ClusterTable::new(KernelBank::default(), 10, 3);
    weights.iter().map(|&w| Particle { table: table.clone(), assignments: vec![], log_weight: w.ln() }).collect()
}

fn c9_smc_contract() -> Outcome {
    let mut rng = substream(0, 0);
    let mut checks = Vec::new();

    let mut uniform = particles_with(&[0.125; 8]);
    let r = resample_check(&mut uniform, &mut rng);
    checks.push(("uniform weights kept", r.replaced.is_empty() && (r.threshold - 0.0625).abs() < 1e-15));

    let mut skewed = particles_with(&[0.2, 0.2, 0.2, 0.15, 0.1, 0.09, 0.05, 0.01]);
    let r = resample_check(&mut skewed, &mut rng);
    let slots: Vec<usize> = r.replaced.iter().map(|x| x.0).collect();
    let sources_ok = r.replaced.iter().all(|&(_, s)| s < 6);
    let reset = skewed.iter().all(|p| (p.weight() - 0.125).abs() < 1e-15);
    checks.push((
        "0.05 and 0.01 replaced",
        slots == [6, 7] && sources_ok && reset && (r.threshold - 0.0625).abs() < 1e-15,
    ));

    let mut single = particles_with(&[1.0]);
    checks.push(("single particle kept", resample_check(&mut single, &mut rng).replaced.is_empty()));

    let docs = generate(&CorpusSpec { horizon: 80.0, seed: 9, ..CorpusSpec::default() }).unwrap().documents;
    let cfg = SmcConfig { seed: 5, ..SmcConfig::default() };
    let mut engine = SmcEngine::new(cfg.clone(), 2000).unwrap();
    let mut simplex = true;
    let mut count = true;
    for d in &docs {
        let report = engine.step(d).unwrap();
        let ws: Vec<f64> = engine.particles().iter().map(|p| p.weight()).collect();
        simplex &= (ws.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        simplex &= !report.replacement.replaced.is_empty() || ws.iter().all(|&w| w >= report.replacement.threshold);
        count &= engine.particles().len() == 8;
    }
    checks.push(("weight simplex", simplex));
    checks.push(("particle count", count));
    let a = engine.finish();
    let b = run_stream(&docs, &cfg).unwrap();
    let c = run_stream(&docs, &SmcConfig { parallel: true, ..cfg }).unwrap();
    let bits = |x: &pdhp::StreamResult| (x.labels.clone(), x.log_evidence.to_bits(), x.replacements.clone());
    checks.push(("bitwise determinism", bits(&a) == bits(&b) && bits(&a) == bits(&c)));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() { format!("{} checks exact", checks.len()) } else { format!("failed: {failed:?}") },
    )
}

fn c10_metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let mut symmetric = true;
    let mut permutation = true;
    let mut oracle = true;
    for _ in 0..200 {
        let n = rng.gen_range(2..100);
        let a: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let ab: f64 = nmi(&a, &b).unwrap();
        let ba: f64 = nmi(&b, &a).unwrap();
        symmetric &= (ab - ba).abs() <= 1e-12;
        let relabeled: Vec<u32> = a.iter().map(|x| [7, 3, 9, 1][*x as usize]).collect();
        permutation &= (nmi::<f64, _>(&relabeled, &b).unwrap() - ab).abs() <= 1e-12;
        oracle &= (ab - nmi_oracle(&a, &b).clamp(0.0, 1.0)).abs() <= 1e-12;
    }
    checks.push(("symmetry", symmetric));
    checks.push(("permutation invariance", permutation));
    checks.push(("contingency oracle", oracle));
    let v = |a: &[u32], b: &[u32]| nmi::<f64, _>(a, b).unwrap();
    checks.push(("identical", (v(&[0, 0, 1, 1, 2], &[5, 5, 6, 6, 7]) - 1.0).abs() <= 1e-12));
    checks.push(("independent", v(&[0, 0, 1, 1], &[0, 1, 0, 1]).abs() <= 1e-12));
    checks.push(("both constant", v(&[0, 0, 0], &[1, 1, 1]) == 1.0));
    checks.push(("one constant", v(&[0, 0, 0], &[0, 1, 1]) == 0.0));
    checks.push(("length mismatch", nmi::<f64, u32>(&[0, 1], &[0]).is_err()));
    checks.push(("regression constant", (v(&[0, 0, 1, 1], &[0, 0, 0, 1]) - 0.3437110184854508).abs() <= 1e-12));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() { format!("{} checks within 1e-12", checks.len()) } else { format!("failed: {failed:?}") },
    )
}

fn c11_throughput() -> Outcome {
    let corpus = generate(&CorpusSpec::default()).unwrap();
    let docs = corpus.documents;
    let cfg = SmcConfig { parallel: true, vocab_size: Some(corpus.vocabularies.global_size), ..SmcConfig::default() };
    let started = Instant::now();
    let result = run_stream(&docs, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    // No cluster can retain more events than the corpus has inside any
    // window of length W.
    let w = cfg.bank.window();
    let mut densest = 0;
    let mut lo = 0;
    for hi in 0..docs.len() {
        while docs[hi].t - docs[lo].t >= w {
            lo += 1;
        }
        densest = densest.max(hi - lo + 1);
    }
    let peak = result.diagnostics.peak_history_len;
    outcome(
        secs < 120.0 && peak <= densest && peak < docs.len(),
        format!(
            "{} events, 8 particles, {secs:.1}s (< 120 s); peak retained history {peak} ≤ densest W-window {densest}",
            docs.len()
        ),
    )
}
