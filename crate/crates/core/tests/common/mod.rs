//! Reference implementations shared by the oracle tests and the
//! acceptance suite. Written from the definitions, not from the library.

#![allow(dead_code)]

use std::collections::HashMap;

pub fn brute_intensity(times: &[f64], weights: &[f64], taus: &[f64], t: f64) -> f64 {
    let mut total = 0.0;
    for &ti in times.iter().filter(|&&ti| ti < t) {
        for (a, tau) in weights.iter().zip(taus) {
            total += a / tau * (-(t - ti) / tau).exp();
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * lm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * rm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, lm, fm, tol / 2.0, depth - 1) + simpson(f, m, b, fm, rm, fb, tol / 2.0, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    simpson(f, a, b, f(a), f(0.5 * (a + b)), f(b), 1e-12, 40)
}

/// NMI straight from the joint distribution of a contingency table.
pub fn nmi_oracle(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(u32, u32), f64> = HashMap::new();
    let mut pa: HashMap<u32, f64> = HashMap::new();
    let mut pb: HashMap<u32, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    let h = |m: &HashMap<u32, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    if pa.len() == 1 && pb.len() == 1 {
        return 1.0;
    }
    if pa.len() == 1 || pb.len() == 1 {
        return 0.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
    2.0 * mi / (ha + hb)
}
