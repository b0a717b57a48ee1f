//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use fastbo::curve::{CurveFamily, CurveModel};
use rand::Rng;

/// Direct evaluation of a curve family, written without the library's model.
pub fn curve_value(family: CurveFamily, a: f64, b: f64, c: f64, r: f64) -> f64 {
    match family {
        CurveFamily::Pow3 => c + a / r.powf(b),
        CurveFamily::Exp3 => c + a / (b * r).exp(),
        CurveFamily::Log2 => f64::max(c - a * (1.0 + r).ln(), 0.0),
    }
}

/// Random model whose tail beyond 1e6 is negligible, so that a supremum taken
/// over `r' <= 1e6` agrees with the limit.
pub fn random_monotone_model<R: Rng>(rng: &mut R) -> CurveModel {
    let a = rng.random_range(0.05..1.0);
    let c = rng.random_range(0.0..0.5);
    match rng.random_range(0..3) {
        0 => CurveModel::pow3(a, rng.random_range(1.5..3.0), c).unwrap(),
        1 => CurveModel::exp3(a, rng.random_range(0.01..2.0), c).unwrap(),
        _ => CurveModel::log2(a, rng.random_range(0.05..5.0) * a).unwrap(),
    }
}

/// Integer scan of `C(r) - C(2r) < delta1`.
pub fn scan_efficient(m: &CurveModel, delta1: f64, r_min: u32, r_max: u32) -> u32 {
    let (a, b, c) = m.params();
    let f = |r: f64| curve_value(m.family(), a, b, c, r);
    for r in r_min..=r_max {
        let r = f64::from(r);
        if f(r) - f(2.0 * r) < delta1 {
            return r as u32;
        }
    }
    r_max
}

/// Integer scan of `sup_{r < r' <= 1e6} |C(r') - C(r)| < delta2`, the
/// supremum taken over every integer up to `r + 256` and a geometric grid
/// beyond, ending at exactly 1e6.
pub fn scan_saturation(m: &CurveModel, delta2: f64, floor: u32, r_max: u32) -> u32 {
    let (a, b, c) = m.params();
    let f = |r: f64| curve_value(m.family(), a, b, c, r);
    for r in floor..=r_max {
        let rf = f64::from(r);
        let here = f(rf);
        let mut sup: f64 = 0.0;
        let mut rp = rf + 1.0;
        while rp < 1e6 {
            sup = sup.max((f(rp) - here).abs());
            rp = if rp < rf + 256.0 { rp + 1.0 } else { (rp * 1.02).ceil() };
        }
        sup = sup.max((f(1e6) - here).abs());
        if sup < delta2 {
            return r;
        }
    }
    r_max
}

/// Matérn-5/2 with ARD length scales, from the textbook formula.
pub fn matern52(x: &[f64], y: &[f64], ls: &[f64], sf2: f64) -> f64 {
    let d = x
        .iter()
        .zip(y)
        .zip(ls)
        .map(|((p, q), l)| ((p - q) / l) * ((p - q) / l))
        .sum::<f64>()
        .sqrt();
    let s5 = 5f64.sqrt();
    sf2 * (1.0 + s5 * d + 5.0 * d * d / 3.0) * (-s5 * d).exp()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// GP posterior `(mean, variance)` by direct dense solves.
pub fn dense_posterior(
    xs: &[Vec<f64>],
    ys: &[f64],
    ls: &[f64],
    sf2: f64,
    diag: f64,
    mean: f64,
    x: &[f64],
) -> (f64, f64) {
    let n = xs.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| matern52(&xs[i], &xs[j], ls, sf2) + if i == j { diag } else { 0.0 })
                .collect()
        })
        .collect();
    let ks: Vec<f64> = xs.iter().map(|xi| matern52(xi, x, ls, sf2)).collect();
    let alpha = lu_solve(k.clone(), ys.iter().map(|y| y - mean).collect());
    let v = lu_solve(k, ks.clone());
    let mu = mean + ks.iter().zip(&alpha).map(|(p, q)| p * q).sum::<f64>();
    let var = sf2 - ks.iter().zip(&v).map(|(p, q)| p * q).sum::<f64>();
    (mu, var)
}

/// Monte-Carlo estimate of `E[max(best - Y, 0)]`, `Y ~ N(mu, sigma^2)`, using
/// antithetic Box-Muller pairs.
pub fn mc_expected_improvement<R: Rng>(mu: f64, sigma: f64, best: f64, samples: usize, rng: &mut R) -> f64 {
    let mut total = 0.0;
    let mut drawn = 0;
    while drawn < samples {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let rad = (-2.0 * u1.ln()).sqrt();
        let (z1, z2) = (rad * (std::f64::consts::TAU * u2).cos(), rad * (std::f64::consts::TAU * u2).sin());
        for z in [z1, -z1, z2, -z2] {
            total += (best - (mu + sigma * z)).max(0.0);
        }
        drawn += 4;
    }
    total / drawn as f64
}

/// Hand simulation of one successive-halving bracket on a table of fixed
/// losses: returns `(resource, population, promoted)` per rung, with trial
/// indices in evaluation order.
pub fn simulate_sha(
    losses_at: impl Fn(usize, u32) -> f64,
    n: usize,
    eta: u32,
    r_min: u32,
    r_max: u32,
) -> Vec<(u32, Vec<usize>, Vec<usize>)> {
    let mut rungs = Vec::new();
    let mut pop: Vec<usize> = (0..n).collect();
    let mut level = 0u32;
    loop {
        let nominal = u64::from(r_min) * u64::from(eta).pow(level);
        let last = pop.len() <= 1 || nominal * u64::from(eta) > u64::from(r_max);
        let r = if last { r_max } else { nominal as u32 };
        if last {
            rungs.push((r, pop, Vec::new()));
            return rungs;
        }
        let mut order = pop.clone();
        order.sort_by(|&i, &j| losses_at(i, r).total_cmp(&losses_at(j, r)).then(i.cmp(&j)));
        let keep = (pop.len() / eta as usize).max(1);
        order.truncate(keep);
        rungs.push((r, pop, order.clone()));
        pop = order;
        level += 1;
    }
}
