//! Parametric learning-curve models and fidelity-point extraction.
//!
//! Curves are oriented as losses (lower is better) and every family is
//! monotone non-increasing in the resource level:
//!
//! * `pow3`: `c + a * r^(-b)`
//! * `log2`: `max(c - a * ln(r + 1), 0)`
//! * `exp3`: `c + a * exp(-b * r)`
//!
//! with `a >= 0` and `b > 0`. The efficient point is the smallest resource at
//! which doubling the budget improves the fitted curve by less than `delta1`;
//! the saturation point is the smallest resource beyond which the fitted curve
//! never moves by `delta2` or more.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound applied to the `log2` family.
pub const LOG2_FLOOR: f64 = 0.0;

const B_GRID_LEN: usize = 32;
const B_MIN: f64 = 0.01;
const B_MAX: f64 = 10.0;
const REFINE_MAX_ITERS: usize = 200;
const REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("need at least 4 observations at 3 distinct resources, got {observations} at {distinct}")]
    InsufficientData { observations: usize, distinct: usize },
    #[error("invalid observation at resource {resource}: value {value}")]
    InvalidObservation { resource: u32, value: f64 },
    #[error("invalid {family} parameters (a={a}, b={b}, c={c})")]
    InvalidParams { family: CurveFamily, a: f64, b: f64, c: f64 },
}

/// A single performance measurement at an integer resource level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub resource: u32,
    pub value: f64,
}

impl Observation {
    pub fn new(resource: u32, value: f64) -> Self {
        Self { resource, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFamily {
    Pow3,
    Log2,
    Exp3,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 3] = [CurveFamily::Pow3, CurveFamily::Log2, CurveFamily::Exp3];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveFamily::Pow3 => "pow3",
            CurveFamily::Log2 => "log2",
            CurveFamily::Exp3 => "exp3",
        }
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CurveFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pow3" => Ok(CurveFamily::Pow3),
            "log2" => Ok(CurveFamily::Log2),
            "exp3" => Ok(CurveFamily::Exp3),
            other => Err(format!("unknown curve family `{other}`")),
        }
    }
}

/// A fitted (or hand-specified) learning curve.
///
/// `b` is ignored by the two-parameter `log2` family and kept at `1.0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveModel {
    family: CurveFamily,
    a: f64,
    b: f64,
    c: f64,
    residual: f64,
    r_fit_max: u32,
}

impl CurveModel {
    pub fn new(family: CurveFamily, a: f64, b: f64, c: f64) -> Result<Self, CurveError> {
        let b = if family == CurveFamily::Log2 { 1.0 } else { b };
        let valid = a.is_finite() && b.is_finite() && c.is_finite() && a >= 0.0 && b > 0.0;
        if !valid {
            return Err(CurveError::InvalidParams { family, a, b, c });
        }
        Ok(Self {
            family,
            a,
            b,
            c,
            residual: 0.0,
            r_fit_max: 0,
        })
    }

    pub fn pow3(a: f64, b: f64, c: f64) -> Result<Self, CurveError> {
        Self::new(CurveFamily::Pow3, a, b, c)
    }

    pub fn exp3(a: f64, b: f64, c: f64) -> Result<Self, CurveError> {
        Self::new(CurveFamily::Exp3, a, b, c)
    }

    pub fn log2(a: f64, c: f64) -> Result<Self, CurveError> {
        Self::new(CurveFamily::Log2, a, 1.0, c)
    }

    /// Flat curve at `value`.
    pub fn constant(value: f64) -> Self {
        Self {
            family: CurveFamily::Pow3,
            a: 0.0,
            b: 1.0,
            c: value,
            residual: 0.0,
            r_fit_max: 0,
        }
    }

    pub fn family(&self) -> CurveFamily {
        self.family
    }

    /// `(a, b, c)`.
    pub fn params(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    /// Root-mean-square error on the fitting data (0 for hand-built models).
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn r_fit_max(&self) -> u32 {
        self.r_fit_max
    }

    pub fn predict(&self, r: f64) -> f64 {
        match self.family {
            CurveFamily::Pow3 => self.c + self.a * r.powf(-self.b),
            CurveFamily::Exp3 => self.c + self.a * (-self.b * r).exp(),
            CurveFamily::Log2 => (self.c - self.a * (r + 1.0).ln()).max(LOG2_FLOOR),
        }
    }

    /// Limit of [`predict`](Self::predict) as `r -> inf`.
    pub fn asymptote(&self) -> f64 {
        match self.family {
            CurveFamily::Pow3 | CurveFamily::Exp3 => self.c,
            CurveFamily::Log2 if self.a > 0.0 => LOG2_FLOOR,
            CurveFamily::Log2 => self.c.max(LOG2_FLOOR),
        }
    }

    /// `C(r) - C(2r)`. The offset `c` cancels analytically for pow3/exp3, so
    /// those are evaluated without subtracting two nearly equal numbers.
    pub fn doubling_gain(&self, r: f64) -> f64 {
        match self.family {
            CurveFamily::Pow3 => self.a * r.powf(-self.b) * (1.0 - 2f64.powf(-self.b)),
            CurveFamily::Exp3 => {
                let decay = (-self.b * r).exp();
                self.a * decay * (1.0 - decay)
            }
            CurveFamily::Log2 => self.predict(r) - self.predict(2.0 * r),
        }
    }

    /// `sup_{r' > r} |C(r') - C(r)|`, which for a monotone curve is the
    /// remaining distance to the asymptote.
    pub fn remaining_change(&self, r: f64) -> f64 {
        match self.family {
            CurveFamily::Pow3 => self.a * r.powf(-self.b),
            CurveFamily::Exp3 => self.a * (-self.b * r).exp(),
            CurveFamily::Log2 => self.predict(r) - self.asymptote(),
        }
    }
}

/// Efficient and saturation points of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityPoints {
    pub efficient: u32,
    pub saturation: u32,
}

impl FidelityPoints {
    /// Computes both points, flooring the saturation point at the efficient point.
    pub fn from_model(model: &CurveModel, delta1: f64, delta2: f64, r_min: u32, r_max: u32) -> Self {
        let efficient = efficient_point(model, delta1, r_min, r_max);
        let saturation = saturation_point(model, delta2, efficient, r_max);
        Self { efficient, saturation }
    }
}

/// Smallest `r` in `[r_min, r_max]` with `C(r) - C(2r) < delta1`, or `r_max`
/// when no such `r` exists.
///
/// # Panics
///
/// If `r_min > r_max`, `r_min == 0`, or `delta1` is not positive.
pub fn efficient_point(model: &CurveModel, delta1: f64, r_min: u32, r_max: u32) -> u32 {
    assert!(r_min >= 1 && r_min <= r_max, "need 1 <= r_min <= r_max");
    assert!(delta1 > 0.0, "delta1 must be positive");
    (r_min..=r_max)
        .find(|&r| model.doubling_gain(f64::from(r)) < delta1)
        .unwrap_or(r_max)
}

/// Smallest `r` in `[floor, r_max]` whose remaining change to the asymptote is
/// below `delta2`, or `r_max` when no such `r` exists.
///
/// # Panics
///
/// If `floor > r_max`, `floor == 0`, or `delta2` is not positive.
pub fn saturation_point(model: &CurveModel, delta2: f64, floor: u32, r_max: u32) -> u32 {
    assert!(floor >= 1 && floor <= r_max, "need 1 <= floor <= r_max");
    assert!(delta2 > 0.0, "delta2 must be positive");
    (floor..=r_max)
        .find(|&r| model.remaining_change(f64::from(r)) < delta2)
        .unwrap_or(r_max)
}

/// Fits all curve families and returns the one with the smallest RMS residual
/// (ties resolved in the order pow3, log2, exp3).
pub fn fit_curve(observations: &[Observation]) -> Result<CurveModel, CurveError> {
    let distinct: BTreeSet<u32> = observations.iter().map(|o| o.resource).collect();
    if observations.len() < 4 || distinct.len() < 3 {
        return Err(CurveError::InsufficientData {
            observations: observations.len(),
            distinct: distinct.len(),
        });
    }
    if let Some(bad) = observations.iter().find(|o| o.resource == 0 || !o.value.is_finite()) {
        return Err(CurveError::InvalidObservation {
            resource: bad.resource,
            value: bad.value,
        });
    }
    let r_fit_max = *distinct.iter().next_back().unwrap_or(&1);

    let first = observations[0].value;
    if observations.iter().all(|o| o.value == first) {
        let mut model = CurveModel::constant(first);
        model.r_fit_max = r_fit_max;
        return Ok(model);
    }

    let rs: Vec<f64> = observations.iter().map(|o| f64::from(o.resource)).collect();
    let ys: Vec<f64> = observations.iter().map(|o| o.value).collect();

    let mut best: Option<CurveModel> = None;
    for family in CurveFamily::ALL {
        let (a, b, c) = match family {
            CurveFamily::Log2 => {
                let basis: Vec<f64> = rs.iter().map(|r| -(r + 1.0).ln()).collect();
                let (a, c, _) = linear_fit(&basis, &ys);
                (a, 1.0, c)
            }
            _ => fit_separable(family, &rs, &ys),
        };
        let mut model = CurveModel::new(family, a, b, c)?;
        model.r_fit_max = r_fit_max;
        model.residual = rms(&model, &rs, &ys);
        if best.is_none_or(|m| model.residual < m.residual) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one family is fitted"))
}

fn rms(model: &CurveModel, rs: &[f64], ys: &[f64]) -> f64 {
    let sse: f64 = rs.iter().zip(ys).map(|(r, y)| (model.predict(*r) - y).powi(2)).sum();
    (sse / rs.len() as f64).sqrt()
}

fn basis(family: CurveFamily, b: f64, r: f64) -> f64 {
    match family {
        CurveFamily::Pow3 => r.powf(-b),
        CurveFamily::Exp3 => (-b * r).exp(),
        CurveFamily::Log2 => unreachable!("log2 has no shape parameter"),
    }
}

/// Least squares for `y ~ c + a * x` with `a >= 0`. Returns `(a, c, sse)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    let (a, c) = if sxx > 0.0 && sxy > 0.0 {
        let a = sxy / sxx;
        (a, y_mean - a * x_mean)
    } else {
        (0.0, y_mean)
    };
    let sse = xs.iter().zip(ys).map(|(x, y)| (y - c - a * x).powi(2)).sum();
    (a, c, sse)
}

fn profile_sse(family: CurveFamily, b: f64, rs: &[f64], ys: &[f64], scratch: &mut Vec<f64>) -> (f64, f64, f64) {
    scratch.clear();
    scratch.extend(rs.iter().map(|r| basis(family, b, *r)));
    linear_fit(scratch, ys)
}

/// Variable projection: grid over the shape parameter `b`, closed-form `(a, c)`
/// for each `b`, then golden-section refinement of `b` inside the bracket
/// around the best grid point.
fn fit_separable(family: CurveFamily, rs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let mut scratch = Vec::with_capacity(rs.len());
    let log_lo = B_MIN.ln();
    let step = (B_MAX.ln() - log_lo) / (B_GRID_LEN - 1) as f64;
    let grid: Vec<f64> = (0..B_GRID_LEN).map(|i| (log_lo + step * i as f64).exp()).collect();

    let mut best_i = 0;
    let mut best_sse = f64::INFINITY;
    for (i, &b) in grid.iter().enumerate() {
        let (_, _, sse) = profile_sse(family, b, rs, ys, &mut scratch);
        if sse < best_sse {
            best_sse = sse;
            best_i = i;
        }
    }

    let mut lo = grid[best_i.saturating_sub(1)];
    let mut hi = grid[(best_i + 1).min(B_GRID_LEN - 1)];
    let mut best_b = grid[best_i];

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = profile_sse(family, x1, rs, ys, &mut scratch).2;
    let mut f2 = profile_sse(family, x2, rs, ys, &mut scratch).2;
    for _ in 0..REFINE_MAX_ITERS {
        if (hi - lo) <= REFINE_TOL * best_b.max(B_MIN) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = profile_sse(family, x1, rs, ys, &mut scratch).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = profile_sse(family, x2, rs, ys, &mut scratch).2;
        }
        let (b, f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if f < best_sse {
            best_sse = f;
            best_b = b;
        }
    }

    let (a, c, _) = profile_sse(family, best_b, rs, ys, &mut scratch);
    (a, best_b, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn observe(model: &CurveModel, resources: impl IntoIterator<Item = u32>) -> Vec<Observation> {
        resources
            .into_iter()
            .map(|r| Observation::new(r, model.predict(f64::from(r))))
            .collect()
    }

    fn rel(x: f64, truth: f64) -> f64 {
        (x - truth).abs() / truth.abs()
    }

    #[test]
    fn recovers_pow3_parameters() {
        let truth = CurveModel::pow3(0.8, 0.5, 0.2).unwrap();
        let fitted = fit_curve(&observe(&truth, 1..=10)).unwrap();
        assert_eq!(fitted.family(), CurveFamily::Pow3);
        let (a, b, c) = fitted.params();
        assert!(rel(a, 0.8) < 1e-3 && rel(b, 0.5) < 1e-3 && rel(c, 0.2) < 1e-3, "{a} {b} {c}");
        assert!(fitted.residual() < 1e-6);
        assert_eq!(fitted.r_fit_max(), 10);
        assert!((fitted.predict(25.0) - 0.36).abs() < 1e-3);
    }

    #[test]
    fn insufficient_data() {
        let obs = [Observation::new(1, 0.5), Observation::new(1, 0.4), Observation::new(2, 0.3)];
        assert!(matches!(fit_curve(&obs), Err(CurveError::InsufficientData { .. })));
        // four points but only two distinct resources
        let obs = [
            Observation::new(1, 0.5),
            Observation::new(1, 0.4),
            Observation::new(2, 0.3),
            Observation::new(2, 0.3),
        ];
        assert!(matches!(fit_curve(&obs), Err(CurveError::InsufficientData { .. })));
    }

    #[test]
    fn constant_observations_give_constant_model() {
        let obs: Vec<_> = (1..=6).map(|r| Observation::new(r, 0.3)).collect();
        let m = fit_curve(&obs).unwrap();
        assert_eq!(m.family(), CurveFamily::Pow3);
        assert_eq!(m.params().0, 0.0);
        assert_eq!(m.residual(), 0.0);
        for r in [1.0, 7.5, 1e6] {
            assert_eq!(m.predict(r), 0.3);
        }
    }

    #[test]
    fn predict_pow3() {
        let m = CurveModel::pow3(1.0, 1.0, 0.1).unwrap();
        assert!((m.predict(10.0) - 0.2).abs() < 1e-15);
        assert!((m.predict(1e9) - 0.1).abs() < 1e-8);
    }

    #[test]
    fn efficient_point_examples() {
        let m = CurveModel::pow3(1.0, 1.0, 0.1).unwrap();
        assert_eq!(efficient_point(&m, 0.05, 1, 200), 11);
        assert_eq!(efficient_point(&m, 1e-9, 1, 200), 200);
        assert_eq!(efficient_point(&CurveModel::constant(0.4), 0.01, 3, 50), 3);
    }

    #[test]
    fn saturation_point_examples() {
        let m = CurveModel::pow3(1.0, 1.0, 0.1).unwrap();
        assert_eq!(saturation_point(&m, 0.01, 1, 10_000), 101);
        let m = CurveModel::pow3(1.0, 2.0, 0.1).unwrap();
        assert_eq!(saturation_point(&m, 0.04, 1, 10_000), 6);
        assert_eq!(saturation_point(&CurveModel::constant(0.4), 0.01, 7, 50), 7);
    }

    #[test]
    fn saturation_never_precedes_efficient() {
        let m = CurveModel::pow3(1.0, 1.0, 0.1).unwrap();
        // delta2 loose enough that saturation alone would come first
        let p = FidelityPoints::from_model(&m, 0.001, 0.5, 1, 1000);
        assert_eq!(p.saturation, p.efficient);
    }

    #[test]
    fn log2_is_floored() {
        let m = CurveModel::log2(0.5, 1.0).unwrap();
        assert_eq!(m.predict(1e6), 0.0);
        assert_eq!(m.asymptote(), 0.0);
        // c - a ln(r+1) < 0 once r + 1 > e^2
        assert_eq!(saturation_point(&m, 1e-9, 1, 100), 7);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(CurveModel::pow3(-0.1, 1.0, 0.0).is_err());
        assert!(CurveModel::exp3(0.1, 0.0, 0.0).is_err());
        assert!(CurveModel::pow3(0.1, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn fit_prefers_generating_family() {
        let exp = CurveModel::exp3(0.6, 0.3, 0.15).unwrap();
        assert_eq!(fit_curve(&observe(&exp, 1..=10)).unwrap().family(), CurveFamily::Exp3);
        let log = CurveModel::log2(0.05, 0.8).unwrap();
        assert_eq!(fit_curve(&observe(&log, 1..=10)).unwrap().family(), CurveFamily::Log2);
    }
}
