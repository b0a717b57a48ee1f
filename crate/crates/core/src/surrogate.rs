//! Gaussian-process surrogate with expected-improvement acquisition.
//!
//! The kernel is Matérn-5/2 with one length-scale per encoded dimension. The
//! hyperparameters maximise the log marginal likelihood using random restarts
//! followed by coordinate-wise golden-section search in log space.

use rand::Rng;
use thiserror::Error;

use crate::linalg::{cholesky_in_place, solve_lower, solve_upper_transposed};
use crate::space::{Configuration, SearchSpace, SpaceError};

pub const LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-6, 1e3);
pub const NOISE_VARIANCE_BOUNDS: (f64, f64) = (1e-8, 1.0);
pub const DEFAULT_CANDIDATES: usize = 512;

const RESTARTS: usize = 8;
const MAX_SWEEPS: usize = 6;
const SWEEP_TOL: f64 = 1e-7;
const GOLDEN_TOL: f64 = 1e-4;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-2;

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("need at least 2 training points, got {0}")]
    InsufficientData(usize),
    #[error("kernel matrix is not positive definite even with jitter {JITTER_MAX}")]
    NumericalFailure,
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error("query has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Encoded configurations and their efficient-point losses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, SurrogateError> {
        if inputs.len() != targets.len() {
            return Err(SurrogateError::InvalidTrainingSet(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(SurrogateError::InvalidTrainingSet("inputs differ in dimension".into()));
            }
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(SurrogateError::InvalidTrainingSet("non-finite target".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn best_target(&self) -> f64 {
        self.targets.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// Matérn-5/2 correlation as a function of the scaled squared distance.
fn matern52(r2: f64) -> f64 {
    let r = (r2.max(0.0)).sqrt();
    (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

pub fn kernel(params: &KernelParams, x: &[f64], y: &[f64]) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(y)
        .zip(&params.length_scales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    params.signal_variance * matern52(r2)
}

/// Factorisation of `K + (noise + jitter) I` for given scaled pair distances.
struct Factor {
    chol: Vec<f64>,
    jitter: f64,
}

fn factorize(pair_r2: &[f64], n: usize, signal: f64, noise: f64) -> Option<Factor> {
    let mut base = vec![0.0; n * n];
    let mut p = 0;
    for i in 0..n {
        base[i * n + i] = signal + noise;
        for j in i + 1..n {
            let k = signal * matern52(pair_r2[p]);
            base[i * n + j] = k;
            base[j * n + i] = k;
            p += 1;
        }
    }
    let mut jitter = JITTER_START;
    let mut chol = vec![0.0; n * n];
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        chol.copy_from_slice(&base);
        for i in 0..n {
            chol[i * n + i] += jitter;
        }
        if cholesky_in_place(&mut chol, n) {
            return Some(Factor { chol, jitter });
        }
        jitter *= 10.0;
    }
    None
}

/// Log marginal likelihood and `alpha = K^-1 (y - m)` for a factorisation.
fn lml_and_alpha(factor: &Factor, centered: &[f64]) -> (f64, Vec<f64>) {
    let n = centered.len();
    let mut alpha = centered.to_vec();
    solve_lower(&factor.chol, n, &mut alpha);
    let quad: f64 = alpha.iter().map(|v| v * v).sum();
    solve_upper_transposed(&factor.chol, n, &mut alpha);
    let log_det: f64 = (0..n).map(|i| factor.chol[i * n + i].ln()).sum();
    (-0.5 * quad - log_det - 0.5 * n as f64 * LN_2PI, alpha)
}

/// Fitted GP posterior.
#[derive(Debug, Clone)]
pub struct Surrogate {
    params: KernelParams,
    mean: f64,
    jitter: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    training: TrainingSet,
    log_marginal_likelihood: f64,
}

impl Surrogate {
    /// Fits kernel hyperparameters by maximum marginal likelihood.
    pub fn fit<R: Rng + ?Sized>(data: TrainingSet, rng: &mut R) -> Result<Self, SurrogateError> {
        if data.len() < 2 {
            return Err(SurrogateError::InsufficientData(data.len()));
        }
        let params = optimize_hyperparameters(&data, rng);
        Self::with_params(data, params)
    }

    /// Conditions the GP on `data` with fixed hyperparameters.
    pub fn with_params(data: TrainingSet, params: KernelParams) -> Result<Self, SurrogateError> {
        if data.len() < 2 {
            return Err(SurrogateError::InsufficientData(data.len()));
        }
        if params.length_scales.len() != data.dim() {
            return Err(SurrogateError::DimensionMismatch {
                got: params.length_scales.len(),
                expected: data.dim(),
            });
        }
        let n = data.len();
        let mean = data.targets.iter().sum::<f64>() / n as f64;
        let pair_r2 = scaled_pair_distances(&data.inputs, &params.length_scales);
        let factor = factorize(&pair_r2, n, params.signal_variance, params.noise_variance)
            .ok_or(SurrogateError::NumericalFailure)?;
        let centered: Vec<f64> = data.targets.iter().map(|t| t - mean).collect();
        let (lml, alpha) = lml_and_alpha(&factor, &centered);
        Ok(Self {
            params,
            mean,
            jitter: factor.jitter,
            chol: factor.chol,
            alpha,
            training: data,
            log_marginal_likelihood: lml,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn mean_constant(&self) -> f64 {
        self.mean
    }

    /// Diagonal term actually added to the kernel matrix (noise plus jitter).
    pub fn effective_noise(&self) -> f64 {
        self.params.noise_variance + self.jitter
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.training
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Posterior mean and (non-negative) variance of the latent function at `x`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64), SurrogateError> {
        if x.len() != self.training.dim() {
            return Err(SurrogateError::DimensionMismatch {
                got: x.len(),
                expected: self.training.dim(),
            });
        }
        let n = self.training.len();
        let mut k: Vec<f64> = self.training.inputs.iter().map(|xi| kernel(&self.params, xi, x)).collect();
        let mean = self.mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        solve_lower(&self.chol, n, &mut k);
        let explained: f64 = k.iter().map(|v| v * v).sum();
        Ok((mean, (self.params.signal_variance - explained).max(0.0)))
    }

    /// Picks the best of `n_candidates` uniform samples by expected improvement
    /// over the best training target. Ties keep the earliest candidate.
    pub fn suggest<R: Rng + ?Sized>(
        &self,
        space: &SearchSpace,
        rng: &mut R,
        n_candidates: usize,
    ) -> Result<Configuration, SurrogateError> {
        let best = self.training.best_target();
        let mut chosen: Option<(f64, Configuration)> = None;
        for _ in 0..n_candidates.max(1) {
            let candidate = space.sample(rng);
            let (mu, var) = self.posterior(&space.encode(&candidate)?)?;
            let ei = expected_improvement(mu, var, best);
            if chosen.as_ref().is_none_or(|(top, _)| ei > *top) {
                chosen = Some((ei, candidate));
            }
        }
        Ok(chosen.expect("at least one candidate").1)
    }
}

fn scaled_pair_distances(inputs: &[Vec<f64>], length_scales: &[f64]) -> Vec<f64> {
    let n = inputs.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(
                inputs[i]
                    .iter()
                    .zip(&inputs[j])
                    .zip(length_scales)
                    .map(|((a, b), l)| ((a - b) / l).powi(2))
                    .sum(),
            );
        }
    }
    out
}

/// Expected improvement below `best` for a Gaussian with the given moments.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gap = best - mean;
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (gap * cdf + sigma * pdf).max(0.0)
}

/// Log marginal likelihood of `data` under `params` (the constant mean is the
/// target average). `None` when the kernel matrix cannot be factorised.
pub fn log_marginal_likelihood(data: &TrainingSet, params: &KernelParams) -> Option<f64> {
    let n = data.len();
    let mean = data.targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = data.targets.iter().map(|t| t - mean).collect();
    let pair_r2 = scaled_pair_distances(&data.inputs, &params.length_scales);
    let factor = factorize(&pair_r2, n, params.signal_variance, params.noise_variance)?;
    Some(lml_and_alpha(&factor, &centered).0)
}

/// Hyperparameter search state in log space: `[ln l_1, ..., ln l_d, ln s2, ln n2]`.
struct Objective<'a> {
    n: usize,
    dim: usize,
    /// `pair_sq[d][p]`: squared difference along dimension `d` for pair `p`.
    pair_sq: Vec<Vec<f64>>,
    centered: &'a [f64],
}

impl Objective<'_> {
    fn value(&self, pair_r2: &[f64], log_signal: f64, log_noise: f64) -> f64 {
        match factorize(pair_r2, self.n, log_signal.exp(), log_noise.exp()) {
            Some(f) => {
                let v = lml_and_alpha(&f, self.centered).0;
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            None => f64::NEG_INFINITY,
        }
    }

    fn pair_r2(&self, theta: &[f64], skip: Option<usize>) -> Vec<f64> {
        let mut r2 = vec![0.0; self.pair_sq.first().map_or(0, Vec::len)];
        for d in 0..self.dim {
            if Some(d) == skip {
                continue;
            }
            let inv = (-2.0 * theta[d]).exp();
            for (acc, sq) in r2.iter_mut().zip(&self.pair_sq[d]) {
                *acc += sq * inv;
            }
        }
        r2
    }
}

/// Maximises `f` over `[lo, hi]` by golden-section search, returning the best
/// point seen (including `current`, which wins ties).
fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, current: (f64, f64)) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut best = current;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > GOLDEN_TOL {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

fn optimize_hyperparameters<R: Rng + ?Sized>(data: &TrainingSet, rng: &mut R) -> KernelParams {
    let n = data.len();
    let dim = data.dim();
    let mean = data.targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = data.targets.iter().map(|t| t - mean).collect();
    let target_var = (centered.iter().map(|v| v * v).sum::<f64>() / n as f64)
        .clamp(SIGNAL_VARIANCE_BOUNDS.0, SIGNAL_VARIANCE_BOUNDS.1);

    let mut pair_sq = vec![Vec::with_capacity(n * (n - 1) / 2); dim];
    for i in 0..n {
        for j in i + 1..n {
            for (d, sq) in pair_sq.iter_mut().enumerate() {
                sq.push((data.inputs[i][d] - data.inputs[j][d]).powi(2));
            }
        }
    }
    // dimensions with no spread do not affect the likelihood
    let active: Vec<usize> = (0..dim).filter(|&d| pair_sq[d].iter().any(|v| *v > 0.0)).collect();
    let objective = Objective {
        n,
        dim,
        pair_sq,
        centered: &centered,
    };

    let (ls_lo, ls_hi) = (LENGTH_SCALE_BOUNDS.0.ln(), LENGTH_SCALE_BOUNDS.1.ln());
    let (sv_lo, sv_hi) = (SIGNAL_VARIANCE_BOUNDS.0.ln(), SIGNAL_VARIANCE_BOUNDS.1.ln());
    let (nv_lo, nv_hi) = (NOISE_VARIANCE_BOUNDS.0.ln(), NOISE_VARIANCE_BOUNDS.1.ln());

    let mut best_theta: Vec<f64> = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    for restart in 0..RESTARTS {
        let mut theta = vec![0.0; dim + 2];
        if restart == 0 {
            theta[dim] = target_var.ln();
            theta[dim + 1] = (target_var * 1e-3).max(NOISE_VARIANCE_BOUNDS.0).ln();
        } else {
            for t in theta.iter_mut().take(dim) {
                *t = rng.random_range(0.05f64.ln()..5f64.ln());
            }
            theta[dim] = (target_var.ln() + rng.random_range(-2.0..2.0)).clamp(sv_lo, sv_hi);
            theta[dim + 1] = rng.random_range(nv_lo..(-2.0f64 * std::f64::consts::LN_10));
        }
        let mut value = objective.value(&objective.pair_r2(&theta, None), theta[dim], theta[dim + 1]);

        for _ in 0..MAX_SWEEPS {
            let start = value;
            for &d in &active {
                let base = objective.pair_r2(&theta, Some(d));
                let sq = &objective.pair_sq[d];
                let mut r2 = base.clone();
                let (x, v) = golden_max(
                    |log_l| {
                        let inv = (-2.0 * log_l).exp();
                        for ((acc, b), s) in r2.iter_mut().zip(&base).zip(sq) {
                            *acc = b + s * inv;
                        }
                        objective.value(&r2, theta[dim], theta[dim + 1])
                    },
                    ls_lo,
                    ls_hi,
                    (theta[d], value),
                );
                theta[d] = x;
                value = v;
            }
            let r2 = objective.pair_r2(&theta, None);
            let (x, v) = golden_max(
                |log_s| objective.value(&r2, log_s, theta[dim + 1]),
                sv_lo,
                sv_hi,
                (theta[dim], value),
            );
            theta[dim] = x;
            value = v;
            let (x, v) = golden_max(
                |log_n| objective.value(&r2, theta[dim], log_n),
                nv_lo,
                nv_hi,
                (theta[dim + 1], value),
            );
            theta[dim + 1] = x;
            value = v;
            if (value - start).abs() <= SWEEP_TOL * (1.0 + value.abs()) {
                break;
            }
        }
        if value > best_value || best_theta.is_empty() {
            best_value = value;
            best_theta = theta;
        }
    }

    KernelParams {
        length_scales: best_theta[..dim].iter().map(|t| t.exp()).collect(),
        signal_variance: best_theta[dim].exp(),
        noise_variance: best_theta[dim + 1].exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{HyperparameterDomain, Scale, Value};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_params(dim: usize, noise: f64) -> KernelParams {
        KernelParams {
            length_scales: vec![0.3; dim],
            signal_variance: 1.0,
            noise_variance: noise,
        }
    }

    #[test]
    fn mean_is_target_average() {
        let data = TrainingSet::new(vec![vec![0.1], vec![0.8]], vec![0.1, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = Surrogate::fit(data, &mut rng).unwrap();
        assert!((s.mean_constant() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_few_points() {
        let data = TrainingSet::new(vec![vec![0.1]], vec![0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            Surrogate::fit(data, &mut rng).unwrap_err(),
            SurrogateError::InsufficientData(1)
        );
    }

    #[test]
    fn duplicate_inputs_fit_without_error() {
        let data = TrainingSet::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.1, 0.9]],
            vec![0.2, 0.6, 0.4],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = Surrogate::fit(data, &mut rng).unwrap();
        assert!(s.params().noise_variance >= NOISE_VARIANCE_BOUNDS.0);
        assert!(s.log_marginal_likelihood().is_finite());
    }

    #[test]
    fn interpolates_training_points() {
        let data = TrainingSet::new(vec![vec![0.1], vec![0.5], vec![0.9]], vec![0.3, -0.2, 0.7]).unwrap();
        let s = Surrogate::with_params(data, unit_params(1, 1e-12)).unwrap();
        for (x, y) in [(0.1, 0.3), (0.5, -0.2), (0.9, 0.7)] {
            let (m, v) = s.posterior(&[x]).unwrap();
            assert!((m - y).abs() < 1e-6, "{m} vs {y}");
            assert!(v < 1e-6);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let data = TrainingSet::new(vec![vec![0.1], vec![0.5], vec![0.9]], vec![0.3, -0.2, 0.7]).unwrap();
        let s = Surrogate::with_params(data, unit_params(1, 1e-6)).unwrap();
        let (m, v) = s.posterior(&[1e3]).unwrap();
        assert!((m - s.mean_constant()).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn posterior_rejects_wrong_dimension() {
        let data = TrainingSet::new(vec![vec![0.1], vec![0.5]], vec![0.3, -0.2]).unwrap();
        let s = Surrogate::with_params(data, unit_params(1, 1e-6)).unwrap();
        assert!(matches!(
            s.posterior(&[0.1, 0.2]),
            Err(SurrogateError::DimensionMismatch { got: 2, expected: 1 })
        ));
    }

    #[test]
    fn ei_examples() {
        assert!((expected_improvement(0.3, 0.0, 0.5) - 0.2).abs() < 1e-15);
        assert_eq!(expected_improvement(0.7, 0.0, 0.5), 0.0);
        assert!((expected_improvement(0.5, 1.0, 0.5) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!(expected_improvement(10.5, 1.0, 0.5) < 1e-6);
    }

    #[test]
    fn ei_grows_with_sigma_below_best() {
        let mut prev = 0.0;
        for i in 1..50 {
            let sigma = i as f64 * 0.05;
            let ei = expected_improvement(0.2, sigma * sigma, 0.5);
            assert!(ei >= prev);
            prev = ei;
        }
    }

    #[test]
    fn single_candidate_is_returned() {
        let space =
            SearchSpace::new(vec![HyperparameterDomain::continuous("x", 0.0, 1.0, Scale::Linear).unwrap()]).unwrap();
        let data = TrainingSet::new(vec![vec![0.1], vec![0.9]], vec![0.3, 0.2]).unwrap();
        let s = Surrogate::with_params(data, unit_params(1, 1e-6)).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(s.suggest(&space, &mut a, 1).unwrap(), space.sample(&mut b));
    }

    #[test]
    fn identical_candidates_pick_first() {
        let space = SearchSpace::new(vec![HyperparameterDomain::categorical("op", ["only"]).unwrap()]).unwrap();
        let data = TrainingSet::new(vec![vec![1.0], vec![1.0]], vec![0.3, 0.2]).unwrap();
        let s = Surrogate::with_params(data, unit_params(1, 1e-3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = s.suggest(&space, &mut rng, 16).unwrap();
        assert_eq!(c.get("op"), Some(&Value::Label("only".into())));
    }
}
