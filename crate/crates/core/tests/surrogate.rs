mod common;

use common::{dense_posterior, matern52, mc_expected_improvement};
use fastbo::space::{HyperparameterDomain, Scale, SearchSpace, Value};
use fastbo::surrogate::{expected_improvement, log_marginal_likelihood, KernelParams, Surrogate, TrainingSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TrainingSet {
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
    let targets = inputs
        .iter()
        .map(|x| x.iter().map(|v| (v - 0.4) * (v - 0.4)).sum::<f64>() + 0.05 * rng.random::<f64>())
        .collect();
    TrainingSet::new(inputs, targets).unwrap()
}

#[test]
fn posterior_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let d = rng.random_range(1..4);
        let data = random_set(&mut rng, 5, d);
        let s = Surrogate::fit(data.clone(), &mut rng).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let p = s.params();
        let (mu, var) = s.posterior(&x).unwrap();
        let (mu_o, var_o) = dense_posterior(
            data.inputs(),
            data.targets(),
            &p.length_scales,
            p.signal_variance,
            s.effective_noise(),
            s.mean_constant(),
            &x,
        );
        assert!((mu - mu_o).abs() < 1e-8, "{mu} vs {mu_o}");
        assert!((var - var_o.max(0.0)).abs() < 1e-8, "{var} vs {var_o}");
    }
}

#[test]
fn ei_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (mu, sigma, best) in [(0.3, 0.2, 0.5), (0.5, 1.0, 0.5), (0.9, 0.3, 0.5), (0.0, 0.05, -0.02)] {
        let mc = mc_expected_improvement(mu, sigma, best, 2_000_000, &mut rng);
        let ei = expected_improvement(mu, sigma * sigma, best);
        assert!((ei - mc).abs() < 2e-3, "mu={mu} sigma={sigma}: {ei} vs {mc}");
    }
}

#[test]
fn ei_reference_values() {
    assert!((expected_improvement(0.3, 0.0, 0.5) - 0.2).abs() < 1e-15);
    assert!((expected_improvement(0.5, 1.0, 0.5) - 0.398_942_280_401_432_7).abs() < 1e-12);
    assert!(expected_improvement(10.5, 1.0, 0.5) < 1e-6);
}

/// Cholesky of a small dense matrix, for sampling from the prior.
fn chol(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

#[test]
fn fitted_likelihood_beats_generator() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let truth = KernelParams {
            length_scales: vec![0.3, 0.6],
            signal_variance: 0.5,
            noise_variance: 1e-3,
        };
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random(), rng.random()]).collect();
        let cov: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                (0..20)
                    .map(|j| {
                        matern52(&xs[i], &xs[j], &truth.length_scales, truth.signal_variance)
                            + if i == j { truth.noise_variance } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let l = chol(&cov);
        let z: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = (0..20).map(|i| 1.0 + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>()).collect();
        let data = TrainingSet::new(xs, ys).unwrap();
        let generator = log_marginal_likelihood(&data, &truth).unwrap();
        let fitted = Surrogate::fit(data, &mut rng).unwrap();
        assert!(
            fitted.log_marginal_likelihood() >= generator - 1e-6,
            "seed {seed}: {} < {generator}",
            fitted.log_marginal_likelihood()
        );
    }
}

fn unit_space() -> SearchSpace {
    SearchSpace::new(vec![HyperparameterDomain::continuous("x", 0.0, 1.0, Scale::Linear).unwrap()]).unwrap()
}

fn valley() -> TrainingSet {
    TrainingSet::new(vec![vec![0.1], vec![0.5], vec![0.9]], vec![0.8, 0.2, 0.7]).unwrap()
}

#[test]
fn suggestion_reaches_grid_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = Surrogate::fit(valley(), &mut rng).unwrap();
    let ei_at = |x: f64| {
        let (m, v) = s.posterior(&[x]).unwrap();
        expected_improvement(m, v, 0.2)
    };
    let grid: Vec<f64> = (0..10_000).map(|i| ei_at(i as f64 / 9_999.0)).collect();
    let best = grid.iter().copied().fold(0.0, f64::max);
    let step = grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let chosen = s.suggest(&unit_space(), &mut rng, 20_000).unwrap();
    let Some(Value::Number(x)) = chosen.get("x") else { panic!() };
    assert!(ei_at(*x) >= best - step, "{} vs {best} (resolution {step})", ei_at(*x));
}

#[test]
fn suggestion_invariant_to_target_shift() {
    let params = KernelParams {
        length_scales: vec![0.2],
        signal_variance: 0.3,
        noise_variance: 1e-4,
    };
    let base = Surrogate::with_params(valley(), params.clone()).unwrap();
    let shifted_set = TrainingSet::new(vec![vec![0.1], vec![0.5], vec![0.9]], vec![3.8, 3.2, 3.7]).unwrap();
    let shifted = Surrogate::with_params(shifted_set, params).unwrap();
    for seed in 0..10 {
        let a = base.suggest(&unit_space(), &mut ChaCha8Rng::seed_from_u64(seed), 64).unwrap();
        let b = shifted.suggest(&unit_space(), &mut ChaCha8Rng::seed_from_u64(seed), 64).unwrap();
        assert_eq!(a, b);
    }
}

fn params_strategy(d: usize) -> impl Strategy<Value = KernelParams> {
    (
        proptest::collection::vec(-3.0f64..3.0, d),
        -6.0f64..3.0,
        -8.0f64..0.0,
    )
        .prop_map(|(ls, sf, sn)| KernelParams {
            length_scales: ls.into_iter().map(|v| 10f64.powf(v)).collect(),
            signal_variance: 10f64.powf(sf),
            noise_variance: 10f64.powf(sn),
        })
}

proptest! {
    #[test]
    fn variance_non_negative_and_ei_non_negative(
        params in params_strategy(2),
        seed in 0u64..1000,
        x in proptest::collection::vec(-0.5f64..1.5, 2),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_set(&mut rng, 6, 2);
        let best = data.best_target();
        let s = Surrogate::with_params(data, params).unwrap();
        let (m, v) = s.posterior(&x).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(expected_improvement(m, v, best) >= 0.0);
    }

    #[test]
    fn likelihood_finite_for_positive_params(params in params_strategy(2), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_set(&mut rng, 8, 2);
        let lml = log_marginal_likelihood(&data, &params);
        prop_assert!(lml.is_some_and(f64::is_finite));
    }

    #[test]
    fn ei_increases_with_sigma(gap in 1e-3f64..2.0, s1 in 1e-3f64..2.0, extra in 1e-3f64..2.0) {
        let lo = expected_improvement(0.0, s1 * s1, gap);
        let hi = expected_improvement(0.0, (s1 + extra) * (s1 + extra), gap);
        prop_assert!(hi >= lo);
    }
}
