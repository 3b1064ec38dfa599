use approx::assert_relative_eq;
use dpcov::privacy::{laplace_noise, trace_tail_bound};
use dpcov::seed::rng_for;
use dpcov::{
    covariance_spectrum, empirical_sensitivity, generate_data, privatize_spectrum, trace_ratio_bound, DataMatrix,
    ModelKind, PrivacyParams, SigmaSpec, SpectrumResult,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn trace_ratio_values() {
    assert_relative_eq!(trace_ratio_bound(1.0, 1.0, 300, 300, 0.25).unwrap().value, 2.01, epsilon = 1e-14);
    assert_relative_eq!(trace_ratio_bound(2.0, 1.0, 200, 400, 0.25).unwrap().value, 2.01, epsilon = 1e-14);
    assert_relative_eq!(trace_ratio_bound(1.0, 1.0, 2000, 400, 0.25).unwrap().value, 10.05, epsilon = 1e-12);
    let b = trace_ratio_bound(1.0, 1.0, 200, 400, 0.25).unwrap();
    assert_relative_eq!(b.failure_probability, 2.0 * (-20.0f64).exp(), max_relative = 1e-12);
    assert!(trace_ratio_bound(0.5, 1.0, 10, 10, 0.25).is_err());
}

#[test]
fn trace_tail_values() {
    let t = 400f64.powf(-0.5);
    let b = trace_tail_bound(200.0, 200.0, 1.0, 1.0, 400, t).unwrap();
    let expected = 2.0 * 200.0 / 400.0 + 4.0 * 200f64.sqrt() * (t / 400.0).sqrt() + 4.0 * t;
    assert_relative_eq!(b.value, expected, max_relative = 1e-14);
    assert_relative_eq!(b.failure_probability, 2.0 * (-400.0 * t).exp(), max_relative = 1e-12);
    let doubled = trace_tail_bound(200.0, 200.0, 1.0, 2.0, 400, t).unwrap();
    assert_eq!(doubled.value, 4.0 * b.value);
    // Vanishing t leaves the leading 2 tr / n term.
    let small = trace_tail_bound(50.0, 50.0, 1.0, 1.0, 100, 1e-14).unwrap();
    assert_relative_eq!(small.value, 1.0, max_relative = 1e-5);
    assert!(trace_tail_bound(0.0, 1.0, 1.0, 1.0, 10, 0.1).is_err());
}

#[test]
fn laplace_moments() {
    let b = 1.7;
    let draws = laplace_noise(b, 1_000_000, &mut rng_for(5, 0, 0));
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let abs = draws.iter().map(|v| v.abs()).sum::<f64>() / n;
    assert!(mean.abs() < 0.005 * b, "mean {mean}");
    assert!((var / (2.0 * b * b) - 1.0).abs() < 0.02, "variance {var}");
    assert!((abs / b - 1.0).abs() < 0.01, "mean abs {abs}");
    // Median zero and exponential tails: P(|ℓ| > 3b) = e^{-3}.
    let tail = draws.iter().filter(|v| v.abs() > 3.0 * b).count() as f64 / n;
    assert!((tail - (-3.0f64).exp()).abs() < 0.002, "tail {tail}");
}

fn null_spectrum(n: usize, d: usize, seed: u64) -> SpectrumResult {
    let mut rng = rng_for(seed, 0, 0);
    let x = generate_data(ModelKind::Gaussian, &SigmaSpec::default(), n, d, &mut rng).unwrap();
    covariance_spectrum(&x, false)
}

#[test]
fn release_follows_the_two_stages() {
    let spectrum = null_spectrum(100, 40, 1);
    let params = PrivacyParams::new(2.0).unwrap();
    let p = privatize_spectrum(&spectrum, &params, 9).unwrap();
    assert_eq!(p.k, 40);
    for v in [&p.raw, &p.stage1_noise, &p.stage1_noisy, &p.stage2_noise, &p.privatized] {
        assert_eq!(v.len(), 40);
    }
    assert_relative_eq!(p.stage1_scale, 2.01 * 2.0 * 40.0 / (100.0 * 2.0), max_relative = 1e-14);
    assert_eq!(p.gamma_hat, p.stage1_noisy.iter().sum::<f64>().abs() / 40.0);
    assert_relative_eq!(p.noise_scale, 2.01 * p.gamma_hat * 40.0 / (100.0 * 2.0), max_relative = 1e-14);
    for i in 0..40 {
        assert_eq!(p.stage1_noisy[i], p.raw[i] + p.stage1_noise[i]);
        assert_eq!(p.privatized[i], p.raw[i] + p.stage2_noise[i]);
    }
    // Stage one is drawn first from the noise stream.
    let mut rng = rng_for(9, dpcov::seed::stream::NOISE, 0);
    let first = laplace_noise(p.stage1_scale, 40, &mut rng);
    let second = laplace_noise(p.noise_scale, 40, &mut rng);
    assert_eq!(first, p.stage1_noise);
    assert_eq!(second, p.stage2_noise);
}

#[test]
fn release_is_deterministic() {
    let spectrum = null_spectrum(60, 30, 2);
    let params = PrivacyParams::new(1.0).unwrap();
    let a = privatize_spectrum(&spectrum, &params, 77).unwrap();
    let b = privatize_spectrum(&spectrum, &params, 77).unwrap();
    let c = privatize_spectrum(&spectrum, &params, 78).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.privatized, c.privatized);
}

#[test]
fn large_epsilon_leaves_spectrum_intact() {
    let spectrum = null_spectrum(60, 30, 3);
    let p = privatize_spectrum(&spectrum, &PrivacyParams::new(1e12).unwrap(), 1).unwrap();
    assert!(p.noise_scale < 1e-11);
    for (a, b) in p.privatized.iter().zip(&p.raw) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn gamma_hat_concentrates_under_the_null() {
    let (n, d) = (400, 200);
    let params = PrivacyParams::new(4.0).unwrap();
    let runs = 500;
    let inside = (0..runs)
        .filter(|&s| {
            let p = privatize_spectrum(&null_spectrum(n, d, 1000 + s), &params, s).unwrap();
            (0.8..=1.2).contains(&p.gamma_hat)
        })
        .count();
    assert!(inside as f64 >= 0.95 * runs as f64, "{inside}/{runs}");
}

#[test]
fn invalid_parameters() {
    assert!(PrivacyParams::new(0.0).is_err());
    assert!(PrivacyParams::new(f64::INFINITY).is_err());
    let p = PrivacyParams { gamma_tilde: 0.5, ..PrivacyParams::default() };
    assert!(p.validated().is_err());
    let p = PrivacyParams { r: 0.5, ..PrivacyParams::default() };
    assert!(p.validated().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noise_scale_monotonicity(eps in 0.1f64..10.0, gamma in 1.0f64..5.0, d in 1usize..500, n in 1usize..500) {
        let p = PrivacyParams::new(eps).unwrap();
        let q = PrivacyParams::new(eps * 1.5).unwrap();
        let b = p.noise_scale(gamma, n, d);
        prop_assert!(b > 0.0);
        prop_assert!(q.noise_scale(gamma, n, d) < b);
        prop_assert!(p.noise_scale(gamma * 1.1, n, d) > b);
        prop_assert!(p.noise_scale(gamma, n, d + 1) > b);
    }

    /// Replacing one row moves the spectrum by at most the two squared row
    /// norms over n, in every draw.
    #[test]
    fn interlacing_bound(n in 3usize..30, d in 1usize..30, seed in any::<u64>(), row in 0usize..30) {
        let mut rng = rng_for(seed, 0, 0);
        let x = DMatrix::<f64>::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let mut y = x.clone();
        let row = row % n;
        for j in 0..d {
            y[(row, j)] = StandardNormal.sample(&mut rng);
        }
        let bound = (x.row(row).norm_squared() + y.row(row).norm_squared()) / n as f64;
        let s = empirical_sensitivity(&DataMatrix::new(x).unwrap(), &DataMatrix::new(y).unwrap()).unwrap();
        prop_assert!(s <= bound * (1.0 + 1e-10) + 1e-12, "{} > {}", s, bound);
    }
}

#[test]
fn sensitivity_of_identical_and_non_neighbouring_sets() {
    let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 0.0]]).unwrap();
    assert_eq!(empirical_sensitivity(&x, &x).unwrap(), 0.0);
    let far = DataMatrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 0.0], vec![5.0, 0.0]]).unwrap();
    assert!(empirical_sensitivity(&x, &far).is_err());
}
