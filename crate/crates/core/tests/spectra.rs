use approx::assert_relative_eq;
use dpcov::seed::rng_for;
use dpcov::{correlation_spectrum, covariance_spectrum, generate_data, DataMatrix, ModelKind, SigmaSpec, Source};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

/// Eigenvalues of `XᵀX / n` from the `d × d` matrix, descending.
fn brute_force(x: &DMatrix<f64>) -> Vec<f64> {
    let s = x.transpose() * x / x.nrows() as f64;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, 0, 0);
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

#[test]
fn scaled_identity_has_unit_spectrum() {
    let n = 6;
    let x = DMatrix::<f64>::identity(n, n) * (n as f64).sqrt();
    let s = covariance_spectrum(&DataMatrix::new(x).unwrap(), false);
    assert_eq!(s.eigenvalues.len(), n);
    for l in &s.eigenvalues {
        assert_relative_eq!(*l, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn hand_computed_single_column() {
    let x = DataMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
    let s = covariance_spectrum(&x, false);
    assert_eq!(s.eigenvalues, vec![5.0]);
    // Centering removes the mean 2, leaving (1 + 1) / 2.
    let s = covariance_spectrum(&x, true);
    assert_relative_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-14);
}

#[test]
fn gram_route_matches_full_eigensolver() {
    let x = gaussian(50, 200, 1);
    let s = covariance_spectrum(&DataMatrix::new(x.clone()).unwrap(), false);
    let full = brute_force(&x);
    assert_eq!(s.k(), 50);
    for (a, b) in s.eigenvalues.iter().zip(&full) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
    assert!(full[50..].iter().all(|v| v.abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectrum_invariants(n in 2usize..30, d in 1usize..30, seed in any::<u64>(), centered in any::<bool>()) {
        let x = DataMatrix::new(gaussian(n, d, seed)).unwrap();
        let s = covariance_spectrum(&x, centered);
        prop_assert_eq!(s.eigenvalues.len(), n.min(d));
        prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.eigenvalues.iter().all(|&v| v >= 0.0));
        let mut m = x.values().clone();
        if centered {
            for mut col in m.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
        }
        let trace = m.iter().map(|v| v * v).sum::<f64>() / n as f64;
        prop_assert!((s.eigenvalues.iter().sum::<f64>() - trace).abs() <= 1e-8 * trace.max(1e-300));
    }

    #[test]
    fn gram_equivalence(n in 2usize..25, extra in 1usize..25, seed in any::<u64>()) {
        let x = gaussian(n, n + extra, seed);
        let s = covariance_spectrum(&DataMatrix::new(x.clone()).unwrap(), false);
        for (a, b) in s.eigenvalues.iter().zip(brute_force(&x)) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn row_permutation_invariance(n in 2usize..25, d in 1usize..25, seed in any::<u64>()) {
        let x = gaussian(n, d, seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, 1, 0));
        let permuted = DMatrix::from_fn(n, d, |i, j| x[(order[i], j)]);
        let a = covariance_spectrum(&DataMatrix::new(x).unwrap(), false);
        let b = covariance_spectrum(&DataMatrix::new(permuted).unwrap(), false);
        for (u, v) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }
}

#[test]
fn correlation_two_by_two() {
    let x = DataMatrix::from_rows(&[vec![1.0, 1.4], vec![-1.0, 0.2], vec![1.0, -0.2], vec![-1.0, -1.4]]).unwrap();
    let s = correlation_spectrum(&x).unwrap();
    assert_eq!(s.source, Source::Correlation);
    assert_relative_eq!(s.eigenvalues[0], 1.6, epsilon = 1e-12);
    assert_relative_eq!(s.eigenvalues[1], 0.4, epsilon = 1e-12);
}

#[test]
fn correlation_of_orthogonal_columns_is_identity() {
    let x = DataMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
    let s = correlation_spectrum(&x).unwrap();
    for l in &s.eigenvalues {
        assert_relative_eq!(*l, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn correlation_trace_is_dimension() {
    for (n, d) in [(40, 10), (10, 40)] {
        let x = DataMatrix::new(gaussian(n, d, 3)).unwrap();
        let s = correlation_spectrum(&x).unwrap();
        assert!((s.eigenvalues.iter().sum::<f64>() - d as f64).abs() <= 1e-8 * d as f64);
    }
}

#[test]
fn constant_column_is_named() {
    let x = DataMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![2.0, 2.0, 1.0], vec![3.0, 2.0, 5.0]]).unwrap();
    let err = correlation_spectrum(&x).unwrap_err().to_string();
    assert!(err.contains("column 2"), "{err}");
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    assert!(DataMatrix::from_rows(&[vec![1.0, f64::NAN], vec![1.0, 2.0]]).is_err());
    assert!(DataMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
}

#[test]
fn csv_ingestion_with_and_without_header() {
    let with = "a,b\n1,2\n3,4\n5,7\n";
    let without = "1,2\n3,4\n5,7\n";
    let a = DataMatrix::from_csv_reader(with.as_bytes(), true).unwrap();
    let b = DataMatrix::from_csv_reader(without.as_bytes(), false).unwrap();
    assert_eq!(a.values(), b.values());
    assert_eq!((a.n(), a.d()), (3, 2));
    assert!(DataMatrix::from_csv_reader("1,2\n3\n".as_bytes(), false).is_err());
}

#[test]
fn scaled_identity_mean_eigenvalue() {
    let (n, d) = (2000, 1000);
    for delta in [0.0, 0.5] {
        let mut rng = rng_for(11, 0, 0);
        let x = generate_data(ModelKind::Gaussian, &SigmaSpec::ScaledIdentity { delta }, n, d, &mut rng).unwrap();
        let s = covariance_spectrum(&x, false);
        let mean = s.eigenvalues.iter().sum::<f64>() / d as f64;
        assert!((mean - (1.0 + delta)).abs() <= 0.05, "delta={delta}: mean {mean}");
    }
}
