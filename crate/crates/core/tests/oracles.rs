//! Library routines against independent reference implementations.

mod common;

use common::*;
use lattice_sqr::monotonic::pava;
use lattice_sqr::numerics::SeededRng;

#[test]
fn lattice_matches_vertex_enumeration() {
    let r = lattice_oracle();
    assert!(r.worst < 1e-12, "{r:?}");
}

#[test]
fn projection_matches_isotonic_max_min() {
    let r = projection_oracle();
    assert!(r.worst < 1e-6, "{r:?}");
}

#[test]
fn metrics_match_nested_loops() {
    let r = metric_oracle();
    assert!(r.worst < 1e-12, "{r:?}");
}

#[test]
fn pava_matches_max_min() {
    let mut rng = SeededRng::new(5);
    for n in 1..30 {
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for (a, b) in pava(&y).iter().zip(isotonic_max_min(&y)) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn reference_lattice_hits_vertices() {
    // 2 x 2 lattice, theta axis-0 fastest: (0,0)=1, (1,0)=2, (0,1)=3, (1,1)=4.
    let theta = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(brute_force_lattice(&theta, 2, 2, &[1.0, 0.0]), 2.0);
    assert_eq!(brute_force_lattice(&theta, 2, 2, &[0.0, 1.0]), 3.0);
    assert!((brute_force_lattice(&theta, 2, 2, &[0.5, 0.5]) - 2.5).abs() < 1e-15);
}

// Forecasting the exact N(0, 1) quantiles: the expected pinball loss at
// level tau is the density at the tau-quantile, and every level is
// calibrated up to sampling noise.
#[test]
fn gaussian_quantiles_score_as_expected() {
    use lattice_sqr::metrics::{ace, crps_approx, picp, reliability, EVAL_QUANTILES};
    use ndarray::{Array2, Array3};
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    let n = 100_000;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = SeededRng::new(17);
    let y = Array2::from_shape_fn((n, 1), |_| rng.normal());
    let q: Vec<f64> = EVAL_QUANTILES.iter().map(|&t| normal.inverse_cdf(t)).collect();
    let f = Array3::from_shape_fn((n, q.len(), 1), |(_, j, _)| q[j]);

    let expected: f64 = q.iter().map(|&z| normal.pdf(z)).sum();
    let crps = crps_approx(y.view(), f.view(), &EVAL_QUANTILES).unwrap();
    assert!((crps - expected).abs() < 0.03, "crps {crps} vs {expected}");

    for p in reliability(y.view(), f.view(), &EVAL_QUANTILES).unwrap() {
        let se = (p.nominal * (1.0 - p.nominal) / n as f64).sqrt();
        assert!((p.empirical - p.nominal).abs() < 4.0 * se, "{p:?}");
    }
    let curve = picp(y.view(), f.view(), &EVAL_QUANTILES).unwrap();
    assert!(ace(&curve).unwrap() < 0.005);
}
