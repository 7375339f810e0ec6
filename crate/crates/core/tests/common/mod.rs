//! Independent reference implementations and the shared oracle and
//! gradient suites.
#![allow(dead_code)]

use std::time::Instant;

use lattice_sqr::embedding::{Lstm, LstmConfig};
use lattice_sqr::heads::{Head, HeadConfig, HeadKind};
use lattice_sqr::metrics::{ace, crps_approx, picp, pinball, reliability, EVAL_QUANTILES};
use lattice_sqr::monotonic::{lattice_forward, project_monotone, Calibrator, ConstrainedLinear, Lattice};
use lattice_sqr::numerics::{finite_difference_check, Constraint, ParameterBlock, SeededRng};
use lattice_sqr::engine::pinball_loss;
use ndarray::{Array2, Array3};

/// Multilinear interpolation by summing hat-function weights over every
/// vertex of the grid. `theta` is axis-0-fastest.
pub fn brute_force_lattice(theta: &[f64], dims: usize, k: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (flat, &th) in theta.iter().enumerate().take(k.pow(dims as u32)) {
        let mut rem = flat;
        let mut w = 1.0;
        for &xd in x.iter().take(dims) {
            let v = (rem % k) as f64;
            rem /= k;
            let t = xd.clamp(0.0, 1.0) * (k - 1) as f64;
            w *= (1.0 - (t - v).abs()).max(0.0);
        }
        acc += w * th;
    }
    acc
}

/// Isotonic regression by the max-min formula
/// `x_i = max_{j<=i} min_{l>=i} mean(y[j..=l])`.
pub fn isotonic_max_min(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mean = |j: usize, l: usize| y[j..=l].iter().sum::<f64>() / (l - j + 1) as f64;
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| (i..n).map(|l| mean(j, l)).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn pinball_ref(y: f64, f: f64, tau: f64) -> f64 {
    if y >= f {
        tau * (y - f)
    } else {
        (1.0 - tau) * (f - y)
    }
}

/// `forecasts[[i, q, j]]`.
pub fn crps_ref(y: &Array2<f64>, f: &Array3<f64>, taus: &[f64]) -> f64 {
    let (n, h) = y.dim();
    let mut total = 0.0;
    for i in 0..n {
        for (q, &tau) in taus.iter().enumerate() {
            for j in 0..h {
                total += pinball_ref(y[[i, j]], f[[i, q, j]], tau);
            }
        }
    }
    total / (n * h) as f64
}

/// (nominal, empirical) per symmetric interval, narrowest first.
pub fn picp_ref(y: &Array2<f64>, f: &Array3<f64>, taus: &[f64]) -> Vec<(f64, f64)> {
    let (n, h) = y.dim();
    let q = taus.len();
    let mut out = Vec::new();
    for p in (0..q / 2).rev() {
        let mut inside = 0;
        for i in 0..n {
            for j in 0..h {
                if f[[i, p, j]] <= y[[i, j]] && y[[i, j]] <= f[[i, q - 1 - p, j]] {
                    inside += 1;
                }
            }
        }
        out.push((taus[q - 1 - p] - taus[p], inside as f64 / (n * h) as f64));
    }
    out
}

pub fn reliability_ref(y: &Array2<f64>, f: &Array3<f64>, taus: &[f64]) -> Vec<f64> {
    let (n, h) = y.dim();
    (0..taus.len())
        .map(|q| {
            let mut below = 0;
            for i in 0..n {
                for j in 0..h {
                    if y[[i, j]] <= f[[i, q, j]] {
                        below += 1;
                    }
                }
            }
            below as f64 / (n * h) as f64
        })
        .collect()
}

#[derive(Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub worst: f64,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> f64) -> SuiteResult {
    let t = Instant::now();
    let worst = f();
    SuiteResult {
        name,
        worst,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// 1000 random points on lattices with 1 to 4 inputs and 2 to 5 keypoints.
pub fn lattice_oracle() -> SuiteResult {
    timed("lattice vs vertex enumeration", || {
        let mut rng = SeededRng::new(11);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let dims = 1 + i % 4;
            let k: usize = 2 + (i / 4) % 4;
            let theta: Vec<f64> = (0..k.pow(dims as u32)).map(|_| rng.normal()).collect();
            let l = Lattice::new("l", dims, k, vec![], theta.clone()).unwrap();
            let x: Vec<f64> = (0..dims).map(|_| rng.uniform_range(-0.1, 1.1)).collect();
            let got = lattice_forward(&l, &x).unwrap();
            worst = worst.max((got - brute_force_lattice(&theta, dims, k, &x)).abs());
        }
        worst
    })
}

/// 100 random chains projected through the block interface.
pub fn projection_oracle() -> SuiteResult {
    timed("monotone projection vs isotonic max-min", || {
        let mut rng = SeededRng::new(12);
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let n = 1 + i % 40;
            let y: Vec<f64> = (0..n).map(|_| 3.0 * rng.normal()).collect();
            let mut b = ParameterBlock::new("b", vec![n], y.clone(), Constraint::Monotone(vec![0])).unwrap();
            project_monotone(&mut b);
            for (a, e) in b.values().iter().zip(isotonic_max_min(&y)) {
                worst = worst.max((a - e).abs());
            }
        }
        worst
    })
}

/// Pinball, CRPS, PICP, ACE and reliability against nested loops.
pub fn metric_oracle() -> SuiteResult {
    timed("metrics vs nested loops", || {
        let mut rng = SeededRng::new(13);
        let taus = &EVAL_QUANTILES;
        let mut worst: f64 = 0.0;
        for trial in 0..20 {
            let (n, h) = (3 + trial % 5, 1 + trial % 4);
            let y = Array2::from_shape_fn((n, h), |_| rng.normal());
            let mut f = Array3::from_shape_fn((n, taus.len(), h), |_| rng.normal());
            // Every other trial gets sorted quantiles with exact ties to y.
            if trial % 2 == 0 {
                for i in 0..n {
                    for j in 0..h {
                        let mut col: Vec<f64> = (0..taus.len()).map(|q| f[[i, q, j]]).collect();
                        col.sort_by(f64::total_cmp);
                        col[trial % taus.len()] = y[[i, j]];
                        for (q, v) in col.into_iter().enumerate() {
                            f[[i, q, j]] = v;
                        }
                    }
                }
            }
            let crps = crps_approx(y.view(), f.view(), taus).unwrap();
            worst = worst.max((crps - crps_ref(&y, &f, taus)).abs());
            let curve = picp(y.view(), f.view(), taus).unwrap();
            let reference = picp_ref(&y, &f, taus);
            for (p, (nom, emp)) in curve.iter().zip(&reference) {
                worst = worst.max((p.nominal - nom).abs()).max((p.empirical - emp).abs());
            }
            let ace_ref = reference.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / reference.len() as f64;
            worst = worst.max((ace(&curve).unwrap() - ace_ref).abs());
            for (p, e) in reliability(y.view(), f.view(), taus).unwrap().iter().zip(reliability_ref(&y, &f, taus)) {
                worst = worst.max((p.empirical - e).abs());
            }
            for (q, &tau) in taus.iter().enumerate() {
                let yv: Vec<f64> = y.iter().copied().collect();
                let fv: Vec<f64> = (0..n).flat_map(|i| (0..h).map(move |j| (i, j))).map(|(i, j)| f[[i, q, j]]).collect();
                let reference = yv.iter().zip(&fv).map(|(&a, &b)| pinball_ref(a, b, tau)).sum::<f64>() / yv.len() as f64;
                worst = worst.max((pinball_loss(&yv, &fv, tau).unwrap() - reference).abs());
                worst = worst.max((pinball(yv[0], fv[0], tau) - pinball_ref(yv[0], fv[0], tau)).abs());
            }
        }
        worst
    })
}

pub fn oracle_suite() -> Vec<SuiteResult> {
    vec![lattice_oracle(), projection_oracle(), metric_oracle()]
}

/// Central-difference step for the gradient suite.
pub const FD_STEP: f64 = 1e-6;

/// A value in `(lo, hi)` at least `gap` from every multiple of `1/cells`
/// measured from `lo`.
fn off_grid(rng: &mut SeededRng, lo: f64, hi: f64, cells: usize, gap: f64) -> f64 {
    loop {
        let x = rng.uniform_range(lo, hi);
        let t = (x - lo) / (hi - lo) * cells as f64;
        if (t - t.round()).abs() * (hi - lo) / cells as f64 >= gap {
            return x;
        }
    }
}

fn weights(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn calibrator_gradients() -> f64 {
    let mut rng = SeededRng::new(21);
    let mut worst: f64 = 0.0;
    for monotone in [false, true] {
        let mut c = Calibrator::linear("c", 7, (-1.0, 1.0), (0.0, 1.0), monotone).unwrap();
        let mut out: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        if monotone {
            out.sort_by(f64::total_cmp);
        }
        c.output_mut().set_values(out.clone()).unwrap();
        let xs: Vec<f64> = (0..9).map(|_| off_grid(&mut rng, -1.0, 1.0, 6, 1e-3)).collect();
        let w = weights(&mut rng, xs.len());
        c.output_mut().zero_grad();
        let mut dx = Vec::new();
        for (&x, &wi) in xs.iter().zip(&w) {
            let (_, t) = c.forward(x);
            dx.push(c.backward(&t, wi));
        }
        let analytic = c.output().grad().to_vec();
        let probe = c.clone();
        let param_loss = |p: &[f64]| {
            let mut m = probe.clone();
            m.output_mut().set_values(p.to_vec()).unwrap();
            xs.iter().zip(&w).map(|(&x, wi)| wi * m.eval(x)).sum::<f64>()
        };
        worst = worst.max(finite_difference_check(param_loss, &out, &analytic, FD_STEP).unwrap());
        let input_loss = |p: &[f64]| p.iter().zip(&w).map(|(&x, wi)| wi * probe.eval(x)).sum::<f64>();
        worst = worst.max(finite_difference_check(input_loss, &xs, &dx, FD_STEP).unwrap());
    }
    worst
}

pub fn lattice_gradients() -> f64 {
    let mut rng = SeededRng::new(22);
    let mut worst: f64 = 0.0;
    for (dims, k) in [(1, 5), (2, 3), (3, 4)] {
        let mut l = Lattice::ramp_init("l", dims, k, vec![dims - 1], 0.3, &mut rng).unwrap();
        let theta = l.theta().values().to_vec();
        for _ in 0..5 {
            let x: Vec<f64> = (0..dims).map(|_| off_grid(&mut rng, 0.0, 1.0, k - 1, 1e-3)).collect();
            let wi = rng.uniform_range(-1.0, 1.0);
            l.theta_mut().zero_grad();
            let (_, t) = l.forward(&x).unwrap();
            let mut dx = vec![0.0; dims];
            l.backward(&t, wi, &mut dx);
            let analytic = l.theta().grad().to_vec();
            let probe = l.clone();
            let param_loss = |p: &[f64]| {
                let mut m = probe.clone();
                m.theta_mut().set_values(p.to_vec()).unwrap();
                wi * m.eval(&x).unwrap()
            };
            worst = worst.max(finite_difference_check(param_loss, &theta, &analytic, FD_STEP).unwrap());
            let input_loss = |p: &[f64]| wi * probe.eval(p).unwrap();
            worst = worst.max(finite_difference_check(input_loss, &x, &dx, FD_STEP).unwrap());
        }
    }
    worst
}

pub fn constrained_linear_gradients() -> f64 {
    let mut rng = SeededRng::new(23);
    let mut cl = ConstrainedLinear::init("cl", 3, 4, 5, &mut rng).unwrap();
    let mono: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
    let free: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
    let w = weights(&mut rng, 5);
    for b in cl.blocks_mut() {
        b.zero_grad();
    }
    let (d_mono, d_free) = cl.backward(&mono, &free, &w);
    let probe = cl.clone();
    let mut worst: f64 = 0.0;
    for bi in 0..3 {
        let analytic = cl.blocks()[bi].grad().to_vec();
        let values = cl.blocks()[bi].values().to_vec();
        let loss = |p: &[f64]| {
            let mut m = probe.clone();
            m.blocks_mut()[bi].set_values(p.to_vec()).unwrap();
            dot(&m.forward(&mono, &free).unwrap(), &w)
        };
        worst = worst.max(finite_difference_check(loss, &values, &analytic, FD_STEP).unwrap());
    }
    let loss = |p: &[f64]| dot(&probe.forward(p, &free).unwrap(), &w);
    worst = worst.max(finite_difference_check(loss, &mono, &d_mono, FD_STEP).unwrap());
    let loss = |p: &[f64]| dot(&probe.forward(&mono, p).unwrap(), &w);
    worst.max(finite_difference_check(loss, &free, &d_free, FD_STEP).unwrap())
}

/// Small head of `kind` on a 6-dimensional embedding with horizon 4.
pub fn small_head(kind: HeadKind, rng: &mut SeededRng) -> Head {
    let mut cfg = HeadConfig::new(kind, 4);
    cfg.dln.feature_calib_keypoints = 5;
    cfg.dln.quantile_calib_keypoints = 4;
    cfg.dln.lattice_keypoints = 3;
    cfg.dln.output_calib_keypoints = 6;
    Head::new(&cfg, 6, rng).unwrap()
}

pub fn head_gradients(kind: HeadKind) -> f64 {
    let mut rng = SeededRng::new(24 + kind as u64);
    let mut head = small_head(kind, &mut rng);
    // Move off the initial ramps so every path carries signal.
    for b in head.blocks_mut() {
        for v in b.values_mut() {
            *v += 0.05 * rng.normal();
        }
        b.apply_constraints();
    }
    let emb: Vec<f64> = (0..6).map(|_| off_grid(&mut rng, -0.9, 0.9, 4, 1e-3)).collect();
    let tau = 0.37;
    let (out, cache) = head.forward(&emb, tau).unwrap();
    let w = weights(&mut rng, out.len());
    head.blocks_mut().into_iter().for_each(ParameterBlock::zero_grad);
    let d_emb = head.backward(&cache, &w).unwrap();
    let probe = head.clone();
    let mut worst: f64 = 0.0;
    for bi in 0..head.blocks().len() {
        let analytic = head.blocks()[bi].grad().to_vec();
        let values = head.blocks()[bi].values().to_vec();
        let loss = |p: &[f64]| {
            let mut m = probe.clone();
            m.blocks_mut()[bi].set_values(p.to_vec()).unwrap();
            dot(&m.forward(&emb, tau).unwrap().0, &w)
        };
        worst = worst.max(finite_difference_check(loss, &values, &analytic, FD_STEP).unwrap());
    }
    let loss = |p: &[f64]| dot(&probe.forward(p, tau).unwrap().0, &w);
    worst.max(finite_difference_check(loss, &emb, &d_emb, FD_STEP).unwrap())
}

pub fn lstm_gradients() -> f64 {
    let mut rng = SeededRng::new(25);
    let cfg = LstmConfig {
        input_features: 3,
        hidden_size: 4,
        num_layers: 2,
        window: 5,
    };
    let mut lstm = Lstm::new(cfg, &mut rng).unwrap();
    let window = Array2::from_shape_fn((5, 3), |_| rng.uniform());
    let (_, cache) = lstm.forward(window.view()).unwrap();
    let w = weights(&mut rng, 4);
    lstm.blocks_mut().into_iter().for_each(ParameterBlock::zero_grad);
    lstm.backward(&cache, &w).unwrap();
    let probe = lstm.clone();
    let mut worst: f64 = 0.0;
    for bi in 0..lstm.blocks().len() {
        let analytic = lstm.blocks()[bi].grad().to_vec();
        let values = lstm.blocks()[bi].values().to_vec();
        let loss = |p: &[f64]| {
            let mut m = probe.clone();
            m.blocks_mut()[bi].set_values(p.to_vec()).unwrap();
            dot(&m.embed(window.view()).unwrap(), &w)
        };
        worst = worst.max(finite_difference_check(loss, &values, &analytic, FD_STEP).unwrap());
    }
    worst
}

pub fn gradient_suite() -> Vec<SuiteResult> {
    let mut out = vec![
        timed("calibrator", calibrator_gradients),
        timed("lattice", lattice_gradients),
        timed("constrained linear", constrained_linear_gradients),
        timed("lstm", lstm_gradients),
    ];
    for kind in HeadKind::ALL {
        out.push(timed(kind.name(), || head_gradients(kind)));
    }
    out
}
