//! Multilinear lattice: a `k^D` lookup table over `[0, 1]^D` with uniform
//! keypoints per axis.
//!
//! Vertex values live in a [`ParameterBlock`] of shape `[k; D]` laid out
//! axis 0 fastest, so vertex `(i_0, .., i_{D-1})` sits at
//! `sum_d i_d * k^d`.

use crate::error::{Error, Result};
use crate::numerics::{Constraint, ParameterBlock, SeededRng};

/// Multilinear interpolation weights over the `2^D` vertices of the unit
/// hypercube. Vertex `v` is encoded as a bitmask whose bit `d` is `v[d]`.
/// Inputs are clamped to `[0, 1]` first.
pub fn interpolation_weights(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let xs: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    (0..1usize << d)
        .map(|v| {
            (0..d)
                .map(|j| if v >> j & 1 == 1 { xs[j] } else { 1.0 - xs[j] })
                .product()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dims: usize,
    keypoints: usize,
    theta: ParameterBlock,
    monotone_dims: Vec<usize>,
    strides: Vec<usize>,
}

/// Containing cell of an input, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeTrace {
    base: usize,
    frac: Vec<f64>,
    active: Vec<bool>,
}

impl Lattice {
    pub fn new(
        name: impl Into<String>,
        dims: usize,
        keypoints: usize,
        monotone_dims: Vec<usize>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidArgument("lattice needs at least one dimension".into()));
        }
        if keypoints < 2 {
            return Err(Error::InvalidArgument(format!("lattice needs at least 2 keypoints per axis, got {keypoints}")));
        }
        let mut monotone_dims = monotone_dims;
        monotone_dims.sort_unstable();
        monotone_dims.dedup();
        let constraint = if monotone_dims.is_empty() {
            Constraint::None
        } else {
            Constraint::Monotone(monotone_dims.clone())
        };
        let theta = ParameterBlock::new(name, vec![keypoints; dims], theta, constraint)?;
        let strides = (0..dims).map(|d| keypoints.pow(d as u32)).collect();
        Ok(Self {
            dims,
            keypoints,
            theta,
            monotone_dims,
            strides,
        })
    }

    /// Vertex values ramp from 0 to 1 along the monotone axes (averaged when
    /// there are several) plus `N(0, noise_sd)` noise, then projected so the
    /// lattice starts feasible.
    pub fn ramp_init(
        name: impl Into<String>,
        dims: usize,
        keypoints: usize,
        monotone_dims: Vec<usize>,
        noise_sd: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if keypoints < 2 || dims == 0 {
            return Err(Error::InvalidArgument("lattice needs dims >= 1 and keypoints >= 2".into()));
        }
        let n = keypoints.pow(dims as u32);
        let denom = (keypoints - 1) as f64 * monotone_dims.len().max(1) as f64;
        let theta = (0..n)
            .map(|flat| {
                let ramp: usize = monotone_dims
                    .iter()
                    .map(|&d| flat / keypoints.pow(d as u32) % keypoints)
                    .sum();
                ramp as f64 / denom + noise_sd * rng.normal()
            })
            .collect();
        let mut l = Self::new(name, dims, keypoints, monotone_dims, theta)?;
        l.theta.apply_constraints();
        Ok(l)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn keypoints(&self) -> usize {
        self.keypoints
    }

    pub fn monotone_dims(&self) -> &[usize] {
        &self.monotone_dims
    }

    pub fn theta(&self) -> &ParameterBlock {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut ParameterBlock {
        &mut self.theta
    }

    fn locate(&self, x: &[f64]) -> Result<LatticeTrace> {
        if x.len() != self.dims {
            return Err(Error::shape(format!("lattice '{}' input", self.theta.name()), &[self.dims], &[x.len()]));
        }
        let top = (self.keypoints - 1) as f64;
        let mut base = 0;
        let mut frac = Vec::with_capacity(self.dims);
        let mut active = Vec::with_capacity(self.dims);
        for (d, &xd) in x.iter().enumerate() {
            if !xd.is_finite() {
                return Err(Error::NonFinite(format!("lattice '{}' input", self.theta.name())));
            }
            let xc = xd.clamp(0.0, 1.0);
            let mut t = xc * top;
            // Exact vertex hits must not pick up rounding from the rescale.
            let r = t.round();
            if (t - r).abs() < 1e-12 {
                t = r;
            }
            let cell = (t.floor() as usize).min(self.keypoints - 2);
            base += cell * self.strides[d];
            frac.push(t - cell as f64);
            active.push(xd == xc);
        }
        Ok(LatticeTrace { base, frac, active })
    }

    fn value_at(&self, t: &LatticeTrace) -> f64 {
        let theta = self.theta.values();
        let mut acc = 0.0;
        for v in 0..1usize << self.dims {
            let mut w = 1.0;
            let mut offset = t.base;
            for d in 0..self.dims {
                if v >> d & 1 == 1 {
                    w *= t.frac[d];
                    offset += self.strides[d];
                } else {
                    w *= 1.0 - t.frac[d];
                }
            }
            if w != 0.0 {
                acc += w * theta[offset];
            }
        }
        acc
    }

    /// `theta^T psi(x)` over the cell containing `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_at(&self.locate(x)?))
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, LatticeTrace)> {
        let t = self.locate(x)?;
        Ok((self.value_at(&t), t))
    }

    /// Accumulates vertex gradients and writes `upstream * d(out)/d(x_d)`
    /// into `d_input` (overwriting).
    pub fn backward(&mut self, trace: &LatticeTrace, upstream: f64, d_input: &mut [f64]) {
        let dims = self.dims;
        let top = (self.keypoints - 1) as f64;
        d_input.iter_mut().for_each(|g| *g = 0.0);
        let mut offsets = Vec::with_capacity(1 << dims);
        for v in 0..1usize << dims {
            let mut w = 1.0;
            let mut offset = trace.base;
            for d in 0..dims {
                if v >> d & 1 == 1 {
                    w *= trace.frac[d];
                    offset += self.strides[d];
                } else {
                    w *= 1.0 - trace.frac[d];
                }
            }
            offsets.push(offset);
            self.theta.grad_mut()[offset] += upstream * w;
        }
        let theta = self.theta.values();
        for d in 0..dims {
            if !trace.active[d] {
                continue;
            }
            let mut acc = 0.0;
            for (v, &offset) in offsets.iter().enumerate() {
                let mut w = if v >> d & 1 == 1 { 1.0 } else { -1.0 };
                for e in (0..dims).filter(|&e| e != d) {
                    w *= if v >> e & 1 == 1 { trace.frac[e] } else { 1.0 - trace.frac[e] };
                }
                acc += w * theta[offset];
            }
            d_input[d] = upstream * acc * top;
        }
    }
}

/// Free-function form of [`Lattice::eval`].
pub fn lattice_forward(l: &Lattice, x: &[f64]) -> Result<f64> {
    l.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_grid() -> Lattice {
        Lattice::new("l", 2, 2, vec![], vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn vertex_weights() {
        assert_eq!(interpolation_weights(&[0.0]), vec![1.0, 0.0]);
        assert_eq!(interpolation_weights(&[0.5, 0.5]), vec![0.25; 4]);
    }

    #[test]
    fn enumerated_weights() {
        let w = interpolation_weights(&[0.25, 0.75]);
        let expected = [0.1875, 0.0625, 0.5625, 0.1875];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bilinear_center_and_off_center() {
        let l = linear_grid();
        assert!((l.eval(&[0.5, 0.5]).unwrap() - 1.5).abs() < 1e-15);
        assert!((l.eval(&[0.25, 0.75]).unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn vertex_hit_on_three_keypoints() {
        let l = Lattice::new("l", 1, 3, vec![0], vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(l.eval(&[0.5]).unwrap(), 1.0);
        assert_eq!(l.eval(&[1.0]).unwrap(), 4.0);
        assert!((l.eval(&[0.75]).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(linear_grid().eval(&[0.5]).is_err());
    }

    #[test]
    fn clamps_out_of_range() {
        let l = linear_grid();
        assert_eq!(l.eval(&[2.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn ramp_init_is_feasible_and_monotone() {
        let mut rng = SeededRng::new(5);
        let l = Lattice::ramp_init("l", 3, 4, vec![2], 0.01, &mut rng).unwrap();
        assert_eq!(l.theta().len(), 64);
        assert!(l.theta().satisfies_constraint(0.0));
        let lo = l.eval(&[0.3, 0.6, 0.1]).unwrap();
        let hi = l.eval(&[0.3, 0.6, 0.9]).unwrap();
        assert!(hi > lo);
    }
}
