use crate::error::{Error, Result};
use crate::numerics::{Constraint, ParameterBlock};

/// One-dimensional piecewise-linear lookup table with fixed input keypoints
/// and trainable output values. Inputs outside the keypoint range are
/// clamped to the end values.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrator {
    input_keypoints: Vec<f64>,
    output: ParameterBlock,
}

/// Where an input landed, kept for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratorTrace {
    segment: usize,
    frac: f64,
    clamped: bool,
}

impl Calibrator {
    pub fn new(name: impl Into<String>, input_keypoints: Vec<f64>, output_values: Vec<f64>, monotone: bool) -> Result<Self> {
        let name = name.into();
        let k = input_keypoints.len();
        if k < 2 {
            return Err(Error::InvalidArgument(format!("calibrator '{name}' needs at least 2 keypoints, got {k}")));
        }
        if input_keypoints.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("keypoints of calibrator '{name}'")));
        }
        if input_keypoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "keypoints of calibrator '{name}' must be strictly increasing"
            )));
        }
        let constraint = if monotone { Constraint::Monotone(vec![0]) } else { Constraint::None };
        let output = ParameterBlock::new(name, vec![k], output_values, constraint)?;
        Ok(Self { input_keypoints, output })
    }

    /// `k` evenly spaced keypoints on `[in_lo, in_hi]` initialised to the
    /// linear map onto `[out_lo, out_hi]`.
    pub fn linear(
        name: impl Into<String>,
        k: usize,
        (in_lo, in_hi): (f64, f64),
        (out_lo, out_hi): (f64, f64),
        monotone: bool,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("calibrator needs at least 2 keypoints, got {k}")));
        }
        let step = |lo: f64, hi: f64| (0..k).map(move |i| lo + (hi - lo) * i as f64 / (k - 1) as f64);
        Self::new(name, step(in_lo, in_hi).collect(), step(out_lo, out_hi).collect(), monotone)
    }

    /// Keypoints at evenly spaced empirical quantiles of `data`, outputs
    /// initialised to a ramp over `[0, 1]`. Duplicate quantiles (from ties in
    /// the data) are dropped, so the result may have fewer than `k` keypoints.
    pub fn from_data_quantiles(name: impl Into<String>, data: &[f64], k: usize, monotone: bool) -> Result<Self> {
        let mut sorted: Vec<f64> = data.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < 2 {
            return Err(Error::InsufficientData("need at least two finite values to place keypoints".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut keys: Vec<f64> = (0..k)
            .map(|i| {
                let pos = i as f64 / (k - 1).max(1) as f64 * (n - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
            })
            .collect();
        keys.dedup_by(|a, b| *a <= *b);
        if keys.len() < 2 {
            return Err(Error::InsufficientData("data has a single distinct value".into()));
        }
        let m = keys.len();
        let outputs = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        Self::new(name, keys, outputs, monotone)
    }

    pub fn keypoints(&self) -> &[f64] {
        &self.input_keypoints
    }

    pub fn output(&self) -> &ParameterBlock {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut ParameterBlock {
        &mut self.output
    }

    pub fn is_monotone(&self) -> bool {
        matches!(self.output.constraint(), Constraint::Monotone(_))
    }

    fn locate(&self, x: f64) -> CalibratorTrace {
        let a = &self.input_keypoints;
        let k = a.len();
        if x <= a[0] {
            return CalibratorTrace { segment: 0, frac: 0.0, clamped: x < a[0] };
        }
        if x >= a[k - 1] {
            return CalibratorTrace { segment: k - 2, frac: 1.0, clamped: x > a[k - 1] };
        }
        let segment = (a.partition_point(|&v| v <= x) - 1).min(k - 2);
        let frac = (x - a[segment]) / (a[segment + 1] - a[segment]);
        CalibratorTrace { segment, frac, clamped: false }
    }

    fn value_at(&self, t: &CalibratorTrace) -> f64 {
        let b = self.output.values();
        b[t.segment] + t.frac * (b[t.segment + 1] - b[t.segment])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.value_at(&self.locate(x))
    }

    pub fn forward(&self, x: f64) -> (f64, CalibratorTrace) {
        let t = self.locate(x);
        (self.value_at(&t), t)
    }

    /// Accumulates output-value gradients and returns d(out)/d(x) * upstream.
    pub fn backward(&mut self, trace: &CalibratorTrace, upstream: f64) -> f64 {
        let CalibratorTrace { segment, frac, clamped } = *trace;
        let g = self.output.grad_mut();
        g[segment] += upstream * (1.0 - frac);
        g[segment + 1] += upstream * frac;
        if clamped {
            return 0.0;
        }
        let a = &self.input_keypoints;
        let b = self.output.values();
        upstream * (b[segment + 1] - b[segment]) / (a[segment + 1] - a[segment])
    }
}

/// Evaluates a calibrator elementwise.
pub fn calibrate(c: &Calibrator, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| c.eval(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(a: &[f64], b: &[f64]) -> Calibrator {
        Calibrator::new("c", a.to_vec(), b.to_vec(), false).unwrap()
    }

    #[test]
    fn identity() {
        assert!((cal(&[0.0, 1.0], &[0.0, 1.0]).eval(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn midpoint_of_first_segment() {
        assert_eq!(cal(&[0.0, 0.5, 1.0], &[0.0, 2.0, 3.0]).eval(0.25), 1.0);
    }

    #[test]
    fn clamps_on_both_sides() {
        let c = cal(&[0.0, 1.0], &[0.0, 1.0]);
        assert_eq!(c.eval(1.7), 1.0);
        assert_eq!(c.eval(-3.0), 0.0);
    }

    #[test]
    fn keypoint_hits_are_exact() {
        let c = cal(&[0.0, 0.5, 1.0], &[0.0, 2.0, 3.0]);
        assert_eq!(c.eval(0.5), 2.0);
        assert_eq!(c.eval(1.0), 3.0);
    }

    #[test]
    fn unsorted_keypoints_rejected() {
        assert!(Calibrator::new("c", vec![0.0, 0.0, 1.0], vec![0.0; 3], false).is_err());
        assert!(Calibrator::new("c", vec![1.0, 0.0], vec![0.0; 2], false).is_err());
        assert!(Calibrator::new("c", vec![0.0], vec![0.0], false).is_err());
    }

    #[test]
    fn backward_slope_and_value_grads() {
        let mut c = cal(&[0.0, 0.5, 1.0], &[0.0, 2.0, 3.0]);
        let (_, t) = c.forward(0.75);
        let dx = c.backward(&t, 1.0);
        assert!((dx - 2.0).abs() < 1e-12);
        assert_eq!(c.output().grad(), &[0.0, 0.5, 0.5]);
        let (_, t) = c.forward(4.0);
        assert_eq!(c.backward(&t, 1.0), 0.0);
    }

    #[test]
    fn data_quantile_keypoints() {
        let data: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let c = Calibrator::from_data_quantiles("c", &data, 5, true).unwrap();
        assert_eq!(c.keypoints(), &[0.0, 25.0, 50.0, 75.0, 100.0]);
        assert!(c.is_monotone());
        let ties = [1.0, 1.0, 1.0, 2.0];
        let c = Calibrator::from_data_quantiles("c", &ties, 4, false).unwrap();
        assert_eq!(c.keypoints(), &[1.0, 2.0]);
    }
}
