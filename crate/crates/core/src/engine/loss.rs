use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::metrics::{pinball, EVAL_QUANTILES};

/// Mean pinball loss of `y_hat` against `y` at level `tau`.
pub fn pinball_loss(y: &[f64], y_hat: &[f64], tau: f64) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::shape("pinball loss", &[y.len()], &[y_hat.len()]));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("pinball loss of empty arrays".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("quantile level {tau} outside [0, 1]")));
    }
    Ok(y.iter().zip(y_hat).map(|(&a, &b)| pinball(a, b, tau)).sum::<f64>() / y.len() as f64)
}

/// Subgradient of [`pinball_loss`] with respect to `y_hat`, scaled by
/// `weight`; at a tie the `y >= y_hat` branch is used.
pub fn pinball_grad(y: &[f64], y_hat: &[f64], tau: f64, weight: f64, out: &mut [f64]) {
    let n = y.len() as f64;
    for ((g, &a), &b) in out.iter_mut().zip(y).zip(y_hat) {
        *g = weight * if a - b >= 0.0 { -tau } else { 1.0 - tau } / n;
    }
}

/// Loss of one sample's raw head output and its gradient.
///
/// Quantile-conditioned heads use pinball loss at `tau`; the fixed-quantile
/// head sums pinball losses over the evaluation grid; the point head uses
/// mean absolute error.
pub fn sample_loss(kind: HeadKind, target: &[f64], output: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let h = target.len();
    let mut grad = vec![0.0; output.len()];
    let loss = match kind {
        HeadKind::FixedQuantile => EVAL_QUANTILES
            .iter()
            .enumerate()
            .map(|(q, &t)| {
                let slice = &output[q * h..(q + 1) * h];
                pinball_grad(target, slice, t, 1.0, &mut grad[q * h..(q + 1) * h]);
                target.iter().zip(slice).map(|(&a, &b)| pinball(a, b, t)).sum::<f64>() / h as f64
            })
            .sum(),
        HeadKind::Point => {
            for ((g, &a), &b) in grad.iter_mut().zip(target).zip(output) {
                *g = if b > a { 1.0 } else if b < a { -1.0 } else { 0.0 } / h as f64;
            }
            target.iter().zip(output).map(|(a, b)| (a - b).abs()).sum::<f64>() / h as f64
        }
        _ => {
            pinball_grad(target, output, tau, 1.0, &mut grad);
            target.iter().zip(output).map(|(&a, &b)| pinball(a, b, tau)).sum::<f64>() / h as f64
        }
    };
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_cases() {
        assert_eq!(pinball_loss(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap(), 0.0);
        assert!((pinball_loss(&[1.0], &[0.0], 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((pinball_loss(&[0.0], &[1.0], 0.9).unwrap() - 0.1).abs() < 1e-15);
        assert!(pinball_loss(&[0.0], &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn median_is_half_mae() {
        let y = [0.3, -1.2, 4.0];
        let f = [1.0, 0.0, 2.5];
        let mae = y.iter().zip(&f).map(|(a, b): (&f64, &f64)| (a - b).abs()).sum::<f64>() / 3.0;
        assert!((pinball_loss(&y, &f, 0.5).unwrap() - mae / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let y = [0.5, 0.1];
        let f = [0.2, 0.4];
        let (l0, g) = sample_loss(HeadKind::Dln, &y, &f, 0.3);
        let eps = 1e-7;
        for i in 0..2 {
            let mut fp = f;
            fp[i] += eps;
            let (l1, _) = sample_loss(HeadKind::Dln, &y, &fp, 0.3);
            assert!(((l1 - l0) / eps - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_grid_loss_sums_levels() {
        let y = [1.0];
        let out = vec![0.0; 11];
        let (l, g) = sample_loss(HeadKind::FixedQuantile, &y, &out, f64::NAN);
        assert!((l - EVAL_QUANTILES.iter().sum::<f64>()).abs() < 1e-12);
        assert!((g[0] + 0.025).abs() < 1e-15);
    }
}
