//! Point and probabilistic forecast scores, averaged over the horizon.
//!
//! Shapes: targets are `N x h`, quantile forecasts `N x Q x h`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eleven equidistant levels on `[0.025, 0.975]`.
pub const EVAL_QUANTILES: [f64; 11] = [
    0.025, 0.12, 0.215, 0.31, 0.405, 0.5, 0.595, 0.69, 0.785, 0.88, 0.975,
];

/// `tau * (y - f)` when `y >= f`, else `(1 - tau) * (f - y)`.
#[inline]
pub fn pinball(y: f64, f: f64, tau: f64) -> f64 {
    let d = y - f;
    if d >= 0.0 {
        tau * d
    } else {
        (tau - 1.0) * d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub nominal: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    /// Absent when no persistence reference was available.
    pub ss: Option<f64>,
    pub crps: f64,
    pub ace: f64,
    pub picp_curve: Vec<CurvePoint>,
    pub reliability_curve: Vec<CurvePoint>,
    pub crossover_rate: f64,
}

impl MetricReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Two-column `nominal,empirical` CSV.
pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("nominal,empirical\n");
    for p in curve {
        text.push_str(&format!("{},{}\n", p.nominal, p.empirical));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn same_shape(context: &str, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(context, a.shape(), b.shape()));
    }
    Ok(())
}

fn check_forecasts(y: &ArrayView2<f64>, f: &ArrayView3<f64>, taus: &[f64]) -> Result<()> {
    let (n, q, h) = f.dim();
    if y.dim() != (n, h) || q != taus.len() {
        return Err(Error::shape("quantile forecasts", &[y.nrows(), taus.len(), y.ncols()], &[n, q, h]));
    }
    if n == 0 || h == 0 || q == 0 {
        return Err(Error::InsufficientData("empty forecast array".into()));
    }
    Ok(())
}

/// Mean absolute error and root mean squared error, each computed per
/// horizon step over the samples and then averaged over steps.
pub fn point_metrics(y: ArrayView2<f64>, y_hat: ArrayView2<f64>) -> Result<(f64, f64)> {
    same_shape("point metrics", &y, &y_hat)?;
    let (n, h) = y.dim();
    if n == 0 || h == 0 {
        return Err(Error::InsufficientData("empty target array".into()));
    }
    let mut mae = 0.0;
    let mut rmse = 0.0;
    for (yc, fc) in y.axis_iter(Axis(1)).zip(y_hat.axis_iter(Axis(1))) {
        let (mut a, mut s) = (0.0, 0.0);
        for (t, p) in yc.iter().zip(fc.iter()) {
            a += (t - p).abs();
            s += (t - p) * (t - p);
        }
        mae += a / n as f64;
        rmse += (s / n as f64).sqrt();
    }
    Ok((mae / h as f64, rmse / h as f64))
}

/// Mean squared error over all cells.
pub fn mse(y: ArrayView2<f64>, y_hat: ArrayView2<f64>) -> Result<f64> {
    same_shape("mse", &y, &y_hat)?;
    if y.is_empty() {
        return Err(Error::InsufficientData("empty target array".into()));
    }
    Ok(y.iter().zip(y_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn skill_score(mse_f: f64, mse_p: f64) -> Result<f64> {
    if mse_p <= 0.0 || !mse_p.is_finite() {
        return Err(Error::InvalidArgument(format!("skill score undefined for reference MSE {mse_p}")));
    }
    Ok(1.0 - mse_f / mse_p)
}

/// Pinball loss summed over the quantile axis, averaged over samples and
/// horizon steps.
pub fn crps_approx(y: ArrayView2<f64>, forecasts: ArrayView3<f64>, taus: &[f64]) -> Result<f64> {
    check_forecasts(&y, &forecasts, taus)?;
    let (n, _, h) = forecasts.dim();
    let mut total = 0.0;
    for (i, &tau) in taus.iter().enumerate() {
        let fq = forecasts.index_axis(Axis(1), i);
        total += y.iter().zip(fq.iter()).map(|(&t, &f)| pinball(t, f, tau)).sum::<f64>();
    }
    Ok(total / (n * h) as f64)
}

/// Coverage of the central intervals formed by the pairs
/// `(taus[i], taus[Q-1-i])`, narrowest first. Bounds count as covered.
pub fn picp(y: ArrayView2<f64>, forecasts: ArrayView3<f64>, taus: &[f64]) -> Result<Vec<CurvePoint>> {
    check_forecasts(&y, &forecasts, taus)?;
    let q = taus.len();
    for i in 0..q / 2 {
        if (taus[i] + taus[q - 1 - i] - 1.0).abs() > 1e-9 || taus[i] >= taus[q - 1 - i] {
            return Err(Error::InvalidArgument(format!(
                "quantile grid is not symmetric about 0.5: {} and {}",
                taus[i],
                taus[q - 1 - i]
            )));
        }
    }
    let cells = y.len() as f64;
    let mut curve: Vec<CurvePoint> = (0..q / 2)
        .map(|i| {
            let lo = forecasts.index_axis(Axis(1), i);
            let hi = forecasts.index_axis(Axis(1), q - 1 - i);
            let inside = ndarray::Zip::from(&y)
                .and(&lo)
                .and(&hi)
                .fold(0usize, |acc, &t, &l, &u| acc + usize::from(l <= t && t <= u));
            CurvePoint {
                nominal: taus[q - 1 - i] - taus[i],
                empirical: inside as f64 / cells,
            }
        })
        .collect();
    curve.sort_by(|a, b| a.nominal.total_cmp(&b.nominal));
    Ok(curve)
}

/// Mean absolute gap between nominal and empirical coverage.
pub fn ace(curve: &[CurvePoint]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("coverage curve is empty".into()));
    }
    Ok(curve.iter().map(|p| (p.nominal - p.empirical).abs()).sum::<f64>() / curve.len() as f64)
}

/// Fraction of cells with `y <= forecast` at each quantile level.
pub fn reliability(y: ArrayView2<f64>, forecasts: ArrayView3<f64>, taus: &[f64]) -> Result<Vec<CurvePoint>> {
    check_forecasts(&y, &forecasts, taus)?;
    let cells = y.len() as f64;
    Ok(taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            let f = forecasts.index_axis(Axis(1), i);
            let below = y.iter().zip(f.iter()).filter(|(t, v)| t <= v).count();
            CurvePoint {
                nominal: tau,
                empirical: below as f64 / cells,
            }
        })
        .collect())
}

/// Median row of a forecast array, or the middle row for grids without 0.5.
pub fn median_forecast(forecasts: ArrayView3<f64>, taus: &[f64]) -> Array2<f64> {
    let idx = taus
        .iter()
        .position(|&t| (t - 0.5).abs() < 1e-9)
        .unwrap_or(taus.len() / 2);
    forecasts.index_axis(Axis(1), idx).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn grid_is_equidistant() {
        for (i, &t) in EVAL_QUANTILES.iter().enumerate() {
            assert!((t - (0.025 + 0.095 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn pinball_cases() {
        assert_eq!(pinball(1.0, 1.0, 0.3), 0.0);
        assert!((pinball(1.0, 0.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((pinball(0.0, 1.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn point_metric_cases() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(point_metrics(y.view(), y.view()).unwrap(), (0.0, 0.0));
        let off = &y + 0.5;
        let (mae, rmse) = point_metrics(y.view(), off.view()).unwrap();
        assert!((mae - 0.5).abs() < 1e-15 && (rmse - 0.5).abs() < 1e-15);
        // Step 0 errors [1, 0], step 1 errors [0, 2].
        let f = array![[2.0, 2.0], [3.0, 6.0]];
        let (mae, rmse) = point_metrics(y.view(), f.view()).unwrap();
        assert!((mae - 0.75).abs() < 1e-15);
        assert!((rmse - (0.5f64.sqrt() + 2f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!(point_metrics(y.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn skill_cases() {
        assert_eq!(skill_score(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(skill_score(0.0, 2.0).unwrap(), 1.0);
        assert_eq!(skill_score(4.0, 2.0).unwrap(), -1.0);
        assert!(skill_score(1.0, 0.0).is_err());
    }

    #[test]
    fn crps_of_perfect_forecast_is_zero() {
        let y = array![[1.0, 2.0]];
        let f = Array3::from_shape_fn((1, 3, 2), |(_, _, j)| y[[0, j]]);
        assert_eq!(crps_approx(y.view(), f.view(), &[0.1, 0.5, 0.9]).unwrap(), 0.0);
        assert!(crps_approx(y.view(), f.view(), &[0.5]).is_err());
    }

    #[test]
    fn picp_counting() {
        // Four samples, one step; 50% interval [0, 1]; three inside.
        let y = array![[0.5], [0.0], [1.0], [2.0]];
        let f = Array3::from_shape_fn((4, 3, 1), |(_, q, _)| q as f64 * 0.5);
        let c = picp(y.view(), f.view(), &[0.25, 0.5, 0.75]).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].nominal - 0.5).abs() < 1e-15);
        assert_eq!(c[0].empirical, 0.75);
        assert!(picp(y.view(), f.view(), &[0.2, 0.5, 0.7]).is_err());
    }

    #[test]
    fn ace_cases() {
        let c = |pairs: &[(f64, f64)]| -> Vec<CurvePoint> {
            pairs.iter().map(|&(nominal, empirical)| CurvePoint { nominal, empirical }).collect()
        };
        assert_eq!(ace(&c(&[(0.5, 0.5), (0.9, 0.9)])).unwrap(), 0.0);
        assert!((ace(&c(&[(0.2, 0.3), (0.6, 0.5)])).unwrap() - 0.1).abs() < 1e-15);
        assert!(ace(&[]).is_err());
    }

    #[test]
    fn reliability_all_below() {
        let y = array![[0.0, 1.0]];
        let f = Array3::from_elem((1, 2, 2), f64::MAX);
        let r = reliability(y.view(), f.view(), &[0.1, 0.9]).unwrap();
        assert!(r.iter().all(|p| p.empirical == 1.0));
    }

    #[test]
    fn report_serialises() {
        let r = MetricReport {
            mae: 1.0,
            rmse: 2.0,
            ss: None,
            crps: 0.5,
            ace: 0.1,
            picp_curve: vec![CurvePoint { nominal: 0.5, empirical: 0.4 }],
            reliability_curve: vec![],
            crossover_rate: 0.0,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v["ss"].is_null());
        assert_eq!(v["picp_curve"][0]["empirical"], 0.4);
    }
}
