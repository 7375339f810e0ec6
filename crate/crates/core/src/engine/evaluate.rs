use ndarray::{Array2, Axis};

use super::model::{crossover_counts, SqrModel};
use super::train::forecast_split;
use crate::data::{SeriesDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{
    ace, crps_approx, median_forecast, mse, picp, point_metrics, reliability, skill_score, MetricReport, EVAL_QUANTILES,
};

const DAY: usize = 24;

/// Clear-sky-scaled persistence forecast.
///
/// `observed` ends at the last observed hour; `clear_sky` holds the 24
/// hours ending there followed by `horizon` future hours. Step `j` (1-based)
/// uses the observed/clear-sky ratio at past hour `(j - 1) mod 24` of that
/// day. Hours with zero clear-sky value have ratio 0.
pub fn smart_persistence(observed: &[f64], clear_sky: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if observed.len() < DAY {
        return Err(Error::InsufficientData(format!(
            "persistence needs 24 past observations, got {}",
            observed.len()
        )));
    }
    if clear_sky.len() < DAY + horizon {
        return Err(Error::InsufficientData(format!(
            "persistence needs {} clear-sky values, got {}",
            DAY + horizon,
            clear_sky.len()
        )));
    }
    let past = &observed[observed.len() - DAY..];
    Ok((0..horizon)
        .map(|j| {
            let t = j % DAY;
            let ratio = if clear_sky[t] == 0.0 { 0.0 } else { past[t] / clear_sky[t] };
            ratio * clear_sky[DAY + j]
        })
        .collect())
}

/// Persistence forecasts in physical units for every sample of `split`,
/// or `None` when the dataset has no clear-sky column.
pub fn persistence_split(data: &SeriesDataset, split: Split) -> Result<Option<Array2<f64>>> {
    let Some(cs) = data.clear_sky_column() else {
        return Ok(None);
    };
    let raw = data.raw();
    let target = raw.column(data.target_column());
    let clear = raw.column(cs);
    let starts = data.sample_starts(split)?;
    let h = data.horizon();
    let mut out = Array2::zeros((starts.len(), h));
    for (i, s) in starts.enumerate() {
        let t0 = s + data.window();
        if t0 < DAY {
            return Err(Error::InsufficientData(format!("sample at row {s} has less than a day of history")));
        }
        let observed: Vec<f64> = target.slice(ndarray::s![t0 - DAY..t0]).to_vec();
        let cs_vals: Vec<f64> = clear.slice(ndarray::s![t0 - DAY..t0 + h]).to_vec();
        let f = smart_persistence(&observed, &cs_vals, h)?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&f));
    }
    Ok(Some(out))
}

/// Every metric for `split` in physical units, on the evaluation grid.
pub fn evaluate_split(model: &SqrModel, data: &SeriesDataset, split: Split) -> Result<MetricReport> {
    let taus = &EVAL_QUANTILES;
    let (scaled, _) = forecast_split(model, data, split, taus)?;
    let p = data.scale_params()[data.target_column()];
    let forecasts = scaled.mapv(|v| p.invert(v));
    let starts = data.sample_starts(split)?;
    let mut y = Array2::zeros((starts.len(), data.horizon()));
    for (i, s) in starts.enumerate() {
        y.row_mut(i).assign(&data.raw_target_at(s));
    }
    let median = median_forecast(forecasts.view(), taus);
    let (mae, rmse) = point_metrics(y.view(), median.view())?;
    let crps = crps_approx(y.view(), forecasts.view(), taus)?;
    let picp_curve = picp(y.view(), forecasts.view(), taus)?;
    let ace = ace(&picp_curve)?;
    let reliability_curve = reliability(y.view(), forecasts.view(), taus)?;
    let (mut violations, mut pairs) = (0, 0);
    for sample in forecasts.axis_iter(Axis(0)) {
        let (v, p) = crossover_counts(&sample);
        violations += v;
        pairs += p;
    }
    let ss = match persistence_split(data, split)? {
        Some(pers) => {
            let mse_p = mse(y.view(), pers.view())?;
            let mse_f = mse(y.view(), median.view())?;
            Some(skill_score(mse_f, mse_p)?)
        }
        None => {
            log::warn!("dataset has no clear-sky column; skill score omitted");
            None
        }
    };
    Ok(MetricReport {
        mae,
        rmse,
        ss,
        crps,
        ace,
        picp_curve,
        reliability_curve,
        crossover_rate: if pairs == 0 { 0.0 } else { violations as f64 / pairs as f64 },
    })
}
