//! Hourly multivariate series: loading, min-max scaling, circular time
//! features, chronological splits and window sampling.

mod load;
mod synth;

use std::ops::Range;

use chrono::{Datelike, NaiveDateTime, TimeDelta, Timelike};
use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use load::{load_csv, read_table, write_table, Table};
pub use synth::{heteroscedastic_level, synth_generate, synth_table, SynthKind, HETEROSCEDASTIC_NOISE};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const TIME_FEATURE_NAMES: [&str; 6] = ["hour_sin", "hour_cos", "weekday_sin", "weekday_cos", "week_sin", "week_cos"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "val")]
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}' (train, val, test)"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        })
    }
}

/// Column names and framing for building a dataset from a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub target: String,
    pub clear_sky: Option<String>,
    pub window: usize,
    pub horizon: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub time_features: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            target: "target".into(),
            clear_sky: None,
            window: 96,
            horizon: 36,
            train_fraction: 0.6,
            val_fraction: 0.2,
            time_features: true,
        }
    }
}

/// Min-max transform of one column. Constant columns map to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: f64,
    pub max: f64,
}

impl ScaleParams {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if min.is_finite() {
            Self { min, max }
        } else {
            Self { min: 0.0, max: 0.0 }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        self.min + x * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitBounds {
    pub fn chronological(len: usize, train_fraction: f64, val_fraction: f64) -> Result<Self> {
        let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
        if !ok(train_fraction) || !ok(val_fraction) || train_fraction + val_fraction > 1.0 || train_fraction == 0.0 {
            return Err(Error::Config(format!(
                "split fractions must be in [0, 1] with a nonempty train split and sum <= 1, got {train_fraction} and {val_fraction}"
            )));
        }
        let n_train = (len as f64 * train_fraction).floor() as usize;
        let n_val = (len as f64 * val_fraction).floor() as usize;
        Ok(Self {
            train: 0..n_train,
            validation: n_train..n_train + n_val,
            test: n_train + n_val..len,
        })
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Validation => self.validation.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

/// Scaled hourly series with a target column and chronological splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    timestamps: Vec<NaiveDateTime>,
    columns: Vec<String>,
    raw: Array2<f64>,
    features: Array2<f64>,
    target_column: usize,
    clear_sky_column: Option<usize>,
    scale: Vec<ScaleParams>,
    splits: SplitBounds,
    window: usize,
    horizon: usize,
}

/// Windows `N x w x F`, scaled targets `N x h`, and the start index of
/// each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub starts: Vec<usize>,
    pub inputs: Array3<f64>,
    pub targets: Array2<f64>,
}

fn check_hourly(timestamps: &[NaiveDateTime]) -> Result<()> {
    for (i, w) in timestamps.windows(2).enumerate() {
        let step = w[1] - w[0];
        if step == TimeDelta::zero() {
            return Err(Error::InvalidArgument(format!("duplicate timestamp {} at row {}", w[1], i + 1)));
        }
        if step != TimeDelta::hours(1) {
            return Err(Error::InvalidArgument(format!(
                "series is not hourly: {} follows {} at row {}",
                w[1],
                w[0],
                i + 1
            )));
        }
    }
    Ok(())
}

/// Sine/cosine pairs of hour of day (period 24), day of week (period 7) and
/// ISO week of year (period 52), one row per timestamp.
pub fn time_feature_columns(timestamps: &[NaiveDateTime]) -> Array2<f64> {
    use std::f64::consts::TAU;
    let mut out = Array2::zeros((timestamps.len(), 6));
    for (i, t) in timestamps.iter().enumerate() {
        let angles = [
            TAU * t.hour() as f64 / 24.0,
            TAU * t.weekday().num_days_from_monday() as f64 / 7.0,
            TAU * t.iso_week().week() as f64 / 52.0,
        ];
        for (j, a) in angles.iter().enumerate() {
            out[[i, 2 * j]] = a.sin();
            out[[i, 2 * j + 1]] = a.cos();
        }
    }
    out
}

impl SeriesDataset {
    /// Builds a dataset from raw columns. Scaling is fitted on the training
    /// split only.
    pub fn new(table: Table, config: &DatasetConfig) -> Result<Self> {
        let Table {
            timestamps,
            columns,
            values,
        } = table;
        if values.nrows() != timestamps.len() || values.ncols() != columns.len() {
            return Err(Error::shape(
                "table",
                &[timestamps.len(), columns.len()],
                &[values.nrows(), values.ncols()],
            ));
        }
        if timestamps.is_empty() || columns.is_empty() {
            return Err(Error::InsufficientData("dataset needs at least one row and one feature column".into()));
        }
        check_hourly(&timestamps)?;
        if config.window == 0 || config.horizon == 0 {
            return Err(Error::Config("window and horizon must be positive".into()));
        }
        let find = |name: &str| {
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Config(format!("column '{name}' not found; have {columns:?}")))
        };
        let target_column = find(&config.target)?;
        let clear_sky_column = config.clear_sky.as_deref().map(find).transpose()?;
        let splits = SplitBounds::chronological(timestamps.len(), config.train_fraction, config.val_fraction)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input cell {}", i)));
        }
        let mut ds = Self {
            features: Array2::zeros(values.dim()),
            timestamps,
            columns,
            raw: values,
            target_column,
            clear_sky_column,
            scale: Vec::new(),
            splits,
            window: config.window,
            horizon: config.horizon,
        };
        ds.refit_scaling();
        if config.time_features {
            ds = ds.add_time_features()?;
        }
        Ok(ds)
    }

    fn refit_scaling(&mut self) {
        let train = self.raw.slice(s![self.splits.train.clone(), ..]);
        self.scale = train.axis_iter(Axis(1)).map(|c| ScaleParams::fit(c.iter())).collect();
        self.features = self.raw.clone();
        for (mut col, p) in self.features.axis_iter_mut(Axis(1)).zip(&self.scale) {
            col.mapv_inplace(|x| p.apply(x));
        }
    }

    /// Appends the six circular calendar columns and refits the scaling.
    pub fn add_time_features(mut self) -> Result<Self> {
        if let Some(name) = TIME_FEATURE_NAMES.iter().find(|n| self.columns.iter().any(|c| c == *n)) {
            return Err(Error::InvalidArgument(format!("time feature column '{name}' already present")));
        }
        let extra = time_feature_columns(&self.timestamps);
        self.raw = ndarray::concatenate(Axis(1), &[self.raw.view(), extra.view()]).expect("row counts agree");
        self.columns.extend(TIME_FEATURE_NAMES.iter().map(|s| s.to_string()));
        self.refit_scaling();
        Ok(self)
    }

    /// Replaces the fitted scaling, e.g. with the parameters a model was
    /// trained under.
    pub fn with_scaling(mut self, scale: Vec<ScaleParams>) -> Result<Self> {
        if scale.len() != self.columns.len() {
            return Err(Error::shape("scale parameters", &[self.columns.len()], &[scale.len()]));
        }
        self.scale = scale;
        self.features = self.raw.clone();
        for (mut col, p) in self.features.axis_iter_mut(Axis(1)).zip(&self.scale) {
            col.mapv_inplace(|x| p.apply(x));
        }
        Ok(self)
    }

    /// Same data with a different window and horizon.
    pub fn with_framing(mut self, window: usize, horizon: usize) -> Result<Self> {
        if window == 0 || horizon == 0 {
            return Err(Error::Config("window and horizon must be positive".into()));
        }
        self.window = window;
        self.horizon = horizon;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn raw(&self) -> ArrayView2<'_, f64> {
        self.raw.view()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn target_column(&self) -> usize {
        self.target_column
    }

    pub fn clear_sky_column(&self) -> Option<usize> {
        self.clear_sky_column
    }

    pub fn scale_params(&self) -> &[ScaleParams] {
        &self.scale
    }

    pub fn splits(&self) -> &SplitBounds {
        &self.splits
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Start indices of every window whose horizon stays inside `split`.
    pub fn sample_starts(&self, split: Split) -> Result<Range<usize>> {
        let r = self.splits.range(split);
        let need = self.window + self.horizon;
        if r.len() < need {
            return Err(Error::InsufficientData(format!(
                "{split} split has {} rows, need at least window + horizon = {need}",
                r.len()
            )));
        }
        Ok(r.start..r.end - need + 1)
    }

    pub fn sample_count(&self, split: Split) -> Result<usize> {
        Ok(self.sample_starts(split)?.len())
    }

    /// Scaled input window starting at `start`.
    pub fn window_at(&self, start: usize) -> ArrayView2<'_, f64> {
        self.features.slice(s![start..start + self.window, ..])
    }

    /// Scaled target over the horizon following the window at `start`.
    pub fn target_at(&self, start: usize) -> ArrayView1<'_, f64> {
        let t0 = start + self.window;
        self.features.slice(s![t0..t0 + self.horizon, self.target_column])
    }

    /// Target over the horizon in physical units.
    pub fn raw_target_at(&self, start: usize) -> ArrayView1<'_, f64> {
        let t0 = start + self.window;
        self.raw.slice(s![t0..t0 + self.horizon, self.target_column])
    }

    /// Maps scaled target values back to physical units.
    pub fn inverse_scale(&self, values: &[f64]) -> Vec<f64> {
        let p = self.scale[self.target_column];
        values.iter().map(|&v| p.invert(v)).collect()
    }

    pub fn batch(&self, starts: &[usize]) -> Batch {
        let (w, h, f) = (self.window, self.horizon, self.num_features());
        let mut inputs = Array3::zeros((starts.len(), w, f));
        let mut targets = Array2::zeros((starts.len(), h));
        for (i, &s0) in starts.iter().enumerate() {
            inputs.index_axis_mut(Axis(0), i).assign(&self.window_at(s0));
            targets.row_mut(i).assign(&self.target_at(s0));
        }
        Batch {
            starts: starts.to_vec(),
            inputs,
            targets,
        }
    }
}

/// Minibatches over `split`. The training split is shuffled with `rng`;
/// the others come in chronological order.
pub fn window_iter<'a>(
    ds: &'a SeriesDataset,
    split: Split,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<impl Iterator<Item = Batch> + 'a> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = ds.sample_starts(split)?.collect();
    if split == Split::Train {
        rng.shuffle(&mut order);
    }
    Ok((0..order.len().div_ceil(batch_size)).map(move |b| {
        let end = ((b + 1) * batch_size).min(order.len());
        ds.batch(&order[b * batch_size..end])
    }))
}

/// Free-function form of [`SeriesDataset::inverse_scale`].
pub fn inverse_scale(ds: &SeriesDataset, values: &[f64]) -> Vec<f64> {
    ds.inverse_scale(values)
}

/// Free-function form of [`SeriesDataset::add_time_features`].
pub fn add_time_features(ds: SeriesDataset) -> Result<SeriesDataset> {
    ds.add_time_features()
}
