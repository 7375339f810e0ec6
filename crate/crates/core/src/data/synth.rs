use std::f64::consts::TAU;

use chrono::{Datelike, NaiveDate, TimeDelta, Timelike};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DatasetConfig, SeriesDataset, Table};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Relative noise level of the heteroscedastic generator.
pub const HETEROSCEDASTIC_NOISE: f64 = 0.2;

const AMPLITUDE: f64 = 100.0;
const CLEAR_SKY_PEAK: f64 = 1000.0;
const RATIO_MEAN: f64 = 0.7;
const RATIO_PERSISTENCE: f64 = 0.95;
const RATIO_SHOCK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// `y = L(hour) * (1 + 0.2 * eps)`, clipped at 0, with `L` a diurnal
    /// clipped sine on a small floor.
    HeteroscedasticSine,
    /// A seasonal clear-sky curve times an AR(1) clearness ratio; the
    /// clear-sky curve is stored as column `clear_sky`.
    ClearSkyRamp,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heteroscedastic-sine" => Ok(SynthKind::HeteroscedasticSine),
            "clear-sky-ramp" => Ok(SynthKind::ClearSkyRamp),
            other => Err(Error::Config(format!(
                "unknown synthetic kind '{other}' (heteroscedastic-sine, clear-sky-ramp)"
            ))),
        }
    }
}

fn diurnal(hour: f64) -> f64 {
    (TAU * (hour - 6.0) / 24.0).sin().max(0.0)
}

/// Conditional scale of the heteroscedastic generator at an hour of day.
/// The target is `level * (1 + HETEROSCEDASTIC_NOISE * eps)` with standard
/// normal `eps`.
pub fn heteroscedastic_level(hour: u32) -> f64 {
    AMPLITUDE * (0.2 + diurnal(hour as f64))
}

/// Raw columns of a synthetic series starting 2020-01-01T00:00, hourly.
pub fn synth_table(kind: SynthKind, len: usize, seed: u64) -> Result<Table> {
    if len < 48 {
        return Err(Error::InsufficientData(format!("synthetic series needs at least 48 rows, got {len}")));
    }
    let mut rng = SeededRng::new(seed);
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let timestamps: Vec<_> = (0..len).map(|i| t0 + TimeDelta::hours(i as i64)).collect();
    let (columns, values) = match kind {
        SynthKind::HeteroscedasticSine => {
            let values = Array2::from_shape_fn((len, 1), |(i, _)| {
                let level = heteroscedastic_level(timestamps[i].hour());
                (level * (1.0 + HETEROSCEDASTIC_NOISE * rng.normal())).max(0.0)
            });
            (vec!["target".to_string()], values)
        }
        SynthKind::ClearSkyRamp => {
            let mut values = Array2::zeros((len, 2));
            let mut ratio = RATIO_MEAN;
            for (i, t) in timestamps.iter().enumerate() {
                let season = 0.8 + 0.2 * (TAU * (t.ordinal() as f64 - 172.0) / 365.0).cos();
                let clear = CLEAR_SKY_PEAK * season * diurnal(t.hour() as f64);
                ratio = (RATIO_MEAN + RATIO_PERSISTENCE * (ratio - RATIO_MEAN) + RATIO_SHOCK * rng.normal()).clamp(0.05, 1.0);
                values[[i, 0]] = ratio * clear;
                values[[i, 1]] = clear;
            }
            (vec!["target".to_string(), "clear_sky".to_string()], values)
        }
    };
    Ok(Table {
        timestamps,
        columns,
        values,
    })
}

/// Synthetic dataset with time features, default framing and 60/20/20
/// splits. Use [`SeriesDataset::with_framing`] for other windows.
pub fn synth_generate(kind: SynthKind, len: usize, seed: u64) -> Result<SeriesDataset> {
    let config = DatasetConfig {
        clear_sky: (kind == SynthKind::ClearSkyRamp).then(|| "clear_sky".to_string()),
        ..DatasetConfig::default()
    };
    SeriesDataset::new(synth_table(kind, len, seed)?, &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_nonnegative() {
        for kind in [SynthKind::HeteroscedasticSine, SynthKind::ClearSkyRamp] {
            let a = synth_table(kind, 500, 7).unwrap();
            assert_eq!(a, synth_table(kind, 500, 7).unwrap());
            assert_ne!(a.values, synth_table(kind, 500, 8).unwrap().values);
            assert!(a.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn clear_sky_column_is_registered() {
        let ds = synth_generate(SynthKind::ClearSkyRamp, 300, 1).unwrap();
        assert_eq!(ds.clear_sky_column(), Some(1));
        assert_eq!(ds.num_features(), 8);
        let raw = ds.raw();
        assert!(raw.rows().into_iter().all(|r| r[0] <= r[1] + 1e-12));
    }

    #[test]
    fn too_short() {
        assert!(synth_table(SynthKind::HeteroscedasticSine, 10, 0).is_err());
    }
}
