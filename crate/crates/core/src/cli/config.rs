//! The TOML experiment file.
//!
//! Every section and key is optional; omitted keys take the defaults shown
//! by `lattice-sqr print-config`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, synth_table, DatasetConfig, SeriesDataset, SynthKind};
use crate::embedding::LstmConfig;
use crate::engine::{ModelConfig, TauSampling, TrainConfig};
use crate::error::{Error, Result};
use crate::heads::{DlnHeadConfig, HeadConfig, HeadKind};
use crate::numerics::ScheduleRule;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataSection,
    pub embedding: EmbeddingSection,
    pub head: HeadSection,
    pub train: TrainSection,
    pub experiment: ExperimentSection,
    pub tune: TuneSection,
}

/// Source of the series (a CSV path or a synthetic generator) and framing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SynthKind>,
    /// Rows of the synthetic series.
    pub length: usize,
    pub synthetic_seed: u64,
    pub target: String,
    /// Defaults to `clear_sky` for the clear-sky-ramp generator.
    pub clear_sky: Option<String>,
    pub window: usize,
    pub horizon: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub time_features: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            path: None,
            synthetic: None,
            length: 5000,
            synthetic_seed: 0,
            target: d.target,
            clear_sky: d.clear_sky,
            window: d.window,
            horizon: d.horizon,
            train_fraction: d.train_fraction,
            val_fraction: d.val_fraction,
            time_features: d.time_features,
        }
    }
}

impl DataSection {
    pub fn dataset_config(&self) -> DatasetConfig {
        let clear_sky = match (&self.clear_sky, self.synthetic) {
            (Some(c), _) => Some(c.clone()),
            (None, Some(SynthKind::ClearSkyRamp)) => Some("clear_sky".into()),
            (None, _) => None,
        };
        DatasetConfig {
            target: self.target.clone(),
            clear_sky,
            window: self.window,
            horizon: self.horizon,
            train_fraction: self.train_fraction,
            val_fraction: self.val_fraction,
            time_features: self.time_features,
        }
    }

    pub fn load(&self) -> Result<SeriesDataset> {
        let cfg = self.dataset_config();
        match (&self.path, self.synthetic) {
            (Some(_), Some(_)) => Err(Error::Config("set only one of data.path and data.synthetic".into())),
            (None, None) => Err(Error::Config("data.path or data.synthetic is required".into())),
            (Some(p), None) => load_csv(p, &cfg),
            (None, Some(kind)) => SeriesDataset::new(synth_table(kind, self.length, self.synthetic_seed)?, &cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub hidden_size: usize,
    pub num_layers: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            hidden_size: 128,
            num_layers: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadSection {
    pub kind: HeadKind,
    pub feature_calib_keypoints: usize,
    pub quantile_calib_keypoints: usize,
    pub lattice_keypoints: usize,
    pub output_calib_keypoints: usize,
    pub lattice_input_size: usize,
    /// Hidden width of the MLP head; the embedding size when absent.
    pub mlp_width: Option<usize>,
}

impl Default for HeadSection {
    fn default() -> Self {
        let d = DlnHeadConfig::default();
        Self {
            kind: HeadKind::Dln,
            feature_calib_keypoints: d.feature_calib_keypoints,
            quantile_calib_keypoints: d.quantile_calib_keypoints,
            lattice_keypoints: d.lattice_keypoints,
            output_calib_keypoints: d.output_calib_keypoints,
            lattice_input_size: d.lattice_input_size,
            mlp_width: None,
        }
    }
}

/// Overrides on top of the per-head defaults of [`TrainConfig::defaults_for`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: u64,
    pub epochs: Option<usize>,
    /// Replaces the head's initial learning rate.
    pub learning_rate: Option<f64>,
    /// Replaces the head's step rules.
    pub schedule: Option<Vec<ScheduleRule>>,
    pub batch_size: usize,
    pub tau_sampling: TauSampling,
    pub early_stopping_patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::defaults_for(HeadKind::Dln);
        Self {
            seed: 0,
            epochs: None,
            learning_rate: None,
            schedule: None,
            batch_size: d.batch_size,
            tau_sampling: d.tau_sampling,
            early_stopping_patience: d.early_stopping_patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub heads: Vec<HeadKind>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            heads: HeadKind::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

/// Grid axes for `tune`. Keypoint axes only matter for the lattice head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    pub epochs: usize,
    /// The train section's rate (or the head default) when absent.
    pub learning_rate: Option<Vec<f64>>,
    /// Keypoint axes default to the head section's single value.
    pub feature_calib_keypoints: Option<Vec<usize>>,
    pub quantile_calib_keypoints: Option<Vec<usize>>,
    pub lattice_keypoints: Option<Vec<usize>>,
    pub output_calib_keypoints: Option<Vec<usize>>,
    pub lattice_input_size: Option<Vec<usize>>,
    /// Second pass at midpoints between the best point and its grid
    /// neighbours.
    pub refine: bool,
    /// Lattice vertex cap; larger trials are skipped.
    pub max_params: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            epochs: 3,
            learning_rate: None,
            feature_calib_keypoints: None,
            quantile_calib_keypoints: None,
            lattice_keypoints: None,
            output_calib_keypoints: None,
            lattice_input_size: None,
            refine: false,
            max_params: 5_000_000,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads a config file. A relative `data.path` is resolved against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(p) = cfg.data.path.as_mut() {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new("")).join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn head_config(&self, kind: HeadKind) -> HeadConfig {
        let h = &self.head;
        let mut cfg = HeadConfig::new(kind, self.data.horizon);
        cfg.dln = DlnHeadConfig {
            feature_calib_keypoints: h.feature_calib_keypoints,
            quantile_calib_keypoints: h.quantile_calib_keypoints,
            lattice_keypoints: h.lattice_keypoints,
            output_calib_keypoints: h.output_calib_keypoints,
            lattice_input_size: h.lattice_input_size,
            horizon: self.data.horizon,
        };
        cfg.mlp_width = h.mlp_width;
        cfg
    }

    /// Model shape for `kind` on a dataset with `input_features` columns.
    pub fn model_config(&self, kind: HeadKind, input_features: usize) -> ModelConfig {
        ModelConfig {
            embedding: LstmConfig {
                input_features,
                hidden_size: self.embedding.hidden_size,
                num_layers: self.embedding.num_layers,
                window: self.data.window,
            },
            head: self.head_config(kind),
        }
    }

    pub fn train_config(&self, kind: HeadKind, seed: u64) -> TrainConfig {
        let t = &self.train;
        let mut cfg = TrainConfig::defaults_for(kind);
        if let Some(e) = t.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = t.learning_rate {
            cfg.scheduler.base_lr = lr;
        }
        if let Some(rules) = &t.schedule {
            cfg.scheduler.rules = rules.clone();
        }
        cfg.batch_size = t.batch_size;
        cfg.tau_sampling = t.tau_sampling;
        cfg.early_stopping_patience = t.early_stopping_patience;
        cfg.seed = seed;
        cfg
    }
}
