use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embedding::{Lstm, LstmConfig};
use crate::error::{Error, Result};
use crate::heads::{Head, HeadConfig};
use crate::numerics::{Checkpoint, ParameterBlock, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding: LstmConfig,
    pub head: HeadConfig,
}

/// LSTM embedding followed by an output head.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrModel {
    config: ModelConfig,
    lstm: Lstm,
    head: Head,
}

impl SqrModel {
    /// Initialises both parts from one seeded stream, LSTM first.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let lstm = Lstm::new(config.embedding, &mut rng)?;
        let head = Head::new(&config.head, config.embedding.hidden_size, &mut rng)?;
        Ok(Self { config, lstm, head })
    }

    pub fn from_parts(lstm: Lstm, head: Head) -> Result<Self> {
        let mut head_config = HeadConfig::new(head.kind(), head.horizon());
        match &head {
            Head::Dln(d) => head_config.dln = *d.config(),
            Head::Mlp(_) => head_config.mlp_width = Some(head.blocks()[1].len()),
            _ => {}
        }
        let config = ModelConfig {
            embedding: *lstm.config(),
            head: head_config,
        };
        Ok(Self { config, lstm, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn lstm(&self) -> &Lstm {
        &self.lstm
    }

    pub fn lstm_mut(&mut self) -> &mut Lstm {
        &mut self.lstm
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        &mut self.head
    }

    pub fn horizon(&self) -> usize {
        self.head.horizon()
    }

    pub fn blocks(&self) -> Vec<&ParameterBlock> {
        let mut v = self.lstm.blocks();
        v.extend(self.head.blocks());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        let mut v = self.lstm.blocks_mut();
        v.extend(self.head.blocks_mut());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.blocks_mut().into_iter().for_each(ParameterBlock::zero_grad);
    }

    /// Projects every constrained block onto its feasible set.
    pub fn project(&mut self) {
        self.blocks_mut().into_iter().for_each(ParameterBlock::apply_constraints);
    }

    pub fn constraints_hold(&self, tol: f64) -> bool {
        self.blocks().iter().all(|b| b.satisfies_constraint(tol))
    }

    /// Parameter values of every block, in block order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.blocks().iter().map(|b| b.values().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        let mut blocks = self.blocks_mut();
        if blocks.len() != snapshot.len() {
            return Err(Error::shape("model snapshot", &[blocks.len()], &[snapshot.len()]));
        }
        for (b, v) in blocks.iter_mut().zip(snapshot) {
            b.set_values(v.clone())?;
        }
        Ok(())
    }

    /// Copies values from a checkpoint into blocks of the same name and
    /// shape. Every block must be present.
    pub fn load_parameters(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for b in self.blocks_mut() {
            let src = ckpt
                .block(b.name())
                .ok_or_else(|| Error::Checkpoint(format!("block '{}' missing", b.name())))?;
            if src.shape() != b.shape() || src.constraint() != b.constraint() {
                return Err(Error::Checkpoint(format!(
                    "block '{}' has shape {:?} in the checkpoint, model expects {:?}",
                    b.name(),
                    src.shape(),
                    b.shape()
                )));
            }
            b.set_values(src.values().to_vec())?;
        }
        Ok(())
    }
}

/// Forecasts for several quantile levels from one window. Row `i` of
/// `values` is the `h`-step forecast at `taus[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBatch {
    pub taus: Vec<f64>,
    pub values: Array2<f64>,
    /// Row index of the first forecast step in the source series.
    pub origin: usize,
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("at least one quantile level is required".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("quantile level {t} outside [0, 1]")));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

/// One embedding pass, then one head pass per quantile level.
pub fn exploit(model: &SqrModel, window: ArrayView2<f64>, taus: &[f64]) -> Result<ForecastBatch> {
    check_taus(taus)?;
    let embedding = model.lstm.embed(window)?;
    let h = model.horizon();
    let mut values = Array2::zeros((taus.len(), h));
    for (i, &tau) in taus.iter().enumerate() {
        let y = model.head.predict(&embedding, tau)?;
        values.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
    }
    Ok(ForecastBatch {
        taus: taus.to_vec(),
        values,
        origin: 0,
    })
}

/// Fraction of (adjacent quantile pair, horizon step) cells where the
/// higher level's forecast is below the lower one's by more than 1e-12.
pub fn crossover_rate(batch: &ForecastBatch) -> f64 {
    let (violations, pairs) = crossover_counts(&batch.values.view());
    if pairs == 0 {
        0.0
    } else {
        violations as f64 / pairs as f64
    }
}

/// Violation and pair counts of a `Q x h` array, for pooling over batches.
pub fn crossover_counts(values: &ArrayView2<f64>) -> (usize, usize) {
    let (q, h) = values.dim();
    if q < 2 {
        return (0, 0);
    }
    let mut violations = 0;
    for i in 0..q - 1 {
        for j in 0..h {
            if values[[i + 1, j]] < values[[i, j]] - 1e-12 {
                violations += 1;
            }
        }
    }
    (violations, (q - 1) * h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub mean_seconds: f64,
    /// Population variance over the repeats.
    pub variance_seconds: f64,
    pub repeats: usize,
    pub parameter_count: usize,
}

/// Wall-clock statistics of [`exploit`] after one untimed warm-up call.
pub fn timing_probe(model: &SqrModel, window: ArrayView2<f64>, taus: &[f64], repeats: usize) -> Result<TimingReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    exploit(model, window, taus)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(exploit(model, window, taus)?);
        times.push(t.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / repeats as f64;
    let variance = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / repeats as f64;
    Ok(TimingReport {
        mean_seconds: mean,
        variance_seconds: variance,
        repeats,
        parameter_count: model.parameter_count(),
    })
}
