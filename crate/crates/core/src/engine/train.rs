use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::loss::sample_loss;
use super::model::{exploit, SqrModel};
use crate::data::{window_iter, SeriesDataset, Split};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::metrics::{crps_approx, EVAL_QUANTILES};
use crate::numerics::{Adam, ScheduleRule, Scheduler, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauSampling {
    /// One level shared by every sample of a minibatch.
    #[default]
    PerBatch,
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub scheduler: Scheduler,
    pub seed: u64,
    pub tau_sampling: TauSampling,
    /// Epochs without a new best validation CRPS before stopping; 0 never
    /// stops early.
    pub early_stopping_patience: usize,
}

impl TrainConfig {
    /// Per-head epochs, learning rate and schedule.
    pub fn defaults_for(kind: HeadKind) -> Self {
        let at = |epochs: &[usize], factor| ScheduleRule::StepAtEpochs {
            epochs: epochs.to_vec(),
            factor,
        };
        let rise = |patience, factor| ScheduleRule::StepOnIncrease { patience, factor };
        let (epochs, scheduler) = match kind {
            HeadKind::Mlp => (30, Scheduler::constant(1e-3).with_rule(rise(1, 0.1))),
            HeadKind::Point => (10, Scheduler::constant(1e-3).with_rule(at(&[1, 2, 3], 0.1)).with_rule(rise(1, 0.1))),
            HeadKind::Linear => (20, Scheduler::constant(1e-3).with_rule(rise(2, 0.1))),
            HeadKind::ConstrainedLinear => {
                (300, Scheduler::constant(0.1).with_rule(at(&[1, 2], 0.01)).with_rule(rise(1, 0.1)))
            }
            HeadKind::FixedQuantile => {
                (250, Scheduler::constant(1e-3).with_rule(at(&[1, 2, 3], 0.1)).with_rule(rise(1, 0.1)))
            }
            HeadKind::Dln => (10, Scheduler::constant(1e-3).with_rule(at(&[1, 2, 3, 4], 0.5))),
        };
        Self {
            epochs,
            batch_size: 64,
            scheduler,
            seed: 0,
            tau_sampling: TauSampling::PerBatch,
            early_stopping_patience: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.scheduler.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_crps: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub logs: Vec<EpochLog>,
    /// Validation CRPS before the first epoch.
    pub initial_val_crps: f64,
    /// 1-based epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn val_crps_trace(&self) -> Vec<f64> {
        self.logs.iter().map(|l| l.val_crps).collect()
    }

    pub fn best_val_crps(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.logs[e - 1].val_crps)
    }
}

/// Anything that can be trained epoch by epoch and scored on validation
/// data. [`fit`] drives the schedule and early stopping.
pub trait EpochModel {
    type State;

    /// Runs one epoch at `lr` and returns the mean training loss. `epoch`
    /// is 0-based.
    fn train_epoch(&mut self, lr: f64, epoch: usize) -> Result<f64>;
    fn validation_crps(&mut self) -> Result<f64>;
    fn state(&self) -> Self::State;
    fn restore(&mut self, state: Self::State) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub scheduler: Scheduler,
    pub early_stopping_patience: usize,
}

/// Epoch loop with scheduled learning rate, early stopping on validation
/// CRPS and restoration of the best epoch's state.
pub fn fit<M: EpochModel>(model: &mut M, cfg: &FitConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainReport> {
    cfg.scheduler.validate()?;
    let initial_val_crps = if cfg.epochs > 0 { model.validation_crps()? } else { f64::NAN };
    let mut logs: Vec<EpochLog> = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, M::State)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        let lr = cfg.scheduler.learning_rate(epoch, &history);
        let train_loss = model.train_epoch(lr, epoch)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                detail: format!("training loss {train_loss}"),
            });
        }
        let val_crps = model.validation_crps()?;
        if !val_crps.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                detail: format!("validation CRPS {val_crps}"),
            });
        }
        history.push(val_crps);
        let log = EpochLog {
            epoch: epoch + 1,
            train_loss,
            val_crps,
            lr,
        };
        log::info!("epoch {} loss {:.6} val_crps {:.6} lr {:.3e}", log.epoch, train_loss, val_crps, lr);
        on_epoch(&log);
        logs.push(log);
        if best.as_ref().is_none_or(|(_, c, _)| val_crps < *c) {
            best = Some((epoch + 1, val_crps, model.state()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stopping_patience > 0 && since_best >= cfg.early_stopping_patience {
                stopped_early = true;
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((e, _, state)) => {
            if e != logs.len() {
                model.restore(state)?;
            }
            Some(e)
        }
        None => None,
    };
    Ok(TrainReport {
        logs,
        initial_val_crps,
        best_epoch,
        stopped_early,
    })
}

/// Forecasts on the evaluation grid for every sample of `split`, in scaled
/// units: `N x 11 x h` forecasts and `N x h` targets.
pub fn forecast_split(model: &SqrModel, data: &SeriesDataset, split: Split, taus: &[f64]) -> Result<(Array3<f64>, Array2<f64>)> {
    let starts = data.sample_starts(split)?;
    let h = model.horizon();
    if h != data.horizon() {
        return Err(Error::shape("model vs dataset horizon", &[data.horizon()], &[h]));
    }
    let n = starts.len();
    let mut forecasts = Array3::zeros((n, taus.len(), h));
    let mut targets = Array2::zeros((n, h));
    for (i, s) in starts.enumerate() {
        let batch = exploit(model, data.window_at(s), taus)?;
        forecasts.index_axis_mut(Axis(0), i).assign(&batch.values);
        targets.row_mut(i).assign(&data.target_at(s));
    }
    Ok((forecasts, targets))
}

/// Approximate CRPS on the validation split in scaled units.
pub fn validation_crps(model: &SqrModel, data: &SeriesDataset) -> Result<f64> {
    let (f, y) = forecast_split(model, data, Split::Validation, &EVAL_QUANTILES)?;
    crps_approx(y.view(), f.view(), &EVAL_QUANTILES)
}

struct SqrTrainer<'a> {
    model: &'a mut SqrModel,
    data: &'a SeriesDataset,
    cfg: &'a TrainConfig,
    adam: Adam,
    rng: SeededRng,
}

impl SqrTrainer<'_> {
    fn batch_step(&mut self, batch: &crate::data::Batch, lr: f64) -> Result<f64> {
        let kind = self.model.head().kind();
        let n = batch.starts.len();
        let batch_tau = self.rng.uniform();
        self.model.zero_grad();
        let mut total = 0.0;
        for i in 0..n {
            let tau = match self.cfg.tau_sampling {
                TauSampling::PerBatch => batch_tau,
                TauSampling::PerSample => self.rng.uniform(),
            };
            let (embedding, cache) = self.model.lstm().forward(batch.inputs.index_axis(Axis(0), i))?;
            let (out, head_cache) = self.model.head().forward(&embedding, tau)?;
            let target = batch.targets.row(i);
            let (loss, mut grad) = sample_loss(kind, target.as_slice().expect("row of a standard array"), &out, tau);
            total += loss;
            grad.iter_mut().for_each(|g| *g /= n as f64);
            let d_embedding = self.model.head_mut().backward(&head_cache, &grad)?;
            self.model.lstm_mut().backward(&cache, &d_embedding)?;
        }
        self.adam.learning_rate = lr;
        self.adam.step(&mut self.model.blocks_mut())?;
        self.model.project();
        Ok(total / n as f64)
    }
}

impl EpochModel for SqrTrainer<'_> {
    type State = Vec<Vec<f64>>;

    fn train_epoch(&mut self, lr: f64, epoch: usize) -> Result<f64> {
        let batches: Vec<_> = window_iter(self.data, Split::Train, self.cfg.batch_size, &mut self.rng)?.collect();
        let mut sum = 0.0;
        let mut count = 0;
        for batch in &batches {
            let loss = self.batch_step(batch, lr)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    detail: format!("minibatch loss {loss}"),
                });
            }
            sum += loss * batch.starts.len() as f64;
            count += batch.starts.len();
        }
        if !self.model.constraints_hold(1e-9) {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                detail: "a constrained block left its feasible set".into(),
            });
        }
        Ok(sum / count.max(1) as f64)
    }

    fn validation_crps(&mut self) -> Result<f64> {
        validation_crps(self.model, self.data)
    }

    fn state(&self) -> Self::State {
        self.model.snapshot()
    }

    fn restore(&mut self, state: Self::State) -> Result<()> {
        self.model.restore(&state)
    }
}

/// Trains `model` on the training split of `data`, scoring every epoch on
/// the validation split. `on_epoch` sees each log line as it is produced.
pub fn train_with_log(
    model: &mut SqrModel,
    data: &SeriesDataset,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    let expected = [data.window(), data.num_features(), data.horizon()];
    let e = model.config().embedding;
    let actual = [e.window, e.input_features, model.horizon()];
    if expected != actual {
        return Err(Error::shape("model (window, features, horizon) vs dataset", &expected, &actual));
    }
    let mut trainer = SqrTrainer {
        model,
        data,
        cfg,
        adam: Adam::new(cfg.scheduler.base_lr),
        rng: SeededRng::new(cfg.seed).fork(1),
    };
    let fit_cfg = FitConfig {
        epochs: cfg.epochs,
        scheduler: cfg.scheduler.clone(),
        early_stopping_patience: cfg.early_stopping_patience,
    };
    fit(&mut trainer, &fit_cfg, on_epoch)
}

pub fn train(model: &mut SqrModel, data: &SeriesDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_log(model, data, cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        crps: Vec<f64>,
        at: usize,
        value: usize,
        lrs: Vec<f64>,
    }

    impl EpochModel for Scripted {
        type State = usize;

        fn train_epoch(&mut self, lr: f64, epoch: usize) -> Result<f64> {
            self.lrs.push(lr);
            self.at = epoch;
            self.value = epoch + 1;
            Ok(1.0)
        }

        fn validation_crps(&mut self) -> Result<f64> {
            Ok(if self.value == 0 { 10.0 } else { self.crps[self.at] })
        }

        fn state(&self) -> usize {
            self.value
        }

        fn restore(&mut self, state: usize) -> Result<()> {
            self.value = state;
            Ok(())
        }
    }

    fn scripted(crps: &[f64]) -> Scripted {
        Scripted {
            crps: crps.to_vec(),
            at: 0,
            value: 0,
            lrs: vec![],
        }
    }

    #[test]
    fn zero_epochs_leave_state() {
        let mut m = scripted(&[]);
        let cfg = FitConfig {
            epochs: 0,
            scheduler: Scheduler::constant(0.1),
            early_stopping_patience: 5,
        };
        let r = fit(&mut m, &cfg, |_| {}).unwrap();
        assert!(r.logs.is_empty() && r.best_epoch.is_none());
        assert_eq!(m.value, 0);
    }

    #[test]
    fn restores_best_epoch() {
        let mut m = scripted(&[3.0, 2.0, 2.5, 2.6, 2.7]);
        let cfg = FitConfig {
            epochs: 5,
            scheduler: Scheduler::step_on_increase(1.0, 1, 0.1),
            early_stopping_patience: 2,
        };
        let r = fit(&mut m, &cfg, |_| {}).unwrap();
        assert!(r.stopped_early);
        assert_eq!(r.logs.len(), 4);
        assert_eq!(r.best_epoch, Some(2));
        assert_eq!(m.value, 2);
        assert_eq!(m.lrs, vec![1.0, 1.0, 1.0, 0.1]);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = scripted(&[1.0, f64::NAN]);
        let cfg = FitConfig {
            epochs: 2,
            scheduler: Scheduler::constant(0.1),
            early_stopping_patience: 0,
        };
        assert!(matches!(fit(&mut m, &cfg, |_| {}), Err(Error::Diverged { epoch: 2, .. })));
    }

    #[test]
    fn default_table() {
        let d = TrainConfig::defaults_for(HeadKind::Dln);
        assert_eq!((d.epochs, d.batch_size), (10, 64));
        assert!((d.scheduler.learning_rate(4, &[]) - 1e-3 / 16.0).abs() < 1e-18);
        let c = TrainConfig::defaults_for(HeadKind::ConstrainedLinear);
        assert_eq!(c.epochs, 300);
        assert!((c.scheduler.learning_rate(2, &[]) - 0.1 * 1e-4).abs() < 1e-18);
        for k in HeadKind::ALL {
            TrainConfig::defaults_for(k).validate().unwrap();
        }
    }
}
