//! Learning-rate schedules driven by epoch count and validation history.
//!
//! A schedule is a base rate and a list of rules; every rule contributes a
//! product of factors and the emitted rate is `base_lr` times all of them.
//! Combined rules express schedules such as "0.1 step at epochs 1, 2, 3 and
//! whenever validation CRPS rises".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multiplicative step rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleRule {
    /// Multiply by `factor` once for every listed epoch that has been reached.
    StepAtEpochs { epochs: Vec<usize>, factor: f64 },
    /// Multiply by `factor` each time validation CRPS has risen for
    /// `patience` consecutive epochs. The run counter resets after firing.
    StepOnIncrease { patience: usize, factor: f64 },
}

impl ScheduleRule {
    fn factor(&self) -> f64 {
        match self {
            ScheduleRule::StepAtEpochs { factor, .. } | ScheduleRule::StepOnIncrease { factor, .. } => *factor,
        }
    }

    /// Number of times the rule has fired by `epoch` (0-based index of the
    /// epoch about to run) given the validation history of completed epochs.
    pub fn firings(&self, epoch: usize, history: &[f64]) -> usize {
        match self {
            ScheduleRule::StepAtEpochs { epochs, .. } => epochs.iter().filter(|&&e| e <= epoch).count(),
            ScheduleRule::StepOnIncrease { patience, .. } => {
                let mut fired = 0;
                let mut run = 0;
                for w in history.windows(2) {
                    if w[1] > w[0] {
                        run += 1;
                        if run >= *patience {
                            fired += 1;
                            run = 0;
                        }
                    } else {
                        run = 0;
                    }
                }
                fired
            }
        }
    }
}

/// Base learning rate plus step rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    pub base_lr: f64,
    #[serde(default)]
    pub rules: Vec<ScheduleRule>,
}

impl Scheduler {
    pub fn constant(base_lr: f64) -> Self {
        Self {
            base_lr,
            rules: Vec::new(),
        }
    }

    pub fn with_rule(mut self, rule: ScheduleRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn step_at_epochs(base_lr: f64, epochs: Vec<usize>, factor: f64) -> Self {
        Self::constant(base_lr).with_rule(ScheduleRule::StepAtEpochs { epochs, factor })
    }

    pub fn step_on_increase(base_lr: f64, patience: usize, factor: f64) -> Self {
        Self::constant(base_lr).with_rule(ScheduleRule::StepOnIncrease { patience, factor })
    }

    /// Checks that the schedule can only ever emit positive, nonincreasing rates.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base learning rate must be positive, got {}", self.base_lr)));
        }
        for rule in &self.rules {
            let f = rule.factor();
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("scheduler factor must lie in (0, 1], got {f}")));
            }
            if let ScheduleRule::StepOnIncrease { patience: 0, .. } = rule {
                return Err(Error::Config("scheduler patience must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Learning rate for the 0-based `epoch` about to run, given the
    /// validation CRPS of every completed epoch (oldest first).
    pub fn learning_rate(&self, epoch: usize, validation_history: &[f64]) -> f64 {
        self.rules.iter().fold(self.base_lr, |lr, rule| {
            lr * rule.factor().powi(rule.firings(epoch, validation_history) as i32)
        })
    }
}

/// Free-function form of [`Scheduler::learning_rate`].
pub fn schedule_lr(sched: &Scheduler, epoch: usize, validation_history: &[f64]) -> f64 {
    sched.learning_rate(epoch, validation_history)
}
