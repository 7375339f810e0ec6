use serde::{Deserialize, Serialize};

use super::param::ParameterBlock;
use crate::error::{Error, Result};

/// Adam optimiser state.
///
/// Moment buffers are allocated lazily on the first step and are matched to
/// blocks by position, so callers must pass blocks in a stable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moments: Vec<Vec<f64>>,
    second_moments: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one Adam update to every block using its current gradient.
    ///
    /// Constraints are not enforced here; project afterwards.
    pub fn step(&mut self, blocks: &mut [&mut ParameterBlock]) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for b in blocks.iter() {
            b.check_grad_shape()?;
        }
        if self.first_moments.is_empty() {
            self.first_moments = blocks.iter().map(|b| vec![0.0; b.len()]).collect();
            self.second_moments = self.first_moments.clone();
        }
        if self.first_moments.len() != blocks.len() {
            return Err(Error::shape(
                "optimizer block count",
                &[self.first_moments.len()],
                &[blocks.len()],
            ));
        }
        for (i, b) in blocks.iter().enumerate() {
            if self.first_moments[i].len() != b.len() {
                return Err(Error::shape(
                    format!("optimizer moments for '{}'", b.name()),
                    &[self.first_moments[i].len()],
                    &[b.len()],
                ));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let step_size = self.learning_rate / bias1;

        for (i, block) in blocks.iter_mut().enumerate() {
            let m = &mut self.first_moments[i];
            let v = &mut self.second_moments[i];
            let grad = block.grad().to_vec();
            for (j, value) in block.values_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let denom = (v[j] / bias2).sqrt() + self.epsilon;
                *value -= step_size * m[j] / denom;
            }
        }
        Ok(())
    }
}
