use crate::error::{Error, Result};
use crate::numerics::{Constraint, ParameterBlock, SeededRng};

/// Affine layer `W_q m + W_f u + b` whose weights on the monotone inputs `m`
/// are kept nonnegative, so every output is nondecreasing in each `m_i`.
///
/// Weight matrices are stored output-major: entry `(o, i)` is at
/// `o * n_in + i`, i.e. a block of shape `[n_in, n_out]` with axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedLinear {
    monotone_weights: ParameterBlock,
    free_weights: ParameterBlock,
    bias: ParameterBlock,
    outputs: usize,
}

impl ConstrainedLinear {
    pub fn new(name: &str, monotone_weights: Vec<f64>, free_weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let outputs = bias.len();
        if outputs == 0 {
            return Err(Error::InvalidArgument("constrained linear layer needs at least one output".into()));
        }
        if !monotone_weights.len().is_multiple_of(outputs) || !free_weights.len().is_multiple_of(outputs) {
            return Err(Error::shape(
                format!("constrained linear '{name}' weights"),
                &[outputs],
                &[monotone_weights.len(), free_weights.len()],
            ));
        }
        let n_mono = monotone_weights.len() / outputs;
        let n_free = free_weights.len() / outputs;
        Ok(Self {
            monotone_weights: ParameterBlock::new(
                format!("{name}.monotone_weights"),
                vec![n_mono, outputs],
                monotone_weights,
                Constraint::Nonnegative,
            )?,
            free_weights: ParameterBlock::new(
                format!("{name}.free_weights"),
                vec![n_free, outputs],
                free_weights,
                Constraint::None,
            )?,
            bias: ParameterBlock::new(format!("{name}.bias"), vec![outputs], bias, Constraint::None)?,
            outputs,
        })
    }

    /// Monotone weights uniform in `[0.5, 1.5] / n_mono` (a jittered
    /// average), free weights uniform in `+-1/sqrt(n_free)`, zero bias.
    pub fn init(name: &str, n_mono: usize, n_free: usize, outputs: usize, rng: &mut SeededRng) -> Result<Self> {
        let mono = (0..n_mono * outputs)
            .map(|_| rng.uniform_range(0.5, 1.5) / n_mono.max(1) as f64)
            .collect();
        let bound = 1.0 / (n_free.max(1) as f64).sqrt();
        let free = (0..n_free * outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self::new(name, mono, free, vec![0.0; outputs])
    }

    pub fn monotone_inputs(&self) -> usize {
        self.monotone_weights.shape()[0]
    }

    pub fn free_inputs(&self) -> usize {
        self.free_weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn monotone_weights(&self) -> &ParameterBlock {
        &self.monotone_weights
    }

    pub fn free_weights(&self) -> &ParameterBlock {
        &self.free_weights
    }

    pub fn bias(&self) -> &ParameterBlock {
        &self.bias
    }

    pub fn blocks(&self) -> [&ParameterBlock; 3] {
        [&self.monotone_weights, &self.free_weights, &self.bias]
    }

    pub fn blocks_mut(&mut self) -> [&mut ParameterBlock; 3] {
        [&mut self.monotone_weights, &mut self.free_weights, &mut self.bias]
    }

    fn check(&self, monotone_in: &[f64], free_in: &[f64]) -> Result<()> {
        if monotone_in.len() != self.monotone_inputs() || free_in.len() != self.free_inputs() {
            return Err(Error::shape(
                format!("constrained linear '{}' inputs", self.bias.name()),
                &[self.monotone_inputs(), self.free_inputs()],
                &[monotone_in.len(), free_in.len()],
            ));
        }
        Ok(())
    }

    pub fn forward(&self, monotone_in: &[f64], free_in: &[f64]) -> Result<Vec<f64>> {
        self.check(monotone_in, free_in)?;
        let (nm, nf) = (self.monotone_inputs(), self.free_inputs());
        let wq = self.monotone_weights.values();
        let wm = self.free_weights.values();
        Ok(self
            .bias
            .values()
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let mono: f64 = wq[o * nm..(o + 1) * nm].iter().zip(monotone_in).map(|(w, x)| w * x).sum();
                let free: f64 = wm[o * nf..(o + 1) * nf].iter().zip(free_in).map(|(w, x)| w * x).sum();
                mono + free + b
            })
            .collect())
    }

    /// Accumulates weight gradients; returns gradients for the monotone and
    /// free inputs.
    pub fn backward(&mut self, monotone_in: &[f64], free_in: &[f64], upstream: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nm, nf) = (self.monotone_inputs(), self.free_inputs());
        let mut d_mono = vec![0.0; nm];
        let mut d_free = vec![0.0; nf];
        for (o, &g) in upstream.iter().enumerate() {
            self.bias.grad_mut()[o] += g;
            let gq = &mut self.monotone_weights.grad_mut()[o * nm..(o + 1) * nm];
            for i in 0..nm {
                gq[i] += g * monotone_in[i];
            }
            let wq = &self.monotone_weights.values()[o * nm..(o + 1) * nm];
            for i in 0..nm {
                d_mono[i] += g * wq[i];
            }
            let gm = &mut self.free_weights.grad_mut()[o * nf..(o + 1) * nf];
            for i in 0..nf {
                gm[i] += g * free_in[i];
            }
            let wm = &self.free_weights.values()[o * nf..(o + 1) * nf];
            for i in 0..nf {
                d_free[i] += g * wm[i];
            }
        }
        (d_mono, d_free)
    }
}

/// Free-function form of [`ConstrainedLinear::forward`].
pub fn constrained_linear_forward(cl: &ConstrainedLinear, monotone_in: &[f64], free_in: &[f64]) -> Result<Vec<f64>> {
    cl.forward(monotone_in, free_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let cl = ConstrainedLinear::new("c", vec![1.0], vec![], vec![0.0]).unwrap();
        assert_eq!(cl.forward(&[0.7], &[]).unwrap(), vec![0.7]);
    }

    #[test]
    fn bias_only() {
        let cl = ConstrainedLinear::new("c", vec![0.0, 0.0], vec![], vec![2.5]).unwrap();
        assert_eq!(cl.forward(&[3.0, -8.0], &[]).unwrap(), vec![2.5]);
    }

    #[test]
    fn mixed_inputs() {
        let cl = ConstrainedLinear::new("c", vec![1.0, 2.0], vec![-1.0], vec![0.0]).unwrap();
        assert_eq!(cl.forward(&[1.0, 1.0], &[3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let cl = ConstrainedLinear::new("c", vec![1.0, 2.0], vec![-1.0], vec![0.0]).unwrap();
        assert!(cl.forward(&[1.0], &[3.0]).is_err());
        assert!(ConstrainedLinear::new("c", vec![1.0, 2.0, 3.0], vec![], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn monotone_weights_are_tagged_nonnegative() {
        let mut rng = SeededRng::new(0);
        let cl = ConstrainedLinear::init("c", 3, 2, 4, &mut rng).unwrap();
        assert_eq!(cl.monotone_weights().constraint(), &Constraint::Nonnegative);
        assert!(cl.monotone_weights().values().iter().all(|&w| w > 0.0));
        assert_eq!(cl.forward(&[0.0; 3], &[0.0; 2]).unwrap(), vec![0.0; 4]);
    }
}
