use crate::error::{Error, Result};
use crate::numerics::{Constraint, ParameterBlock, SeededRng};

/// Dense layer `W x + b`, weights stored output-major (`o * n_in + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    weights: ParameterBlock,
    bias: ParameterBlock,
}

impl Affine {
    pub fn new(name: &str, inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidArgument(format!("affine layer '{name}' needs nonzero sizes")));
        }
        Ok(Self {
            weights: ParameterBlock::new(format!("{name}.weights"), vec![inputs, outputs], weights, Constraint::None)?,
            bias: ParameterBlock::new(format!("{name}.bias"), vec![outputs], bias, Constraint::None)?,
        })
    }

    /// Weights uniform in `+-1/sqrt(inputs)`, zero bias.
    pub fn init(name: &str, inputs: usize, outputs: usize, rng: &mut SeededRng) -> Result<Self> {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let w = (0..inputs * outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self::new(name, inputs, outputs, w, vec![0.0; outputs])
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn weights(&self) -> &ParameterBlock {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ParameterBlock {
        &mut self.weights
    }

    pub fn bias(&self) -> &ParameterBlock {
        &self.bias
    }

    pub fn blocks(&self) -> [&ParameterBlock; 2] {
        [&self.weights, &self.bias]
    }

    pub fn blocks_mut(&mut self) -> [&mut ParameterBlock; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.inputs();
        if x.len() != n {
            return Err(Error::shape(format!("affine '{}' input", self.bias.name()), &[n], &[x.len()]));
        }
        let w = self.weights.values();
        Ok(self
            .bias
            .values()
            .iter()
            .enumerate()
            .map(|(o, b)| b + w[o * n..(o + 1) * n].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect())
    }

    /// Accumulates parameter gradients, returns the input gradient.
    pub fn backward(&mut self, x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let n = self.inputs();
        let mut dx = vec![0.0; n];
        let w = self.weights.values().to_vec();
        let gw = self.weights.grad_mut();
        for (o, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for i in 0..n {
                gw[o * n + i] += g * x[i];
                dx[i] += g * w[o * n + i];
            }
        }
        let gb = self.bias.grad_mut();
        for (b, g) in gb.iter_mut().zip(upstream) {
            *b += g;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_bias() {
        let a = Affine::new("a", 2, 3, vec![0.0; 6], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.forward(&[5.0, -1.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn output_major_layout() {
        let a = Affine::new("a", 2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 2]).unwrap();
        assert_eq!(a.forward(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn backward_accumulates() {
        let mut a = Affine::new("a", 2, 1, vec![2.0, -1.0], vec![0.0]).unwrap();
        let dx = a.backward(&[3.0, 4.0], &[1.0]);
        assert_eq!(dx, vec![2.0, -1.0]);
        assert_eq!(a.weights().grad(), &[3.0, 4.0]);
        a.backward(&[3.0, 4.0], &[1.0]);
        assert_eq!(a.bias().grad(), &[2.0]);
    }
}
