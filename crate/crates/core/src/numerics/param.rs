use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasible set a parameter block must be projected back into after each
/// optimizer step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "dims", rename_all = "snake_case")]
pub enum Constraint {
    /// Unconstrained.
    #[default]
    None,
    /// Every entry must be `>= 0`.
    Nonnegative,
    /// Entries must be nondecreasing along each listed axis.
    Monotone(Vec<usize>),
}

impl Constraint {
    /// Whether the constraint restricts anything at all.
    pub fn is_constrained(&self) -> bool {
        !matches!(self, Constraint::None)
    }
}

/// A named, dense `f64` array with its gradient buffer.
///
/// Multi-dimensional blocks store axis 0 as the *fastest* varying index, so
/// the flat offset of `idx` is `sum_d idx[d] * prod_{e<d} shape[e]`. Lattice
/// vertex tables rely on this layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
    #[serde(skip)]
    grad: Vec<f64>,
    constraint: Constraint,
}

impl ParameterBlock {
    /// Creates a block from explicit values.
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<f64>,
        constraint: Constraint,
    ) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::shape(
                format!("parameter block '{name}'"),
                &[expected],
                &[values.len()],
            ));
        }
        if let Constraint::Monotone(dims) = &constraint {
            if let Some(&d) = dims.iter().find(|&&d| d >= shape.len()) {
                return Err(Error::InvalidArgument(format!(
                    "block '{name}' has rank {} but monotone axis {d} was requested",
                    shape.len()
                )));
            }
        }
        Ok(Self {
            grad: vec![0.0; values.len()],
            name,
            shape,
            values,
            constraint,
        })
    }

    /// An all-zero block.
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>, constraint: Constraint) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![0.0; n], constraint).expect("zeros always has matching size")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.len() != self.values.len() {
            // Deserialized blocks arrive without a gradient buffer.
            self.grad = vec![0.0; self.values.len()];
        }
        &mut self.grad
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    /// Replaces the values, keeping shape and constraint.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::shape(
                format!("set_values on '{}'", self.name),
                &[self.values.len()],
                &[values.len()],
            ));
        }
        self.values = values;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    /// Returns an error if the gradient buffer does not match the values.
    pub fn check_grad_shape(&self) -> Result<()> {
        if self.grad.len() != self.values.len() {
            return Err(Error::shape(
                format!("gradient of '{}'", self.name),
                &[self.values.len()],
                &[self.grad.len()],
            ));
        }
        Ok(())
    }

    /// Projects the values onto the block's feasible set.
    pub fn apply_constraints(&mut self) {
        crate::monotonic::project_monotone(self);
    }

    /// Whether the current values satisfy the constraint up to `tol`.
    pub fn satisfies_constraint(&self, tol: f64) -> bool {
        match &self.constraint {
            Constraint::None => true,
            Constraint::Nonnegative => self.values.iter().all(|&v| v >= -tol),
            Constraint::Monotone(dims) => dims.iter().all(|&d| {
                axis_chains(&self.shape, d).all(|chain| {
                    chain
                        .windows(2)
                        .all(|w| self.values[w[1]] >= self.values[w[0]] - tol)
                })
            }),
        }
    }

    /// Overwrites the gradient buffer, for tests and external optimisers.
    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.values.len() {
            return Err(Error::shape(
                format!("set_grad on '{}'", self.name),
                &[self.values.len()],
                &[grad.len()],
            ));
        }
        self.grad = grad;
        Ok(())
    }
}

/// Flat offsets of every 1-D line along `axis` through an array laid out
/// with axis 0 fastest.
pub fn axis_chains(shape: &[usize], axis: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    let stride: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let total: usize = shape.iter().product();
    let block = stride * len;
    (0..total)
        .filter(move |&i| (i % block) < stride)
        .map(move |start| (0..len).map(|j| start + j * stride).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_mismatch_rejected() {
        let err = ParameterBlock::new("w", vec![2, 2], vec![0.0; 3], Constraint::None);
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn monotone_axis_out_of_rank_rejected() {
        let err = ParameterBlock::new("w", vec![3], vec![0.0; 3], Constraint::Monotone(vec![1]));
        assert!(err.is_err());
    }

    #[test]
    fn chains_cover_every_entry_once() {
        let shape = [3, 4, 2];
        for axis in 0..3 {
            let mut seen = vec![0; 24];
            let chains: Vec<_> = axis_chains(&shape, axis).collect();
            assert_eq!(chains.len(), 24 / shape[axis]);
            for c in chains {
                assert_eq!(c.len(), shape[axis]);
                for i in c {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn chain_along_axis_one_has_stride_of_axis_zero() {
        let chains: Vec<_> = axis_chains(&[3, 2], 1).collect();
        assert_eq!(chains, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
    }

    #[test]
    fn constraint_check() {
        let b = ParameterBlock::new("m", vec![2, 2], vec![0., 1., 2., 3.], Constraint::Monotone(vec![0, 1]))
            .unwrap();
        assert!(b.satisfies_constraint(0.0));
        let b = ParameterBlock::new("m", vec![2, 2], vec![0., 1., 2., 0.5], Constraint::Monotone(vec![1]))
            .unwrap();
        assert!(!b.satisfies_constraint(0.0));
    }
}
