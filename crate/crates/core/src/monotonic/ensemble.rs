use super::lattice::{Lattice, LatticeTrace};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// A set of small lattices, each reading a disjoint group of features plus
/// the quantile coordinate in its last (monotone) axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEnsemble {
    lattices: Vec<Lattice>,
    assignment: Vec<Vec<usize>>,
    num_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTrace {
    traces: Vec<LatticeTrace>,
}

impl LatticeEnsemble {
    /// Validates that `assignment` partitions `0..num_features` and that
    /// each lattice has one axis per assigned feature plus a monotone
    /// quantile axis last.
    pub fn new(lattices: Vec<Lattice>, assignment: Vec<Vec<usize>>, num_features: usize) -> Result<Self> {
        if lattices.len() != assignment.len() {
            return Err(Error::shape("ensemble assignment", &[lattices.len()], &[assignment.len()]));
        }
        let mut seen = vec![false; num_features];
        for group in &assignment {
            for &f in group {
                if f >= num_features {
                    return Err(Error::InvalidArgument(format!(
                        "feature index {f} out of range for {num_features} features"
                    )));
                }
                if std::mem::replace(&mut seen[f], true) {
                    return Err(Error::InvalidArgument(format!("feature {f} assigned to two lattices")));
                }
            }
        }
        if let Some(f) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("feature {f} is not assigned to any lattice")));
        }
        for (l, group) in lattices.iter().zip(&assignment) {
            let qdim = group.len();
            if l.dims() != qdim + 1 {
                return Err(Error::shape("lattice dims vs assigned features + quantile", &[qdim + 1], &[l.dims()]));
            }
            if !l.monotone_dims().contains(&qdim) {
                return Err(Error::InvalidArgument(format!(
                    "lattice '{}' must be monotone in its quantile axis {qdim}",
                    l.theta().name()
                )));
            }
        }
        Ok(Self {
            lattices,
            assignment,
            num_features,
        })
    }

    /// Shuffles the feature indices with `rng`, cuts them into contiguous
    /// groups of `group_size` (the last group may be smaller) and builds one
    /// ramp-initialised lattice of `group_size + 1` axes per group.
    pub fn partitioned(
        name: &str,
        num_features: usize,
        group_size: usize,
        keypoints: usize,
        noise_sd: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if group_size == 0 || num_features == 0 {
            return Err(Error::InvalidArgument("ensemble needs features and a positive group size".into()));
        }
        let mut order: Vec<usize> = (0..num_features).collect();
        rng.shuffle(&mut order);
        let assignment: Vec<Vec<usize>> = order.chunks(group_size).map(|c| c.to_vec()).collect();
        let lattices = assignment
            .iter()
            .enumerate()
            .map(|(i, g)| Lattice::ramp_init(format!("{name}.{i}"), g.len() + 1, keypoints, vec![g.len()], noise_sd, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(lattices, assignment, num_features)
    }

    pub fn lattices(&self) -> &[Lattice] {
        &self.lattices
    }

    pub fn lattices_mut(&mut self) -> &mut [Lattice] {
        &mut self.lattices
    }

    pub fn assignment(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Axis of lattice `i` that carries the quantile coordinate.
    pub fn quantile_dim(&self, i: usize) -> usize {
        self.assignment[i].len()
    }

    pub fn parameter_count(&self) -> usize {
        self.lattices.iter().map(|l| l.theta().len()).sum()
    }

    fn inputs(&self, i: usize, features: &[f64], q: f64, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.assignment[i].iter().map(|&f| features[f]));
        buf.push(q);
    }

    pub fn forward(&self, features: &[f64], q: f64) -> Result<(Vec<f64>, EnsembleTrace)> {
        if features.len() != self.num_features {
            return Err(Error::shape("ensemble features", &[self.num_features], &[features.len()]));
        }
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(self.lattices.len());
        let mut traces = Vec::with_capacity(self.lattices.len());
        for (i, l) in self.lattices.iter().enumerate() {
            self.inputs(i, features, q, &mut buf);
            let (y, t) = l.forward(&buf)?;
            out.push(y);
            traces.push(t);
        }
        Ok((out, EnsembleTrace { traces }))
    }

    pub fn eval(&self, features: &[f64], q: f64) -> Result<Vec<f64>> {
        Ok(self.forward(features, q)?.0)
    }

    /// Accumulates lattice gradients, adds feature gradients into
    /// `d_features` and returns the gradient with respect to `q`.
    pub fn backward(&mut self, trace: &EnsembleTrace, upstream: &[f64], d_features: &mut [f64]) -> f64 {
        let mut d_q = 0.0;
        let mut buf = Vec::new();
        for (i, l) in self.lattices.iter_mut().enumerate() {
            buf.resize(l.dims(), 0.0);
            l.backward(&trace.traces[i], upstream[i], &mut buf);
            for (j, &f) in self.assignment[i].iter().enumerate() {
                d_features[f] += buf[j];
            }
            d_q += buf[l.dims() - 1];
        }
        d_q
    }
}

/// One output per lattice; lattice `i` receives its assigned features and
/// `tau` in its quantile axis.
pub fn ensemble_forward(e: &LatticeEnsemble, embedding: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !tau.is_finite() {
        return Err(Error::NonFinite("quantile level".into()));
    }
    e.eval(embedding, tau)
}
