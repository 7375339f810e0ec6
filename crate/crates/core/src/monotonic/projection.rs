//! Euclidean projection onto the feasible sets of constrained parameters.
//!
//! A block that must be nondecreasing along several axes lives in the
//! intersection of one convex cone per axis. Projection onto a single cone
//! splits into independent 1-D isotonic regressions (one per line along the
//! axis), each solved exactly with pool-adjacent-violators. The intersection
//! is handled with Dykstra's alternating projections.

use crate::numerics::{axis_chains, Constraint, ParameterBlock};

/// Sweeps stop once no entry moves by more than this.
pub const DYKSTRA_TOLERANCE: f64 = 1e-9;
pub const DYKSTRA_MAX_SWEEPS: usize = 100;

/// Unweighted L2 isotonic regression: the nondecreasing sequence closest to `y`.
pub fn pava(y: &[f64]) -> Vec<f64> {
    // Stack of pooled blocks as (sum, count).
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let n = sums.len();
            let last = sums[n - 1] / counts[n - 1] as f64;
            let prev = sums[n - 2] / counts[n - 2] as f64;
            if prev <= last {
                break;
            }
            let s = sums.pop().unwrap();
            let c = counts.pop().unwrap();
            sums[n - 2] += s;
            counts[n - 2] += c;
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in sums.iter().zip(&counts) {
        let mean = s / *c as f64;
        out.extend(std::iter::repeat_n(mean, *c));
    }
    out
}

fn project_axis(values: &mut [f64], shape: &[usize], axis: usize) {
    for chain in axis_chains(shape, axis) {
        let line: Vec<f64> = chain.iter().map(|&i| values[i]).collect();
        for (&i, v) in chain.iter().zip(pava(&line)) {
            values[i] = v;
        }
    }
}

/// Projects `values` (laid out axis-0-fastest with `shape`) onto the set of
/// arrays nondecreasing along every axis in `axes`. Returns the number of
/// Dykstra sweeps used.
pub fn project_monotone_axes(values: &mut [f64], shape: &[usize], axes: &[usize]) -> usize {
    match axes {
        [] => 0,
        [axis] => {
            project_axis(values, shape, *axis);
            1
        }
        _ => {
            let mut increments = vec![vec![0.0; values.len()]; axes.len()];
            let mut y = vec![0.0; values.len()];
            for sweep in 1..=DYKSTRA_MAX_SWEEPS {
                let mut max_change: f64 = 0.0;
                for (k, &axis) in axes.iter().enumerate() {
                    for i in 0..values.len() {
                        y[i] = values[i] + increments[k][i];
                    }
                    let mut projected = y.clone();
                    project_axis(&mut projected, shape, axis);
                    for i in 0..values.len() {
                        increments[k][i] = y[i] - projected[i];
                        max_change = max_change.max((projected[i] - values[i]).abs());
                        values[i] = projected[i];
                    }
                }
                if max_change < DYKSTRA_TOLERANCE {
                    return sweep;
                }
            }
            DYKSTRA_MAX_SWEEPS
        }
    }
}

/// Projects a block in place onto the feasible set named by its constraint.
pub fn project_monotone(block: &mut ParameterBlock) {
    match block.constraint().clone() {
        Constraint::None => {}
        Constraint::Nonnegative => block.values_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Constraint::Monotone(axes) => {
            let shape = block.shape().to_vec();
            project_monotone_axes(block.values_mut(), &shape, &axes);
        }
    }
}
