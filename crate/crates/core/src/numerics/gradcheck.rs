use crate::error::{Error, Result};

/// Compares an analytic gradient with central differences.
///
/// Returns `max_i |analytic_i - fd_i| / max(1, |analytic_i|)` where
/// `fd_i = (L(p + h e_i) - L(p - h e_i)) / 2h`.
pub fn finite_difference_check<F>(mut loss: F, params: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::shape("finite_difference_check", &[params.len()], &[analytic.len()]));
    }
    let base = loss(params);
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at base point".into()));
    }
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = loss(&probe);
        probe[i] = params[i] - h;
        let down = loss(&probe);
        probe[i] = params[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!("loss while perturbing entry {i}")));
        }
        let fd = (up - down) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
