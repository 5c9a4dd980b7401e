use crate::error::{Error, Result};

/// Central-difference gradient `(f(p+h) - f(p-h)) / 2h` for every coordinate of `params`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = loss_fn(&probe)?;
        probe[i] = orig - h;
        let minus = loss_fn(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at coordinate {i} is not finite ({plus}, {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error used by gradient checks: `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
