use crate::{Error, Result};

/// Compares an analytic gradient with central differences.
///
/// Returns the largest per-coordinate error
/// `|analytic − numeric| / max(1, |numeric|)`. A non-finite function value
/// at any probe point is an error rather than a skipped coordinate.
pub fn grad_check<F>(mut f: F, analytic: &[f64], point: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != point.len() {
        return Err(Error::shape("grad_check", point.len(), analytic.len()));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::ProbeFailure { coordinate: i });
        }
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
