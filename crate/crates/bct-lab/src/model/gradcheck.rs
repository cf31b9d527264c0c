//! Central-finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

/// Compares the analytic gradient of `f` against central differences at
/// `params` and returns the worst relative error across all coordinates.
///
/// `f` maps a flat parameter vector to (loss, flat analytic gradient). The
/// relative error per coordinate is |a − n| / max(|a|, |n|, 1e-8); the floor
/// keeps near-zero coordinates from dividing by noise.
pub fn gradient_check<F>(f: F, params: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if params.is_empty() {
        return Err(Error::InvalidArgument("gradient_check needs at least one parameter".into()));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive and finite, got {eps}")));
    }
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + eps;
        let (up, _) = f(&probe)?;
        probe[i] = params[i] - eps;
        let (down, _) = f(&probe)?;
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_quadratic_gradient_passes() {
        // f(x) = Σ x_i², gradient 2x.
        let f = |x: &[f64]| Ok((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()));
        let worst = gradient_check(f, &[0.3, -1.2, 2.5], 1e-6).unwrap();
        assert!(worst < 1e-9, "worst rel error {worst}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |x: &[f64]| Ok((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 3.0 * v).collect()));
        let worst = gradient_check(f, &[0.5, 1.0], 1e-6).unwrap();
        assert!(worst > 0.3, "a 1.5x-off gradient must stand out, got {worst}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let f = |_: &[f64]| Ok((0.0, vec![0.0]));
        assert!(gradient_check(f, &[1.0, 2.0], 1e-6).is_err());
    }
}
