//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Step relative to `max(1, |θ|)`.
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor so that near-zero gradients are compared absolutely.
    pub abs_floor: f64,
    /// Check every `stride`-th coordinate only (1 = all).
    pub stride: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

/// Compares the gradient returned by `f` at `theta` with central differences of
/// the loss returned by `f`. `theta` is restored before returning.
pub fn grad_check<F>(theta: &mut [f64], mut f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (loss0, grad) = f(theta)?;
    if grad.len() != theta.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            grad.len(),
            theta.len()
        )));
    }
    if !loss0.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite loss or gradient at the check point".into()));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        passed: true,
    };
    for i in (0..theta.len()).step_by(cfg.stride.max(1)) {
        let orig = theta[i];
        let h = cfg.step * orig.abs().max(1.0);
        theta[i] = orig + h;
        let plus = f(theta)?.0;
        theta[i] = orig - h;
        let minus = f(theta)?.0;
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss perturbing coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_error <= cfg.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(t: &[f64]) -> Result<(f64, Vec<f64>)> {
        let loss = t.iter().map(|v| v * v * v + 2.0 * v).sum();
        Ok((loss, t.iter().map(|v| 3.0 * v * v + 2.0).collect()))
    }

    #[test]
    fn correct_gradient_passes() {
        let mut t = vec![0.3, -1.2, 2.5];
        let r = grad_check(&mut t, cubic, &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(t, vec![0.3, -1.2, 2.5]);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn doubled_gradient_fails() {
        let mut t = vec![0.3, -1.2, 2.5];
        let r = grad_check(
            &mut t,
            |t| {
                let (l, g) = cubic(t)?;
                Ok((l, g.into_iter().map(|v| 2.0 * v).collect()))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!r.passed);
        assert!((r.max_rel_error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let mut t = vec![1.0];
        let r = grad_check(&mut t, |_| Ok((f64::NAN, vec![0.0])), &GradCheckConfig::default());
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
