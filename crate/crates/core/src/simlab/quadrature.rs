//! Adaptive Simpson quadrature for the one-dimensional population moments.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
const MAX_EVALS: usize = 1 << 20;

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> Result<f64> {
    *evals += 2;
    if *evals > MAX_EVALS {
        return Err(Error::IntegrationFailure { lo: a, hi: b });
    }
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || !delta.is_finite() {
        return Err(Error::IntegrationFailure { lo: a, hi: b });
    }
    Ok(refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, evals)?
        + refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, evals)?)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        return Err(Error::IntegrationFailure { lo: a, hi: b });
    }
    let whole = simpson(fa, fm, fb, a, b);
    let mut evals = 3;
    refine(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut evals)
}

/// `∫_0^1 f`, split at 1/2 where the shipped integrands have their kinks.
pub fn integrate_unit<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    Ok(integrate(&f, 0.0, 0.5, tol / 2.0)? + integrate(&f, 0.5, 1.0, tol / 2.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_kinks() {
        let v = integrate_unit(|u| u.powi(6), 1e-12).unwrap();
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
        let v = integrate_unit(|u| (u - 0.5).abs(), 1e-12).unwrap();
        assert!((v - 0.25).abs() < 1e-14);
        let v = integrate(|u: f64| u.sin(), 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn reports_failure() {
        let r = integrate(|u: f64| 1.0 / u.sqrt() * (1.0 / u).sin(), 1e-300, 1.0, 1e-14);
        assert!(matches!(r, Err(Error::IntegrationFailure { .. })));
        assert!(matches!(integrate(|u| 1.0 / u, 0.0, 1.0, 1e-10), Err(Error::IntegrationFailure { .. })));
    }
}
