use crate::error::{Error, Result};

/// Relative size of the first difference step.
const REL_STEP: f64 = 0.1;
/// Absolute step used when |x| is effectively zero.
const ZERO_STEP: f64 = 0.1;
const ZERO_TOL: f64 = 1.781_447_530_383_1e-5;

/// Initial step h₀ for the central differences at `x`.
pub fn initial_step(x: f64) -> f64 {
    if x.abs() < ZERO_TOL {
        ZERO_STEP
    } else {
        REL_STEP * x.abs()
    }
}

/// Second derivative by Richardson extrapolation of central differences.
///
/// Central differences D(h) = (f(x+h) − 2f(x) + f(x−h)) / h² are taken at
/// h₀, h₀/2, …, h₀/2^{steps−1} and extrapolated in h², eliminating one
/// even-order error term per level.
pub fn second_derivative<F: FnMut(f64) -> f64>(mut f: F, x: f64, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::domain("second_derivative", "steps must be >= 1"));
    }
    let fx = f(x);
    if !fx.is_finite() {
        return Err(Error::numeric(
            "second_derivative",
            format!("non-finite function value at x={x}"),
        ));
    }
    let mut h = initial_step(x);
    let mut row: Vec<f64> = Vec::with_capacity(steps);
    let mut next: Vec<f64> = Vec::with_capacity(steps);
    for level in 0..steps {
        let fp = f(x + h);
        let fm = f(x - h);
        if !fp.is_finite() {
            return Err(Error::numeric(
                "second_derivative",
                format!("non-finite function value at x={}", x + h),
            ));
        }
        if !fm.is_finite() {
            return Err(Error::numeric(
                "second_derivative",
                format!("non-finite function value at x={}", x - h),
            ));
        }
        next.clear();
        next.push((fp - 2.0 * fx + fm) / (h * h));
        let mut factor = 1.0;
        for j in 1..=level {
            factor *= 4.0;
            let improved = (factor * next[j - 1] - row[j - 1]) / (factor - 1.0);
            next.push(improved);
        }
        std::mem::swap(&mut row, &mut next);
        h *= 0.5;
    }
    Ok(row[steps - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::{ln_gamma_raw, trigamma_raw};

    #[test]
    fn exact_for_quadratics() {
        for &x in &[-3.0, 0.0, 0.7, 25.0] {
            let d = second_derivative(|t| 1.5 * t * t - 2.0 * t + 4.0, x, 6).unwrap();
            assert!((d - 3.0).abs() < 1e-8, "x={x}: {d}");
        }
    }

    #[test]
    fn log_gamma_curvature_is_trigamma() {
        let d = second_derivative(ln_gamma_raw, 3.0, 6).unwrap();
        assert!((d - trigamma_raw(3.0)).abs() < 1e-6);
    }

    #[test]
    fn sine_at_zero() {
        let d = second_derivative(f64::sin, 0.0, 6).unwrap();
        assert!(d.abs() < 1e-8);
    }

    #[test]
    fn reports_offending_abscissa() {
        let err = second_derivative(|t: f64| if t > 1.05 { f64::NAN } else { t }, 1.0, 6).unwrap_err();
        assert!(err.to_string().contains("1.1"), "{err}");
    }
}
