#![allow(dead_code)]

/// Normalized CDF of exp(log_kernel) on [lo, hi] by the trapezoidal rule
/// over `m` equal cells; returns a closure interpolating linearly.
pub fn quadrature_cdf<F: Fn(f64) -> f64>(log_kernel: F, lo: f64, hi: f64, m: usize) -> impl Fn(f64) -> f64 {
    let h = (hi - lo) / m as f64;
    let xs: Vec<f64> = (0..=m).map(|i| lo + h * i as f64).collect();
    let lk: Vec<f64> = xs.iter().map(|&x| log_kernel(x)).collect();
    let peak = lk.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = lk.iter().map(|v| (v - peak).exp()).collect();
    let mut cum = vec![0.0; m + 1];
    for i in 1..=m {
        cum[i] = cum[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
    }
    let total = cum[m];
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let k = (((x - lo) / h) as usize).min(m - 1);
        let t = (x - xs[k]) / h;
        (cum[k] + t * (cum[k + 1] - cum[k])) / total
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn type7(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    tdof_core::diagnostics::quantile_type7(&s, p)
}

/// AR(1) series with unit innovations, started from its stationary law.
pub fn ar1(phi: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut s = tdof_core::numerics::RandomStream::new(seed, 0xa51);
    let mut x = s.normal() / (1.0 - phi * phi).sqrt();
    (0..len)
        .map(|_| {
            x = phi * x + s.normal();
            x
        })
        .collect()
}
