//! Expected augmented Fisher information for ν under the two augmentations:
//! closed form for τ, Monte Carlo with numerical second derivatives for u,
//! and the (y, ν) map of their difference.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{draw_tau_given_nu, eta_stat};
use crate::model::{log_post_nu_given_tau, tau_cdf_raw, tau_quantile_raw, NuPrior};
use crate::numerics::special::ln_gamma_raw;
use crate::numerics::{digamma, mix_ids, real_id, second_derivative, trigamma, RandomStream};

/// Richardson levels used for every numerical Hessian here.
pub const RICHARDSON_STEPS: usize = 6;
/// Largest tolerated share of draws whose Hessian could not be evaluated.
pub const MAX_DROP_RATE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub value: f64,
    /// Monte Carlo standard error; 0 for closed-form values.
    pub std_error: f64,
    /// Monte Carlo sample size (1 for closed-form values).
    pub l: usize,
    /// Draws discarded because differentiation failed.
    pub dropped: usize,
}

/// How I_τ is evaluated in the (y, ν) map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItauReading {
    /// −E ∂²/∂ν² log p(ν | y, τ) = n(ψ₁(ν/2)/2 − 1/ν)/2.
    #[default]
    Trigamma,
    /// n(ψ(ν/2) − 1/ν)/2 with the digamma function. Not an information
    /// (negative for ν ≲ 3.6); kept to compare against published maps.
    PrintedDigamma,
}

impl std::str::FromStr for ItauReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trigamma" => Ok(Self::Trigamma),
            "printed" | "printed-digamma" | "digamma" => Ok(Self::PrintedDigamma),
            other => Err(Error::Invalid(format!(
                "unknown I_tau reading {other:?} (expected trigamma or printed)"
            ))),
        }
    }
}

/// The digamma-based expression n(ψ(ν/2) − 1/ν)/2.
pub fn i_tau_printed(n: usize, nu: f64) -> Result<FisherEstimate> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::domain("i_tau_printed", format!("nu must be > 0, got {nu}")));
    }
    Ok(FisherEstimate {
        value: n as f64 * (digamma(0.5 * nu)? - 1.0 / nu) / 2.0,
        std_error: 0.0,
        l: 1,
        dropped: 0,
    })
}

/// I_τ(ν) = n(ψ₁(ν/2)/2 − 1/ν)/2, exact for any y.
pub fn i_tau(n: usize, nu: f64) -> Result<FisherEstimate> {
    if n == 0 {
        return Err(Error::domain("i_tau", "n must be >= 1"));
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::domain("i_tau", format!("nu must be > 0, got {nu}")));
    }
    let value = n as f64 * (0.5 * trigamma(0.5 * nu)? - 1.0 / nu) / 2.0;
    Ok(FisherEstimate {
        value,
        std_error: 0.0,
        l: 1,
        dropped: 0,
    })
}

fn mc_estimate(func: &'static str, values: &[f64], l: usize) -> Result<FisherEstimate> {
    let dropped = l - values.len();
    if dropped as f64 > MAX_DROP_RATE * l as f64 {
        return Err(Error::numeric(
            func,
            format!("{dropped} of {l} draws failed numerical differentiation"),
        ));
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok(FisherEstimate {
        value: mean,
        std_error: (var / k).sqrt(),
        l,
        dropped,
    })
}

fn check_mc_args(func: &'static str, nu0: f64, l: usize) -> Result<()> {
    if !(nu0.is_finite() && nu0 > 0.0) {
        return Err(Error::domain(func, format!("nu must be > 0, got {nu0}")));
    }
    if l < 2 {
        return Err(Error::domain(func, "L must be >= 2"));
    }
    Ok(())
}

/// Monte Carlo estimate of I_u(y0, ν0) from L draws of u | y0, ν0.
///
/// For each draw the negative second derivative in ν of
/// log N(y0; 0, F⁻¹(u; ν)) is taken at ν0 by Richardson extrapolation. The
/// exponential prior is linear in ν and drops out.
pub fn estimate_i_u(stream: &mut RandomStream, y0: f64, nu0: f64, l: usize) -> Result<FisherEstimate> {
    check_mc_args("estimate_i_u", nu0, l)?;
    let y2 = y0 * y0;
    let lga0 = ln_gamma_raw(0.5 * nu0);
    let mut values = Vec::with_capacity(l);
    for _ in 0..l {
        let tau = draw_tau_given_nu(stream, y0, nu0);
        let u = tau_cdf_raw(tau, nu0, lga0);
        if !(u > 0.0 && u < 1.0) {
            continue;
        }
        let loglik = |nu: f64| {
            if !(nu > 0.0) {
                return f64::NAN;
            }
            match tau_quantile_raw(u, nu, ln_gamma_raw(0.5 * nu), None) {
                Ok((t, _)) => -0.5 * (t.ln() + y2 / t),
                Err(_) => f64::NAN,
            }
        };
        if let Ok(d2) = second_derivative(loglik, nu0, RICHARDSON_STEPS) {
            values.push(-d2);
        }
    }
    mc_estimate("estimate_i_u", &values, l)
}

/// Monte Carlo estimate of I_τ built like [`estimate_i_u`]: τ is drawn
/// given n copies of y0 and ν0, and log p(ν | y, τ) is differentiated
/// numerically. Cross-checks the closed form of [`i_tau`].
pub fn estimate_i_tau_mc(
    stream: &mut RandomStream,
    y0: f64,
    nu0: f64,
    n: usize,
    l: usize,
) -> Result<FisherEstimate> {
    check_mc_args("estimate_i_tau_mc", nu0, l)?;
    let prior = NuPrior { lambda: 0.0, lower: 0.0 };
    let mut tau = vec![0.0; n];
    let mut values = Vec::with_capacity(l);
    for _ in 0..l {
        for t in tau.iter_mut() {
            *t = draw_tau_given_nu(stream, y0, nu0);
        }
        let eta = eta_stat(&tau, &prior);
        if let Ok(d2) = second_derivative(|nu| log_post_nu_given_tau(nu, eta, n), nu0, RICHARDSON_STEPS) {
            values.push(-d2);
        }
    }
    mc_estimate("estimate_i_tau_mc", &values, l)
}

/// One (y, ν) cell of the I_u − I_τ map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BepCell {
    pub y: f64,
    pub nu: f64,
    pub i_u: f64,
    pub i_tau: f64,
    pub diff: f64,
    pub se: f64,
    pub dropped: usize,
}

/// ν at which I_u − I_τ turns from positive to negative for one y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BepCrossing {
    pub y: f64,
    /// Linear interpolation between the bracketing grid points; `None`
    /// when the difference does not change sign on the grid.
    pub nu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BepGrid {
    pub cells: Vec<BepCell>,
    pub crossings: Vec<BepCrossing>,
}

/// Stream for cell (y, ν); independent of evaluation order.
pub fn cell_stream(seed: u64, y: f64, nu: f64) -> RandomStream {
    RandomStream::new(seed, mix_ids(&[0xf15e, real_id(y), real_id(nu)]))
}

/// Estimates I_u − I_τ (n = 1) on the product grid. Only |y| enters, so
/// negative y values are mirrored to their absolute value.
pub fn bep_grid(ys: &[f64], nus: &[f64], l: usize, seed: u64) -> Result<BepGrid> {
    bep_grid_with(ys, nus, l, seed, ItauReading::Trigamma)
}

pub fn bep_grid_with(
    ys: &[f64],
    nus: &[f64],
    l: usize,
    seed: u64,
    reading: ItauReading,
) -> Result<BepGrid> {
    if ys.is_empty() || nus.is_empty() {
        return Err(Error::Invalid("empty y or nu grid".into()));
    }
    if let Some(w) = nus.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid(format!("nu grid must increase ({} then {})", w[0], w[1])));
    }
    let jobs: Vec<(f64, f64)> = ys
        .iter()
        .flat_map(|&y| nus.iter().map(move |&nu| (y.abs(), nu)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(y, nu)| {
            let mut stream = cell_stream(seed, y, nu);
            let iu = estimate_i_u(&mut stream, y, nu, l)?;
            let it = match reading {
                ItauReading::Trigamma => i_tau(1, nu)?,
                ItauReading::PrintedDigamma => i_tau_printed(1, nu)?,
            };
            Ok(BepCell {
                y,
                nu,
                i_u: iu.value,
                i_tau: it.value,
                diff: iu.value - it.value,
                se: iu.std_error,
                dropped: iu.dropped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let crossings = cells
        .chunks(nus.len())
        .map(|col| BepCrossing {
            y: col[0].y,
            nu: first_crossing(col),
        })
        .collect();
    Ok(BepGrid { cells, crossings })
}

fn first_crossing(col: &[BepCell]) -> Option<f64> {
    col.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.diff > 0.0 && b.diff <= 0.0)
            .then(|| a.nu + (b.nu - a.nu) * a.diff / (a.diff - b.diff))
    })
}

impl BepGrid {
    /// `y,nu,i_u,i_tau,diff,se,dropped`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "nu", "i_u", "i_tau", "diff", "se", "dropped"])?;
        for c in &self.cells {
            w.write_record([
                c.y.to_string(),
                c.nu.to_string(),
                format!("{:.10e}", c.i_u),
                format!("{:.10e}", c.i_tau),
                format!("{:.10e}", c.diff),
                format!("{:.10e}", c.se),
                c.dropped.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `y,bep_nu` with an empty field where no crossing was found.
    pub fn write_crossings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "bep_nu"])?;
        for c in &self.crossings {
            w.write_record([c.y.to_string(), c.nu.map(|v| format!("{v:.6}")).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_interpolates() {
        let cell = |nu, diff| BepCell { y: 0.0, nu, i_u: 0.0, i_tau: 0.0, diff, se: 0.0, dropped: 0 };
        let col = [cell(2.0, 1.0), cell(3.0, 0.5), cell(5.0, -0.5), cell(8.0, 0.2)];
        assert_eq!(first_crossing(&col), Some(4.0));
        assert_eq!(first_crossing(&col[..2]), None);
    }
}
