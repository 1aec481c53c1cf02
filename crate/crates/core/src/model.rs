//! The Student-t observation model in its sufficient (τ) and ancillary (u)
//! augmentations, data simulation, and the contour grids of the joint
//! posterior of (ν, τ) and (ν, u) for a single observation.
//!
//! A priori τ⁻¹ ~ Gamma(ν/2, rate ν/2), so with a = ν/2 the prior CDF of τ is
//! F(τ; ν) = Q(a, a/τ) and its inverse is F⁻¹(u; ν) = a / Q⁻¹(a, u).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::AmTuning;
use crate::numerics::special::{
    gamma_pq_raw, gamma_quantile_raw, gamma_quantile_tol, ln_gamma_raw, log_minus_digamma, xlogx_minus_lgamma,
};
use crate::numerics::RandomStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observed data y₁..yₙ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    y: Vec<f64>,
}

impl ObservationSet {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "observation {bad} is not finite ({})",
                y[bad]
            )));
        }
        Ok(Self { y })
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Writes the `index,y` CSV used by the command-line tools.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "y"])?;
        for (i, v) in self.y.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `index,y` CSV (any column named `y`, or the last column).
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = headers
            .iter()
            .position(|h| h.trim() == "y")
            .unwrap_or_else(|| headers.len().saturating_sub(1));
        let mut y = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = rec.get(col).ok_or_else(|| {
                Error::Invalid(format!("row {} has no column {col}", line + 2))
            })?;
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Invalid(format!("row {}: cannot parse {field:?} as a number", line + 2))
            })?;
            y.push(v);
        }
        Self::new(y)
    }
}

/// Exponential prior on ν with rate λ, optionally restricted to ν > `lower`
/// (then ν − lower ~ Exp(λ)). The restriction only serves joint tests on
/// models whose simulated data overflow for tiny ν; fits use `lower = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuPrior {
    pub lambda: f64,
    #[serde(default)]
    pub lower: f64,
}

impl NuPrior {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Invalid(format!("prior rate must be > 0, got {lambda}")));
        }
        Ok(Self { lambda, lower: 0.0 })
    }

    pub fn truncated(lambda: f64, lower: f64) -> Result<Self> {
        if !(lower.is_finite() && lower >= 0.0) {
            return Err(Error::Invalid(format!("prior lower bound must be >= 0, got {lower}")));
        }
        Ok(Self {
            lower,
            ..Self::new(lambda)?
        })
    }

    pub fn log_density(&self, nu: f64) -> f64 {
        if nu > self.lower && nu > 0.0 {
            self.lambda.ln() - self.lambda * (nu - self.lower)
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.lower - (-p).ln_1p() / self.lambda
    }

    pub fn cdf(&self, nu: f64) -> f64 {
        if nu <= self.lower {
            0.0
        } else {
            -(-self.lambda * (nu - self.lower)).exp_m1()
        }
    }
}

/// Data-augmentation scheme used to update ν.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Sufficient augmentation: conjugate τ draws and exact rejection sampling for ν.
    Sa,
    /// Ancillary augmentation: u = F(τ; ν) and adaptive Metropolis for ν.
    Aa,
    /// Interweaving of the two.
    Asis,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Aa, Algorithm::Sa, Algorithm::Asis];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sa => "SA",
            Algorithm::Aa => "AA",
            Algorithm::Asis => "ASIS",
        }
    }

    pub fn id(self) -> u64 {
        match self {
            Algorithm::Sa => 1,
            Algorithm::Aa => 2,
            Algorithm::Asis => 3,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa" => Ok(Algorithm::Sa),
            "aa" => Ok(Algorithm::Aa),
            "asis" => Ok(Algorithm::Asis),
            other => Err(Error::Invalid(format!(
                "unknown algorithm {other:?} (expected sa, aa or asis)"
            ))),
        }
    }
}

/// Everything needed to run one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub algorithm: Algorithm,
    /// Number of retained draws M.
    pub iterations: usize,
    pub burn_in: usize,
    pub init_nu: f64,
    /// Adaptive-Metropolis repetitions per sweep for the ν | u update.
    pub k_aa: usize,
    pub prior: NuPrior,
    pub seed: u64,
    pub stream_id: u64,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Invalid("iterations must be >= 1".into()));
        }
        if !(self.init_nu.is_finite() && self.init_nu > 0.0) {
            return Err(Error::Invalid(format!("init_nu must be > 0, got {}", self.init_nu)));
        }
        if self.k_aa == 0 {
            return Err(Error::Invalid("k_aa must be >= 1".into()));
        }
        NuPrior::new(self.prior.lambda)?;
        Ok(())
    }
}

/// Post-burn-in draws of one chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawMatrix {
    pub nu: Vec<f64>,
    /// Acceptance rate of the adaptive-Metropolis steps after burn-in (AA/ASIS).
    pub am_accept_rate: Option<f64>,
    /// Number of sweeps in which some u rounded to 0 or 1.
    pub boundary_sweeps: usize,
}

impl DrawMatrix {
    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }
}

/// Sampler state: ν with the latent vectors of both augmentations.
#[derive(Clone, Debug)]
pub struct AugmentedState {
    pub nu: f64,
    pub tau: Vec<f64>,
    pub u: Vec<f64>,
    pub am: AmTuning,
}

impl AugmentedState {
    pub fn new(nu: f64, n: usize) -> Self {
        Self {
            nu,
            tau: vec![1.0; n],
            u: vec![0.5; n],
            am: AmTuning::default(),
        }
    }
}

/// Draws n i.i.d. standard Student-t observations with ν degrees of freedom
/// through the scale mixture y = z·√τ, τ⁻¹ ~ Gamma(ν/2, ν/2).
pub fn simulate_observations(stream: &mut RandomStream, nu: f64, n: usize) -> Result<ObservationSet> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::domain("simulate_observations", format!("nu must be > 0, got {nu}")));
    }
    let y = (0..n)
        .map(|_| {
            let precision = stream.gamma_raw(0.5 * nu, 0.5 * nu);
            stream.normal() / precision.sqrt()
        })
        .collect();
    ObservationSet::new(y)
}

/// F(τ; ν) with ln Γ(ν/2) supplied.
#[inline]
pub fn tau_cdf_raw(tau: f64, nu: f64, lga: f64) -> f64 {
    let a = 0.5 * nu;
    gamma_pq_raw(a, a / tau, lga).1
}

/// Prior CDF of τ: F(τ; ν) = 1 − P(ν/2, ν/(2τ)).
pub fn tau_cdf(tau: f64, nu: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0 && nu.is_finite() && nu > 0.0) {
        return Err(Error::domain("tau_cdf", format!("need tau > 0 and nu > 0 (tau={tau}, nu={nu})")));
    }
    Ok(tau_cdf_raw(tau, nu, ln_gamma_raw(0.5 * nu)))
}

/// F⁻¹(u; ν) with ln Γ(ν/2) supplied. Returns the gamma-scale root `x`
/// alongside τ so callers can warm-start later solves.
#[inline]
pub fn tau_quantile_raw(u: f64, nu: f64, lga: f64, start: Option<f64>) -> Result<(f64, f64)> {
    let a = 0.5 * nu;
    let x = gamma_quantile_raw(a, lga, 1.0 - u, u, start)?;
    let tau = a / x;
    if !(tau.is_finite() && tau > 0.0 && x > 0.0) {
        return Err(Error::numeric(
            "tau_quantile",
            format!("quantile out of range for u={u:e}, nu={nu} (x={x:e})"),
        ));
    }
    Ok((tau, x))
}

/// Inverse prior CDF of τ. Signals an error (never clamps) when u sits on
/// the numeric boundary or the inversion does not converge.
pub fn tau_quantile(u: f64, nu: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::domain("tau_quantile", format!("nu must be > 0, got {nu}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::numeric(
            "tau_quantile",
            format!("u={u} is not strictly inside (0, 1)"),
        ));
    }
    tau_quantile_raw(u, nu, ln_gamma_raw(0.5 * nu), None).map(|(tau, _)| tau)
}

/// Unnormalized log p(ν | y, τ): n·[(ν/2)ln(ν/2) − ln Γ(ν/2)] − ν·η.
pub fn log_post_nu_given_tau(nu: f64, eta: f64, n: usize) -> f64 {
    if !(nu > 0.0) {
        return f64::NEG_INFINITY;
    }
    n as f64 * xlogx_minus_lgamma(0.5 * nu) - nu * eta
}

/// Derivative of [`log_post_nu_given_tau`] in ν.
pub(crate) fn dlog_post_nu_given_tau(nu: f64, eta: f64, n: usize) -> f64 {
    let z = 0.5 * nu;
    0.5 * n as f64 * (1.0 + log_minus_digamma(z)) - eta
}

/// Sufficient statistic η = λ + ½ Σ (ln τᵢ + 1/τᵢ).
pub fn eta_stat(tau: &[f64], prior: &NuPrior) -> f64 {
    prior.lambda + 0.5 * tau.iter().map(|&t| t.ln() + 1.0 / t).sum::<f64>()
}

/// log N(y; 0, τ) summed over observations with variances `tau`.
#[inline]
fn normal_loglik(y2: f64, tau: f64) -> f64 {
    -0.5 * (LN_2PI + tau.ln() + y2 / tau)
}

/// Unnormalized log p(ν | y, u) = Σ log N(yᵢ; 0, F⁻¹(uᵢ; ν)) − λν.
/// Returns −∞ when any quantile evaluation fails.
pub fn log_post_nu_given_u(nu: f64, y: &ObservationSet, u: &[f64], prior: &NuPrior) -> f64 {
    assert_eq!(y.len(), u.len(), "y and u must have equal length");
    let y2: Vec<f64> = y.values().iter().map(|v| v * v).collect();
    let mut target = AncillaryTarget::new(&y2, u, prior);
    target.eval(nu)
}

/// The ν | y, u log kernel evaluated repeatedly for fixed u, reusing scratch
/// buffers. Keeps τ = F⁻¹(u; ν) of the last accepted ν.
pub struct AncillaryTarget<'a> {
    y2: &'a [f64],
    u: &'a [f64],
    lambda: f64,
    lower: f64,
    boundary: bool,
    /// Gamma-scale roots at the last evaluated ν.
    trial_x: Vec<f64>,
    /// Gamma-scale roots at the accepted ν (warm starts).
    accepted_x: Vec<f64>,
    accepted_nu: Option<f64>,
    trial_nu: f64,
    trial_ok: bool,
}

impl<'a> AncillaryTarget<'a> {
    pub fn new(y2: &'a [f64], u: &'a [f64], prior: &NuPrior) -> Self {
        let boundary = u.iter().any(|&v| !(v > 0.0 && v < 1.0));
        Self {
            y2,
            u,
            lambda: prior.lambda,
            lower: prior.lower,
            boundary,
            trial_x: vec![0.0; u.len()],
            accepted_x: vec![0.0; u.len()],
            accepted_nu: None,
            trial_nu: f64::NAN,
            trial_ok: false,
        }
    }

    /// Whether some uᵢ rounded to 0 or 1, which makes the kernel −∞ everywhere.
    pub fn on_boundary(&self) -> bool {
        self.boundary
    }

    /// Evaluates the log kernel at ν.
    pub fn eval(&mut self, nu: f64) -> f64 {
        self.trial_nu = nu;
        self.trial_ok = false;
        if self.boundary || !(nu.is_finite() && nu > 0.0 && nu > self.lower) {
            return f64::NEG_INFINITY;
        }
        let a = 0.5 * nu;
        let lga = ln_gamma_raw(a);
        let warm = self.accepted_nu.map(|v| WarmStart::new(0.5 * v, a));
        let mut acc = -self.lambda * nu;
        for i in 0..self.u.len() {
            let u = self.u[i];
            let start = warm.as_ref().map(|w| w.shift(self.accepted_x[i]));
            match gamma_quantile_tol(a, lga, 1.0 - u, u, start, HOT_HALLEY_TOL) {
                Ok(x) if x > 0.0 && x.is_finite() => {
                    self.trial_x[i] = x;
                    acc += normal_loglik(self.y2[i], a / x);
                }
                _ => return f64::NEG_INFINITY,
            }
        }
        self.trial_ok = true;
        acc
    }

    /// Records that τ is consistent with u at ν (τᵢ = F⁻¹(uᵢ; ν)), so that
    /// later evaluations can warm-start from it.
    pub fn seed(&mut self, nu: f64, tau: &[f64]) {
        let a = 0.5 * nu;
        for (x, &t) in self.accepted_x.iter_mut().zip(tau) {
            *x = a / t;
        }
        self.accepted_nu = Some(nu);
    }

    /// Marks the last evaluated ν as accepted.
    pub fn accept_last(&mut self) {
        if self.trial_ok {
            std::mem::swap(&mut self.trial_x, &mut self.accepted_x);
            self.accepted_nu = Some(self.trial_nu);
            self.trial_ok = false;
        }
    }

    /// τ = F⁻¹(u; ν) at the last accepted ν, if any proposal was accepted.
    pub fn accepted_tau(&self) -> Option<(f64, Vec<f64>)> {
        self.accepted_nu.map(|nu| {
            let a = 0.5 * nu;
            (nu, self.accepted_x.iter().map(|&x| a / x).collect())
        })
    }
}

impl crate::kernels::LogTarget for AncillaryTarget<'_> {
    fn log_density(&mut self, nu: f64) -> f64 {
        self.eval(nu)
    }

    fn accepted(&mut self) {
        self.accept_last();
    }
}

/// Halley tolerance inside the ν | u kernel; leaves relative errors in τ
/// around 1e−12, far below Monte Carlo noise.
const HOT_HALLEY_TOL: f64 = 1e-3;

/// Maps a gamma quantile at shape `a0` to a starting value at shape `a1`
/// holding the Wilson–Hilferty normal score fixed.
struct WarmStart {
    a0: f64,
    a1: f64,
    ratio: f64,
}

impl WarmStart {
    fn new(a0: f64, a1: f64) -> Self {
        Self {
            a0,
            a1,
            ratio: (a0 / a1).sqrt(),
        }
    }

    #[inline]
    fn shift(&self, x0: f64) -> f64 {
        let (a0, a1) = (self.a0, self.a1);
        // z/3 = √a0·((x0/a0)^{1/3} − 1 + 1/(9a0))
        let w0 = (x0 / a0).cbrt() - 1.0 + 1.0 / (9.0 * a0);
        let w1 = 1.0 - 1.0 / (9.0 * a1) + w0 * self.ratio;
        if w1 > 0.0 {
            a1 * w1 * w1 * w1
        } else {
            x0 * a1 / a0
        }
    }
}

/// Which augmentation's joint posterior a contour grid shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPlane {
    /// p(ν, τ | y); auxiliary axis τ ∈ (0, aux_max].
    SaPlane,
    /// p(ν, u | y); auxiliary axis u ∈ (0, 1).
    AaPlane,
}

/// Normalized density values on a (ν, aux) lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub nu: Vec<f64>,
    pub aux: Vec<f64>,
    /// Row-major: `density[i * aux.len() + j]` at (nu[i], aux[j]).
    pub density: Vec<f64>,
}

impl DensityGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.aux.len() + j]
    }

    /// Correlation of (ν, aux) under the discretized density.
    pub fn correlation(&self) -> f64 {
        let (mut m_nu, mut m_aux) = (0.0, 0.0);
        for (i, &nu) in self.nu.iter().enumerate() {
            for (j, &aux) in self.aux.iter().enumerate() {
                let p = self.at(i, j);
                m_nu += p * nu;
                m_aux += p * aux;
            }
        }
        let (mut vnu, mut vaux, mut cov) = (0.0, 0.0, 0.0);
        for (i, &nu) in self.nu.iter().enumerate() {
            for (j, &aux) in self.aux.iter().enumerate() {
                let p = self.at(i, j);
                vnu += p * (nu - m_nu).powi(2);
                vaux += p * (aux - m_aux).powi(2);
                cov += p * (nu - m_nu) * (aux - m_aux);
            }
        }
        cov / (vnu * vaux).sqrt()
    }

    /// `nu,aux,density` CSV, row-major.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["nu", "aux", "density"])?;
        for (i, nu) in self.nu.iter().enumerate() {
            for (j, aux) in self.aux.iter().enumerate() {
                w.write_record([
                    format!("{nu:.10e}"),
                    format!("{aux:.10e}"),
                    format!("{:.10e}", self.at(i, j)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates p(ν, aux | y = y0) on a `resolution.0 × resolution.1` lattice and
/// normalizes it to sum to one over the window. The ν axis spans
/// `nu_range` inclusively; τ takes `aux_max·k/m` for k = 1..m and u takes
/// the cell midpoints (k − ½)/m.
pub fn joint_grid(
    y0: f64,
    plane: GridPlane,
    nu_range: (f64, f64),
    aux_max: f64,
    resolution: (usize, usize),
    prior: &NuPrior,
) -> Result<DensityGrid> {
    let (n_nu, n_aux) = resolution;
    if n_nu < 2 || n_aux < 1 {
        return Err(Error::Invalid("grid resolution must be at least 2 x 1".into()));
    }
    let (lo, hi) = nu_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Invalid(format!("bad nu range [{lo}, {hi}]")));
    }
    let nu: Vec<f64> = (0..n_nu)
        .map(|i| lo + (hi - lo) * i as f64 / (n_nu - 1) as f64)
        .collect();
    let aux: Vec<f64> = match plane {
        GridPlane::SaPlane => {
            if !(aux_max > 0.0) {
                return Err(Error::Invalid(format!("tau range upper end must be > 0, got {aux_max}")));
            }
            (1..=n_aux).map(|k| aux_max * k as f64 / n_aux as f64).collect()
        }
        GridPlane::AaPlane => (0..n_aux).map(|k| (k as f64 + 0.5) / n_aux as f64).collect(),
    };
    let y2 = y0 * y0;
    let mut logd = Vec::with_capacity(n_nu * n_aux);
    for &v in &nu {
        let a = 0.5 * v;
        let lga = ln_gamma_raw(a);
        let lprior = prior.log_density(v);
        for &w in &aux {
            let l = match plane {
                GridPlane::SaPlane => {
                    // density of τ when τ⁻¹ ~ Gamma(a, rate a): g(1/τ)·τ⁻²
                    let s = 1.0 / w;
                    let log_prior_tau = a * a.ln() + (a - 1.0) * s.ln() - a * s - lga - 2.0 * w.ln();
                    lprior + log_prior_tau + normal_loglik(y2, w)
                }
                GridPlane::AaPlane => match tau_quantile_raw(w, v, lga, None) {
                    Ok((tau, _)) => lprior + normal_loglik(y2, tau),
                    Err(_) => f64::NEG_INFINITY,
                },
            };
            logd.push(l);
        }
    }
    let max = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numeric("joint_grid", "density is zero on the whole window"));
    }
    let mut density: Vec<f64> = logd.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = density.iter().sum();
    density.iter_mut().for_each(|d| *d /= total);
    Ok(DensityGrid { nu, aux, density })
}
