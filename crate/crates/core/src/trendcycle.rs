//! AR(5) trend-cycle regression with Student-t increments:
//!
//! y_t = γ(1−ρ) + δ(ρ − Σa_j) + δ(1−ρ)t + ρy_{t−1} + Σ_j a_j(y_{t−j} − y_{t−j−1}) + ε_t,
//! ε_t ~ t_ν(0, σ²),
//!
//! fitted by a six-step Gibbs sampler whose ν step is any of the three
//! augmentation schemes. The first five observations are conditioned on;
//! the time index t counts from the first observation (t = 0).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{efficiency, summarize, Efficiency, Summary};
use crate::error::{Error, Result};
use crate::kernels::{sweep, AmMode, ChainStreams, SweepOptions};
use crate::model::{Algorithm, AugmentedState, NuPrior, ObservationSet};
use crate::numerics::{mix_ids, std_normal_cdf, std_normal_quantile, RandomStream};
use crate::validation::{ks_pvalue, ks_statistic};

pub const LAGS: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 0.333;
pub const GAMMA_PRIOR_VAR: f64 = 100.0;
pub const DELTA_PRIOR_VAR: f64 = 0.0025;
pub const RHO_INIT_MAX: f64 = 0.999;
pub const RHO_PROPOSAL_CAP: u64 = 1_000_000;

/// Prior variance of a_j, j = 1..4: 0.731·0.342^{j−1}.
pub fn a_prior_var(j: usize) -> f64 {
    0.731 * 0.342f64.powi(j as i32 - 1)
}

/// Series names kept in levels when log-transforming.
pub const LEVEL_SERIES: [&str; 4] = ["int.rate", "Interest Rate", "interest_rate", "bnd"];

/// Canonical display names for the extended Nelson–Plosser columns.
pub fn display_name(name: &str) -> &str {
    match name {
        "cpi" => "CPI",
        "emp" => "Employment",
        "gnp.def" => "GNP Deflator",
        "ip" => "Industrial Production",
        "int.rate" => "Interest Rate",
        "money.stock" => "Money Stock",
        "gnp.nom" => "Nominal GNP",
        "gnp.real" => "Real GNP",
        "gnp.capita" => "Real per Capita GNP",
        "real.wages" => "Real Wages",
        "stock.prices" => "Stock Prices",
        "unemp" => "Unemployment Rate",
        "vel" => "Velocity",
        "nom.wages" => "Wages",
        other => other,
    }
}

/// One annual series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpSeries {
    pub name: String,
    pub years: Vec<i32>,
    pub values: Vec<f64>,
    pub log_transformed: bool,
}

impl NpSeries {
    pub fn new(name: impl Into<String>, years: Vec<i32>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if years.len() != values.len() {
            return Err(Error::Invalid(format!("series {name}: years and values differ in length")));
        }
        if years.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Invalid(format!("series {name}: years are not consecutive")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("series {name}: non-finite value")));
        }
        if values.len() < LAGS + 1 {
            return Err(Error::Invalid(format!(
                "series {name}: {} observations, need at least {}",
                values.len(),
                LAGS + 1
            )));
        }
        Ok(Self {
            name,
            years,
            values,
            log_transformed: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Take natural logs of every series not listed in `levels`.
    pub log_transform: bool,
    pub levels: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            log_transform: true,
            levels: LEVEL_SERIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Reads a `year,<series...>` CSV with empty cells for missing years.
/// Leading missing years are trimmed per series; gaps after the first
/// observation are an error.
pub fn load_np_csv<R: std::io::Read>(input: R, opts: &LoadOptions) -> Result<BTreeMap<String, NpSeries>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("year") {
        return Err(Error::Invalid("first column must be `year`".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut years: Vec<i32> = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let year: i32 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("row {row}: bad year {:?}", &rec[0])))?;
        if let Some(&prev) = years.last() {
            if year <= prev {
                return Err(Error::Invalid(format!("row {row}: years must increase ({prev} then {year})")));
            }
        }
        years.push(year);
        for (k, col) in cols.iter_mut().enumerate() {
            let field = rec.get(k + 1).unwrap_or("").trim();
            let v = if field.is_empty() || field == "NA" {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    Error::Invalid(format!("row {row}, series {}: bad value {field:?}", names[k]))
                })?)
            };
            col.push(v);
        }
    }
    let mut out = BTreeMap::new();
    for (name, col) in names.iter().zip(cols) {
        let Some(first) = col.iter().position(Option::is_some) else {
            return Err(Error::Invalid(format!("series {name}: no observations")));
        };
        let last = col.iter().rposition(Option::is_some).unwrap_or(first);
        let mut values = Vec::with_capacity(last + 1 - first);
        for (k, v) in col[first..=last].iter().enumerate() {
            match v {
                Some(v) => values.push(*v),
                None => {
                    return Err(Error::Invalid(format!(
                        "series {name}: missing value in {} after the series started",
                        years[first + k]
                    )))
                }
            }
        }
        let take_logs = opts.log_transform && !opts.levels.iter().any(|l| l == name);
        if take_logs {
            if let Some(bad) = values.iter().find(|v| **v <= 0.0) {
                return Err(Error::Invalid(format!("series {name}: cannot take the log of {bad}")));
            }
            values.iter_mut().for_each(|v| *v = v.ln());
        }
        let mut s = NpSeries::new(name.clone(), years[first..=last].to_vec(), values)?;
        s.log_transformed = take_logs;
        out.insert(name.clone(), s);
    }
    Ok(out)
}

/// Writes series (as stored) back to the `year,<series...>` layout.
pub fn write_np_csv<W: Write>(out: W, series: &BTreeMap<String, NpSeries>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<&String> = series.keys().collect();
    let mut header = vec!["year".to_string()];
    header.extend(names.iter().map(|n| n.to_string()));
    w.write_record(&header)?;
    let lo = series.values().map(|s| s.years[0]).min().unwrap_or(0);
    let hi = series.values().map(|s| *s.years.last().unwrap()).max().unwrap_or(-1);
    for year in lo..=hi {
        let mut rec = vec![year.to_string()];
        for n in &names {
            let s = &series[*n];
            let v = (year - s.years[0]) as isize;
            rec.push(if v >= 0 && (v as usize) < s.len() {
                format!("{:.17e}", s.values[v as usize])
            } else {
                String::new()
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_np_file(path: &Path, opts: &LoadOptions) -> Result<BTreeMap<String, NpSeries>> {
    load_np_csv(std::fs::File::open(path)?, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCycleParams {
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
    pub a: [f64; 4],
    pub sigma2: f64,
    pub nu: f64,
    /// Latent scales of the modelled observations (length T − 5).
    pub tau: Vec<f64>,
}

/// m_t for the observation with index `t` (needs t ≥ 5).
pub fn conditional_mean(y: &[f64], t: usize, p: &TrendCycleParams) -> f64 {
    let sa: f64 = p.a.iter().sum();
    let tf = t as f64;
    let mut m = p.gamma * (1.0 - p.rho) + p.delta * (p.rho - sa) + p.delta * (1.0 - p.rho) * tf
        + p.rho * y[t - 1];
    for j in 1..=4 {
        m += p.a[j - 1] * (y[t - j] - y[t - j - 1]);
    }
    m
}

/// Residuals ε_t = y_t − m_t for t = 5..T−1.
pub fn residuals(y: &[f64], p: &TrendCycleParams) -> Vec<f64> {
    (LAGS..y.len()).map(|t| y[t] - conditional_mean(y, t, p)).collect()
}

// Small dense helpers for the conjugate normal updates.

/// Householder QR of a column-major m×k matrix (m ≥ k), applied in place
/// to `b` as well. Returns the k×k triangle transposed (lower, row-major).
fn householder_qr(a: &mut [f64], m: usize, k: usize, b: &mut [f64]) -> Result<Vec<f64>> {
    for j in 0..k {
        let col = &mut a[j * m..(j + 1) * m];
        let norm = col[j..].iter().fold(0.0f64, |acc, v| acc.hypot(*v));
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::numeric("householder_qr", format!("column {j} is degenerate")));
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        let v: Vec<f64> = col[j..].to_vec();
        col[j] = alpha;
        col[j + 1..].iter_mut().for_each(|x| *x = 0.0);
        let reflect = |x: &mut [f64]| {
            let d: f64 = v.iter().zip(&x[j..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vnorm2;
            x[j..].iter_mut().zip(&v).for_each(|(q, p)| *q -= d * p);
        };
        for c in j + 1..k {
            reflect(&mut a[c * m..(c + 1) * m]);
        }
        reflect(b);
    }
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        for i in 0..=j {
            l[j * k + i] = a[j * m + i];
        }
    }
    Ok(l)
}

/// Solves L x = b.
fn forward(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; k];
    for i in 0..k {
        let s: f64 = (0..i).map(|p| l[i * k + p] * x[p]).sum();
        x[i] = (b[i] - s) / l[i * k + i];
    }
    x
}

/// Solves Lᵀ x = b.
fn backward(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|p| l[p * k + i] * x[p]).sum();
        x[i] = (b[i] - s) / l[i * k + i];
    }
    x
}

/// Gaussian posterior of β in r = Xβ + e, e_t ~ N(0, 1/w_t), β ~ N(m0, diag(v0)).
///
/// Works in prior-standardized coordinates β̃ = β/√v0 and factors the
/// stacked least-squares system by QR, which tolerates observations with
/// wildly different weights.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalPosterior {
    pub mean: Vec<f64>,
    /// Lower factor of the standardized posterior precision.
    factor: Vec<f64>,
    scale: Vec<f64>,
    k: usize,
}

impl NormalPosterior {
    pub fn new(rows: &[Vec<f64>], r: &[f64], w: &[f64], m0: &[f64], v0: &[f64]) -> Result<Self> {
        let k = m0.len();
        let m = rows.len() + k;
        let scale: Vec<f64> = v0.iter().map(|v| v.sqrt()).collect();
        let mut a = vec![0.0; m * k];
        let mut b = vec![0.0; m];
        for (t, ((x, &rt), &wt)) in rows.iter().zip(r).zip(w).enumerate() {
            let sw = wt.sqrt();
            for j in 0..k {
                a[j * m + t] = sw * x[j] * scale[j];
            }
            b[t] = sw * rt;
        }
        for j in 0..k {
            a[j * m + rows.len() + j] = 1.0;
            b[rows.len() + j] = m0[j] / scale[j];
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::numeric("normal_posterior", "non-finite regression data"));
        }
        let factor = householder_qr(&mut a, m, k, &mut b)?;
        let mean_std = backward(&factor, k, &b[..k]);
        let mean = mean_std.iter().zip(&scale).map(|(x, s)| x * s).collect();
        Ok(Self { mean, factor, scale, k })
    }

    /// Posterior covariance (row-major).
    pub fn covariance(&self) -> Vec<f64> {
        let k = self.k;
        let mut cov = vec![0.0; k * k];
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let col = backward(&self.factor, k, &forward(&self.factor, k, &e));
            for i in 0..k {
                cov[i * k + j] = col[i] * self.scale[i] * self.scale[j];
            }
        }
        cov
    }

    pub fn draw(&self, stream: &mut RandomStream) -> Vec<f64> {
        let z: Vec<f64> = (0..self.k).map(|_| stream.normal()).collect();
        let dev = backward(&self.factor, self.k, &z);
        self.mean
            .iter()
            .zip(dev)
            .zip(&self.scale)
            .map(|((m, d), s)| m + d * s)
            .collect()
    }
}

fn weights(p: &TrendCycleParams) -> Vec<f64> {
    p.tau.iter().map(|t| 1.0 / (p.sigma2 * t)).collect()
}

/// Conditional posterior of (γ, δ).
pub fn gamma_delta_posterior(y: &[f64], p: &TrendCycleParams) -> Result<NormalPosterior> {
    let sa: f64 = p.a.iter().sum();
    let mut rows = Vec::with_capacity(y.len() - LAGS);
    let mut r = Vec::with_capacity(y.len() - LAGS);
    for t in LAGS..y.len() {
        let mut lhs = y[t] - p.rho * y[t - 1];
        for j in 1..=4 {
            lhs -= p.a[j - 1] * (y[t - j] - y[t - j - 1]);
        }
        rows.push(vec![1.0 - p.rho, (p.rho - sa) + (1.0 - p.rho) * t as f64]);
        r.push(lhs);
    }
    NormalPosterior::new(&rows, &r, &weights(p), &[y[0], 0.0], &[GAMMA_PRIOR_VAR, DELTA_PRIOR_VAR])
}

pub fn draw_gamma_delta(stream: &mut RandomStream, y: &[f64], p: &TrendCycleParams) -> Result<(f64, f64)> {
    let d = gamma_delta_posterior(y, p)?.draw(stream);
    Ok((d[0], d[1]))
}

/// Conditional posterior of (a₁, …, a₄); the regressor of a_j is Δy_{t−j} − δ.
pub fn a_posterior(y: &[f64], p: &TrendCycleParams) -> Result<NormalPosterior> {
    let mut rows = Vec::with_capacity(y.len() - LAGS);
    let mut r = Vec::with_capacity(y.len() - LAGS);
    for t in LAGS..y.len() {
        let tf = t as f64;
        r.push(y[t] - p.gamma * (1.0 - p.rho) - p.delta * p.rho - p.delta * (1.0 - p.rho) * tf - p.rho * y[t - 1]);
        rows.push((1..=4).map(|j| y[t - j] - y[t - j - 1] - p.delta).collect());
    }
    let v0: Vec<f64> = (1..=4).map(a_prior_var).collect();
    NormalPosterior::new(&rows, &r, &weights(p), &[0.0; 4], &v0)
}

pub fn draw_a(stream: &mut RandomStream, y: &[f64], p: &TrendCycleParams) -> Result<[f64; 4]> {
    let d = a_posterior(y, p)?.draw(stream);
    Ok([d[0], d[1], d[2], d[3]])
}

/// Mean and standard deviation of the Gaussian likelihood factor in ρ:
/// y_t − γ − δt + δΣa − ΣaΔy = ρ(y_{t−1} − γ − δ(t−1)) + ε_t.
pub fn rho_likelihood(y: &[f64], p: &TrendCycleParams) -> (f64, f64) {
    let sa: f64 = p.a.iter().sum();
    let (mut szz, mut szr) = (0.0, 0.0);
    for (t, w) in (LAGS..y.len()).zip(weights(p)) {
        let tf = t as f64;
        let mut r = y[t] - p.gamma - p.delta * tf + p.delta * sa;
        for j in 1..=4 {
            r -= p.a[j - 1] * (y[t - j] - y[t - j - 1]);
        }
        let z = y[t - 1] - p.gamma - p.delta * (tf - 1.0);
        szz += w * z * z;
        szr += w * z * r;
    }
    (szr / szz, 1.0 / szz.sqrt())
}

/// Standardized bound beyond which [`truncated_normal`] switches from
/// inversion to exponential rejection.
const TAIL_START: f64 = 5.0;

/// N(mean, sd²) truncated to [lo, hi). Inversion (in the lower tail, for
/// accuracy) when the interval reaches the body of the distribution;
/// rejection from a truncated exponential when it lies in a far tail.
pub fn truncated_normal(stream: &mut RandomStream, mean: f64, sd: f64, lo: f64, hi: f64) -> Result<f64> {
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(Error::numeric(
            "truncated_normal",
            format!("cannot truncate N({mean}, {sd}²) to [{lo}, {hi})"),
        ));
    }
    let z = if a >= TAIL_START {
        tail_normal(stream, a, b)
    } else if b <= -TAIL_START {
        -tail_normal(stream, -b, -a)
    } else {
        // Reflect so that the interval is not entirely in the upper tail.
        let (a, b, sign) = if a > 0.0 { (-b, -a, -1.0) } else { (a, b, 1.0) };
        let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
        let u = pa + (pb - pa) * stream.uniform();
        sign * std_normal_quantile(u).clamp(a, b)
    };
    Ok((mean + sd * z).clamp(lo, hi.next_down()))
}

/// Standard normal restricted to [l, h] with l > 0: propose l + E with E
/// exponential of rate l truncated to [0, h − l], accept w.p. exp(−E²/2).
fn tail_normal(stream: &mut RandomStream, l: f64, h: f64) -> f64 {
    let mass = -(-l * (h - l)).exp_m1();
    loop {
        let e = -(-stream.uniform() * mass).ln_1p() / l;
        if stream.uniform() < (-0.5 * e * e).exp() {
            return (l + e).min(h);
        }
    }
}

/// Exact draw of ρ from N(ρ; m, s²)·ρ⁴ on [0, 1).
pub fn draw_rho_from(stream: &mut RandomStream, mean: f64, sd: f64) -> Result<f64> {
    for _ in 0..RHO_PROPOSAL_CAP {
        let r = truncated_normal(stream, mean, sd, 0.0, 1.0)?;
        if stream.uniform() < r.powi(4) {
            return Ok(r);
        }
    }
    Err(Error::numeric(
        "draw_rho",
        format!("no acceptance in {RHO_PROPOSAL_CAP} proposals (mean={mean}, sd={sd})"),
    ))
}

pub fn draw_rho(stream: &mut RandomStream, y: &[f64], p: &TrendCycleParams) -> Result<f64> {
    let (m, s) = rho_likelihood(y, p);
    draw_rho_from(stream, m, s)
}

/// σ² ~ Scaled-Inv-χ²(T, s²) with s² = Σ ε_t²/τ_t / T over the T modelled terms.
pub fn draw_sigma2(stream: &mut RandomStream, eps: &[f64], tau: &[f64]) -> Result<f64> {
    let t = eps.len() as f64;
    let ss: f64 = eps.iter().zip(tau).map(|(e, w)| e * e / w).sum();
    let chi2 = 2.0 * stream.gamma(0.5 * t, 1.0)?;
    Ok(ss / chi2)
}

/// ν and the latent scales given standardized residuals ε_t/σ.
pub fn draw_nu_tau(
    state: &mut AugmentedState,
    eps: &[f64],
    sigma2: f64,
    prior: &NuPrior,
    algorithm: Algorithm,
    streams: &mut ChainStreams,
    opts: &SweepOptions,
) -> Result<()> {
    let sigma = sigma2.sqrt();
    let z = ObservationSet::new(eps.iter().map(|e| e / sigma).collect())?;
    sweep(algorithm, state, &z, prior, streams, opts)?;
    Ok(())
}

/// OLS start: unrestricted regression of y_t on (1, t, y_{t−1}, Δy_{t−1..4}),
/// mapped back to (γ, δ, ρ, a) with ρ clipped to [0, 0.999].
pub fn ols_init(y: &[f64]) -> Result<TrendCycleParams> {
    let m = y.len() - LAGS;
    if m < 8 {
        return Err(Error::Invalid(format!("{} modelled observations are too few for OLS", m)));
    }
    let rows: Vec<Vec<f64>> = (LAGS..y.len())
        .map(|t| {
            let mut x = vec![1.0, t as f64, y[t - 1]];
            x.extend((1..=4).map(|j| y[t - j] - y[t - j - 1]));
            x
        })
        .collect();
    let r: Vec<f64> = y[LAGS..].to_vec();
    // Diffuse ridge keeps the normal equations solvable for short series.
    let post = NormalPosterior::new(&rows, &r, &vec![1.0; m], &[0.0; 7], &[1e12; 7])?;
    let b = &post.mean;
    let rho = b[2].clamp(0.0, RHO_INIT_MAX);
    let a = [b[3], b[4], b[5], b[6]];
    let sa: f64 = a.iter().sum();
    let delta = b[1] / (1.0 - rho);
    let gamma = (b[0] - delta * (rho - sa)) / (1.0 - rho);
    let mut p = TrendCycleParams {
        gamma,
        delta,
        rho,
        a,
        sigma2: 1.0,
        nu: 4.0,
        tau: vec![1.0; m],
    };
    let eps = residuals(y, &p);
    let mean = eps.iter().sum::<f64>() / m as f64;
    p.sigma2 = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub burn_in: usize,
    pub k_aa: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Asis,
            iterations: 10_000,
            burn_in: 1_000,
            k_aa: 20,
            lambda: DEFAULT_LAMBDA,
            seed: 1,
        }
    }
}

/// One retained draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCycleDraw {
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
    pub a: [f64; 4],
    pub sigma2: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub series: String,
    pub algorithm: Algorithm,
    pub log_transformed: bool,
    pub observations: usize,
    pub nu: Summary,
    pub nu_q10: f64,
    pub nu_q90: f64,
    pub nu_efficiency: Efficiency,
    pub am_accept_rate: Option<f64>,
    pub config: FitConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub draws: Vec<TrendCycleDraw>,
    pub summary: FitSummary,
}

fn fit_stream_id(series: &str, alg: Algorithm) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in series.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    mix_ids(&[0x7c, h, alg.id()])
}

/// Per-iteration state of the six-step sampler.
struct Sampler<'a> {
    y: &'a [f64],
    params: TrendCycleParams,
    nu_state: AugmentedState,
    prior: NuPrior,
    algorithm: Algorithm,
    streams: ChainStreams,
    opts: SweepOptions,
}

impl Sampler<'_> {
    /// The enabled blocks in order, σ² last when `steps.sigma2` is set.
    fn pass(&mut self, steps: &Steps) -> std::result::Result<(), (&'static str, Error)> {
        let s = &mut self.streams.main;
        if steps.gamma_delta {
            let (g, d) = draw_gamma_delta(s, self.y, &self.params).map_err(|e| ("gamma/delta", e))?;
            self.params.gamma = g;
            self.params.delta = d;
        }
        if steps.a {
            self.params.a = draw_a(s, self.y, &self.params).map_err(|e| ("a", e))?;
        }
        if steps.rho {
            self.params.rho = draw_rho(s, self.y, &self.params).map_err(|e| ("rho", e))?;
        }
        let eps = residuals(self.y, &self.params);
        if steps.nu_tau {
            draw_nu_tau(
                &mut self.nu_state,
                &eps,
                self.params.sigma2,
                &self.prior,
                self.algorithm,
                &mut self.streams,
                &self.opts,
            )
            .map_err(|e| ("nu/tau", e))?;
            self.params.nu = self.nu_state.nu;
            self.params.tau.clone_from(&self.nu_state.tau);
        }
        if steps.sigma2 {
            self.params.sigma2 = draw_sigma2(&mut self.streams.main, &eps, &self.params.tau).map_err(|e| ("sigma2", e))?;
        }
        Ok(())
    }
}

/// Which blocks of the sampler run in a pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Steps {
    pub gamma_delta: bool,
    pub a: bool,
    pub rho: bool,
    pub nu_tau: bool,
    pub sigma2: bool,
}

impl Steps {
    pub const ALL: Steps = Steps {
        gamma_delta: true,
        a: true,
        rho: true,
        nu_tau: true,
        sigma2: true,
    };
    /// Everything except σ², whose prior is improper.
    pub const FIXED_SIGMA2: Steps = Steps {
        sigma2: false,
        ..Steps::ALL
    };
}

impl Default for Steps {
    fn default() -> Self {
        Self::FIXED_SIGMA2
    }
}

fn step_error(series: &str, it: usize, (step, e): (&str, Error)) -> Error {
    Error::numeric(
        "fit_series",
        format!("series {series}, iteration {it}, {step} block: {e}"),
    )
}

/// Full Gibbs run on one series.
pub fn fit_series(series: &NpSeries, config: &FitConfig) -> Result<FitResult> {
    let y = &series.values;
    if y.len() < LAGS + 8 {
        return Err(Error::Invalid(format!("series {} is too short", series.name)));
    }
    let prior = NuPrior::new(config.lambda)?;
    let params = ols_init(y)?;
    let mut nu_state = AugmentedState::new(params.nu, y.len() - LAGS);
    nu_state.tau.clone_from(&params.tau);
    let mut sampler = Sampler {
        y,
        params,
        nu_state,
        prior,
        algorithm: config.algorithm,
        streams: ChainStreams::new(config.seed, fit_stream_id(&series.name, config.algorithm)),
        opts: SweepOptions {
            k_aa: config.k_aa,
            am_mode: AmMode::Standard,
        },
    };
    for it in 0..config.burn_in {
        sampler.pass(&Steps::ALL).map_err(|e| step_error(&series.name, it, e))?;
    }
    sampler.nu_state.am.freeze();
    sampler.nu_state.am.reset_counters();
    let mut draws = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        sampler
            .pass(&Steps::ALL)
            .map_err(|e| step_error(&series.name, config.burn_in + it, e))?;
        let p = &sampler.params;
        draws.push(TrendCycleDraw {
            gamma: p.gamma,
            delta: p.delta,
            rho: p.rho,
            a: p.a,
            sigma2: p.sigma2,
            nu: p.nu,
        });
    }
    let nu: Vec<f64> = draws.iter().map(|d| d.nu).collect();
    let s = summarize(&nu, &[0.1, 0.9])?;
    let summary = FitSummary {
        series: series.name.clone(),
        algorithm: config.algorithm,
        log_transformed: series.log_transformed,
        observations: y.len(),
        nu_q10: s.quantiles[0],
        nu_q90: s.quantiles[1],
        nu: s,
        nu_efficiency: efficiency(&nu)?,
        am_accept_rate: if config.algorithm == Algorithm::Sa {
            None
        } else {
            sampler.nu_state.am.accept_rate()
        },
        config: config.clone(),
    };
    Ok(FitResult { draws, summary })
}

/// Fits independent (series, configuration) jobs on a pool of `jobs`
/// threads; results come back in input order.
pub fn fit_many(work: &[(NpSeries, FitConfig)], jobs: usize) -> Result<Vec<Result<FitResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| work.par_iter().map(|(s, c)| fit_series(s, c)).collect()))
}

/// `iter,gamma,delta,rho,a1,a2,a3,a4,sigma2,nu`
pub fn write_draws_csv<W: Write>(out: W, draws: &[TrendCycleDraw]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "gamma", "delta", "rho", "a1", "a2", "a3", "a4", "sigma2", "nu"])?;
    for (i, d) in draws.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(
            [d.gamma, d.delta, d.rho, d.a[0], d.a[1], d.a[2], d.a[3], d.sigma2, d.nu]
                .iter()
                .map(|v| format!("{v:.10e}")),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Wide per-series table: medians, 80% intervals and RNE for each
/// algorithm, the AA/SA RNE ratio and the mean of the medians.
pub fn write_application_table<W: Write>(out: W, fits: &[FitSummary]) -> Result<()> {
    let mut by_series: BTreeMap<&str, BTreeMap<Algorithm, &FitSummary>> = BTreeMap::new();
    for f in fits {
        by_series.entry(&f.series).or_default().insert(f.algorithm, f);
    }
    let algs = [Algorithm::Aa, Algorithm::Sa, Algorithm::Asis];
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["series".to_string()];
    for a in algs {
        let l = a.name().to_lowercase();
        header.extend([format!("median_{l}"), format!("q10_{l}"), format!("q90_{l}"), format!("rne_{l}")]);
    }
    header.extend(["aa_sa_ratio".to_string(), "mean_median".to_string()]);
    w.write_record(&header)?;
    let cell = |v: Option<f64>, digits: usize| v.map(|x| format!("{x:.digits$}")).unwrap_or_default();
    for (series, m) in by_series {
        let mut rec = vec![display_name(series).to_string()];
        for a in algs {
            let f = m.get(&a);
            rec.push(cell(f.map(|f| f.nu.median), 3));
            rec.push(cell(f.map(|f| f.nu_q10), 3));
            rec.push(cell(f.map(|f| f.nu_q90), 3));
            rec.push(cell(f.map(|f| 100.0 * f.nu_efficiency.rne), 1));
        }
        let ratio = match (m.get(&Algorithm::Aa), m.get(&Algorithm::Sa)) {
            (Some(aa), Some(sa)) if sa.nu_efficiency.rne > 0.0 => Some(aa.nu_efficiency.rne / sa.nu_efficiency.rne),
            _ => None,
        };
        rec.push(cell(ratio, 2));
        let medians: Vec<f64> = m.values().map(|f| f.nu.median).collect();
        rec.push(cell(Some(medians.iter().sum::<f64>() / medians.len() as f64), 3));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Joint test of the trend-cycle sampler with σ² held fixed (its prior is improper).
///
/// ν is restricted to ν > `nu_lower`: below about 0.1 the simulated levels
/// carry shocks so large that later residuals cannot be recovered from
/// them in double precision, and the test would measure rounding noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendGewekeConfig {
    pub algorithm: Algorithm,
    /// Series length including the five presample values.
    pub length: usize,
    pub sigma2: f64,
    pub lambda: f64,
    pub nu_lower: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub k_aa: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub steps: Steps,
}

impl Default for TrendGewekeConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sa,
            length: 12,
            sigma2: 1.0,
            lambda: DEFAULT_LAMBDA,
            nu_lower: 1.0,
            iterations: 1_000_000,
            burn_in: 1_000,
            thin: 400,
            k_aa: 20,
            seed: 1,
            alpha: 0.01,
            steps: Steps::FIXED_SIGMA2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub parameter: String,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendGewekeReport {
    pub config: TrendGewekeConfig,
    pub checks: Vec<MarginalCheck>,
    pub pass: bool,
    pub error: Option<String>,
}

/// Simulates the modelled part of `y` (indices ≥ 5) given the parameters
/// and latent scales: ε_t ~ N(0, σ²τ_t).
pub fn simulate_series(stream: &mut RandomStream, y: &mut [f64], p: &TrendCycleParams) {
    for t in LAGS..y.len() {
        let eps = (p.sigma2 * p.tau[t - LAGS]).sqrt() * stream.normal();
        y[t] = conditional_mean(y, t, p) + eps;
    }
}

fn draw_from_prior(stream: &mut RandomStream, y0: f64, sigma2: f64, prior: &NuPrior, m: usize) -> TrendCycleParams {
    let gamma = y0 + GAMMA_PRIOR_VAR.sqrt() * stream.normal();
    let delta = DELTA_PRIOR_VAR.sqrt() * stream.normal();
    let a = [1, 2, 3, 4].map(|j| a_prior_var(j).sqrt() * stream.normal());
    // ρ has density 5ρ⁴ on [0, 1]: ρ = U^{1/5}.
    let rho = stream.uniform().powf(0.2);
    let nu = prior.quantile(stream.uniform());
    let tau = (0..m).map(|_| 1.0 / stream.gamma_raw(0.5 * nu, 0.5 * nu)).collect();
    TrendCycleParams {
        gamma,
        delta,
        rho,
        a,
        sigma2,
        nu,
        tau,
    }
}

pub fn trend_geweke_test(config: &TrendGewekeConfig) -> Result<TrendGewekeReport> {
    if config.length < LAGS + 2 || config.thin == 0 || config.iterations < 2 * config.thin {
        return Err(Error::Invalid("bad joint-test configuration".into()));
    }
    let prior = NuPrior::truncated(config.lambda, config.nu_lower)?;
    let m = config.length - LAGS;
    let mut data_stream = RandomStream::new(config.seed, 0x7e57);
    // Fixed presample; y₀ = 0 centres the γ prior.
    let mut y = vec![0.0; config.length];
    for v in y.iter_mut().take(LAGS).skip(1) {
        *v = 0.1 * data_stream.normal();
    }
    let params = draw_from_prior(&mut data_stream, y[0], config.sigma2, &prior, m);
    simulate_series(&mut data_stream, &mut y, &params);
    let mut nu_state = AugmentedState::new(params.nu, m);
    nu_state.tau.clone_from(&params.tau);
    let mut y_owned = y;
    let mut sampler_params = params;
    let mut state = nu_state;
    let mut streams = ChainStreams::new(config.seed, mix_ids(&[0x7e, config.algorithm.id()]));
    let opts = SweepOptions {
        k_aa: config.k_aa,
        am_mode: AmMode::Standard,
    };

    let names = ["gamma", "delta", "rho", "a1", "a2", "a3", "a4", "nu"];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut error = None;
    for it in 0..config.burn_in + config.iterations {
        if it == config.burn_in {
            state.am.freeze();
        }
        let mut sampler = Sampler {
            y: &y_owned,
            params: sampler_params.clone(),
            nu_state: std::mem::replace(&mut state, AugmentedState::new(1.0, 0)),
            prior,
            algorithm: config.algorithm,
            streams: streams.clone(),
            opts,
        };
        let res = sampler.pass(&config.steps);
        sampler_params = sampler.params;
        state = sampler.nu_state;
        streams = sampler.streams;
        if let Err((step, e)) = res {
            error = Some(format!("iteration {it}, {step} block: {e}"));
            break;
        }
        simulate_series(&mut data_stream, &mut y_owned, &sampler_params);
        if it >= config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            let p = &sampler_params;
            for (k, v) in [p.gamma, p.delta, p.rho, p.a[0], p.a[1], p.a[2], p.a[3], p.nu]
                .into_iter()
                .enumerate()
            {
                samples[k].push(v);
            }
        }
    }

    let y0 = y_owned[0];
    let normal_cdf = |mean: f64, var: f64| move |x: f64| std_normal_cdf((x - mean) / var.sqrt());
    let cdfs: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(normal_cdf(y0, GAMMA_PRIOR_VAR)),
        Box::new(normal_cdf(0.0, DELTA_PRIOR_VAR)),
        Box::new(|x: f64| x.clamp(0.0, 1.0).powi(5)),
        Box::new(normal_cdf(0.0, a_prior_var(1))),
        Box::new(normal_cdf(0.0, a_prior_var(2))),
        Box::new(normal_cdf(0.0, a_prior_var(3))),
        Box::new(normal_cdf(0.0, a_prior_var(4))),
        Box::new(move |x: f64| prior.cdf(x)),
    ];
    let checks: Vec<MarginalCheck> = names
        .iter()
        .zip(&samples)
        .zip(&cdfs)
        .map(|((name, s), cdf)| {
            let d = if s.is_empty() { 1.0 } else { ks_statistic(s, cdf) };
            MarginalCheck {
                parameter: name.to_string(),
                ks_statistic: d,
                ks_pvalue: if s.is_empty() { 0.0 } else { ks_pvalue(d, s.len() as f64) },
            }
        })
        .collect();
    // Family-wise level `alpha` over the marginals (Bonferroni).
    let per_check = config.alpha / checks.len() as f64;
    let pass = error.is_none() && checks.iter().all(|c| c.ks_pvalue > per_check);
    Ok(TrendGewekeReport {
        config: config.clone(),
        checks,
        pass,
        error,
    })
}
