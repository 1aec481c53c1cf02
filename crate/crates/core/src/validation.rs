//! Correctness harnesses: the successive-conditional joint-distribution
//! test for complete sweeps and a one-sample check of single conditional draws.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sweep, AmMode, ChainStreams, SweepOptions};
use crate::model::{simulate_observations, Algorithm, AugmentedState, NuPrior};
use crate::numerics::RandomStream;

/// Kolmogorov–Smirnov statistic sup |F_n − F| of a sample against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, P(K > t).
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * t * t).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic `d` with effective size `n`
/// (Stephens' small-sample correction).
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS test; returns (statistic, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

/// Which sampler the joint test exercises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GewekeVariant {
    #[default]
    Correct,
    /// Metropolis ratio without the ν_p/ν factor (AA and ASIS only).
    NoJacobian,
    /// η built with −λ instead of +λ.
    MinusLambda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    pub lambda: f64,
    /// Recorded iterations M.
    pub iterations: usize,
    /// Iterations discarded first; Metropolis adaptation runs only here.
    pub burn_in: usize,
    pub thin: usize,
    pub k_aa: usize,
    pub variant: GewekeVariant,
    pub seed: u64,
    /// KS threshold for the pass flag.
    pub alpha: f64,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sa,
            n: 10,
            lambda: 0.2,
            iterations: 50_000,
            burn_in: 1_000,
            thin: 20,
            k_aa: 20,
            variant: GewekeVariant::Correct,
            seed: 1,
            alpha: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub config: GewekeConfig,
    /// Every `thin`-th recorded draw of ν.
    pub nu_sample: Vec<f64>,
    /// (Exp(λ) quantile, sorted thinned draw) at probabilities (i − ½)/m.
    pub qq_points: Vec<(f64, f64)>,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub mean: f64,
    /// Standard error of `mean` treating the thinned draws as independent.
    pub mean_se: f64,
    pub pass: bool,
    /// Sampler error that ended the run early, if any.
    pub error: Option<String>,
}

impl GewekeReport {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// `theoretical,empirical`
    pub fn write_qq_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theoretical", "empirical"])?;
        for (t, e) in &self.qq_points {
            w.write_record([format!("{t:.10e}"), format!("{e:.10e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Successive-conditional joint test: starting from (ν, y) drawn from the
/// prior predictive, alternate one sampler sweep given y with a fresh
/// y ~ t_ν given the current ν. The ν-marginal must stay Exp(λ).
pub fn geweke_joint_test(config: &GewekeConfig) -> Result<GewekeReport> {
    let prior = NuPrior::new(config.lambda)?;
    if config.thin == 0 || config.iterations < config.thin * 2 {
        return Err(Error::Invalid("need iterations >= 2 * thin and thin >= 1".into()));
    }
    let mode = match config.variant {
        GewekeVariant::NoJacobian => AmMode::NoJacobian,
        _ => AmMode::Standard,
    };
    let sampler_prior = match config.variant {
        // eta_stat adds prior.lambda; a negated rate flips the sign.
        GewekeVariant::MinusLambda => NuPrior {
            lambda: -config.lambda,
            lower: 0.0,
        },
        _ => prior,
    };
    let opts = SweepOptions {
        k_aa: config.k_aa,
        am_mode: mode,
    };
    let mut data_stream = RandomStream::new(config.seed, 0x9e3e);
    let mut streams = ChainStreams::new(config.seed, config.algorithm.id());
    let nu0 = prior.quantile(data_stream.uniform());
    let mut y = simulate_observations(&mut data_stream, nu0, config.n)?;
    let mut state = AugmentedState::new(nu0, config.n);

    let mut draws = Vec::with_capacity(config.iterations);
    let mut error = None;
    for it in 0..config.burn_in + config.iterations {
        if it == config.burn_in {
            state.am.freeze();
        }
        if let Err(e) = sweep(config.algorithm, &mut state, &y, &sampler_prior, &mut streams, &opts) {
            error = Some(format!("iteration {it}: {e}"));
            break;
        }
        y = simulate_observations(&mut data_stream, state.nu, config.n)?;
        if it >= config.burn_in {
            draws.push(state.nu);
        }
    }

    let nu_sample: Vec<f64> = draws.iter().step_by(config.thin).copied().collect();
    let m = nu_sample.len();
    if m < 2 {
        return Ok(GewekeReport {
            config: config.clone(),
            nu_sample,
            qq_points: Vec::new(),
            ks_statistic: 1.0,
            ks_pvalue: 0.0,
            mean: f64::NAN,
            mean_se: f64::NAN,
            pass: false,
            error,
        });
    }
    let d = ks_statistic(&nu_sample, |x| prior.cdf(x));
    let p = ks_pvalue(d, m as f64);
    let mut sorted = nu_sample.clone();
    sorted.sort_by(f64::total_cmp);
    let qq_points = sorted
        .iter()
        .enumerate()
        .map(|(i, &e)| (prior.quantile((i as f64 + 0.5) / m as f64), e))
        .collect();
    let mean = nu_sample.iter().sum::<f64>() / m as f64;
    let var = nu_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    let complete = error.is_none() && draws.len() == config.iterations;
    Ok(GewekeReport {
        config: config.clone(),
        nu_sample,
        qq_points,
        ks_statistic: d,
        ks_pvalue: p,
        mean,
        mean_se: (var / m as f64).sqrt(),
        pass: complete && p > config.alpha,
        error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileCheckReport {
    pub k: usize,
    pub sup_distance: f64,
    /// 1.5 · 1.36 / √K.
    pub threshold: f64,
    pub pass: bool,
}

/// Compares K draws with a theoretical distribution through the sup
/// distance between the empirical and theoretical CDFs.
pub fn conditional_quantile_check<D, F>(mut draw: D, cdf: F, k: usize) -> Result<QuantileCheckReport>
where
    D: FnMut() -> Result<f64>,
    F: Fn(f64) -> f64,
{
    if k == 0 {
        return Err(Error::Invalid("need at least one draw".into()));
    }
    let sample = (0..k).map(|_| draw()).collect::<Result<Vec<_>>>()?;
    let sup_distance = ks_statistic(&sample, cdf);
    let threshold = 1.5 * 1.36 / (k as f64).sqrt();
    Ok(QuantileCheckReport {
        k,
        sup_distance,
        threshold,
        pass: sup_distance < threshold,
    })
}
