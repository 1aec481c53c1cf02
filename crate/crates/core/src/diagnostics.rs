//! Chain diagnostics: spectral density at frequency zero from an
//! autoregressive fit, relative numerical efficiency, effective sample size,
//! rank-normalized split-R̂ and posterior summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::std_normal_quantile;

/// Minimum chain length accepted by the spectral estimator.
pub const MIN_CHAIN_LEN: usize = 8;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator N − 1.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Autoregressive model fitted by Yule–Walker with AIC order selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    /// Innovation variance, inflated by N / (N − order − 1).
    pub var_pred: f64,
}

/// Largest AR order considered: min(N − 1, ⌊10·log₁₀ N⌋).
pub fn max_ar_order(len: usize) -> usize {
    ((10.0 * (len as f64).log10()).floor() as usize).min(len - 1)
}

/// Fits AR(p) for p = 0..=max_ar_order by the Levinson–Durbin recursion on
/// the biased autocovariances and keeps the order with the smallest AIC.
pub fn ar_yule_walker(x: &[f64]) -> Result<ArFit> {
    let n = x.len();
    if n < MIN_CHAIN_LEN {
        return Err(Error::Invalid(format!(
            "chain of length {n} is shorter than {MIN_CHAIN_LEN}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("chain contains non-finite values".into()));
    }
    if is_constant(x) {
        return Err(Error::Degenerate("constant chain".into()));
    }
    let order_max = max_ar_order(n);
    let m = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    let acov: Vec<f64> = (0..=order_max)
        .map(|lag| {
            centered[lag..]
                .iter()
                .zip(&centered)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    if !(acov[0] > 0.0) {
        return Err(Error::Degenerate("zero sample variance".into()));
    }

    let mut phi: Vec<f64> = Vec::with_capacity(order_max);
    let mut v = acov[0];
    let mut best = (n as f64 * v.ln(), 0usize, Vec::new(), v);
    for k in 1..=order_max {
        let num = acov[k] - phi.iter().enumerate().map(|(j, p)| p * acov[k - 1 - j]).sum::<f64>();
        let kappa = num / v;
        let prev = phi.clone();
        for j in 0..k - 1 {
            phi[j] = prev[j] - kappa * prev[k - 2 - j];
        }
        phi.push(kappa);
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) {
            break;
        }
        let aic = n as f64 * v.ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, k, phi.clone(), v);
        }
    }
    let (_, order, coefficients, v) = best;
    let var_pred = v * n as f64 / (n - (order + 1)) as f64;
    Ok(ArFit {
        order,
        coefficients,
        var_pred,
    })
}

/// Spectral density at zero, var_pred / (1 − Σφ)², from the AIC-selected AR fit.
pub fn spectral_density_zero(x: &[f64]) -> Result<f64> {
    let fit = ar_yule_walker(x)?;
    let s: f64 = fit.coefficients.iter().sum();
    Ok(fit.var_pred / ((1.0 - s) * (1.0 - s)))
}

/// Efficiency of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// var(x) / S(0).
    pub rne: f64,
    /// M · rne.
    pub ess: f64,
    /// The chain was constant; rne and ess are reported as 0.
    pub degenerate: bool,
}

/// RNE and ESS of a chain. A constant chain yields zeros with the degenerate flag.
pub fn efficiency(x: &[f64]) -> Result<Efficiency> {
    match spectral_density_zero(x) {
        Ok(s0) => {
            let rne = sample_variance(x) / s0;
            Ok(Efficiency {
                rne,
                ess: rne * x.len() as f64,
                degenerate: false,
            })
        }
        Err(Error::Degenerate(_)) => Ok(Efficiency {
            rne: 0.0,
            ess: 0.0,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

pub fn rne(x: &[f64]) -> Result<f64> {
    efficiency(x).map(|e| e.rne)
}

pub fn ess(x: &[f64]) -> Result<f64> {
    efficiency(x).map(|e| e.ess)
}

/// Chains of equal length that are diagnosed together.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSet {
    chains: Vec<Vec<f64>>,
}

impl ChainSet {
    pub fn new(chains: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = chains.first() else {
            return Err(Error::Invalid("chain set is empty".into()));
        };
        let len = first.len();
        if len < MIN_CHAIN_LEN {
            return Err(Error::Invalid(format!(
                "chains must have at least {MIN_CHAIN_LEN} draws, got {len}"
            )));
        }
        if let Some(i) = chains.iter().position(|c| c.len() != len) {
            return Err(Error::Invalid(format!(
                "chain {i} has length {} but chain 0 has {len}",
                chains[i].len()
            )));
        }
        if chains.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("chain set contains non-finite draws".into()));
        }
        Ok(Self { chains })
    }

    pub fn chains(&self) -> &[Vec<f64>] {
        &self.chains
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Each chain cut into halves; an odd middle draw is dropped.
    fn split(&self) -> Vec<&[f64]> {
        let len = self.chains[0].len();
        let half = len / 2;
        self.chains
            .iter()
            .flat_map(|c| [&c[..half], &c[len - half..]])
            .collect()
    }
}

/// Split-R̂ outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    /// +∞ when within-chain variation vanishes.
    pub value: f64,
    pub sentinel: bool,
}

impl Rhat {
    pub fn converged(&self, threshold: f64) -> bool {
        !self.sentinel && self.value < threshold
    }
}

/// Ranks 1..N of all values jointly, ties receiving their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Normal scores Φ⁻¹((r − 3/8)/(S + 1/4)) of the joint ranks, per chain.
fn z_scale(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let ranks = average_ranks(&all);
    let s = all.len() as f64;
    let z: Vec<f64> = ranks
        .iter()
        .map(|r| std_normal_quantile((r - 0.375) / (s + 0.25)))
        .collect();
    let len = chains[0].len();
    z.chunks(len).map(|c| c.to_vec()).collect()
}

fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| sample_variance(c)).sum::<f64>() / chains.len() as f64;
    let between = n * sample_variance(&means);
    if !(within > 0.0) {
        return f64::INFINITY;
    }
    let var_hat = (n - 1.0) / n * within + between / n;
    (var_hat / within).sqrt()
}

fn finish(value: f64) -> Rhat {
    Rhat {
        value,
        sentinel: !value.is_finite(),
    }
}

/// Bulk rank-normalized split-R̂ (normal scores of the pooled ranks).
/// Invariant under any common strictly increasing transform of the draws.
pub fn split_rhat_bulk(set: &ChainSet) -> Rhat {
    let split = set.split();
    let all: Vec<f64> = split.iter().flat_map(|c| c.iter().copied()).collect();
    if is_constant(&all) {
        return finish(f64::INFINITY);
    }
    finish(rhat_basic(&z_scale(&split)))
}

/// Rank-normalized split-R̂: the larger of the bulk statistic (normal scores
/// of the draws) and the tail statistic (normal scores of |x − median|).
pub fn split_rhat(set: &ChainSet) -> Rhat {
    let split = set.split();
    let all: Vec<f64> = split.iter().flat_map(|c| c.iter().copied()).collect();
    if is_constant(&all) {
        return finish(f64::INFINITY);
    }
    let bulk = rhat_basic(&z_scale(&split));
    let med = quantile_type7(&sorted(&all), 0.5);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|v| (v - med).abs()).collect())
        .collect();
    let folded_refs: Vec<&[f64]> = folded.iter().map(Vec::as_slice).collect();
    let tail = rhat_basic(&z_scale(&folded_refs));
    finish(bulk.max(tail))
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Type-7 quantile of sorted data: linear interpolation at h = (N − 1)p.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical summary of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub probs: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub median: f64,
    pub mean: f64,
}

pub fn summarize(chain: &[f64], probs: &[f64]) -> Result<Summary> {
    if chain.is_empty() {
        return Err(Error::Invalid("cannot summarize an empty chain".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Invalid(format!("probability {p} outside [0, 1]")));
    }
    let s = sorted(chain);
    Ok(Summary {
        probs: probs.to_vec(),
        quantiles: probs.iter().map(|&p| quantile_type7(&s, p)).collect(),
        median: quantile_type7(&s, 0.5),
        mean: mean(chain),
    })
}

/// Per-chain record written to summary JSON files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub mean: f64,
    pub rne: f64,
    pub ess: f64,
    /// R̂ of the group the chain belongs to; `null` when +∞.
    pub rhat_group: Option<f64>,
}

impl SummaryRecord {
    pub fn new(chain: &[f64], rhat_group: Rhat) -> Result<Self> {
        let s = summarize(chain, &[0.1, 0.9])?;
        let eff = efficiency(chain)?;
        Ok(Self {
            median: s.median,
            q10: s.quantiles[0],
            q90: s.quantiles[1],
            mean: s.mean,
            rne: eff.rne,
            ess: eff.ess,
            rhat_group: rhat_group.value.is_finite().then_some(rhat_group.value),
        })
    }
}
