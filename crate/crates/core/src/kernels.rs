//! Update kernels for ν: the sufficient-augmentation sweep (conjugate τ
//! draws plus exact rejection sampling), the ancillary sweep (u = F(τ; ν)
//! plus adaptive Metropolis on ln ν) and their interweaving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    dlog_post_nu_given_tau, log_post_nu_given_tau, tau_cdf_raw, Algorithm, AncillaryTarget,
    AugmentedState, ChainSpec, DrawMatrix, NuPrior, ObservationSet,
};
use crate::numerics::special::ln_gamma_raw;
use crate::numerics::{find_root, mix_ids, Bracket, RandomStream};

pub use crate::model::eta_stat;

/// Unnormalized log density driven by [`am_step`].
pub trait LogTarget {
    fn log_density(&mut self, nu: f64) -> f64;

    /// Called after the most recently evaluated point was accepted.
    fn accepted(&mut self) {}
}

impl<F: FnMut(f64) -> f64> LogTarget for F {
    fn log_density(&mut self, nu: f64) -> f64 {
        self(nu)
    }
}

pub const TARGET_ACCEPT: f64 = 0.44;
pub const AM_BATCH_SIZE: usize = 200;
pub const AM_INITIAL_LOG_SD: f64 = -std::f64::consts::LN_2;

/// Batch-wise tuning state of the log-scale random-walk proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmTuning {
    /// ln of the proposal standard deviation on the ln ν scale.
    pub log_step_sd: f64,
    pub batch_size: usize,
    /// Proposals made in the current batch.
    pub batch_count: usize,
    pub batch_accept_count: usize,
    /// Number of completed batches.
    pub batch_index: usize,
    pub target_accept: f64,
    pub adapting: bool,
    /// Totals since the last [`AmTuning::reset_counters`].
    pub total_proposals: u64,
    pub total_accepts: u64,
}

impl Default for AmTuning {
    fn default() -> Self {
        Self {
            log_step_sd: AM_INITIAL_LOG_SD,
            batch_size: AM_BATCH_SIZE,
            batch_count: 0,
            batch_accept_count: 0,
            batch_index: 0,
            target_accept: TARGET_ACCEPT,
            adapting: true,
            total_proposals: 0,
            total_accepts: 0,
        }
    }
}

impl AmTuning {
    pub fn step_sd(&self) -> f64 {
        self.log_step_sd.exp()
    }

    /// Stops adaptation; the proposal scale is fixed from here on.
    pub fn freeze(&mut self) {
        self.adapting = false;
        self.batch_count = 0;
        self.batch_accept_count = 0;
    }

    pub fn reset_counters(&mut self) {
        self.total_proposals = 0;
        self.total_accepts = 0;
    }

    pub fn accept_rate(&self) -> Option<f64> {
        (self.total_proposals > 0).then(|| self.total_accepts as f64 / self.total_proposals as f64)
    }

    fn record(&mut self, accepted: bool) {
        self.total_proposals += 1;
        self.total_accepts += accepted as u64;
        if !self.adapting {
            return;
        }
        self.batch_count += 1;
        self.batch_accept_count += accepted as usize;
        if self.batch_count == self.batch_size {
            self.batch_index += 1;
            let delta = (1.0 / (self.batch_index as f64).sqrt()).min(0.05);
            let rate = self.batch_accept_count as f64 / self.batch_size as f64;
            if rate > self.target_accept {
                self.log_step_sd += delta;
            } else {
                self.log_step_sd -= delta;
            }
            self.batch_count = 0;
            self.batch_accept_count = 0;
        }
    }
}

/// Variants of the Metropolis step. Only `Standard` is a valid sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmMode {
    #[default]
    Standard,
    /// Omits the ν_p/ν change-of-variables factor (deliberately wrong).
    NoJacobian,
    /// Rejects every proposal.
    AlwaysReject,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmOutcome {
    pub nu: f64,
    pub log_target: f64,
    pub accepted: bool,
}

/// One Metropolis–Hastings step for ν with a Gaussian random walk on ln ν.
///
/// `current_log_target` must be the target at `nu`. The ratio includes the
/// Jacobian ν_p/ν of the log transform unless `mode` removes it.
pub fn am_step<T: LogTarget + ?Sized>(
    stream: &mut RandomStream,
    am: &mut AmTuning,
    nu: f64,
    current_log_target: f64,
    target: &mut T,
    mode: AmMode,
) -> AmOutcome {
    let step = am.step_sd() * stream.normal();
    let log_u = stream.uniform().ln();
    let stay = AmOutcome {
        nu,
        log_target: current_log_target,
        accepted: false,
    };
    if mode == AmMode::AlwaysReject {
        am.record(false);
        return stay;
    }
    let proposal = nu * step.exp();
    let proposal_lt = target.log_density(proposal);
    let jacobian = if mode == AmMode::NoJacobian { 0.0 } else { step };
    let log_ratio = proposal_lt - current_log_target + jacobian;
    // NaN (both targets −∞) compares false and rejects.
    let accepted = proposal_lt > f64::NEG_INFINITY && log_u < log_ratio;
    am.record(accepted);
    if accepted {
        target.accepted();
        AmOutcome {
            nu: proposal,
            log_target: proposal_lt,
            accepted: true,
        }
    } else {
        stay
    }
}

/// τᵢ drawn from its full conditional: τᵢ⁻¹ ~ Gamma((ν+1)/2, (ν+yᵢ²)/2).
///
/// Saturates at the largest finite double when yᵢ² overflows, which only
/// happens for data simulated at ν of order 10⁻³.
#[inline]
pub fn draw_tau_given_nu(stream: &mut RandomStream, y_i: f64, nu: f64) -> f64 {
    (1.0 / stream.gamma_raw(0.5 * (nu + 1.0), 0.5 * (nu + y_i * y_i))).min(f64::MAX)
}

/// Root of the envelope-matching equation of the ν | τ rejection sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiSolveResult {
    pub xi_star: f64,
    pub residual: f64,
}

/// Left-hand side (ln(ξ/2) + 1 − ψ(ξ/2))·n/2 + 1/ξ − η; strictly decreasing in ξ.
pub fn xi_equation(xi: f64, eta: f64, n: usize) -> f64 {
    dlog_post_nu_given_tau(xi, eta, n) + 1.0 / xi
}

/// Solves for ξ*, the mean of the exponential envelope whose log-slope
/// touches the ν | τ log kernel at ν = ξ*.
pub fn solve_xi_star(eta: f64, n: usize) -> Result<XiSolveResult> {
    if !(eta.is_finite() && eta > 0.5 * n as f64) {
        return Err(Error::domain(
            "solve_xi_star",
            format!("eta must exceed n/2 (eta={eta}, n={n})"),
        ));
    }
    if n == 0 {
        return Ok(XiSolveResult {
            xi_star: 1.0 / eta,
            residual: 0.0,
        });
    }
    // For large ξ the equation behaves like n/(2ξ)·(…) + 1/ξ − (η − n/2);
    // the root of that approximation is a good bracket centre.
    let excess = eta - 0.5 * n as f64;
    let guess = ((0.5 * n as f64 + 1.0) / excess).clamp(1e-6, 1e12);
    let bracket = Bracket::new(guess / 2.0, guess * 2.0)?;
    let xi = find_root(|x| xi_equation(x, eta, n), bracket, 1e-14)?;
    Ok(XiSolveResult {
        xi_star: xi,
        residual: xi_equation(xi, eta, n),
    })
}

/// Log acceptance probability of proposal `nu_p` under the exponential
/// envelope with mean ξ*: h(ν_p) + ν_p/ξ* − h(ξ*) − 1.
pub fn rs_log_accept(nu_p: f64, xi_star: f64, eta: f64, n: usize) -> f64 {
    log_post_nu_given_tau(nu_p, eta, n) + nu_p / xi_star
        - log_post_nu_given_tau(xi_star, eta, n)
        - 1.0
}

pub const RS_PROPOSAL_CAP: u64 = 1_000_000;

/// Exact draw from p(ν | y, τ) ∝ exp(h(ν)) by rejection from an exponential envelope.
pub fn rs_draw_nu(stream: &mut RandomStream, eta: f64, n: usize) -> Result<f64> {
    rs_draw_nu_above(stream, eta, n, 0.0)
}

/// [`rs_draw_nu`] restricted to ν > `lower`: proposals below the bound are
/// rejected, which is exact for the truncated target.
pub fn rs_draw_nu_above(stream: &mut RandomStream, eta: f64, n: usize, lower: f64) -> Result<f64> {
    let xi = solve_xi_star(eta, n)?.xi_star;
    let h_xi = log_post_nu_given_tau(xi, eta, n);
    for _ in 0..RS_PROPOSAL_CAP {
        let nu_p = xi * stream.exponential(1.0);
        if !(nu_p > 0.0 && nu_p > lower) {
            continue;
        }
        let log_acc = log_post_nu_given_tau(nu_p, eta, n) + nu_p / xi - h_xi - 1.0;
        if stream.uniform().ln() < log_acc {
            return Ok(nu_p);
        }
    }
    Err(Error::RejectionCap {
        cap: RS_PROPOSAL_CAP,
        eta,
        n,
        xi_star: xi,
    })
}

/// Per-sweep settings shared by all chains of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Metropolis repetitions for the ν | u update.
    pub k_aa: usize,
    pub am_mode: AmMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            k_aa: 20,
            am_mode: AmMode::Standard,
        }
    }
}

/// The two random streams of a chain: one for conjugate and rejection
/// draws, one for Metropolis proposals.
#[derive(Clone, Debug)]
pub struct ChainStreams {
    pub main: RandomStream,
    pub mh: RandomStream,
}

impl ChainStreams {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            main: RandomStream::new(seed, mix_ids(&[stream_id, 0x5a])),
            mh: RandomStream::new(seed, mix_ids(&[stream_id, 0x3b])),
        }
    }
}

/// What a sweep observed besides the state update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepReport {
    /// Some u rounded to 0 or 1, so the ν | u kernel was −∞ everywhere.
    pub boundary: bool,
}

fn refresh_tau(state: &mut AugmentedState, y: &[f64], stream: &mut RandomStream) {
    state.tau.resize(y.len(), 1.0);
    for (t, &yi) in state.tau.iter_mut().zip(y) {
        *t = draw_tau_given_nu(stream, yi, state.nu);
    }
}

fn u_from_tau(state: &mut AugmentedState) -> bool {
    let lga = ln_gamma_raw(0.5 * state.nu);
    state.u.resize(state.tau.len(), 0.5);
    let mut boundary = false;
    for (u, &t) in state.u.iter_mut().zip(&state.tau) {
        *u = tau_cdf_raw(t, state.nu, lga);
        boundary |= !(*u > 0.0 && *u < 1.0);
    }
    boundary
}

/// Metropolis updates of ν given u; afterwards τ = F⁻¹(u; ν) at the final ν.
fn nu_given_u(
    state: &mut AugmentedState,
    y2: &[f64],
    prior: &NuPrior,
    stream: &mut RandomStream,
    opts: &SweepOptions,
) {
    let u = std::mem::take(&mut state.u);
    let mut target = AncillaryTarget::new(y2, &u, prior);
    let mut lt = if target.on_boundary() {
        f64::NEG_INFINITY
    } else {
        target.seed(state.nu, &state.tau);
        // τ is consistent with u at the current ν, so the kernel there is
        // available without inverting F.
        -prior.lambda * state.nu
            + y2.iter()
                .zip(&state.tau)
                .map(|(&y2, &t)| -0.5 * (1.837_877_066_409_345_5 + t.ln() + y2 / t))
                .sum::<f64>()
    };
    let mut nu = state.nu;
    for _ in 0..opts.k_aa {
        let out = am_step(stream, &mut state.am, nu, lt, &mut target, opts.am_mode);
        nu = out.nu;
        lt = out.log_target;
    }
    if nu != state.nu {
        if let Some((_, tau)) = target.accepted_tau() {
            state.tau = tau;
        }
    }
    state.nu = nu;
    drop(target);
    state.u = u;
}

/// SA: τ | y, ν by conjugacy, then ν | y, τ by rejection sampling.
pub fn sa_sweep(
    state: &mut AugmentedState,
    y: &ObservationSet,
    prior: &NuPrior,
    streams: &mut ChainStreams,
) -> Result<SweepReport> {
    refresh_tau(state, y.values(), &mut streams.main);
    let eta = eta_stat(&state.tau, prior);
    state.nu = rs_draw_nu_above(&mut streams.main, eta, y.len(), prior.lower)?;
    Ok(SweepReport::default())
}

/// AA: u | y, ν via τ and u = F(τ; ν), then `k_aa` Metropolis updates of ν | y, u.
pub fn aa_sweep(
    state: &mut AugmentedState,
    y: &ObservationSet,
    prior: &NuPrior,
    streams: &mut ChainStreams,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    refresh_tau(state, y.values(), &mut streams.main);
    let boundary = u_from_tau(state);
    let y2: Vec<f64> = y.values().iter().map(|v| v * v).collect();
    nu_given_u(state, &y2, prior, &mut streams.mh, opts);
    Ok(SweepReport { boundary })
}

/// ASIS: an SA sweep, then u = F(τ; ν) recomputed deterministically at the
/// new ν, then the AA Metropolis updates of ν | y, u.
pub fn asis_sweep(
    state: &mut AugmentedState,
    y: &ObservationSet,
    prior: &NuPrior,
    streams: &mut ChainStreams,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    sa_sweep(state, y, prior, streams)?;
    let boundary = u_from_tau(state);
    let y2: Vec<f64> = y.values().iter().map(|v| v * v).collect();
    nu_given_u(state, &y2, prior, &mut streams.mh, opts);
    Ok(SweepReport { boundary })
}

pub fn sweep(
    algorithm: Algorithm,
    state: &mut AugmentedState,
    y: &ObservationSet,
    prior: &NuPrior,
    streams: &mut ChainStreams,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    match algorithm {
        Algorithm::Sa => sa_sweep(state, y, prior, streams),
        Algorithm::Aa => aa_sweep(state, y, prior, streams, opts),
        Algorithm::Asis => asis_sweep(state, y, prior, streams, opts),
    }
}

/// Runs one chain: `burn_in` sweeps with Metropolis adaptation switched on,
/// then `iterations` recorded sweeps with the proposal scale frozen.
pub fn run_chain(spec: &ChainSpec, y: &ObservationSet, mode: AmMode) -> Result<DrawMatrix> {
    spec.validate()?;
    let opts = SweepOptions {
        k_aa: spec.k_aa,
        am_mode: mode,
    };
    let mut streams = ChainStreams::new(spec.seed, spec.stream_id);
    let mut state = AugmentedState::new(spec.init_nu, y.len());
    for _ in 0..spec.burn_in {
        sweep(spec.algorithm, &mut state, y, &spec.prior, &mut streams, &opts)?;
    }
    state.am.freeze();
    state.am.reset_counters();
    let mut draws = DrawMatrix {
        nu: Vec::with_capacity(spec.iterations),
        ..Default::default()
    };
    for _ in 0..spec.iterations {
        let report = sweep(spec.algorithm, &mut state, y, &spec.prior, &mut streams, &opts)?;
        draws.boundary_sweeps += report.boundary as usize;
        draws.nu.push(state.nu);
    }
    if spec.algorithm != Algorithm::Sa {
        draws.am_accept_rate = state.am.accept_rate();
    }
    Ok(draws)
}
