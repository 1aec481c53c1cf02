mod common;

use common::{mean, quadrature_cdf, type7, variance};
use tdof_core::diagnostics::{split_rhat, ChainSet};
use tdof_core::kernels::*;
use tdof_core::model::*;
use tdof_core::numerics::RandomStream;
use tdof_core::simstudy::simulate_dataset;
use tdof_core::validation::{ks_statistic, ks_two_sample};

fn chain(alg: Algorithm, y: &ObservationSet, init: f64, iters: usize, k: usize, id: u64) -> DrawMatrix {
    let spec = ChainSpec {
        algorithm: alg,
        iterations: iters,
        burn_in: 1000,
        init_nu: init,
        k_aa: k,
        prior: NuPrior::new(0.2).unwrap(),
        seed: 17,
        stream_id: id,
    };
    run_chain(&spec, y, AmMode::Standard).unwrap()
}

#[test]
fn tau_draw_at_origin_is_exponential() {
    let mut s = RandomStream::new(1, 1);
    let prec: Vec<f64> = (0..100_000).map(|_| 1.0 / draw_tau_given_nu(&mut s, 0.0, 1.0)).collect();
    let d = ks_statistic(&prec, |x| 1.0 - (-0.5 * x).exp());
    assert!(d < 0.006, "{d}");
}

#[test]
fn tau_draw_mean() {
    let mut s = RandomStream::new(1, 2);
    let prec: Vec<f64> = (0..100_000).map(|_| 1.0 / draw_tau_given_nu(&mut s, 2.0, 5.0)).collect();
    let se = (variance(&prec) / prec.len() as f64).sqrt();
    assert!((mean(&prec) - 6.0 / 9.0).abs() < 3.0 * se);

    let mut a = RandomStream::new(1, 2);
    assert_eq!(draw_tau_given_nu(&mut a, 2.0, 5.0), 1.0 / prec[0]);
}

#[test]
fn xi_star_matches_bisection_oracle() {
    let r = solve_xi_star(1.5, 1).unwrap();
    assert!((r.xi_star - 1.593_796_060_784_232_7).abs() < 1e-10, "{}", r.xi_star);
    assert!(r.residual.abs() < 1e-10);
    assert!(solve_xi_star(0.4, 1).is_err());
}

#[test]
fn envelope_dominates_target() {
    let mut s = RandomStream::new(4, 4);
    for _ in 0..30 {
        let n = 1 + (s.uniform() * 500.0) as usize;
        let eta = 0.5 * n as f64 + 0.01 + s.exponential(0.05);
        let xi = solve_xi_star(eta, n).unwrap().xi_star;
        assert!(rs_log_accept(xi, xi, eta, n).abs() < 1e-12);
        let mut nu: f64 = 1e-3;
        while nu <= 1e3 {
            assert!(rs_log_accept(nu, xi, eta, n) <= 1e-12, "eta={eta} n={n} nu={nu}");
            nu *= 1.05;
        }
    }
}

#[test]
fn rejection_sampler_matches_quadrature() {
    let mut s = RandomStream::new(8, 8);
    let tau: Vec<f64> = (0..100).map(|_| draw_tau_given_nu(&mut s, 0.0, 5.0)).collect();
    let eta = eta_stat(&tau, &NuPrior::new(0.2).unwrap());
    let draws: Vec<f64> = (0..100_000).map(|_| rs_draw_nu(&mut s, eta, 100).unwrap()).collect();
    let hi = 10.0 * type7(&draws, 0.999);
    let cdf = quadrature_cdf(|nu| log_post_nu_given_tau(nu, eta, 100), 1e-9, hi, 200_000);
    let d = ks_statistic(&draws, cdf);
    assert!(d < 0.01, "{d}");
}

#[test]
fn truncated_rejection_respects_bound() {
    let mut s = RandomStream::new(8, 9);
    for _ in 0..2000 {
        assert!(rs_draw_nu_above(&mut s, 0.2 + 1.2, 2, 1.0).unwrap() > 1.0);
    }
}

fn exp_am_chain(seed: u64, lambda: f64) -> (Vec<f64>, AmTuning) {
    let mut s = RandomStream::new(seed, 3);
    let mut am = AmTuning::default();
    let mut target = |nu: f64| if nu > 0.0 { -lambda * nu } else { f64::NEG_INFINITY };
    let mut nu = 1.0;
    let mut lt = target(nu);
    for _ in 0..20_000 {
        let o = am_step(&mut s, &mut am, nu, lt, &mut target, AmMode::Standard);
        (nu, lt) = (o.nu, o.log_target);
    }
    am.freeze();
    am.reset_counters();
    let draws = (0..100_000)
        .map(|_| {
            let o = am_step(&mut s, &mut am, nu, lt, &mut target, AmMode::Standard);
            (nu, lt) = (o.nu, o.log_target);
            nu
        })
        .collect();
    (draws, am)
}

#[test]
fn adaptive_metropolis_on_exponential() {
    let lambda = 0.2;
    let (draws, am) = exp_am_chain(5, lambda);
    for p in [0.1f64, 0.5, 0.9] {
        let want = -(-p).ln_1p() / lambda;
        let got = type7(&draws, p);
        assert!((got / want - 1.0).abs() < 0.03, "p={p}: {got} vs {want}");
    }
    let rate = am.accept_rate().unwrap();
    assert!((0.39..=0.49).contains(&rate), "{rate}");
}

#[test]
fn impossible_proposals_are_rejected() {
    let mut s = RandomStream::new(1, 1);
    let mut am = AmTuning::default();
    let mut target = |nu: f64| if nu < 1.0 { 0.0 } else { f64::NEG_INFINITY };
    let mut nu = 0.999;
    for _ in 0..1000 {
        let o = am_step(&mut s, &mut am, nu, 0.0, &mut target, AmMode::Standard);
        assert!(o.nu < 1.0);
        if !o.accepted {
            assert_eq!(o.nu, nu);
        }
        nu = o.nu;
    }
}

#[test]
fn sa_without_data_samples_the_prior() {
    let y = ObservationSet::new(vec![]).unwrap();
    let d = chain(Algorithm::Sa, &y, 1.0, 100_000, 1, 1).nu;
    for p in [0.1f64, 0.5, 0.9] {
        let want = NuPrior::new(0.2).unwrap().quantile(p);
        assert!((type7(&d, p) / want - 1.0).abs() < 0.03, "p={p}");
    }
}

#[test]
fn chains_replay() {
    let y = simulate_dataset(3, 5.0, 50, 0).unwrap();
    for alg in Algorithm::ALL {
        assert_eq!(chain(alg, &y, 2.0, 500, 5, 9), chain(alg, &y, 2.0, 500, 5, 9));
    }
}

#[test]
fn asis_reduces_to_sa_when_metropolis_rejects() {
    let y = simulate_dataset(3, 2.0, 40, 1).unwrap();
    let prior = NuPrior::new(0.2).unwrap();
    let opts = SweepOptions { k_aa: 20, am_mode: AmMode::AlwaysReject };
    let mut s1 = ChainStreams::new(1, 1);
    let mut s2 = ChainStreams::new(1, 1);
    let mut a = AugmentedState::new(3.0, y.len());
    let mut b = AugmentedState::new(3.0, y.len());
    for _ in 0..300 {
        asis_sweep(&mut a, &y, &prior, &mut s1, &opts).unwrap();
        sa_sweep(&mut b, &y, &prior, &mut s2).unwrap();
        assert_eq!(a.nu, b.nu);
        assert_eq!(a.tau, b.tau);
    }
}

#[test]
fn repetition_count_leaves_target_unchanged() {
    let y = simulate_dataset(4, 3.0, 10, 0).unwrap();
    let thin = |d: Vec<f64>| d.into_iter().step_by(10).collect::<Vec<_>>();
    let one = thin(chain(Algorithm::Aa, &y, 2.0, 60_000, 1, 21).nu);
    let many = thin(chain(Algorithm::Aa, &y, 2.0, 20_000, 20, 22).nu);
    let (_, p) = ks_two_sample(&one, &many);
    assert!(p > 0.01, "{p}");
}

#[test]
fn aa_sticks_where_asis_recovers() {
    let y = simulate_dataset(20_240_601, 1.0, 1000, 0).unwrap();
    let aa = chain(Algorithm::Aa, &y, 100.0, 5000, 20, 31);
    assert!(aa.nu.iter().all(|&v| v == aa.nu[0]), "AA chain moved");
    assert_eq!(aa.nu[0], 100.0);
    assert!(aa.boundary_sweeps > 0);

    let a = chain(Algorithm::Asis, &y, 100.0, 2000, 20, 32).nu;
    let b = chain(Algorithm::Asis, &y, 2.0, 2000, 20, 33).nu;
    let r = split_rhat(&ChainSet::new(vec![a, b]).unwrap());
    assert!(r.converged(1.1), "{r:?}");
}
