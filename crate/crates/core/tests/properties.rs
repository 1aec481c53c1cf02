use proptest::prelude::*;

use tdof_core::diagnostics::{split_rhat, split_rhat_bulk, summarize, ChainSet};
use tdof_core::kernels::{am_step, rs_log_accept, solve_xi_star, AmMode, AmTuning};
use tdof_core::model::{eta_stat, tau_cdf, tau_quantile, NuPrior};
use tdof_core::numerics::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn digamma_recurrence(x in 1e-3f64..1e4) {
        let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
        prop_assert!((d - 1.0 / x).abs() <= 1e-12 * (1.0 / x).max(1.0));
    }

    #[test]
    fn trigamma_recurrence(x in 1e-3f64..1e4) {
        let d = trigamma(x).unwrap() - trigamma(x + 1.0).unwrap();
        prop_assert!(((d - 1.0 / (x * x)) * x * x).abs() < 1e-10);
    }

    #[test]
    fn trigamma_exceeds_reciprocal(x in 1e-3f64..1e5) {
        prop_assert!(trigamma(x).unwrap() > 1.0 / x);
    }

    #[test]
    fn lower_gamma_is_a_cdf(a in 0.05f64..500.0, x in 0.0f64..1e3, dx in 0.0f64..10.0) {
        let p = reg_lower_gamma(a, x).unwrap();
        let q = reg_lower_gamma(a, x + dx).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q >= p);
        prop_assert!((p + reg_upper_gamma(a, x).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gamma_quantile_inverts(la in -3.0f64..6.2, p in 1e-8f64..0.999_999) {
        let a = la.exp();
        let x = reg_gamma_quantile(a, p).unwrap();
        prop_assert!((reg_lower_gamma(a, x).unwrap() - p).abs() <= 1e-10 * p.max(1e-3));
    }

    #[test]
    fn tau_transform_inverts(lnu in -2.0f64..5.0, u in 1e-6f64..0.999_99) {
        let nu = lnu.exp();
        let t = tau_quantile(u, nu).unwrap();
        prop_assert!((tau_cdf(t, nu).unwrap() - u).abs() < 1e-8);
    }

    #[test]
    fn eta_lower_bound(tau in prop::collection::vec(1e-4f64..1e4, 1..50), lambda in 0.01f64..5.0) {
        let eta = eta_stat(&tau, &NuPrior::new(lambda).unwrap());
        prop_assert!(eta >= lambda + 0.5 * tau.len() as f64 - 1e-9);
    }

    #[test]
    fn envelope_dominates(n in 1usize..2000, excess in 1e-3f64..1e3, lnu in -7.0f64..7.0) {
        let eta = 0.5 * n as f64 + excess;
        let xi = solve_xi_star(eta, n).unwrap().xi_star;
        prop_assert!(rs_log_accept(lnu.exp(), xi, eta, n) <= 1e-12);
    }

    #[test]
    fn summary_ignores_order(mut x in prop::collection::vec(-1e3f64..1e3, 1..200), seed in any::<u64>()) {
        let a = summarize(&x, &[0.1, 0.25, 0.5, 0.9]).unwrap();
        let mut s = RandomStream::new(seed, 0);
        for i in (1..x.len()).rev() {
            let j = (s.uniform() * (i + 1) as f64) as usize;
            x.swap(i, j.min(i));
        }
        let b = summarize(&x, &[0.1, 0.25, 0.5, 0.9]).unwrap();
        prop_assert_eq!(&a.quantiles, &b.quantiles);
        prop_assert!(a.quantiles.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((a.mean - b.mean).abs() < 1e-9);
    }

    #[test]
    fn rhat_transform_invariance(seed in any::<u64>(), shift in -2.0f64..2.0, k in -8i32..8) {
        let mut s = RandomStream::new(seed, 1);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..100).map(|_| s.normal() + if i == 0 { shift } else { 0.0 }).collect())
            .collect();
        let set = ChainSet::new(chains.clone()).unwrap();
        let map = |f: &dyn Fn(f64) -> f64| {
            ChainSet::new(chains.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect()).unwrap()
        };
        // The bulk statistic depends on ranks only.
        let cubic = map(&|v| v.powi(3) + 2.0 * v);
        prop_assert!((split_rhat_bulk(&set).value - split_rhat_bulk(&cubic).value).abs() < 1e-12);
        // The folded tail statistic survives positive rescaling (exact in binary).
        let scale = 2f64.powi(k);
        let affine = map(&|v| scale * v);
        prop_assert!((split_rhat(&set).value - split_rhat(&affine).value).abs() < 1e-12);
    }

    #[test]
    fn am_state_stays_consistent(seed in any::<u64>(), lambda in 0.01f64..10.0) {
        let mut s = RandomStream::new(seed, 2);
        let mut am = AmTuning::default();
        let mut target = |nu: f64| -lambda * nu;
        let mut nu = 1.0;
        let mut lt = target(nu);
        let mut last_delta = f64::INFINITY;
        for _ in 0..2_000 {
            let before = (am.log_step_sd, am.batch_index);
            let o = am_step(&mut s, &mut am, nu, lt, &mut target, AmMode::Standard);
            prop_assert!(o.nu > 0.0);
            prop_assert!(am.batch_accept_count <= am.batch_size && am.batch_count < am.batch_size);
            if am.batch_index > before.1 {
                let d = (am.log_step_sd - before.0).abs();
                prop_assert!(d <= last_delta + 1e-15);
                last_delta = d;
            }
            nu = o.nu;
            lt = o.log_target;
        }
    }
}
