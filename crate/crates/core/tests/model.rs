use std::f64::consts::PI;

use tdof_core::model::*;
use tdof_core::numerics::{log_gamma, reg_lower_gamma, RandomStream};
use tdof_core::validation::ks_statistic;

/// Student-t CDF through the regularized incomplete beta, written via the
/// incomplete gamma of the mixture representation by numerical quadrature.
fn t_cdf(x: f64, nu: f64) -> f64 {
    // Simpson integration of the density from 0 to |x|.
    let c = (log_gamma(0.5 * (nu + 1.0)).unwrap() - log_gamma(0.5 * nu).unwrap()).exp() / (nu * PI).sqrt();
    let f = |t: f64| c * (1.0 + t * t / nu).powf(-0.5 * (nu + 1.0));
    let m = 2000;
    let h = x.abs() / m as f64;
    let mut s = f(0.0) + f(x.abs());
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let half = s * h / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

#[test]
fn simulation_is_reproducible() {
    let a = simulate_observations(&mut RandomStream::new(5, 11), 3.0, 200).unwrap();
    let b = simulate_observations(&mut RandomStream::new(5, 11), 3.0, 200).unwrap();
    assert_eq!(a, b);
    let c = simulate_observations(&mut RandomStream::new(5, 12), 3.0, 200).unwrap();
    assert_ne!(a, c);
}

#[test]
fn simulation_variance_at_nu_10() {
    let y = simulate_observations(&mut RandomStream::new(1, 1), 10.0, 1_000_000).unwrap();
    let v = y.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    assert!((var - 1.25).abs() < 0.02, "{var}");
}

#[test]
fn simulation_matches_t_cdf() {
    let y = simulate_observations(&mut RandomStream::new(1, 2), 3.0, 100_000).unwrap();
    assert!((t_cdf(1.0, 3.0) - 0.804_498_890_522_114_8).abs() < 1e-9);
    let d = ks_statistic(y.values(), |x| t_cdf(x, 3.0));
    assert!(d < 0.006, "{d}");
}

#[test]
fn tau_cdf_closed_form_at_two() {
    assert!((tau_cdf(1.0, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
    for t in [0.1, 0.7, 3.0, 40.0] {
        assert!((tau_cdf(t, 2.0).unwrap() - (-1.0 / t).exp()).abs() < 1e-12);
    }
    assert!((tau_quantile((-1.0f64).exp(), 2.0).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn tau_median_and_round_trip() {
    for nu in [0.3, 1.0, 4.0, 25.0, 300.0] {
        let med = tau_quantile(0.5, nu).unwrap();
        assert!((tau_cdf(med, nu).unwrap() - 0.5).abs() < 1e-10, "{nu}");
        for u in [1e-4, 0.1, 0.5, 0.9, 0.9999] {
            let t = tau_quantile(u, nu).unwrap();
            assert!((tau_cdf(t, nu).unwrap() - u).abs() < 1e-8, "nu={nu} u={u}");
        }
    }
}

#[test]
fn tau_cdf_strictly_increasing() {
    for nu in [0.5, 2.0, 30.0] {
        let mut last = 0.0;
        for k in 1..200 {
            let t = 0.05 * k as f64;
            let f = tau_cdf(t, nu).unwrap();
            assert!(f > last, "nu={nu} t={t}");
            last = f;
        }
    }
}

#[test]
fn tau_quantile_signals_failure() {
    assert!(tau_quantile(0.0, 2.0).is_err());
    assert!(tau_quantile(1.0, 2.0).is_err());
    assert!(tau_quantile(1.0 - 1e-17, 0.01).is_err());
}

#[test]
fn nu_given_tau_kernel() {
    for nu in [0.2, 1.0, 7.0] {
        assert!((log_post_nu_given_tau(nu, 1.3, 0) + 1.3 * nu).abs() < 1e-12);
    }
    // Differences against direct summation of Gamma(ν/2, ν/2) log-densities of 1/τ.
    let mut s = RandomStream::new(3, 3);
    let tau: Vec<f64> = (0..20).map(|_| 0.2 + 3.0 * s.uniform()).collect();
    let prior = NuPrior::new(0.2).unwrap();
    let eta = eta_stat(&tau, &prior);
    let direct = |nu: f64| {
        let a = 0.5 * nu;
        tau.iter()
            .map(|t| {
                let x = 1.0 / t;
                a * a.ln() + (a - 1.0) * x.ln() - a * x - log_gamma(a).unwrap()
            })
            .sum::<f64>()
            - 0.2 * nu
    };
    // The direct sum carries Σ −ln x = Σ ln τ, constant in ν.
    let (n1, n2) = (1.7, 9.0);
    let lhs = log_post_nu_given_tau(n1, eta, 20) - log_post_nu_given_tau(n2, eta, 20);
    assert!((lhs - (direct(n1) - direct(n2))).abs() < 1e-9, "{lhs}");
}

#[test]
fn nu_given_tau_concave() {
    let eta = 0.2 + 5.5;
    let mut nu: f64 = 0.1;
    while nu < 100.0 {
        let h = 1e-3 * nu;
        let d2 = log_post_nu_given_tau(nu + h, eta, 10) - 2.0 * log_post_nu_given_tau(nu, eta, 10)
            + log_post_nu_given_tau(nu - h, eta, 10);
        assert!(d2 < 0.0, "{nu}");
        nu *= 1.3;
    }
}

#[test]
fn nu_given_u_kernel() {
    let prior = NuPrior::new(0.2).unwrap();
    let empty = ObservationSet::new(vec![]).unwrap();
    assert!((log_post_nu_given_u(3.0, &empty, &[], &prior) + 0.6).abs() < 1e-12);

    // Longhand: Σ log N(y; 0, F⁻¹(u; ν)) − λν.
    let y = ObservationSet::new(vec![0.3, -1.2, 2.5]).unwrap();
    let u = [0.2, 0.55, 0.91];
    for nu in [0.8, 3.0, 12.0] {
        let longhand: f64 = y
            .values()
            .iter()
            .zip(u)
            .map(|(yi, ui)| {
                let t = tau_quantile(ui, nu).unwrap();
                -0.5 * ((2.0 * PI * t).ln() + yi * yi / t)
            })
            .sum::<f64>()
            - 0.2 * nu;
        assert!((log_post_nu_given_u(nu, &y, &u, &prior) - longhand).abs() < 1e-8, "{nu}");
    }
    assert_eq!(log_post_nu_given_u(2.0, &y, &[0.2, 1.0, 0.5], &prior), f64::NEG_INFINITY);
}

#[test]
fn eta_bounds() {
    let prior = NuPrior::new(0.7).unwrap();
    assert!((eta_stat(&[1.0; 9], &prior) - (0.7 + 4.5)).abs() < 1e-12);
    let a = [0.3, 2.0, 5.0];
    let b = [0.9, 0.01];
    let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
    let sum = eta_stat(&a, &prior) + eta_stat(&b, &prior) - 0.7;
    assert!((eta_stat(&joined, &prior) - sum).abs() < 1e-12);
    assert!(eta_stat(&joined, &prior) >= 0.7 + 2.5);
}

#[test]
fn tau_marginal_is_inverse_gamma() {
    // F(τ; ν) = 1 − P(ν/2, ν/(2τ))
    for (t, nu) in [(0.5, 3.0), (2.0, 0.7)] {
        let want = 1.0 - reg_lower_gamma(0.5 * nu, 0.5 * nu / t).unwrap();
        assert!((tau_cdf(t, nu).unwrap() - want).abs() < 1e-14);
    }
}

#[test]
fn grids_normalize_and_are_symmetric() {
    let prior = NuPrior::new(0.2).unwrap();
    for plane in [GridPlane::SaPlane, GridPlane::AaPlane] {
        let g = joint_grid(1.5, plane, (1.0, 30.0), 20.0, (40, 30), &prior).unwrap();
        assert!((g.density.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let h = joint_grid(-1.5, plane, (1.0, 30.0), 20.0, (40, 30), &prior).unwrap();
        assert_eq!(g, h);
    }
    // Independent evaluation of the same lattice with scipy's gamma quantile.
    let aa = joint_grid(0.0, GridPlane::AaPlane, (1.0, 30.0), 1.0, (60, 60), &prior).unwrap();
    assert!((aa.correlation() - 0.131_647_522_461_284_4).abs() < 1e-9, "{}", aa.correlation());
    let mut csv = Vec::new();
    aa.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("nu,aux,density\n"));
}

#[test]
fn observation_csv_round_trip() {
    let y = ObservationSet::new(vec![0.25, -1.5e-7, 3.0]).unwrap();
    let mut buf = Vec::new();
    y.write_csv(&mut buf).unwrap();
    assert_eq!(ObservationSet::read_csv(&buf[..]).unwrap(), y);
    assert!(ObservationSet::new(vec![1.0, f64::NAN]).is_err());
}
