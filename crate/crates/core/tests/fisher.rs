use std::f64::consts::PI;

use tdof_core::fisher::*;
use tdof_core::numerics::RandomStream;

#[test]
fn closed_form_at_two() {
    let v = i_tau(1, 2.0).unwrap();
    assert!((v.value - (PI * PI / 12.0 - 0.5) / 2.0).abs() < 1e-12);
    assert_eq!(v.std_error, 0.0);
}

#[test]
fn positive_and_linear_in_n() {
    let mut nu: f64 = 0.1;
    while nu <= 1000.0 {
        let one = i_tau(1, nu).unwrap().value;
        assert!(one > 0.0, "{nu}");
        assert!((i_tau(7, nu).unwrap().value - 7.0 * one).abs() <= 1e-12 * one.max(1.0));
        nu *= 1.25;
    }
    assert!(i_tau(1, 0.0).is_err());
}

#[test]
fn printed_reading_is_negative_for_small_nu() {
    assert!(i_tau_printed(1, 1.0).unwrap().value < 0.0);
    assert!(i_tau_printed(1, 20.0).unwrap().value > 0.0);
}

#[test]
fn monte_carlo_i_tau_agrees_with_closed_form() {
    for (y, nu) in [(0.0, 1.0), (2.0, 4.0), (5.0, 20.0)] {
        let mut s = RandomStream::new(3, 1);
        let mc = estimate_i_tau_mc(&mut s, y, nu, 1, 2_000).unwrap();
        let exact = i_tau(1, nu).unwrap().value;
        assert!((mc.value - exact).abs() <= 2.0 * mc.std_error + 1e-6 * exact, "y={y} nu={nu}: {mc:?} vs {exact}");
    }
}

#[test]
fn standard_error_shrinks_with_l() {
    let small = estimate_i_u(&mut RandomStream::new(5, 1), 1.0, 3.0, 1_000).unwrap();
    let large = estimate_i_u(&mut RandomStream::new(5, 2), 1.0, 3.0, 16_000).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio / 4.0 - 1.0).abs() < 0.25, "{ratio}");
}

#[test]
fn sign_of_difference_around_break_even() {
    let low = estimate_i_u(&mut RandomStream::new(6, 1), 0.0, 1.0, 10_000).unwrap();
    let high = estimate_i_u(&mut RandomStream::new(6, 2), 0.0, 20.0, 10_000).unwrap();
    assert!(high.value - i_tau(1, 20.0).unwrap().value < 0.0);
    // Below ν ≈ 4 the ordering depends on the I_τ reading: the digamma
    // expression puts I_u above it, the trigamma information does not.
    assert!(low.value - i_tau_printed(1, 1.0).unwrap().value > 0.0);
    assert!(low.value - i_tau(1, 1.0).unwrap().value < 0.0);
    assert!(high.value - i_tau_printed(1, 20.0).unwrap().value < 0.0);
}

#[test]
fn printed_reading_crosses_between_three_and_five() {
    let nus = [2.0, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0];
    let g = bep_grid_with(&[0.0, 2.0, 4.0], &nus, 2_000, 1, ItauReading::PrintedDigamma).unwrap();
    for c in &g.crossings {
        let nu = c.nu.expect("crossing on grid");
        assert!((3.0..=5.0).contains(&nu), "{c:?}");
    }
}

#[test]
fn grid_is_symmetric_and_reports_errors() {
    let nus = [1.0, 2.0, 8.0];
    let a = bep_grid(&[2.0], &nus, 500, 9).unwrap();
    let b = bep_grid(&[-2.0], &nus, 500, 9).unwrap();
    assert_eq!(a, b);
    let mut out = Vec::new();
    a.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("y,nu,i_u,i_tau,diff,se,dropped\n"));
    assert!(a.cells.iter().all(|c| c.se > 0.0));
    assert!(bep_grid(&[0.0], &[2.0, 1.0], 10, 1).is_err());
}
