use tdof_core::model::Algorithm;
use tdof_core::simstudy::*;

fn tiny() -> StudyConfig {
    StudyConfig {
        nu_true: vec![1.0, 10.0],
        n: vec![10],
        lambda: vec![0.2, 1.0],
        datasets_per_cell: 2,
        iterations: 300,
        burn_in: 100,
        k_aa: 3,
        k_asis: 3,
        ..StudyConfig::default()
    }
}

#[test]
fn default_grid_has_29700_chains() {
    assert_eq!(StudyConfig::default().chain_count(), 29_700);
    let desk = StudyConfig::preset("desk").unwrap();
    assert_eq!(desk.chain_count(), 11 * 3 * 2 * 3 * 4);
    assert!(StudyConfig::preset("huge").is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = StudyConfig { lambda: vec![], ..tiny() };
    assert!(bad.validate().is_err());
    let bad = StudyConfig { inits: vec![-1.0], ..tiny() };
    assert!(bad.validate().is_err());
}

#[test]
fn data_sets_are_shared_and_reproducible() {
    let a = simulate_dataset(7, 5.0, 30, 1).unwrap();
    assert_eq!(a, simulate_dataset(7, 5.0, 30, 1).unwrap());
    assert_ne!(a, simulate_dataset(7, 5.0, 30, 2).unwrap());
    assert_ne!(a, simulate_dataset(8, 5.0, 30, 1).unwrap());
}

#[test]
fn rerun_and_resume_reproduce_results() {
    let config = tiny();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let rows = run_grid(&config, &a, false, 2, |_| {}).unwrap();
    assert_eq!(rows.len(), config.chain_count());
    run_grid(&config, &b, false, 1, |_| {}).unwrap();
    let read = |p: &std::path::Path| std::fs::read_to_string(p.join(RESULTS_FILE)).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(read(&a).starts_with("alg,nu_true,n,lambda,data_id,init,rne,ess,rhat,q10,q50,q90,stuck"));

    // Resuming a finished study changes nothing.
    let again = run_grid(&config, &a, true, 1, |_| {}).unwrap();
    assert_eq!(again, rows);
    assert_eq!(read(&a), read(&b));

    // Resuming from a truncated results file finishes the remaining groups.
    let text = read(&b);
    let keep: Vec<&str> = text.lines().take(1 + 4 * 5).collect();
    std::fs::write(b.join(RESULTS_FILE), keep.join("\n") + "\n").unwrap();
    let resumed = run_grid(&config, &b, true, 1, |_| {}).unwrap();
    assert_eq!(resumed, rows);
    assert_eq!(read(&a), read(&b));

    // A different configuration is not mixed into an existing run.
    let other = StudyConfig { master_seed: 1, ..config };
    assert!(run_grid(&other, &a, true, 1, |_| {}).is_err());
}

#[test]
fn results_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_grid(&tiny(), dir.path(), false, 1, |_| {}).unwrap();
    let mut buf = Vec::new();
    write_results(&mut buf, &rows).unwrap();
    let back = read_results(&buf[..]).unwrap();
    assert_eq!(back.len(), rows.len());
    for (x, y) in back.iter().zip(&rows) {
        assert_eq!(x.key(), y.key());
        assert_eq!(x.q50.to_bits(), y.q50.to_bits());
    }
}

fn row(alg: Algorithm, nu_true: f64, init: f64, rne: f64, rhat: f64) -> CellResult {
    CellResult {
        alg,
        nu_true,
        n: 1000,
        lambda: 0.2,
        data_id: 0,
        init,
        rne,
        ess: rne * 1e4,
        rhat,
        q10: init,
        q90: init,
        q50: init,
        stuck: rhat.is_infinite(),
        error: None,
    }
}

#[test]
fn aggregation_screens_groups() {
    let rows = vec![
        row(Algorithm::Sa, 1.0, 2.0, 0.4, 1.01),
        row(Algorithm::Sa, 1.0, 10.0, 0.6, 1.01),
        row(Algorithm::Aa, 1.0, 2.0, 0.0, f64::INFINITY),
        row(Algorithm::Aa, 1.0, 100.0, 0.0, f64::INFINITY),
    ];
    let table = aggregate_mean_rne(&rows);
    let sa = table.iter().find(|c| c.algorithm == Algorithm::Sa).unwrap();
    assert!((sa.mean_rne_pct.unwrap() - 50.0).abs() < 1e-9);
    let aa = table.iter().find(|c| c.algorithm == Algorithm::Aa).unwrap();
    assert_eq!(aa.mean_rne_pct, None);
    let mut out = Vec::new();
    write_rne_table(&mut out, &table).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("AA,1000,1,-,2,0"));
}

#[test]
fn interval_table_marks_screened_groups() {
    let rows = vec![
        row(Algorithm::Aa, 1.0, 100.0, 0.0, f64::INFINITY),
        row(Algorithm::Sa, 1.0, 2.0, 0.4, 1.01),
    ];
    let f = IntervalFilter::default();
    let t = interval_table(&rows, &f);
    assert_eq!(t, interval_table(&rows, &f));
    let aa = t.iter().find(|r| r.algorithm == Algorithm::Aa).unwrap();
    assert!(aa.flagged && aa.q10 == 100.0 && aa.q90 == 100.0);
    let mut out = Vec::new();
    write_interval_table(&mut out, &t).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("AA,100,100.000,100.000,*"));
}
