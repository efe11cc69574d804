use penreg::harness::*;

fn lasso(n: usize, p: usize, s: usize, trials: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(PenaltyChoice::L1, n, s);
    c.p = Some(p);
    c.trials = trials;
    c.seed = 11;
    c
}

#[test]
fn noiseless_unpenalised_fit_is_exact() {
    let mut c = lasso(30, 8, 3, 5);
    c.sigma = 0.0;
    c.lambda_rule = LambdaChoice::Explicit(0.0);
    let r = run_coverage(&c).unwrap();
    assert_eq!(r.aggregates.pred_violation_rate, Some(0.0));
    for row in &r.rows {
        assert!(row.pred_lhs.unwrap() < 1e-12, "{row:?}");
        assert!(row.estim_rhs.is_none());
    }
}

#[test]
fn coverage_rates_are_counts_over_trials() {
    let r = run_coverage(&lasso(60, 12, 2, 40)).unwrap();
    let a = &r.aggregates;
    let m = (a.trials - a.flagged) as f64;
    assert_eq!(a.pred_violation_rate.unwrap(), r.pred_violations() as f64 / m);
    assert_eq!(a.estim_violation_rate.unwrap(), r.estim_violations() as f64 / m);
    assert!(a.pred_violation_rate.unwrap() <= a.violation_limit.unwrap());
    assert!(a.mean_pred_lhs.unwrap() <= a.expected_pred_rhs.unwrap() + 2.0 * a.pred_lhs_stderr.unwrap());
    assert_eq!(a.indicative, Some(false));
    assert!(a.min_cert_gap.unwrap() >= -1e-6);
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let mut c = lasso(40, 10, 2, 24);
    c.threads = Some(1);
    let a = report_csv(&run_coverage(&c).unwrap()).unwrap();
    c.threads = Some(4);
    let b = report_csv(&run_coverage(&c).unwrap()).unwrap();
    assert_eq!(a, b);
    c.seed += 1;
    let d = report_csv(&run_coverage(&c).unwrap()).unwrap();
    assert_ne!(a, d);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("trial,converged,lambda,pred_lhs"));
    assert_eq!(text.lines().count(), 25);
}

#[test]
fn json_round_trip_and_files() {
    let r = run_coverage(&lasso(40, 10, 2, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_report(&r, &path, OutputFormat::Json).unwrap();
    let back: ExperimentReport = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back.aggregates, r.aggregates);
    assert_eq!(back.rows, r.rows);
    let csv_path = dir.path().join("r.csv");
    emit_report(&r, &csv_path, OutputFormat::Csv).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), report_csv(&r).unwrap());
    assert!(emit_report(&r, &dir.path().join("missing/r.csv"), OutputFormat::Csv).is_err());
}

#[test]
fn event_probability_runs() {
    let mut c = lasso(40, 10, 2, 400);
    let r = run_event_probability(&c).unwrap();
    let a = &r.aggregates;
    assert!(a.event_frequency.unwrap() >= 0.5 - 2.0 * a.event_stderr.unwrap());
    c.sigma = 0.0;
    let r = run_event_probability(&c).unwrap();
    assert_eq!(r.aggregates.event_frequency, Some(1.0));

    let mut nuc = ExperimentConfig::new(PenaltyChoice::Nuclear, 200, 1);
    nuc.k = Some(4);
    nuc.m = Some(4);
    nuc.trials = 200;
    let r = run_event_probability(&nuc).unwrap();
    assert!(r.aggregates.event_floor.unwrap() > 0.9);
}

#[test]
fn certify_and_truncated_control() {
    let mut c = lasso(50, 20, 3, 20);
    let r = run_certify(&c).unwrap();
    assert!(r.aggregates.min_cert_gap.unwrap() >= -1e-6);
    assert_eq!(r.rows.len(), 20);
    c.max_iters = Some(3);
    let t = run_certify(&c).unwrap();
    assert!(t.aggregates.min_cert_gap.unwrap() < -1e-3, "{:?}", t.aggregates.min_cert_gap);
}

#[test]
fn group_and_nuclear_coverage_smoke() {
    let mut g = ExperimentConfig::new(PenaltyChoice::Group, 80, 2);
    g.groups = Some(6);
    g.group_size = Some(3);
    g.trials = 10;
    let r = run_coverage(&g).unwrap();
    assert_eq!(r.aggregates.flagged, 0);
    assert!((r.aggregates.mu4.unwrap() - 2f64.sqrt()).abs() < 1e-12);

    let mut n = ExperimentConfig::new(PenaltyChoice::Nuclear, 100, 1);
    n.k = Some(4);
    n.m = Some(5);
    n.trials = 10;
    let r = run_coverage(&n).unwrap();
    assert!((r.aggregates.mu4.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!(r.aggregates.pred_violation_rate.unwrap() <= r.aggregates.violation_limit.unwrap());
}

#[test]
fn group_random_design_is_refused() {
    let mut g = ExperimentConfig::new(PenaltyChoice::Group, 80, 2);
    g.groups = Some(6);
    g.group_size = Some(3);
    g.trials = 2;
    g.lambda_rule = LambdaChoice::RandomDesign(30.0);
    assert!(matches!(run_coverage(&g), Err(penreg::Error::Unsupported(_))));
}
