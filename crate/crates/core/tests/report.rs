mod support;

use alignrag::cda::CdaMode;
use alignrag::evaluation::report::{build_report, read_curve_csv, write_bundle, ReportConfig, ReportError, Tenths, ALL};
use support::{injection_run, recompute, PUBLISHED_DROP_ROWS};

#[test]
fn published_averages_and_drops_reproduce() {
    for row in &PUBLISHED_DROP_ROWS {
        let (id_avg, ood_avg, drop) = recompute(row);
        assert_eq!((id_avg.as_str(), ood_avg.as_str(), drop.as_str()), (row.id_avg, row.ood_avg, row.drop), "{}", row.label);
    }
}

#[test]
fn drop_uses_rounded_averages() {
    // Unrounded this row would give 58.34 - 17.95 = 40.39.
    let row = &PUBLISHED_DROP_ROWS[1];
    assert_eq!(recompute(row).2, "40.3");
}

#[test]
fn injected_answers_lift_iteration_one_by_half() {
    let (instances, out) = injection_run(30, 15, CdaMode::Fixed(2));
    let report = build_report(&instances, &out.trajectories, &ReportConfig::default()).unwrap();
    let at = |it: usize| report.curve.iter().find(|p| p.benchmark == ALL && p.iteration == it).unwrap().score;
    assert_eq!(at(0), Tenths(0));
    assert_eq!(at(1), Tenths(500));
    assert_eq!(at(1) - at(0), Tenths(500));
    assert_eq!(at(2), Tenths(500));
    let all = report.metrics.iter().find(|m| m.benchmark == ALL).unwrap();
    assert_eq!((all.initial, all.final_score, all.instances), (Tenths(0), Tenths(500), 30));
}

#[test]
fn bundle_files_are_written() {
    let (instances, out) = injection_run(10, 4, CdaMode::Auto(3));
    let cfg = ReportConfig { diagnostics: true, ..ReportConfig::default() };
    let report = build_report(&instances, &out.trajectories, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &report).unwrap();
    for f in ["metrics.csv", "iteration_curve.csv", "answerability_split.csv", "ood_drop.json", "auto_stats.json", "diagnostics.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("benchmark,metric,instances,initial,final\n"), "{metrics}");
    assert_eq!(read_curve_csv(&dir.path().join("iteration_curve.csv")).unwrap(), report.curve);

    assert_eq!(report.auto.budget, 3);
    assert_eq!(report.auto.fixed_budget_calls, 10 * 7);
    assert_eq!(report.auto.generator_calls + report.auto.critic_calls, 10 * 7);
    assert_eq!(report.auto.call_savings, 0.0);
}

#[test]
fn mismatched_ids_are_rejected() {
    let (instances, out) = injection_run(4, 2, CdaMode::Fixed(1));
    let err = build_report(&instances[..3], &out.trajectories, &ReportConfig::default()).unwrap_err();
    assert!(matches!(err, ReportError::IdMismatch(_)));
    let err = build_report(&instances, &out.trajectories[..3], &ReportConfig::default()).unwrap_err();
    assert!(matches!(err, ReportError::IdMismatch(_)));
}
