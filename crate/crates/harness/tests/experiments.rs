use roughflow_harness::experiments::{run_flow_convergence, run_stability, run_wong_zakai};
use roughflow_harness::{
    run_experiment, ExperimentConfig, ExperimentKind, HarnessError, SigmaSpec,
};

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let base = ExperimentConfig::desk(kind);
    ExperimentConfig {
        resolution: 16,
        particles: 16,
        meshes: base
            .meshes
            .iter()
            .map(|m| m / 16)
            .filter(|&m| m >= 4)
            .collect(),
        seeds: base.seeds.iter().take(2).copied().collect(),
        ..base
    }
}

#[test]
fn wong_zakai_table_has_one_row_per_mesh() {
    let config = ExperimentConfig {
        meshes: vec![8, 16, 32],
        ..small(ExperimentKind::WongZakai)
    };
    let report = run_wong_zakai(&config).unwrap();
    let summary = report.table("summary").unwrap();
    assert_eq!(summary.column("mesh").unwrap(), vec![8.0, 16.0, 32.0]);
    assert_eq!(report.table("distances").unwrap().rows.len(), 6);
    for v in summary.column("sup_mean").unwrap() {
        assert!(v.is_finite() && v >= 0.0);
    }
    assert_eq!(report.checks.len(), 4);
}

#[test]
fn wong_zakai_needs_three_meshes() {
    let config = ExperimentConfig {
        meshes: vec![16, 32],
        ..small(ExperimentKind::WongZakai)
    };
    assert!(matches!(
        run_wong_zakai(&config),
        Err(HarnessError::Config(_))
    ));
}

#[test]
fn stability_zero_perturbation_is_exact() {
    let report = run_stability(&small(ExperimentKind::Stability)).unwrap();
    assert!(report.check("zero_perturbation").unwrap().passed);
    let table = report.table("stability").unwrap();
    assert_eq!(table.rows.len(), 1 + 3 * 3);
    assert!(report.check("initial_distance_vanishes").unwrap().passed);
}

#[test]
fn flow_pairs_identical_pair_is_zero() {
    let report = run_flow_convergence(&small(ExperimentKind::FlowConvergence)).unwrap();
    assert!(report.check("identical_pair_vanishes").unwrap().passed);
    let pairs = report.table("pairs").unwrap();
    assert_eq!(pairs.rows.len(), 1 + 4 * 3);
    for (lhs, rhs) in pairs
        .column("lhs")
        .unwrap()
        .iter()
        .zip(pairs.column("rhs").unwrap())
    {
        assert!(*lhs >= 0.0 && rhs >= 0.0);
    }
    assert!(report.constants["log_lipschitz_constant"] > 0.0);
}

#[test]
fn steady_check_rejects_nonconstant_noise() {
    let config = ExperimentConfig {
        sigma: vec![SigmaSpec::Catalog("mode_1_1".into())],
        ..small(ExperimentKind::SteadyCheck)
    };
    assert!(matches!(
        run_experiment(&config),
        Err(HarnessError::Config(_))
    ));
}

#[test]
fn remainder_scan_reports_every_grid() {
    let config = ExperimentConfig {
        resolution: 8,
        particles: 16,
        meshes: vec![32, 64],
        seeds: vec![0],
        ..ExperimentConfig::desk(ExperimentKind::RemainderScan)
    };
    let report = run_experiment(&config).unwrap();
    let scan = report.table("scan").unwrap();
    assert_eq!(scan.column("mesh").unwrap(), vec![32.0, 64.0]);
    assert!(report.check("variation_finite").unwrap().passed);
    let thresholds = scan.column("threshold").unwrap();
    assert_eq!(thresholds[0], thresholds[1]);
}

#[test]
fn experiments_reject_foreign_configs() {
    let config = small(ExperimentKind::Stability);
    assert!(matches!(
        run_wong_zakai(&config),
        Err(HarnessError::WrongExperiment { .. })
    ));
}
