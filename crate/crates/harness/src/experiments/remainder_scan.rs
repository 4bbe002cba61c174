use rayon::prelude::*;
use roughflow::driver::{DriverPair, Sign};
use roughflow::euler::{
    solve_rough_euler, weak_remainder, EulerSetup, RemainderOptions, TestFamily, WeakRemainder,
};
use roughflow::fbm::fbm_rough_path;
use roughflow::flow::LagrangianSetup;

use super::{expect_kind, fmt_column, mean_and_error, Check, Report, Table};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

const SNAPSHOTS: usize = 2;

/// Localized variation of the weak remainder on successively halved driver
/// grids of one sample per seed, with the localization threshold fixed from
/// the coarsest grid.
pub fn run_remainder_scan(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, ExperimentKind::RemainderScan)?;
    if config.meshes.len() < 2 {
        return Err(HarnessError::Config(
            "the remainder scan needs at least two driver meshes".into(),
        ));
    }
    let finest = config.finest_mesh();
    let sigma = config.sigma_fields()?;
    let w0 = config.initial_vorticity()?;
    let runs: Vec<Vec<WeakRemainder>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let fine = fbm_rough_path(
                config.hurst,
                finest,
                config.oversample,
                config.horizon,
                sigma.len(),
                seed,
            )?;
            let mut threshold = None;
            let mut out = Vec::with_capacity(config.meshes.len());
            for &m in &config.meshes {
                let driver =
                    DriverPair::new(sigma.clone(), fine.coarsen(finest / m)?, Sign::Minus)?;
                let setup = EulerSetup::new(
                    LagrangianSetup::new(config.resolution, config.particles)
                        .with_refine(finest / m)
                        .with_snapshots(SNAPSHOTS),
                )
                .with_family(TestFamily::standard());
                let traj = solve_rough_euler(&w0, &driver, &setup)?;
                let rem = weak_remainder(
                    &traj,
                    &RemainderOptions {
                        threshold,
                        min_windows: config.tolerances.min_windows,
                        seed,
                        ..Default::default()
                    },
                )?;
                threshold.get_or_insert(rem.threshold);
                out.push(rem);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let tol = &config.tolerances;
    let mut report = Report::new(ExperimentKind::RemainderScan);
    let mut table = Table::new(
        "scan",
        &[
            "seed",
            "mesh",
            "variation",
            "threshold",
            "slope",
            "slope_full",
            "slope_fine",
            "target_slope",
            "additivity_defect",
            "quadrature_gap",
        ],
    );
    let mut changes = Vec::new();
    let mut finite = true;
    for (seed, scan) in config.seeds.iter().zip(&runs) {
        for (m, r) in config.meshes.iter().zip(scan) {
            finite &= r.variation.is_finite() && r.variation > 0.0;
            table.push(vec![
                *seed as f64,
                *m as f64,
                r.variation,
                r.threshold,
                r.slope.unwrap_or(f64::NAN),
                r.slope_full.unwrap_or(f64::NAN),
                r.slope_fine.unwrap_or(f64::NAN),
                3.0 / r.p,
                r.additivity_defect,
                r.quadrature_gap,
            ]);
        }
        changes.extend(
            scan.windows(2)
                .map(|w| w[1].variation / w[0].variation - 1.0),
        );
    }
    report.tables.push(table);

    let finest_runs: Vec<&WeakRemainder> = runs
        .iter()
        .map(|s| s.last().expect("meshes are non-empty"))
        .collect();
    let slopes: Vec<f64> = finest_runs
        .iter()
        .map(|r| r.slope.unwrap_or(f64::NAN))
        .collect();
    let (slope, slope_se) = mean_and_error(&slopes);
    let target = 3.0 / finest_runs[0].p;
    let worst_change = changes.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    report.checks.push(Check::new(
        "variation_finite",
        finite,
        "localized variation finite and positive on every grid".to_string(),
    ));
    report.checks.push(Check::new(
        "variation_stable_under_refinement",
        worst_change <= tol.variation_stability,
        format!("relative changes per halving {}", fmt_column(&changes)),
    ));
    report.checks.push(Check::new(
        "slope_matches_target",
        (slope - target).abs() <= tol.slope_tolerance,
        format!("mean slope {slope:.3} (se {slope_se:.3}) against 3/p = {target:.3}"),
    ));
    report.constant("target_slope", target);
    report.constant("mean_slope", slope);
    report.constant("mean_slope_error", slope_se);
    report.constant("largest_variation_change", worst_change);
    report.constant(
        "largest_additivity_defect",
        runs.iter()
            .flatten()
            .map(|r| r.additivity_defect)
            .fold(0.0, f64::max),
    );
    report.constant(
        "largest_quadrature_gap",
        runs.iter()
            .flatten()
            .map(|r| r.quadrature_gap)
            .fold(0.0, f64::max),
    );
    Ok(report)
}
