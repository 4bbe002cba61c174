use rayon::prelude::*;
use roughflow::driver::{DriverPair, SigmaField, Sign};
use roughflow::euler::{solve_rough_euler, EulerSetup, EulerTrajectory};
use roughflow::fbm::fbm_rough_path;
use roughflow::flow::LagrangianSetup;
use roughflow::{RoughPath, VorticityGrid};

use super::{expect_kind, fmt_column, log_log_slope, Check, Report, Table};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

const SNAPSHOTS: usize = 4;
/// Coarsest resolution of the translation study, as a divisor of `N`.
const LEVELS: [usize; 3] = [4, 2, 1];

/// `L¹` distance of the final field from `cos(x₁ + shift)`.
fn shear_error(traj: &EulerTrajectory, shift: f64) -> Result<f64> {
    let last = &traj.last().vorticity;
    let exact = VorticityGrid::from_fn(last.resolution(), |x, _| (x + shift).cos())?;
    Ok(last.l1_distance(&exact)?)
}

fn run(
    n: usize,
    particles: usize,
    sigma: Vec<SigmaField>,
    path: &RoughPath,
) -> Result<EulerTrajectory> {
    let w0 = VorticityGrid::from_fn(n, |x, _| x.cos())?;
    let driver = DriverPair::new(sigma, path.clone(), Sign::Minus)?;
    let setup = EulerSetup::new(LagrangianSetup::new(n, particles).with_snapshots(SNAPSHOTS));
    Ok(solve_rough_euler(&w0, &driver, &setup)?)
}

/// The shear `cos x₁` is steady without noise and translated by
/// `Σ_j c_j¹ Z^j_t` under constant noise fields.
pub fn run_steady_check(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, ExperimentKind::SteadyCheck)?;
    let sigma = config.sigma_fields()?;
    let mut speeds = Vec::with_capacity(sigma.len());
    for f in &sigma {
        match f {
            SigmaField::Constant { c } => speeds.push(c[0]),
            _ => {
                return Err(HarnessError::Config(
                    "the translation check needs constant noise fields".into(),
                ))
            }
        }
    }
    let n = config.resolution;
    if LEVELS
        .iter()
        .any(|d| !n.is_multiple_of(*d) || !config.particles.is_multiple_of(*d))
    {
        return Err(HarnessError::Config(format!(
            "resolution and particles per side must be divisible by {}",
            LEVELS[0]
        )));
    }
    let steps = config.finest_mesh();
    let path = fbm_rough_path(
        config.hurst,
        steps,
        config.oversample,
        config.horizon,
        sigma.len(),
        config.seeds[0],
    )?;
    let increment = path.increment(0, path.num_steps());
    let shift: f64 = speeds.iter().zip(&increment).map(|(c, z)| c * z).sum();
    let tol = &config.tolerances;

    let still = vec![SigmaField::Constant { c: [0.0, 0.0] }; sigma.len()];
    let steady = run(n, config.particles, still, &path)?;
    let steady_l1 = shear_error(&steady, 0.0)?;

    let moving: Vec<(usize, EulerTrajectory)> = LEVELS
        .par_iter()
        .map(|&d| {
            Ok((
                n / d,
                run(n / d, config.particles / d, sigma.clone(), &path)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut errors = Vec::with_capacity(moving.len());
    for (_, traj) in &moving {
        errors.push(shear_error(traj, shift)?);
    }
    let h: Vec<f64> = moving.iter().map(|(m, _)| 1.0 / *m as f64).collect();
    let order = log_log_slope(&h, &errors).unwrap_or(f64::NAN);

    let all = std::iter::once(&steady).chain(moving.iter().map(|(_, t)| t));
    let drift = all
        .clone()
        .map(|t| t.diagnostics.mean_drift)
        .fold(0.0f64, f64::max);
    let sup_ratio = all
        .map(|t| t.diagnostics.particle_sup_ratio)
        .fold(0.0f64, f64::max);

    let mut report = Report::new(ExperimentKind::SteadyCheck);
    let mut table = Table::new("translation", &["resolution", "particles", "l1_error"]);
    for (d, ((m, _), e)) in LEVELS.iter().zip(moving.iter().zip(&errors)) {
        table.push(vec![*m as f64, (config.particles / d) as f64, *e]);
    }
    report.tables.push(table);
    report.checks.push(Check::new(
        "steady_shear_preserved",
        steady_l1 <= tol.steady_l1,
        format!("L1 {steady_l1:.3e} against {:.1e}", tol.steady_l1),
    ));
    report.checks.push(Check::new(
        "mean_conserved",
        drift <= tol.mean_drift,
        format!("largest mean drift {drift:.3e}"),
    ));
    report.checks.push(Check::new(
        "translated_shear_converges",
        errors.windows(2).all(|w| w[1] < w[0]) && order >= tol.min_order,
        format!(
            "L1 {} at N {:?}, order {order:.2}",
            fmt_column(&errors),
            h.iter().map(|v| (1.0 / v).round()).collect::<Vec<_>>()
        ),
    ));
    report.checks.push(Check::new(
        "particle_sup_bounded",
        sup_ratio <= 1.0,
        format!("max_t max |w_p| / max |w_0| = {sup_ratio}"),
    ));
    report.constant("steady_l1", steady_l1);
    report.constant("translation_order", order);
    report.constant("translation_shift", shift);
    report.constant("mean_drift", drift);
    report.constant(
        "grid_sup_ratio",
        moving
            .iter()
            .map(|(_, t)| t.diagnostics.grid_sup_ratio)
            .fold(steady.diagnostics.grid_sup_ratio, f64::max),
    );
    report.keep_snapshots(&moving.last().expect("three levels").1, 3);
    Ok(report)
}
