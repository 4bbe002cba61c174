use rayon::prelude::*;
use roughflow::driver::{c3_distance, DriverPair, SigmaField, Sign};
use roughflow::euler::{
    negative_norm_distance, solve_rough_euler_particles, EulerSetup, EulerTrajectory,
    Representation, TestFamily,
};
use roughflow::fbm::fbm_rough_path;
use roughflow::flow::{LagrangianSetup, ParticleFlow};

use super::{drifted_path, expect_kind, fmt_column, Check, Report, Table};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

const SNAPSHOTS: usize = 8;
const DIVERGENCE_TOL: f64 = 1e-10;
const DIVERGENCE_GRID: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Initial,
    Sigma,
    Driver,
}

impl Kind {
    const ALL: [Kind; 3] = [Kind::Initial, Kind::Sigma, Kind::Driver];

    fn name(self) -> &'static str {
        match self {
            Kind::Initial => "initial",
            Kind::Sigma => "sigma",
            Kind::Driver => "driver",
        }
    }

    fn code(self) -> f64 {
        match self {
            Kind::Initial => 0.0,
            Kind::Sigma => 1.0,
            Kind::Driver => 2.0,
        }
    }
}

fn scale_field(field: &SigmaField, factor: f64) -> SigmaField {
    match *field {
        SigmaField::Constant { c } => SigmaField::Constant {
            c: [c[0] * factor, c[1] * factor],
        },
        SigmaField::Mode {
            amplitude,
            k,
            phase,
        } => SigmaField::Mode {
            amplitude: amplitude * factor,
            k,
            phase,
        },
    }
}

/// `sup_t` of the particle-measure distance, the final `L¹` distance of the
/// deposited fields and `sup_t` of the particle sup-distance.
fn solution_distance(
    a: &EulerTrajectory,
    b: &EulerTrajectory,
    family: &TestFamily,
) -> Result<[f64; 3]> {
    let mut w11: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for (x, y) in a.states.iter().zip(&b.states) {
        w11 = w11.max(negative_norm_distance(
            family,
            Representation::Particles(&x.particles),
            Representation::Particles(&y.particles),
        ));
        sup = sup.max(x.particles.sup_distance(&y.particles)?);
    }
    let l1 = a.last().vorticity.l1_distance(&b.last().vorticity)?;
    Ok([w11, l1, sup])
}

/// Perturbs `w₀`, `σ` and `Z` one at a time by the configured relative
/// sizes and tabulates the distance of the solutions from the base run.
pub fn run_stability(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, ExperimentKind::Stability)?;
    if config.perturbations.is_empty() {
        return Err(HarnessError::Config(
            "the stability table needs perturbation sizes".into(),
        ));
    }
    let sigma = config.sigma_fields()?;
    let w0 = config.initial_vorticity()?;
    let initial = ParticleFlow::lattice_from_grid(config.particles, &w0)?;
    let path = fbm_rough_path(
        config.hurst,
        config.finest_mesh(),
        config.oversample,
        config.horizon,
        sigma.len(),
        config.seeds[0],
    )?;
    let base_driver = DriverPair::new(sigma.clone(), path.clone(), Sign::Minus)?;
    let setup = EulerSetup::new(
        LagrangianSetup::new(config.resolution, config.particles).with_snapshots(SNAPSHOTS),
    );
    let family = TestFamily::standard();
    let base = solve_rough_euler_particles(&initial, &base_driver, &setup)?;
    let zero = solution_distance(
        &solve_rough_euler_particles(&initial, &base_driver, &setup)?,
        &base,
        &family,
    )?;
    let sup0 = initial.weights().iter().fold(0.0f64, |m, w| m.max(w.abs()));

    let mut eps = config.perturbations.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let cases: Vec<(Kind, f64)> = Kind::ALL
        .iter()
        .flat_map(|&k| eps.iter().map(move |&e| (k, e)))
        .collect();
    let rows: Vec<[f64; 5]> = cases
        .par_iter()
        .map(|&(kind, e)| {
            let (particles, driver, size) = match kind {
                Kind::Initial => {
                    let w: Vec<f64> = initial.weights().iter().map(|v| v * (1.0 + e)).collect();
                    (
                        ParticleFlow::new(initial.labels().to_vec(), w)?,
                        base_driver.clone(),
                        e * sup0,
                    )
                }
                Kind::Sigma => {
                    let s: Vec<SigmaField> =
                        sigma.iter().map(|f| scale_field(f, 1.0 + e)).collect();
                    for f in &s {
                        let d = f.divergence_defect(DIVERGENCE_GRID);
                        if d > DIVERGENCE_TOL {
                            return Err(HarnessError::Inadmissible(format!(
                                "noise field divergence {d:e}"
                            )));
                        }
                    }
                    let size = c3_distance(&s, &sigma, DIVERGENCE_GRID)?;
                    (
                        initial.clone(),
                        DriverPair::new(s, path.clone(), Sign::Minus)?,
                        size,
                    )
                }
                Kind::Driver => {
                    let moved = drifted_path(&path, e)?;
                    let size = moved.distance_control(&path)?;
                    (initial.clone(), base_driver.with_rough_path(moved)?, size)
                }
            };
            let traj = solve_rough_euler_particles(&particles, &driver, &setup)?;
            let [w11, l1, sup] = solution_distance(&traj, &base, &family)?;
            Ok([e, size, w11, l1, sup])
        })
        .collect::<Result<_>>()?;

    let mut report = Report::new(ExperimentKind::Stability);
    let mut table = Table::new("stability", &["kind", "eps", "size", "w11", "l1", "sup"]);
    table.push(vec![-1.0, 0.0, 0.0, zero[0], zero[1], zero[2]]);
    for ((kind, _), r) in cases.iter().zip(&rows) {
        table.push(vec![kind.code(), r[0], r[1], r[2], r[3], r[4]]);
    }
    report.checks.push(Check::new(
        "zero_perturbation",
        zero == [0.0; 3],
        format!("distances {zero:?}"),
    ));
    for kind in Kind::ALL {
        let mine: Vec<&[f64; 5]> = cases
            .iter()
            .zip(&rows)
            .filter(|(c, _)| c.0 == kind)
            .map(|(_, r)| r)
            .collect();
        let w11: Vec<f64> = mine.iter().map(|r| r[2]).collect();
        let shrinking = w11.windows(2).all(|w| w[1] < w[0]) && w11.iter().all(|v| v.is_finite());
        let k = mine.iter().map(|r| r[2] / r[0]).fold(0.0f64, f64::max);
        report.constant(&format!("{}_distance_per_eps", kind.name()), k);
        report.checks.push(Check::new(
            &format!("{}_distance_vanishes", kind.name()),
            shrinking,
            format!(
                "eps {} -> w11 {}, K = {k:.3e}",
                fmt_column(&eps),
                fmt_column(&w11)
            ),
        ));
    }
    report.diagnostic(
        "perturbation_kinds",
        ["zero = -1", "initial = 0", "sigma = 1", "driver = 2"],
    );
    report.tables.push(table);
    report.keep_snapshots(&base, 3);
    Ok(report)
}
