use rayon::prelude::*;
use roughflow::driver::{DriverPair, SigmaField, Sign};
use roughflow::euler::{
    negative_norm_distance, solve_rough_euler, EulerSetup, EulerTrajectory, Representation,
    TestFamily,
};
use roughflow::fbm::fbm_rough_path;
use roughflow::flow::{solve_euclidean, LagrangianSetup, LinearFields};
use roughflow::{RoughPath, VorticityGrid};

use super::{
    decreasing_within_noise, expect_kind, fmt_column, log_log_slope, mean_and_error,
    piecewise_linear_lift, Check, Report, Table,
};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

const SNAPSHOTS: usize = 4;
const TRANSLATION_SPEED: f64 = 0.5;

struct SeedRun {
    to_reference: Vec<(f64, f64)>,
    to_next: Vec<(f64, f64)>,
    scalar: Vec<f64>,
    translation: Vec<f64>,
    reference: Option<EulerTrajectory>,
}

fn distances(a: &EulerTrajectory, b: &EulerTrajectory, family: &TestFamily) -> Result<(f64, f64)> {
    let (pa, pb) = (&a.last().particles, &b.last().particles);
    let w = negative_norm_distance(
        family,
        Representation::Particles(pa),
        Representation::Particles(pb),
    );
    Ok((w, pa.sup_distance(pb)?))
}

/// Relative terminal error of `dY = Y dZ` against `exp(Z_T - Z_0)`, solved on
/// the piecewise-linear lift at each mesh.
fn scalar_errors(path: &RoughPath, meshes: &[usize]) -> Result<Vec<f64>> {
    let fields = LinearFields::new(1, vec![vec![1.0]])?;
    let exact = path.increment(0, path.len() - 1)[0].exp();
    meshes
        .iter()
        .map(|&m| {
            let lift = piecewise_linear_lift(path, m)?;
            let ys = solve_euclidean(&fields, &[1.0], &lift)?;
            let y = ys.last().expect("solution has nodes")[0];
            Ok(((y - exact) / exact).abs())
        })
        .collect()
}

/// `sup_t ‖w_t - cos(x₁ + c Z_t)‖_{L¹}` over every solver step for the
/// shear translated by a constant field, at each mesh.
fn translation_errors(config: &ExperimentConfig, path: &RoughPath) -> Result<Vec<f64>> {
    let n = config.resolution;
    let finest = path.num_steps();
    let w0 = VorticityGrid::from_fn(n, |x, _| x.cos())?;
    let sigma = vec![SigmaField::Constant {
        c: [TRANSLATION_SPEED, 0.0],
    }];
    let t0 = path.times()[0];
    let span = path.horizon() - t0;
    config
        .meshes
        .iter()
        .map(|&m| {
            let driver =
                DriverPair::new(sigma.clone(), piecewise_linear_lift(path, m)?, Sign::Minus)?;
            let setup = EulerSetup::new(
                LagrangianSetup::new(n, config.particles)
                    .with_refine(finest / m)
                    .with_snapshots(finest),
            );
            let traj = solve_rough_euler(&w0, &driver, &setup)?;
            let mut worst: f64 = 0.0;
            for s in &traj.states {
                let k = (((s.time - t0) / span) * finest as f64).round() as usize;
                let shift = TRANSLATION_SPEED * path.increment(0, k.min(finest))[0];
                let exact = VorticityGrid::from_fn(n, |x, _| (x + shift).cos())?;
                worst = worst.max(s.vorticity.l1_distance(&exact)?);
            }
            Ok(worst)
        })
        .collect()
}

/// Solutions driven by piecewise-linear lifts of one fBm sample per seed,
/// compared with the solution driven by the full lift of the same sample.
pub fn run_wong_zakai(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, ExperimentKind::WongZakai)?;
    if config.meshes.len() < 3 {
        return Err(HarnessError::Config(
            "the Wong-Zakai table needs at least three driver meshes".into(),
        ));
    }
    let finest = config.finest_mesh();
    let sigma = config.sigma_fields()?;
    let w0 = config.initial_vorticity()?;
    let family = TestFamily::standard();
    let setup = |refine: usize| {
        EulerSetup::new(
            LagrangianSetup::new(config.resolution, config.particles)
                .with_refine(refine)
                .with_snapshots(SNAPSHOTS),
        )
    };
    let runs: Vec<SeedRun> = config
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let reference = fbm_rough_path(
                config.hurst,
                finest,
                config.oversample,
                config.horizon,
                sigma.len(),
                seed,
            )?;
            let ref_traj = solve_rough_euler(
                &w0,
                &DriverPair::new(sigma.clone(), reference.clone(), Sign::Minus)?,
                &setup(1),
            )?;
            let mut trajs = Vec::with_capacity(config.meshes.len());
            for &m in &config.meshes {
                let driver = DriverPair::new(
                    sigma.clone(),
                    piecewise_linear_lift(&reference, m)?,
                    Sign::Minus,
                )?;
                trajs.push(solve_rough_euler(&w0, &driver, &setup(finest / m))?);
            }
            let to_reference = trajs
                .iter()
                .map(|t| distances(t, &ref_traj, &family))
                .collect::<Result<_>>()?;
            let to_next = trajs
                .windows(2)
                .map(|w| distances(&w[0], &w[1], &family))
                .collect::<Result<_>>()?;
            let scalar_path = fbm_rough_path(
                config.hurst,
                finest,
                config.oversample,
                config.horizon,
                1,
                seed,
            )?;
            Ok(SeedRun {
                translation: translation_errors(config, &scalar_path)?,
                to_reference,
                to_next,
                scalar: scalar_errors(&scalar_path, &config.meshes)?,
                reference: (i == 0).then_some(ref_traj),
            })
        })
        .collect::<Result<_>>()?;

    let mut report = Report::new(ExperimentKind::WongZakai);
    let h: Vec<f64> = config
        .meshes
        .iter()
        .map(|&m| config.horizon / m as f64)
        .collect();
    let mut per_seed = Table::new(
        "distances",
        &[
            "seed",
            "mesh",
            "h",
            "w11_to_reference",
            "sup_to_reference",
            "w11_to_next",
            "sup_to_next",
            "scalar_error",
            "translation_l1",
        ],
    );
    for (seed, run) in config.seeds.iter().zip(&runs) {
        for (i, &m) in config.meshes.iter().enumerate() {
            let next = run.to_next.get(i).copied().unwrap_or((f64::NAN, f64::NAN));
            per_seed.push(vec![
                *seed as f64,
                m as f64,
                h[i],
                run.to_reference[i].0,
                run.to_reference[i].1,
                next.0,
                next.1,
                run.scalar[i],
                run.translation[i],
            ]);
        }
    }
    let column = |f: &dyn Fn(&SeedRun, usize) -> f64| -> (Vec<f64>, Vec<f64>) {
        (0..config.meshes.len())
            .map(|i| mean_and_error(&runs.iter().map(|r| f(r, i)).collect::<Vec<_>>()))
            .unzip()
    };
    let (w11, w11_se) = column(&|r, i| r.to_reference[i].0);
    let (sup, sup_se) = column(&|r, i| r.to_reference[i].1);
    let (scalar, scalar_se) = column(&|r, i| r.scalar[i]);
    let (translation, translation_se) = column(&|r, i| r.translation[i]);
    let mut summary = Table::new(
        "summary",
        &[
            "mesh",
            "h",
            "w11_mean",
            "w11_se",
            "sup_mean",
            "sup_se",
            "scalar_error_mean",
            "scalar_error_se",
            "translation_l1_mean",
            "translation_l1_se",
        ],
    );
    for (i, &m) in config.meshes.iter().enumerate() {
        summary.push(vec![
            m as f64,
            h[i],
            w11[i],
            w11_se[i],
            sup[i],
            sup_se[i],
            scalar[i],
            scalar_se[i],
            translation[i],
            translation_se[i],
        ]);
    }
    report.tables.push(summary);
    report.tables.push(per_seed);

    let tol = &config.tolerances;
    let monotone = |v: &[f64], e: &[f64]| {
        decreasing_within_noise(v, e, tol.allowed_inversions, tol.noise_floor_sigmas)
    };
    let checks = [
        ("w11_column_decreasing", monotone(&w11, &w11_se), &w11),
        ("sup_column_decreasing", monotone(&sup, &sup_se), &sup),
        (
            "scalar_subtest_converges",
            monotone(&scalar, &scalar_se),
            &scalar,
        ),
        (
            "translation_converges",
            monotone(&translation, &translation_se),
            &translation,
        ),
    ];
    for (name, m, col) in checks {
        report.checks.push(Check::new(
            name,
            m.passed,
            format!("{} with {} inversion(s)", fmt_column(col), m.inversions),
        ));
        report.diagnostic(name, &m);
    }
    for (name, col) in [
        ("w11", &w11),
        ("sup", &sup),
        ("scalar", &scalar),
        ("translation", &translation),
    ] {
        if let Some(s) = log_log_slope(&h, col) {
            report.constant(&format!("slope_{name}"), s);
        }
    }
    report.diagnostic("seeds", &config.seeds);
    if let Some(traj) = runs.first().and_then(|r| r.reference.as_ref()) {
        report.keep_snapshots(traj, 3);
    }
    Ok(report)
}
