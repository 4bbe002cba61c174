use std::sync::Arc;

use rayon::prelude::*;
use roughflow::driver::{c3_distance, DriverPair, SigmaField, Sign};
use roughflow::fbm::fbm_rough_path;
use roughflow::flow::{
    log_lipschitz_constant, report_exponent, solve_flow, FlowProblem, FlowTrajectory, GridVelocity,
    ParticleFlow, VelocityField,
};
use roughflow::torus::{gamma, wrap, Interpolation};
use serde::Serialize;

use super::{drifted_path, expect_kind, Check, Report, Table};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

const LIPSCHITZ_PAIRS: usize = 4000;
const C3_GRID: usize = 32;

/// `u + δ` for a constant `δ`.
struct ShiftedVelocity {
    base: Arc<dyn VelocityField>,
    shift: [f64; 2],
}

impl VelocityField for ShiftedVelocity {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let u = self.base.velocity(t, x);
        [u[0] + self.shift[0], u[1] + self.shift[1]]
    }

    fn sup_norm(&self) -> f64 {
        self.base.sup_norm() + self.shift[0].hypot(self.shift[1])
    }

    fn velocities(&self, t: f64, xs: &[[f64; 2]]) -> Vec<[f64; 2]> {
        self.base
            .velocities(t, xs)
            .into_iter()
            .map(|u| [u[0] + self.shift[0], u[1] + self.shift[1]])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Identical,
    Initial,
    Sigma,
    Driver,
    Drift,
}

impl Kind {
    fn code(self) -> f64 {
        match self {
            Kind::Identical => 0.0,
            Kind::Initial => 1.0,
            Kind::Sigma => 2.0,
            Kind::Driver => 3.0,
            Kind::Drift => 4.0,
        }
    }
}

/// Measured left side and the evaluated terms of the stability estimate.
#[derive(Debug, Clone, Serialize)]
struct PairResult {
    kind: Kind,
    eps: f64,
    lhs: f64,
    /// `‖y₁-y₂‖, ‖σ₁-σ₂‖_{C³}, ω_{Z¹-Z²}(0,T)^{1/2q}, ‖u₁-u₂‖_∞ T, ∫γ(‖Y¹-Y²‖)`
    terms: [f64; 5],
    rhs: f64,
    /// Largest `d(t) / (e z₀^{exp(-t)})` for shifted initial data.
    envelope_ratio: Option<f64>,
}

fn scale_fields(fields: &[SigmaField], factor: f64) -> Vec<SigmaField> {
    fields
        .iter()
        .map(|f| match *f {
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
        })
        .collect()
}

fn distance_series(a: &FlowTrajectory, b: &FlowTrajectory) -> Result<Vec<f64>> {
    if a.times != b.times {
        return Err(HarnessError::Config(
            "paired flows were stored at different times".into(),
        ));
    }
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| Ok(x.sup_distance(y)?))
        .collect()
}

fn gamma_integral(times: &[f64], d: &[f64]) -> Result<f64> {
    let g: Vec<f64> = d
        .iter()
        .map(|&v| gamma(v))
        .collect::<roughflow::Result<_>>()?;
    Ok(times
        .windows(2)
        .zip(g.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum())
}

/// Pairs of flows differing in one of `y`, `σ`, `Z`, `u`; compares the
/// measured sup-distance with the evaluated right side of the stability
/// estimate under one frozen constant.
pub fn run_flow_convergence(config: &ExperimentConfig) -> Result<Report> {
    expect_kind(config, ExperimentKind::FlowConvergence)?;
    if config.perturbations.is_empty() {
        return Err(HarnessError::Config(
            "flow pairs need perturbation sizes".into(),
        ));
    }
    let steps = config.finest_mesh();
    let sigma = config.sigma_fields()?;
    let w0 = config.initial_vorticity()?;
    let drift: Arc<dyn VelocityField> =
        Arc::new(GridVelocity::from_vorticity(&w0, Interpolation::Cubic)?);
    let lipschitz = log_lipschitz_constant(drift.as_ref(), 0.0, LIPSCHITZ_PAIRS, config.seeds[0])?;
    let path = fbm_rough_path(
        config.hurst,
        steps,
        config.oversample,
        config.horizon,
        sigma.len(),
        config.seeds[0],
    )?;
    let q = report_exponent(path.p());
    let initial = ParticleFlow::lattice(config.particles)?;
    let driver = DriverPair::new(sigma.clone(), path.clone(), Sign::Plus)?;
    let base_problem =
        FlowProblem::new(drift.clone(), driver.clone(), initial.clone()).with_snapshots(steps);
    let base = solve_flow(&base_problem)?;

    let mut cases = vec![(Kind::Identical, 0.0)];
    for kind in [Kind::Initial, Kind::Sigma, Kind::Driver, Kind::Drift] {
        cases.extend(config.perturbations.iter().map(|&e| (kind, e)));
    }
    let horizon = path.horizon() - path.times()[0];
    let results: Vec<PairResult> = cases
        .par_iter()
        .map(|&(kind, e)| {
            let mut terms = [0.0; 5];
            let problem = match kind {
                Kind::Identical => base_problem.clone(),
                Kind::Initial => {
                    let labels: Vec<[f64; 2]> = initial
                        .labels()
                        .iter()
                        .map(|x| [wrap(x[0] + e), wrap(x[1] + 0.5 * e)])
                        .collect();
                    let shifted = ParticleFlow::new(labels, initial.weights().to_vec())?;
                    terms[0] = initial.sup_distance(&shifted)?;
                    base_problem.clone().with_initial(shifted)
                }
                Kind::Sigma => {
                    let s = scale_fields(&sigma, 1.0 + e);
                    terms[1] = c3_distance(&s, &sigma, C3_GRID)?;
                    FlowProblem::new(
                        drift.clone(),
                        DriverPair::new(s, path.clone(), Sign::Plus)?,
                        initial.clone(),
                    )
                    .with_snapshots(steps)
                }
                Kind::Driver => {
                    let moved = drifted_path(&path, e)?;
                    terms[2] = moved.distance_control(&path)?.powf(1.0 / (2.0 * q));
                    FlowProblem::new(
                        drift.clone(),
                        driver.with_rough_path(moved)?,
                        initial.clone(),
                    )
                    .with_snapshots(steps)
                }
                Kind::Drift => {
                    terms[3] = e * horizon;
                    let shifted: Arc<dyn VelocityField> = Arc::new(ShiftedVelocity {
                        base: drift.clone(),
                        shift: [e, 0.0],
                    });
                    base_problem.clone().with_drift(shifted)
                }
            };
            let traj = solve_flow(&problem)?;
            let d = distance_series(&traj, &base)?;
            terms[4] = gamma_integral(&base.times, &d)?;
            let lhs = d.iter().fold(0.0f64, |m, v| m.max(*v));
            let envelope_ratio = (kind == Kind::Initial).then(|| {
                let z0 = terms[0];
                base.times
                    .iter()
                    .zip(&d)
                    .map(|(t, v)| v / (std::f64::consts::E * z0.powf((-(t - base.times[0])).exp())))
                    .fold(0.0f64, f64::max)
            });
            Ok(PairResult {
                kind,
                eps: e,
                lhs,
                terms,
                rhs: terms.iter().sum(),
                envelope_ratio,
            })
        })
        .collect::<Result<_>>()?;

    let frozen = config.tolerances.stability_constant;
    let mut report = Report::new(ExperimentKind::FlowConvergence);
    let mut table = Table::new(
        "pairs",
        &[
            "kind",
            "eps",
            "lhs",
            "initial",
            "sigma",
            "driver",
            "drift",
            "gamma_integral",
            "rhs",
            "ratio",
        ],
    );
    let mut measured: f64 = 0.0;
    let mut dominated = 0;
    for r in &results {
        let ratio = if r.rhs > 0.0 { r.lhs / r.rhs } else { 0.0 };
        measured = measured.max(ratio);
        if r.lhs <= frozen * r.rhs {
            dominated += 1;
        }
        let mut row = vec![r.kind.code(), r.eps, r.lhs];
        row.extend(r.terms);
        row.extend([r.rhs, ratio]);
        table.push(row);
    }
    let identical = &results[0];
    report.checks.push(Check::new(
        "identical_pair_vanishes",
        identical.lhs == 0.0 && identical.rhs == 0.0,
        format!("lhs {:e}, rhs {:e}", identical.lhs, identical.rhs),
    ));
    report.checks.push(Check::new(
        "frozen_constant_dominates",
        dominated == results.len(),
        format!(
            "{dominated}/{} pairs with lhs <= {frozen} * rhs; largest lhs/rhs {measured:.3e}",
            results.len()
        ),
    ));
    let envelope = results
        .iter()
        .filter_map(|r| r.envelope_ratio)
        .fold(0.0f64, f64::max);
    report.checks.push(Check::new(
        "osgood_envelope_dominates",
        envelope <= 1.0,
        format!("largest d(t) / (e z0^exp(-t)) = {envelope:.3e}"),
    ));
    report.constant("measured_constant", measured);
    report.constant("frozen_constant", frozen);
    report.constant("log_lipschitz_constant", lipschitz);
    report.constant("drift_sup_norm", drift.sup_norm());
    report.constant("report_exponent", q);
    if let Some(r) = &base.report {
        report.constant("flow_variation", r.flow_variation);
        report.constant("remainder_variation", r.remainder_variation);
    }
    report.diagnostic("pairs", &results);
    report.diagnostic(
        "kind_codes",
        [
            "identical = 0",
            "initial = 1",
            "sigma = 2",
            "driver = 3",
            "drift = 4",
        ],
    );
    report.tables.push(table);
    Ok(report)
}
