//! Experiment drivers. Each returns a [`Report`] with tables, pass checks
//! and measured constants.

mod flow_convergence;
mod remainder_scan;
mod stability;
mod steady_check;
mod wong_zakai;

use std::collections::BTreeMap;

use roughflow::euler::EulerTrajectory;
use roughflow::flow::ParticleFlow;
use roughflow::{RoughPath, VorticityGrid};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

pub use flow_convergence::run_flow_convergence;
pub use remainder_scan::run_remainder_scan;
pub use stability::run_stability;
pub use steady_check::run_steady_check;
pub use wong_zakai::run_wong_zakai;

/// A named pass criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Numeric table written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|x| x == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

/// State written as `fields_t####.csv` and `particles_t####.csv`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: VorticityGrid,
    pub particles: ParticleFlow,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub constants: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
    pub snapshots: Vec<Snapshot>,
}

impl Report {
    fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            tables: Vec::new(),
            checks: Vec::new(),
            constants: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.to_string(), value);
    }

    fn diagnostic(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.diagnostics.insert(name.to_string(), v);
    }

    /// Keeps up to `count` evenly spaced states of `traj`.
    fn keep_snapshots(&mut self, traj: &EulerTrajectory, count: usize) {
        let n = traj.states.len();
        let count = count.clamp(1, n);
        let mut idx: Vec<usize> = (0..count)
            .map(|k| {
                if count == 1 {
                    n - 1
                } else {
                    k * (n - 1) / (count - 1)
                }
            })
            .collect();
        idx.dedup();
        for k in idx {
            let s = &traj.states[k];
            self.snapshots.push(Snapshot {
                time: s.time,
                field: s.vorticity.clone(),
                particles: s.particles.clone(),
            });
        }
    }
}

/// Dispatches on `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::WongZakai => run_wong_zakai(config),
        ExperimentKind::Stability => run_stability(config),
        ExperimentKind::SteadyCheck => run_steady_check(config),
        ExperimentKind::RemainderScan => run_remainder_scan(config),
        ExperimentKind::FlowConvergence => run_flow_convergence(config),
    }
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    config.validate()?;
    if config.experiment != kind {
        return Err(HarnessError::WrongExperiment {
            expected: kind.to_string(),
            found: config.experiment.to_string(),
        });
    }
    Ok(())
}

/// Canonical lift of the piecewise-linear interpolation of `reference`
/// through every `reference.num_steps() / steps`-th node.
pub fn piecewise_linear_lift(reference: &RoughPath, steps: usize) -> Result<RoughPath> {
    let total = reference.num_steps();
    if steps == 0 || !total.is_multiple_of(steps) {
        return Err(HarnessError::MeshesNotNested(vec![steps, total]));
    }
    let coarse = reference.path().subsample(total / steps)?;
    Ok(RoughPath::lift_piecewise_linear(&coarse)?.with_p(reference.p())?)
}

/// Geometric lift of `Z_t + eps (t - t_0) (1, ..., 1)`, exact on each step
/// of the grid.
pub fn drifted_path(path: &RoughPath, eps: f64) -> Result<RoughPath> {
    let m = path.dim();
    let times = path.times().to_vec();
    let t0 = times[0];
    let mut values = Vec::with_capacity(path.len() * m);
    for (k, t) in times.iter().enumerate() {
        values.extend(path.value(k).iter().map(|v| v + eps * (t - t0)));
    }
    let mut steps = Vec::with_capacity(path.num_steps() * m * m);
    for k in 0..path.num_steps() {
        let d = eps * (times[k + 1] - times[k]);
        let dz = path.step_increment(k);
        let zz = path.step_second_level(k);
        for i in 0..m {
            for j in 0..m {
                steps.push(zz[i * m + j] + 0.5 * d * (dz[i] + dz[j]) + 0.5 * d * d);
            }
        }
    }
    Ok(RoughPath::from_parts(times, m, values, steps, path.p())?)
}

/// Least-squares slope of `ln y` against `ln x` over positive entries.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Outcome of checking that a column decreases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub inversions: usize,
    /// Largest increase divided by its noise floor.
    pub worst_rise: f64,
    pub passed: bool,
}

/// A column passes when it has at most `allowed` increases, each no larger
/// than `sigmas` combined standard errors of the two entries.
pub fn decreasing_within_noise(
    values: &[f64],
    errors: &[f64],
    allowed: usize,
    sigmas: f64,
) -> MonotoneCheck {
    let mut inversions = 0;
    let mut worst_rise: f64 = 0.0;
    let mut within = true;
    for i in 1..values.len() {
        let rise = values[i] - values[i - 1];
        if rise > 0.0 {
            inversions += 1;
            let floor = sigmas * errors[i].hypot(errors[i - 1]);
            let r = if floor > 0.0 {
                rise / floor
            } else {
                f64::INFINITY
            };
            worst_rise = worst_rise.max(r);
            within &= rise <= floor;
        }
    }
    MonotoneCheck {
        inversions,
        worst_rise,
        passed: inversions <= allowed && within,
    }
}

pub fn fmt_column(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[1.0], &[1.0]), None);
    }

    #[test]
    fn monotone_with_noise_floor() {
        let ok = decreasing_within_noise(&[4.0, 3.0, 3.1, 2.0], &[0.1; 4], 1, 2.0);
        assert!(ok.passed && ok.inversions == 1);
        let big = decreasing_within_noise(&[4.0, 3.0, 3.5, 2.0], &[0.1; 4], 1, 2.0);
        assert!(!big.passed);
        let two = decreasing_within_noise(&[4.0, 4.1, 3.0, 3.1], &[0.1; 4], 1, 2.0);
        assert!(!two.passed);
        assert!(decreasing_within_noise(&[3.0, 2.0, 1.0], &[0.0; 3], 0, 2.0).passed);
    }

    #[test]
    fn drifted_path_keeps_chen_and_geometry() {
        let base = roughflow::fbm::fbm_rough_path(0.4, 32, 4, 1.0, 2, 3).unwrap();
        let z = drifted_path(&base, 0.1).unwrap();
        let inc = z.increment(0, 32);
        let want = base.increment(0, 32);
        assert!((inc[0] - want[0] - 0.1).abs() < 1e-12 && (inc[1] - want[1] - 0.1).abs() < 1e-12);
        assert!(z.chen_defect_relative(3, 17, 29).unwrap() < 1e-12);
        assert!(z.geometric_defect(5, 30) < 1e-12);
        assert!(
            drifted_path(&base, 0.0)
                .unwrap()
                .distance_control(&base)
                .unwrap()
                < 1e-24
        );
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, e) = mean_and_error(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((e - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
