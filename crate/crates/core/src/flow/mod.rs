//! Flow RDEs on the torus,
//!
//! ```text
//! φ_t(x) = x + ∫ u(r, φ_r(x)) dr + ε ∫ σ_j(φ_r(x)) dZ^j_r,
//! ```
//!
//! discretized by the one-step Davie scheme
//! `x ← x + u(s,x)(t-s) + ε σ_j(x) Z^j_{s,t} + ((σ_i·∇)σ_j)(x) 𝕫^{i,j}_{s,t}`.

mod euclidean;
mod nonlocal;
mod velocity;

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::driver::DriverPair;
use crate::error::{Error, Result};
use crate::rough_path::RoughPath;
use crate::torus::{
    self, lattice_points, torus_distance, upsample, wrap, Interpolation, VorticityGrid,
};
use crate::variation::{self, Control, ControlKind, Localization};

pub use euclidean::{solve_euclidean, LinearFields, VectorFields};
pub use nonlocal::{
    solve_nonlocal_flow, solve_nonlocal_observed, solve_nonlocal_particles, LagrangianSetup,
    NonlocalTrajectory,
};
pub use velocity::{
    log_lipschitz_constant, AnalyticVelocity, ConstantVelocity, GridVelocity, ReversedVelocity,
    VelocityField, ZeroVelocity,
};

/// Whether a particle ensemble was produced by a forward or backward solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Particle positions with their initial labels and carried weights.
/// Positions are kept in `[0, 2π)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleFlow {
    labels: Vec<[f64; 2]>,
    positions: Vec<[f64; 2]>,
    weights: Vec<f64>,
    direction: Direction,
}

impl ParticleFlow {
    pub fn new(labels: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels and {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Empty);
        }
        if labels
            .iter()
            .flatten()
            .chain(&weights)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { what: "particles" });
        }
        let labels: Vec<[f64; 2]> = labels.iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect();
        Ok(Self {
            positions: labels.clone(),
            labels,
            weights,
            direction: Direction::Forward,
        })
    }

    /// `m × m` lattice on the grid nodes `(2πi/m, 2πj/m)` with unit weights.
    pub fn lattice(m: usize) -> Result<Self> {
        Self::new(lattice_points(m), vec![1.0; m * m])
    }

    /// Lattice particles carrying `f(label)`.
    pub fn lattice_with(m: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let labels = lattice_points(m);
        let weights = labels.iter().map(|p| f(p[0], p[1])).collect();
        Self::new(labels, weights)
    }

    /// Lattice particles carrying the trigonometric interpolant of `w0`.
    pub fn lattice_from_grid(m: usize, w0: &VorticityGrid) -> Result<Self> {
        let n = w0.resolution();
        let weights = if m >= n && m.is_power_of_two() {
            upsample(w0, m)?.into_values()
        } else {
            torus::interpolate(n, w0.values(), &lattice_points(m), Interpolation::Spectral)?
        };
        Self::new(lattice_points(m), weights)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[[f64; 2]] {
        &self.labels
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn with_positions(&self, positions: Vec<[f64; 2]>, direction: Direction) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::DimensionMismatch("position count changed".into()));
        }
        Ok(Self {
            labels: self.labels.clone(),
            positions: positions.iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect(),
            weights: self.weights.clone(),
            direction,
        })
    }

    /// Particles restarted at the current positions (labels become positions).
    pub fn relabeled(&self) -> Self {
        Self {
            labels: self.positions.clone(),
            positions: self.positions.clone(),
            weights: self.weights.clone(),
            direction: self.direction,
        }
    }

    /// Cloud-in-cell deposition of the carried weights.
    pub fn deposit(&self, n: usize) -> Result<VorticityGrid> {
        torus::deposit(&self.positions, &self.weights, n)
    }

    /// Deposited weights divided by the deposited particle density, which
    /// removes the leading error from locally uneven particle spacing.
    /// Unlike [`ParticleFlow::deposit`] the mean is not conserved exactly.
    pub fn deposit_normalized(&self, n: usize) -> Result<VorticityGrid> {
        let w = self.deposit(n)?;
        let rho = torus::deposit(&self.positions, &vec![1.0; self.len()], n)?;
        let values = w
            .values()
            .iter()
            .zip(rho.values())
            .map(|(a, r)| if *r > 0.0 { a / r } else { 0.0 })
            .collect();
        VorticityGrid::new(n, values)
    }

    /// `max_i d(φ(x_i), ψ(x_i))` in the geodesic torus distance.
    pub fn sup_distance(&self, other: &ParticleFlow) -> Result<f64> {
        sup_distance(&self.positions, &other.positions)
    }
}

pub fn sup_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} and {} particles",
            a.len(),
            b.len()
        )));
    }
    Ok(a.par_iter()
        .zip(b)
        .map(|(p, q)| torus_distance(*p, *q))
        .reduce(|| 0.0, f64::max))
}

/// Per-step admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGuard {
    /// Reject steps with `Σ_j ‖σ_j‖_∞ |Z^j_{s,t}| > π`.
    pub aliasing: bool,
    /// Reject steps with `‖σ‖_{C²}^{q/2} ω_Z(s,t)^{1/2} >= 1/2`; off by default.
    pub absorption: bool,
}

impl Default for StepGuard {
    fn default() -> Self {
        Self {
            aliasing: true,
            absorption: false,
        }
    }
}

impl StepGuard {
    /// Both checks enabled.
    pub fn strict() -> Self {
        Self {
            aliasing: true,
            absorption: true,
        }
    }
}

/// Exponent `q ∈ (p, 3)` used for flow variation reports.
pub fn report_exponent(p: f64) -> f64 {
    0.5 * (p + 3.0)
}

/// Number of particles tracked at every step for the variation report.
const PROBES: usize = 64;
/// Nodes of the time grid used for the variation report.
const REPORT_NODES: usize = 257;
const DEFAULT_SNAPSHOTS: usize = 64;

/// Drift, driver, initial particles and the solver grid.
#[derive(Clone)]
pub struct FlowProblem {
    drift: Arc<dyn VelocityField>,
    driver: DriverPair,
    initial: ParticleFlow,
    refine: usize,
    step_path: RoughPath,
    guard: StepGuard,
    snapshots: usize,
}

impl std::fmt::Debug for FlowProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowProblem")
            .field("particles", &self.initial.len())
            .field("refine", &self.refine)
            .field("steps", &self.step_path.num_steps())
            .field("guard", &self.guard)
            .finish()
    }
}

impl FlowProblem {
    pub fn new(drift: Arc<dyn VelocityField>, driver: DriverPair, initial: ParticleFlow) -> Self {
        let step_path = driver.rough_path().clone();
        Self {
            drift,
            driver,
            initial,
            refine: 1,
            step_path,
            guard: StepGuard::default(),
            snapshots: DEFAULT_SNAPSHOTS,
        }
    }

    /// Solver steps per rough-path step.
    pub fn with_refine(mut self, refine: usize) -> Result<Self> {
        self.step_path = self.driver.rough_path().refine(refine)?;
        self.refine = refine;
        Ok(self)
    }

    pub fn with_guard(mut self, guard: StepGuard) -> Self {
        self.guard = guard;
        self
    }

    /// Maximum number of stored snapshots after the initial one.
    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots.max(1);
        self
    }

    pub fn with_initial(mut self, initial: ParticleFlow) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_drift(mut self, drift: Arc<dyn VelocityField>) -> Self {
        self.drift = drift;
        self
    }

    pub fn driver(&self) -> &DriverPair {
        &self.driver
    }

    pub fn drift(&self) -> &Arc<dyn VelocityField> {
        &self.drift
    }

    pub fn initial(&self) -> &ParticleFlow {
        &self.initial
    }

    pub fn step_path(&self) -> &RoughPath {
        &self.step_path
    }

    pub fn guard(&self) -> StepGuard {
        self.guard
    }

    pub fn snapshot_limit(&self) -> usize {
        self.snapshots
    }

    pub fn refine(&self) -> usize {
        self.refine
    }

    pub fn num_steps(&self) -> usize {
        self.step_path.num_steps()
    }
}

/// Checks the step guards for step `k` of `path`.
pub(crate) fn check_step(
    driver: &DriverPair,
    path: &RoughPath,
    k: usize,
    guard: StepGuard,
) -> Result<()> {
    if guard.aliasing {
        let z = path.step_increment(k);
        let reach: f64 = driver
            .sigma()
            .iter()
            .zip(&z)
            .map(|(s, zj)| s.sup_norm() * zj.abs())
            .sum();
        if reach > PI {
            return Err(Error::StepTooLarge {
                step: k,
                reason: format!("noise displacement {reach:.3} exceeds half the domain"),
            });
        }
    }
    if guard.absorption {
        let q = report_exponent(path.p());
        let c2 = driver.c2_norm();
        let v = c2.powf(q / 2.0) * path.step_control(k).sqrt();
        if c2 > 0.0 && v >= 0.5 {
            return Err(Error::StepTooLarge {
                step: k,
                reason: format!("|sigma|_C2^(q/2) omega_Z^(1/2) = {v:.3} >= 1/2"),
            });
        }
    }
    Ok(())
}

/// One Davie step for all particles, given the drift values at the left
/// endpoint. Positions are wrapped to the torus on return.
pub fn advance(
    positions: &[[f64; 2]],
    drift: &[[f64; 2]],
    dt: f64,
    z: &[f64],
    zz: &[f64],
    driver: &DriverPair,
) -> Vec<[f64; 2]> {
    positions
        .par_iter()
        .zip(drift)
        .map(|(x, u)| {
            let a = driver.first_order(*x, z);
            let b = driver.second_order(*x, zz);
            [
                wrap(x[0] + u[0] * dt + a[0] + b[0]),
                wrap(x[1] + u[1] * dt + a[1] + b[1]),
            ]
        })
        .collect()
}

/// Davie step `k` of the problem's step grid applied to `positions`.
pub fn davie_step(
    positions: &[[f64; 2]],
    k: usize,
    problem: &FlowProblem,
) -> Result<Vec<[f64; 2]>> {
    let path = &problem.step_path;
    if k >= path.num_steps() {
        return Err(Error::OffGrid {
            index: k + 1,
            len: path.len(),
        });
    }
    check_step(&problem.driver, path, k, problem.guard)?;
    let t = path.times()[k];
    let dt = path.times()[k + 1] - t;
    let drift = problem.drift.velocities(t, positions);
    Ok(advance(
        positions,
        &drift,
        dt,
        &path.step_increment(k),
        path.step_second_level(k),
        &problem.driver,
    ))
}

/// Measured regularity of a computed flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    /// `q = (p + 3) / 2`
    pub exponent: f64,
    /// `q`-variation (to the power `q`) of the tracked particles in sup norm.
    pub flow_variation: f64,
    /// Localized `q/2`-variation (to the power `q/2`) of the remainder
    /// `φ_{s,t} - ε σ(φ_s) Z_{s,t}`.
    pub remainder_variation: f64,
    /// Threshold `L` of the localization `ω̄ = ω_Z + |t-s|^p`.
    pub threshold: f64,
    pub report_nodes: usize,
    pub probes: usize,
}

/// Snapshots of a solve plus the variation report.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub step_indices: Vec<usize>,
    pub snapshots: Vec<ParticleFlow>,
    pub report: Option<FlowReport>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &ParticleFlow {
        self.snapshots
            .last()
            .expect("trajectory has the initial snapshot")
    }
}

fn snapshot_stride(steps: usize, limit: usize) -> usize {
    steps.div_ceil(limit.max(1)).max(1)
}

fn probe_indices(count: usize) -> Vec<usize> {
    if count <= PROBES {
        return (0..count).collect();
    }
    (0..PROBES).map(|k| k * count / PROBES).collect()
}

/// Generic stepping loop shared by local and nonlocal solves: `drift_at`
/// supplies velocities for the current positions at step `k`, and
/// `on_snapshot` is called for stored snapshots.
pub(crate) fn run_steps(
    driver: &DriverPair,
    path: &RoughPath,
    initial: &ParticleFlow,
    direction: Direction,
    guard: StepGuard,
    snapshots: usize,
    end: usize,
    mut drift_at: impl FnMut(usize, &[[f64; 2]]) -> Result<Vec<[f64; 2]>>,
    mut on_snapshot: impl FnMut(usize, &[[f64; 2]]) -> Result<()>,
) -> Result<FlowTrajectory> {
    let stride = snapshot_stride(end, snapshots);
    let probes = probe_indices(initial.len());
    let mut positions = initial.positions.clone();
    // unwrapped probe tracks: every step
    let mut tracks: Vec<Vec<[f64; 2]>> = vec![probes.iter().map(|&i| positions[i]).collect()];
    let mut times = vec![path.times()[0]];
    let mut steps = vec![0];
    let mut snaps = vec![initial.with_positions(positions.clone(), direction)?];
    on_snapshot(0, &positions)?;
    for k in 0..end {
        check_step(driver, path, k, guard)?;
        let t = path.times()[k];
        let dt = path.times()[k + 1] - t;
        let drift = drift_at(k, &positions)?;
        let next = advance(
            &positions,
            &drift,
            dt,
            &path.step_increment(k),
            path.step_second_level(k),
            driver,
        );
        if next.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "particle positions",
            });
        }
        let prev = tracks.last().unwrap();
        let track: Vec<[f64; 2]> = probes
            .iter()
            .zip(prev)
            .map(|(&i, old)| {
                let d1 = torus::wrap_signed(next[i][0] - old[0]);
                let d2 = torus::wrap_signed(next[i][1] - old[1]);
                [old[0] + d1, old[1] + d2]
            })
            .collect();
        tracks.push(track);
        positions = next;
        if (k + 1) % stride == 0 || k + 1 == end {
            times.push(path.times()[k + 1]);
            steps.push(k + 1);
            snaps.push(initial.with_positions(positions.clone(), direction)?);
            on_snapshot(k + 1, &positions)?;
        }
    }
    let report = flow_report(driver, path, end, &tracks)?;
    Ok(FlowTrajectory {
        times,
        step_indices: steps,
        snapshots: snaps,
        report,
    })
}

fn flow_report(
    driver: &DriverPair,
    path: &RoughPath,
    end: usize,
    tracks: &[Vec<[f64; 2]>],
) -> Result<Option<FlowReport>> {
    if end < 2 {
        return Ok(None);
    }
    let stride = end.div_ceil(REPORT_NODES - 1).max(1);
    let mut idx: Vec<usize> = (0..=end).step_by(stride).collect();
    if *idx.last().unwrap() != end {
        idx.push(end);
    }
    let rp = path.restrict(&idx)?;
    let n = idx.len();
    let p = rp.p();
    let q = report_exponent(p);
    let eps = driver.sign().value();
    let sup_inc = |s: usize, t: usize| -> f64 {
        let (a, b) = (&tracks[idx[s]], &tracks[idx[t]]);
        a.iter()
            .zip(b)
            .map(|(x, y)| (y[0] - x[0]).hypot(y[1] - x[1]))
            .fold(0.0, f64::max)
    };
    let remainder = |s: usize, t: usize| -> f64 {
        let z = rp.increment(s, t);
        let (a, b) = (&tracks[idx[s]], &tracks[idx[t]]);
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let mut r = [y[0] - x[0], y[1] - x[1]];
                for (sig, zj) in driver.sigma().iter().zip(&z) {
                    let v = sig.eval(*x);
                    r[0] -= eps * v[0] * zj;
                    r[1] -= eps * v[1] * zj;
                }
                r[0].hypot(r[1])
            })
            .fold(0.0, f64::max)
    };
    let flow_variation =
        variation::interval_variation(n, 0, n - 1, |s, t| sup_inc(s, t).powf(q), None)?.value;
    let wz = rp.variation_control().clone();
    let times = rp.times().to_vec();
    let t2 = times.clone();
    let base = Control::new(times, ControlKind::Sum, move |s, t| {
        if t <= s {
            0.0
        } else {
            wz.value(s, t) + (t2[t] - t2[s]).powf(p)
        }
    })
    .tabulate();
    let max_step = (0..n - 1).map(|k| base.value(k, k + 1)).fold(0.0, f64::max);
    let threshold = (2.0 * max_step)
        .max(base.total() / 8.0)
        .max(f64::MIN_POSITIVE);
    let loc = Localization::new(base, threshold)?;
    let remainder_variation = variation::localized_p_variation(n, remainder, q / 2.0, &loc)?.value;
    Ok(Some(FlowReport {
        exponent: q,
        flow_variation,
        remainder_variation,
        threshold,
        report_nodes: n,
        probes: tracks[0].len(),
    }))
}

fn solve_until(problem: &FlowProblem, end: usize, direction: Direction) -> Result<FlowTrajectory> {
    let path = &problem.step_path;
    let drift = &problem.drift;
    run_steps(
        &problem.driver,
        path,
        &problem.initial,
        direction,
        problem.guard,
        problem.snapshots,
        end,
        |k, pos| Ok(drift.velocities(path.times()[k], pos)),
        |_, _| Ok(()),
    )
}

/// Solves the flow over the whole step grid.
pub fn solve_flow(problem: &FlowProblem) -> Result<FlowTrajectory> {
    solve_until(problem, problem.num_steps(), Direction::Forward)
}

/// Inverse map `φ_t^{-1}` on the initial labels together with the measured
/// composition defect `max_i d(φ_t^{-1}(φ_t(x_i)), x_i)`.
#[derive(Debug, Clone)]
pub struct InverseFlow {
    pub time: f64,
    pub inverse: ParticleFlow,
    pub composition_defect: f64,
}

/// Computes `φ_t^{-1}` for `t` the step-grid node `pivot`, by solving the
/// flow of the reversed rough path and the reversed drift `-u(t - s, ·)`.
pub fn solve_inverse_flow(problem: &FlowProblem, pivot: usize) -> Result<InverseFlow> {
    let path = &problem.step_path;
    if pivot >= path.len() {
        return Err(Error::OffGrid {
            index: pivot,
            len: path.len(),
        });
    }
    if pivot == 0 {
        return Ok(InverseFlow {
            time: path.times()[0],
            inverse: problem
                .initial
                .with_positions(problem.initial.labels.clone(), Direction::Backward)?,
            composition_defect: 0.0,
        });
    }
    let t = path.times()[pivot];
    let forward = solve_until(problem, pivot, Direction::Forward)?;
    let reversed = path.reverse(pivot)?;
    let back_driver = problem.driver.with_rough_path(reversed.clone())?;
    let drift: Arc<dyn VelocityField> =
        Arc::new(ReversedVelocity::new(Arc::clone(&problem.drift), t));
    let run_back = |start: &ParticleFlow| -> Result<ParticleFlow> {
        let traj = run_steps(
            &back_driver,
            &reversed,
            start,
            Direction::Backward,
            problem.guard,
            1,
            pivot,
            |k, pos| Ok(drift.velocities(reversed.times()[k], pos)),
            |_, _| Ok(()),
        )?;
        Ok(traj.last().clone())
    };
    let inverse = run_back(&problem.initial)?;
    let endpoints = forward.last().relabeled();
    let composed = run_back(&endpoints)?;
    let composition_defect = sup_distance(composed.positions(), problem.initial.labels())?;
    Ok(InverseFlow {
        time: t,
        inverse,
        composition_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{SigmaField, Sign};
    use crate::fbm::fbm_rough_path;
    use crate::torus::wrap_signed;

    fn mode(a: f64, k: [i32; 2], phase: f64) -> SigmaField {
        SigmaField::Mode {
            amplitude: a,
            k,
            phase,
        }
    }

    #[test]
    fn constant_noise_translates_exactly() {
        let rp = fbm_rough_path(0.4, 128, 2, 1.0, 2, 3).unwrap();
        let c = [[0.3, -0.2], [0.1, 0.5]];
        let sigma = vec![
            SigmaField::Constant { c: c[0] },
            SigmaField::Constant { c: c[1] },
        ];
        let driver = DriverPair::new(sigma, rp.clone(), Sign::Minus).unwrap();
        let problem = FlowProblem::new(
            Arc::new(ZeroVelocity),
            driver,
            ParticleFlow::lattice(8).unwrap(),
        );
        let traj = solve_flow(&problem).unwrap();
        let z = rp.increment(0, rp.len() - 1);
        for (x, y) in traj.last().labels().iter().zip(traj.last().positions()) {
            for l in 0..2 {
                let expect = x[l] - c[0][l] * z[0] - c[1][l] * z[1];
                assert!(wrap_signed(y[l] - expect).abs() < 1e-12);
            }
        }
        let report = traj.report.unwrap();
        assert!(
            report.remainder_variation < 1e-12,
            "{}",
            report.remainder_variation
        );
    }

    #[test]
    fn sign_flip_matches_negated_driver() {
        let rp = fbm_rough_path(0.45, 256, 2, 1.0, 2, 11).unwrap();
        let sigma = vec![mode(0.2, [1, 0], 0.2), mode(0.1, [0, 2], -0.4)];
        let drift: Arc<dyn VelocityField> =
            Arc::new(AnalyticVelocity::new(0.5, |_, x| [0.5 * x[1].sin(), 0.0]));
        let minus = DriverPair::new(sigma.clone(), rp.clone(), Sign::Minus).unwrap();
        let plus = DriverPair::new(sigma, rp.negate(), Sign::Plus).unwrap();
        let init = ParticleFlow::lattice(6).unwrap();
        let a = solve_flow(&FlowProblem::new(drift.clone(), minus, init.clone())).unwrap();
        let b = solve_flow(&FlowProblem::new(drift, plus, init)).unwrap();
        assert!(a.last().sup_distance(b.last()).unwrap() < 1e-13);
    }

    #[test]
    fn inverse_flow_composes_to_identity() {
        let rp = fbm_rough_path(0.45, 256, 2, 1.0, 1, 5).unwrap();
        let drift: Arc<dyn VelocityField> = Arc::new(AnalyticVelocity::new(0.4, |_, x| {
            [0.4 * x[1].sin(), 0.3 * x[0].cos()]
        }));
        let driver = DriverPair::new(vec![mode(0.3, [1, 1], 0.0)], rp, Sign::Plus).unwrap();
        let problem = FlowProblem::new(drift, driver, ParticleFlow::lattice(8).unwrap());
        let inv = solve_inverse_flow(&problem, 256).unwrap();
        assert!(inv.composition_defect < 2e-2, "{}", inv.composition_defect);
        let id = solve_inverse_flow(&problem, 0).unwrap();
        assert_eq!(id.composition_defect, 0.0);
    }

    #[test]
    fn guards_reject_large_steps() {
        let rp = fbm_rough_path(0.45, 8, 2, 1.0, 1, 2).unwrap();
        let driver = DriverPair::new(vec![mode(8.0, [3, 0], 0.0)], rp.clone(), Sign::Plus).unwrap();
        let problem = FlowProblem::new(
            Arc::new(ZeroVelocity),
            driver,
            ParticleFlow::lattice(4).unwrap(),
        );
        assert!(matches!(
            solve_flow(&problem),
            Err(Error::StepTooLarge { .. })
        ));
        let moderate = DriverPair::new(vec![mode(0.5, [2, 0], 0.0)], rp, Sign::Plus).unwrap();
        let problem2 = FlowProblem::new(
            Arc::new(ZeroVelocity),
            moderate,
            ParticleFlow::lattice(4).unwrap(),
        );
        assert!(solve_flow(&problem2).is_ok());
        assert!(matches!(
            solve_flow(&problem2.with_guard(StepGuard::strict())),
            Err(Error::StepTooLarge { .. })
        ));
        let off = problem.with_guard(StepGuard {
            aliasing: false,
            absorption: false,
        });
        assert!(solve_flow(&off).is_ok());
    }

    #[test]
    fn scalar_linear_equation_matches_exponential() {
        let rp = fbm_rough_path(0.5, 4096, 1, 1.0, 1, 9).unwrap();
        let fields = LinearFields::new(1, vec![vec![1.0]]).unwrap();
        let ys = solve_euclidean(&fields, &[1.0], &rp).unwrap();
        let exact = rp.increment(0, rp.len() - 1)[0].exp();
        let got = ys.last().unwrap()[0];
        assert!(((got - exact) / exact).abs() < 1e-2);
    }

    #[test]
    fn nonlocal_shear_is_translated_by_constant_noise() {
        let rp = fbm_rough_path(0.45, 32, 2, 0.5, 1, 4).unwrap();
        let c = [0.7, 0.2];
        let driver =
            DriverPair::new(vec![SigmaField::Constant { c }], rp.clone(), Sign::Minus).unwrap();
        let w0 = VorticityGrid::from_fn(32, |x1, _| x1.cos()).unwrap();
        let setup = LagrangianSetup::new(32, 64).with_snapshots(4);
        let out = solve_nonlocal_flow(&w0, &driver, &setup).unwrap();
        let z = rp.increment(0, rp.len() - 1)[0];
        let exact = VorticityGrid::from_fn(32, |x1, _| (x1 + c[0] * z).cos()).unwrap();
        let err = out.vorticity.last().unwrap().l1_distance(&exact).unwrap();
        assert!(err < 2e-2, "{err}");
        assert_eq!(out.vorticity.len(), out.flow.snapshots.len());
    }
}
