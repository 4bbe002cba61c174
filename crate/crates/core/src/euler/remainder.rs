use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pairing::{NodePairing, PairingSeries, TestFamily};
use super::EulerTrajectory;
use crate::error::{Error, Result};
use crate::flow::ParticleFlow;
use crate::rough_path::RoughPath;
use crate::torus::VorticityGrid;
use crate::variation::{self, Control, ControlKind, Localization};

/// Tuning of [`weak_remainder`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderOptions {
    /// Localization threshold `L`; by default
    /// `max(2 max_k ω̄(t_k, t_{k+1}), ω̄(0,T) / 8)`.
    pub threshold: Option<f64>,
    /// Largest accepted gap between the drift integral on the solver grid
    /// and on every other solver node.
    pub quadrature_tolerance: f64,
    /// Scaling windows use at least this many disjoint windows per size.
    pub min_windows: usize,
    pub seed: u64,
}

impl Default for RemainderOptions {
    fn default() -> Self {
        Self {
            threshold: None,
            quadrature_tolerance: 1e-3,
            min_windows: 8,
            seed: 0,
        }
    }
}

/// Weak-form remainder
/// `w♮_{s,t}(ψ) = w_{s,t}(ψ) - μ_{s,t}(ψ) - w_s((A^{1,*}_{s,t} + A^{2,*}_{s,t})ψ)`
/// on the driver grid, with `A^{1,*}ψ = -σ_j·∇ψ Z^j` and
/// `A^{2,*}ψ = (σ_i·∇)(σ_j·∇)ψ 𝕫^{i,j}`.
#[derive(Debug, Clone)]
pub struct WeakRemainder {
    pub family: TestFamily,
    pub times: Vec<f64>,
    /// `μ_{t_k,t_{k+1}}(ψ)` for consecutive nodes.
    pub mu: Vec<Vec<f64>>,
    /// `w_{t_k}((A^{1,*} + A^{2,*})ψ)` for consecutive nodes.
    pub driver_terms: Vec<Vec<f64>>,
    /// `w♮_{t_k,t_{k+1}}(ψ)` for consecutive nodes.
    pub remainder: Vec<Vec<f64>>,
    /// `sup_ψ |w♮_{s,t}(ψ)| / ‖ψ‖_{W^{3,∞}}` for all pairs, row-major.
    pub norms: Vec<f64>,
    pub p: f64,
    /// Localized `p/3`-variation (to the power `p/3`) over `[0,T]`.
    pub variation: f64,
    pub threshold: f64,
    /// Largest `|δw♮_{s,r,t} - w_{s,r}(A^{2,*}_{r,t}ψ) - w^†_{s,r}(A^{1,*}_{r,t}ψ)|`
    /// over sampled triples.
    pub additivity_defect: f64,
    pub quadrature_gap: f64,
    /// `(log mean ω_A, log mean |w♮|)` over disjoint windows of each dyadic
    /// size, with `ω_A` of a window evaluated on the driver coarsened to
    /// that size.
    pub scaling: Vec<(f64, f64)>,
    /// Least-squares slope of `scaling`; near `3/p` when the driver term of
    /// the a priori bound is sharp.
    pub slope: Option<f64>,
    /// Slope against the whole right side
    /// `‖w‖^{p/3} ω_A + ‖w‖^{2p/3} |t-s|^{p/3} (ω_A^{1/3} + ω_A^{2/3})`.
    pub slope_full: Option<f64>,
    /// Slope against `ω_A` tabulated on the full driver grid.
    pub slope_fine: Option<f64>,
}

impl WeakRemainder {
    pub fn norm(&self, s: usize, t: usize) -> f64 {
        self.norms[s * self.times.len() + t]
    }
}

/// `ω_A = (Σ_j ‖σ_j‖_{C³})^p ω_Z`.
fn driver_control(rp: &RoughPath, c3: f64) -> Control {
    rp.variation_control().scaled(c3.powf(rp.p()))
}

/// `ω̄ = ω_A + |t-s|^p` with the default or given threshold.
fn localization(rp: &RoughPath, omega_a: &Control, threshold: Option<f64>) -> Result<Localization> {
    let p = rp.p();
    let times = rp.times().to_vec();
    let a = omega_a.clone();
    let t2 = times.clone();
    let base = Control::new(times, ControlKind::Sum, move |s, t| {
        if t <= s {
            0.0
        } else {
            a.value(s, t) + (t2[t] - t2[s]).powf(p)
        }
    })
    .tabulate();
    let n = base.len();
    let max_step = (0..n - 1).map(|k| base.value(k, k + 1)).fold(0.0, f64::max);
    let l = threshold.unwrap_or_else(|| (2.0 * max_step).max(base.total() / 8.0));
    Localization::new(base, l.max(f64::MIN_POSITIVE))
}

struct Terms<'a> {
    series: &'a PairingSeries,
    rp: &'a RoughPath,
    rows: Vec<Vec<Vec<f64>>>,
}

impl Terms<'_> {
    fn node(&self, k: usize) -> &NodePairing {
        &self.series.nodes[k]
    }

    /// `w_s((A^{1,*}_{s,t} + A^{2,*}_{s,t})ψ)`
    fn driver_term(&self, s: usize, t: usize) -> Vec<f64> {
        let f = self.series.family.len();
        let m = self.series.noise_dim;
        let z = self.rp.increment(s, t);
        let zz = &self.rows[s][t - s];
        let node = self.node(s);
        (0..f)
            .map(|a| {
                let mut v = 0.0;
                for j in 0..m {
                    v -= z[j] * node.first[j * f + a];
                }
                for ij in 0..m * m {
                    v += zz[ij] * node.second[ij * f + a];
                }
                v
            })
            .collect()
    }

    fn mu(&self, s: usize, t: usize) -> Vec<f64> {
        let d = &self.series.drift_integral;
        d[t].iter().zip(&d[s]).map(|(b, a)| b - a).collect()
    }

    fn remainder(&self, s: usize, t: usize) -> Vec<f64> {
        let (ws, wt) = (&self.node(s).value, &self.node(t).value);
        let mu = self.mu(s, t);
        let dr = self.driver_term(s, t);
        (0..ws.len())
            .map(|a| wt[a] - ws[a] - mu[a] - dr[a])
            .collect()
    }

    /// `w_{s,r}(A^{2,*}_{r,t}ψ) + w^†_{s,r}(A^{1,*}_{r,t}ψ)`
    fn chen_side(&self, s: usize, r: usize, t: usize) -> Vec<f64> {
        let f = self.series.family.len();
        let m = self.series.noise_dim;
        let zrt = self.rp.increment(r, t);
        let zsr = self.rp.increment(s, r);
        let zz = &self.rows[r][t - r];
        let (ns, nr) = (self.node(s), self.node(r));
        (0..f)
            .map(|a| {
                let mut v = 0.0;
                for ij in 0..m * m {
                    v += zz[ij] * (nr.second[ij * f + a] - ns.second[ij * f + a]);
                }
                for j in 0..m {
                    let mut inner = nr.first[j * f + a] - ns.first[j * f + a];
                    for i in 0..m {
                        inner += zsr[i] * ns.second[(i * m + j) * f + a];
                    }
                    v -= zrt[j] * inner;
                }
                v
            })
            .collect()
    }
}

fn weighted_sup(family: &TestFamily, v: &[f64], order: u32) -> f64 {
    v.iter()
        .enumerate()
        .map(|(a, x)| x.abs() / family.weight(a, order))
        .fold(0.0, f64::max)
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn window_sizes(steps: usize, min_windows: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut w = 1;
    while w * min_windows.max(1) <= steps {
        out.push(w);
        w *= 2;
    }
    out
}

fn series_of(traj: &EulerTrajectory) -> Result<&PairingSeries> {
    let series = traj.pairings.as_ref().ok_or_else(|| {
        Error::InvalidParameter("run did not record test-function pairings".into())
    })?;
    if series.nodes.len() != traj.driver.rough_path().len() {
        return Err(Error::GridMismatch(format!(
            "{} pairing nodes for a {}-node driver",
            series.nodes.len(),
            traj.driver.rough_path().len()
        )));
    }
    Ok(series)
}

/// Computes the weak remainder of a run recorded with a test family, its
/// localized `p/3`-variation and its scaling against the a priori bound.
pub fn weak_remainder(traj: &EulerTrajectory, opts: &RemainderOptions) -> Result<WeakRemainder> {
    let series = series_of(traj)?;
    let gap = series.richardson_gap;
    if gap > opts.quadrature_tolerance {
        return Err(Error::QuadratureUnderResolved {
            gap,
            threshold: opts.quadrature_tolerance,
        });
    }
    let rp = traj.driver.rough_path();
    let n = rp.len();
    let p = rp.p();
    let family = &series.family;
    let rows: Vec<Vec<Vec<f64>>> = (0..n).map(|s| rp.second_level_row(s)).collect();
    let terms = Terms { series, rp, rows };
    let mut norms = vec![0.0; n * n];
    for s in 0..n {
        for t in s + 1..n {
            norms[s * n + t] = weighted_sup(family, &terms.remainder(s, t), 3);
        }
    }
    let omega_a = driver_control(rp, traj.driver.c3_norm());
    let loc = localization(rp, &omega_a, opts.threshold)?;
    let variation =
        variation::localized_p_variation(n, |s, t| norms[s * n + t], p / 3.0, &loc)?.value;

    let wmax = traj.particle_sup();
    let c3p = traj.driver.c3_norm().powf(p);
    // ω_A of a window seen as one step of the driver coarsened to its size
    let window_control = |s: usize, t: usize| {
        let z = crate::rough_path::norm(&rp.increment(s, t));
        let zz = crate::rough_path::norm(&terms.rows[s][t - s]);
        c3p * (z.powf(p) + zz.powf(p / 2.0))
    };
    let rhs = |a: f64, s: usize, t: usize| {
        let dt = rp.times()[t] - rp.times()[s];
        wmax.powf(p / 3.0) * a
            + wmax.powf(2.0 * p / 3.0) * dt.powf(p / 3.0) * (a.cbrt() + a.cbrt().powi(2))
    };
    let mut scaling = Vec::new();
    let mut scaling_full = Vec::new();
    let mut scaling_fine = Vec::new();
    for w in window_sizes(n - 1, opts.min_windows) {
        let starts: Vec<usize> = (0..n - w).step_by(w).collect();
        let mean = |f: &dyn Fn(usize) -> f64| {
            starts.iter().map(|&s| f(s)).sum::<f64>() / starts.len() as f64
        };
        let v = mean(&|s| norms[s * n + s + w]);
        if v <= 0.0 {
            continue;
        }
        let points = [
            (&mut scaling, mean(&|s| window_control(s, s + w))),
            (
                &mut scaling_full,
                mean(&|s| rhs(window_control(s, s + w), s, s + w)),
            ),
            (&mut scaling_fine, mean(&|s| omega_a.value(s, s + w))),
        ];
        for (out, x) in points {
            if x > 0.0 {
                out.push((x.ln(), v.ln()));
            }
        }
    }
    let slope_full = least_squares_slope(&scaling_full);
    let slope_fine = least_squares_slope(&scaling_fine);
    let slope = least_squares_slope(&scaling);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut additivity_defect = 0.0f64;
    if n >= 3 {
        for _ in 0..2000 {
            let mut idx = [
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
            ];
            idx.sort_unstable();
            let [s, r, t] = idx;
            if s == r || r == t {
                continue;
            }
            let (a, b, c) = (
                terms.remainder(s, t),
                terms.remainder(s, r),
                terms.remainder(r, t),
            );
            let rhs = terms.chen_side(s, r, t);
            for f in 0..a.len() {
                additivity_defect = additivity_defect.max((a[f] - b[f] - c[f] - rhs[f]).abs());
            }
        }
    }

    let consecutive =
        |g: &dyn Fn(usize, usize) -> Vec<f64>| (0..n - 1).map(|k| g(k, k + 1)).collect::<Vec<_>>();
    Ok(WeakRemainder {
        family: family.clone(),
        times: rp.times().to_vec(),
        mu: consecutive(&|s, t| terms.mu(s, t)),
        driver_terms: consecutive(&|s, t| terms.driver_term(s, t)),
        remainder: consecutive(&|s, t| terms.remainder(s, t)),
        norms,
        p,
        variation,
        threshold: loc.threshold(),
        additivity_defect,
        quadrature_gap: gap,
        scaling,
        slope,
        slope_full,
        slope_fine,
    })
}

/// Measured `W^{-1,1}` control of the solution against
/// `(1 + ‖w‖_∞)^{2p} (|t-s|^p + ω_A + ω_♮)` on dyadic windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionVariation {
    /// Localized `p`-variation (to the power `p`) of `t ↦ w_t` in the
    /// negative-norm proxy, over `[0,T]`.
    pub total: f64,
    /// `max ω_w(s,t) / rhs(s,t)` over the windows.
    pub constant: f64,
    /// `(s, t, ω_w(s,t), rhs(s,t))`
    pub windows: Vec<(usize, usize, f64, f64)>,
}

const MAX_WINDOWS_PER_SIZE: usize = 32;

pub fn solution_variation_diagnostic(
    traj: &EulerTrajectory,
    remainder: &WeakRemainder,
) -> Result<SolutionVariation> {
    let series = series_of(traj)?;
    let rp = traj.driver.rough_path();
    let n = rp.len();
    let p = rp.p();
    let family = &series.family;
    let mut incr = vec![0.0; n * n];
    for s in 0..n {
        for t in s + 1..n {
            let d: Vec<f64> = series.nodes[t]
                .value
                .iter()
                .zip(&series.nodes[s].value)
                .map(|(b, a)| b - a)
                .collect();
            incr[s * n + t] = weighted_sup(family, &d, 1);
        }
    }
    let omega_a = driver_control(rp, traj.driver.c3_norm());
    let loc = localization(rp, &omega_a, Some(remainder.threshold))?;
    let ok = |s: usize, t: usize| loc.admits(s, t);
    let total = variation::localized_p_variation(n, |s, t| incr[s * n + t], p, &loc)?.value;
    let wmax = traj.particle_sup();
    let mut windows = Vec::new();
    let mut constant = 0.0f64;
    for w in window_sizes(n - 1, 1) {
        let starts: Vec<usize> = (0..n - w).step_by(w).collect();
        let stride = starts.len().div_ceil(MAX_WINDOWS_PER_SIZE).max(1);
        for &s in starts.iter().step_by(stride) {
            let t = s + w;
            let Ok(ow) =
                variation::interval_variation(n, s, t, |a, b| incr[a * n + b].powf(p), Some(&ok))
            else {
                continue;
            };
            let Ok(on) = variation::interval_variation(
                n,
                s,
                t,
                |a, b| remainder.norm(a, b).powf(p / 3.0),
                Some(&ok),
            ) else {
                continue;
            };
            if !ow.value.is_finite() || !on.value.is_finite() {
                continue;
            }
            let dt = rp.times()[t] - rp.times()[s];
            let rhs = (1.0 + wmax).powf(2.0 * p) * (dt.powf(p) + omega_a.value(s, t) + on.value);
            if rhs > 0.0 {
                constant = constant.max(ow.value / rhs);
            }
            windows.push((s, t, ow.value, rhs));
        }
    }
    Ok(SolutionVariation {
        total,
        constant,
        windows,
    })
}

fn particle_pairing(family: &TestFamily, flow: &ParticleFlow) -> Vec<f64> {
    let inv = 1.0 / flow.len() as f64;
    (0..family.len())
        .map(|a| {
            flow.positions()
                .iter()
                .zip(flow.weights())
                .map(|(x, w)| w * family.eval(a, *x))
                .sum::<f64>()
                * inv
        })
        .collect()
}

fn grid_pairing(family: &TestFamily, w: &VorticityGrid) -> Vec<f64> {
    let n = w.resolution();
    let inv = 1.0 / (n * n) as f64;
    (0..family.len())
        .map(|a| {
            w.values()
                .iter()
                .enumerate()
                .map(|(k, v)| v * family.eval(a, w.node(k)))
                .sum::<f64>()
                * inv
        })
        .collect()
}

/// Negative-norm proxy `sup_ψ |(μ - ν)(ψ)| / ‖ψ‖_{W^{1,∞}}` between two
/// vorticity representations (particles or grids).
pub fn negative_norm_distance(
    family: &TestFamily,
    a: Representation<'_>,
    b: Representation<'_>,
) -> f64 {
    let pa = a.pairing(family);
    let pb = b.pairing(family);
    let d: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
    weighted_sup(family, &d, 1)
}

/// A vorticity field given by weighted particles or by grid samples.
#[derive(Debug, Clone, Copy)]
pub enum Representation<'a> {
    Particles(&'a ParticleFlow),
    Grid(&'a VorticityGrid),
}

impl Representation<'_> {
    fn pairing(&self, family: &TestFamily) -> Vec<f64> {
        match self {
            Representation::Particles(p) => particle_pairing(family, p),
            Representation::Grid(g) => grid_pairing(family, g),
        }
    }
}
