//! Controlled paths, the discrete sewing map and rough integration.
//!
//! A germ `h_{s,t}` is sewn by summing it over consecutive grid steps with
//! compensated (Kahan) summation in left-to-right order; the defect
//! `Λ_{s,t} = I(h)_{s,t} - h_{s,t}` is then measured against the control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rough_path::{norm, RoughPath};
use crate::variation::{self, Control, Localization};

/// Triples are checked exhaustively up to this many nodes, sampled beyond.
const EXHAUSTIVE_NODES: usize = 64;
const SAMPLED_TRIPLES: usize = 4096;
const SAMPLED_PAIRS: usize = 4096;
const COHERENCE_REL_TOL: f64 = 1e-12;
/// Nodes of the subgrid on which local error constants are measured.
const CONSTANT_GRID_NODES: usize = 33;

/// `V`-valued path `X` with Gubinelli derivative `X′ ∈ L(ℝ^M, V)`, both
/// sampled on the grid of a rough path. `X′` at node `k` is stored row-major
/// as a `V × M` matrix.
#[derive(Debug, Clone)]
pub struct ControlledPath {
    rough_path: RoughPath,
    dim: usize,
    values: Vec<f64>,
    derivative: Vec<f64>,
    localization: Localization,
}

impl ControlledPath {
    pub fn new(
        rough_path: RoughPath,
        dim: usize,
        values: Vec<f64>,
        derivative: Vec<f64>,
    ) -> Result<Self> {
        let n = rough_path.len();
        let m = rough_path.dim();
        if dim == 0 || values.len() != n * dim || derivative.len() != n * dim * m {
            return Err(Error::DimensionMismatch(format!(
                "controlled path needs {} values and {} derivative entries, got {} and {}",
                n * dim,
                n * dim * m,
                values.len(),
                derivative.len()
            )));
        }
        if values.iter().chain(&derivative).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "controlled path",
            });
        }
        let localization = Localization::unrestricted(rough_path.times().to_vec());
        Ok(Self {
            rough_path,
            dim,
            values,
            derivative,
            localization,
        })
    }

    /// Builds `(X, X′)` node by node from `f(k) -> (X_k, X′_k)`.
    pub fn from_fn(
        rough_path: RoughPath,
        dim: usize,
        f: impl Fn(usize) -> (Vec<f64>, Vec<f64>),
    ) -> Result<Self> {
        let mut values = Vec::new();
        let mut derivative = Vec::new();
        for k in 0..rough_path.len() {
            let (x, d) = f(k);
            values.extend(x);
            derivative.extend(d);
        }
        Self::new(rough_path, dim, values, derivative)
    }

    /// Constant path `X ≡ c`, `X′ = 0`.
    pub fn constant(rough_path: RoughPath, c: &[f64]) -> Result<Self> {
        let n = rough_path.len();
        let m = rough_path.dim();
        let values = c.iter().copied().cycle().take(n * c.len()).collect();
        Self::new(rough_path, c.len(), values, vec![0.0; n * c.len() * m])
    }

    pub fn with_localization(mut self, localization: Localization) -> Result<Self> {
        if localization.base().len() != self.rough_path.len() {
            return Err(Error::GridMismatch(
                "localization lives on another grid".into(),
            ));
        }
        self.localization = localization;
        Ok(self)
    }

    pub fn rough_path(&self) -> &RoughPath {
        &self.rough_path
    }

    pub fn localization(&self) -> &Localization {
        &self.localization
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rough_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn derivative(&self, k: usize) -> &[f64] {
        let w = self.dim * self.rough_path.dim();
        &self.derivative[k * w..(k + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `R^X_{s,t} = X_{s,t} - X′_s Z_{s,t}`.
    pub fn remainder(&self, s: usize, t: usize) -> Vec<f64> {
        let m = self.rough_path.dim();
        let (xs, xt) = (self.value(s), self.value(t));
        let d = self.derivative(s);
        let z = self.rough_path.increment(s, t);
        (0..self.dim)
            .map(|v| {
                let lin: f64 = (0..m).map(|j| d[v * m + j] * z[j]).sum();
                xt[v] - xs[v] - lin
            })
            .collect()
    }

    /// `sup_t |X_t|`.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| norm(self.value(k)))
            .fold(0.0, f64::max)
    }

    pub fn derivative_sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|k| norm(self.derivative(k)))
            .fold(0.0, f64::max)
    }

    /// Localized `p/2`-variation (to the power `p/2`) of the remainder.
    pub fn remainder_variation(&self) -> Result<f64> {
        let q = self.rough_path.p() / 2.0;
        Ok(variation::localized_p_variation(
            self.len(),
            |s, t| norm(&self.remainder(s, t)),
            q,
            &self.localization,
        )?
        .value)
    }

    /// Localized `p`-variation (to the power `p`) of the derivative.
    pub fn derivative_variation(&self) -> Result<f64> {
        let p = self.rough_path.p();
        Ok(variation::localized_p_variation(
            self.len(),
            |s, t| dist(self.derivative(s), self.derivative(t)),
            p,
            &self.localization,
        )?
        .value)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Output of [`sew`].
#[derive(Debug, Clone)]
pub struct Sewing {
    /// `I(h)_{t_k}`, `dim` entries per node, `I(h)_0 = 0`.
    pub path: Vec<f64>,
    pub dim: usize,
    /// `max |Λ_{s,t}|` over the examined localized pairs.
    pub max_defect: f64,
    /// `max |Λ_{s,t}| / ω(s,t)^{1/ζ}` over the examined localized pairs.
    pub constant: f64,
    /// `|I(h)_{0,T}|` on the grid minus the same sum on every other node.
    pub richardson_gap: f64,
}

impl Sewing {
    pub fn value(&self, k: usize) -> &[f64] {
        &self.path[k * self.dim..(k + 1) * self.dim]
    }
}

fn sample_triples(n: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    if n <= EXHAUSTIVE_NODES {
        for s in 0..n {
            for t in s..n {
                for u in s..=t {
                    out.push((s, u, t));
                }
            }
        }
        return out;
    }
    for s in 0..n - 2 {
        out.push((s, s + 1, s + 2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SAMPLED_TRIPLES {
        let mut v = [
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        ];
        v.sort_unstable();
        out.push((v[0], v[1], v[2]));
    }
    out
}

fn sample_pairs(n: usize, seed: u64) -> Vec<(usize, usize)> {
    if n <= 2 * EXHAUSTIVE_NODES {
        return (0..n)
            .flat_map(|s| (s + 1..n).map(move |t| (s, t)))
            .collect();
    }
    let mut out: Vec<(usize, usize)> = (0..n - 2).map(|s| (s, s + 2)).collect();
    out.push((0, n - 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SAMPLED_PAIRS {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

fn kahan_prefix(n: usize, dim: usize, step: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    let mut path = vec![0.0; n * dim];
    let mut sum = vec![0.0; dim];
    let mut comp = vec![0.0; dim];
    for k in 0..n - 1 {
        let h = step(k);
        for v in 0..dim {
            let y = h[v] - comp[v];
            let t = sum[v] + y;
            comp[v] = (t - sum[v]) - y;
            sum[v] = t;
        }
        path[(k + 1) * dim..(k + 2) * dim].copy_from_slice(&sum);
    }
    path
}

/// Sews a `dim`-valued germ on an `n`-node grid.
///
/// Requires `|δh_{s,u,t}| <= ω(s,t)^{1/ζ}` on localized triples (up to a
/// relative rounding tolerance); the check is exhaustive for small grids
/// and sampled otherwise. A failing triple rejects the germ.
pub fn sew(
    n: usize,
    dim: usize,
    germ: impl Fn(usize, usize) -> Vec<f64>,
    zeta: f64,
    omega: &Control,
    loc: &Localization,
) -> Result<Sewing> {
    if n < 2 {
        return Err(Error::TooFewNodes {
            required: 2,
            got: n,
        });
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::ExponentRange {
            p: zeta,
            range: "(0, 1)",
        });
    }
    if omega.len() != n || loc.base().len() != n {
        return Err(Error::GridMismatch("control and germ grids differ".into()));
    }
    let inv = 1.0 / zeta;
    for (s, u, t) in sample_triples(n, 0x5e_3d) {
        if !loc.admits(s, t) {
            continue;
        }
        let (hst, hsu, hut) = (germ(s, t), germ(s, u), germ(u, t));
        let d: Vec<f64> = (0..dim).map(|v| hst[v] - hsu[v] - hut[v]).collect();
        let defect = norm(&d);
        let scale = norm(&hst) + norm(&hsu) + norm(&hut);
        let bound = omega.value(s, t).powf(inv);
        if defect > bound + COHERENCE_REL_TOL * scale {
            return Err(Error::GermIncoherent {
                s,
                u,
                t,
                defect,
                bound,
            });
        }
    }
    let path = kahan_prefix(n, dim, |k| germ(k, k + 1));
    let mut max_defect: f64 = 0.0;
    let mut constant: f64 = 0.0;
    for (s, t) in sample_pairs(n, 0x5e_3e) {
        if !loc.admits(s, t) {
            continue;
        }
        let h = germ(s, t);
        let lam: Vec<f64> = (0..dim)
            .map(|v| path[t * dim + v] - path[s * dim + v] - h[v])
            .collect();
        let l = norm(&lam);
        max_defect = max_defect.max(l);
        let w = omega.value(s, t).powf(inv);
        if w > 0.0 {
            constant = constant.max(l / w);
        }
    }
    let richardson_gap = if n >= 3 {
        let coarse = kahan_prefix(n.div_ceil(2), dim, |k| {
            let s = 2 * k;
            germ(s, (s + 2).min(n - 1))
        });
        let fine = &path[(n - 1) * dim..];
        let c = &coarse[(n.div_ceil(2) - 1) * dim..];
        dist(fine, c)
    } else {
        0.0
    };
    Ok(Sewing {
        path,
        dim,
        max_defect,
        constant,
        richardson_gap,
    })
}

/// `∫ Y dZ` as a controlled path together with its measured local constant.
#[derive(Debug, Clone)]
pub struct RoughIntegral {
    pub integral: ControlledPath,
    /// Largest ratio of `|∫_s^t Y dZ - Y_s Z_{s,t} - Y′_s 𝕫_{s,t}|` to
    /// `ω_R^{2/p} ω_Z^{1/p} + ω_{Y′}^{1/p} ω_Z^{2/p}` on a subgrid.
    pub local_constant: f64,
    pub richardson_gap: f64,
}

/// Germ `Y_s Z_{s,t} + Y′_s 𝕫_{s,t}` for an integrand valued in
/// `L(ℝ^M, V)`, flattened as `V × M` with `Y′` as `(V·M) × M`.
fn integral_germ(y: &ControlledPath, s: usize, t: usize, out_dim: usize) -> Vec<f64> {
    let rp = &y.rough_path;
    let m = rp.dim();
    let z = rp.increment(s, t);
    let zz = rp.second_level(s, t);
    let ys = y.value(s);
    let yp = y.derivative(s);
    (0..out_dim)
        .map(|v| {
            let mut acc = 0.0;
            for j in 0..m {
                acc += ys[v * m + j] * z[j];
                for i in 0..m {
                    acc += yp[(v * m + j) * m + i] * zz[i * m + j];
                }
            }
            acc
        })
        .collect()
}

/// Rough integral of a controlled integrand against its own rough path.
pub fn rough_integral(y: &ControlledPath) -> Result<RoughIntegral> {
    let rp = &y.rough_path;
    let m = rp.dim();
    if !y.dim.is_multiple_of(m) {
        return Err(Error::DimensionMismatch(format!(
            "integrand of dimension {} is not valued in L(R^{m}, V)",
            y.dim
        )));
    }
    y.localization.check_feasible()?;
    let out_dim = y.dim / m;
    let n = rp.len();
    let path = kahan_prefix(n, out_dim, |k| integral_germ(y, k, k + 1, out_dim));
    let richardson_gap = if n >= 3 {
        let coarse = kahan_prefix(n.div_ceil(2), out_dim, |k| {
            integral_germ(y, 2 * k, (2 * k + 2).min(n - 1), out_dim)
        });
        dist(
            &path[(n - 1) * out_dim..],
            &coarse[(n.div_ceil(2) - 1) * out_dim..],
        )
    } else {
        0.0
    };
    let integral = ControlledPath::new(rp.clone(), out_dim, path, y.values.clone())?
        .with_localization(y.localization.clone())?;
    let local_constant = measure_local_constant(y, &integral, out_dim)?;
    Ok(RoughIntegral {
        integral,
        local_constant,
        richardson_gap,
    })
}

fn subgrid(n: usize) -> Vec<usize> {
    if n <= CONSTANT_GRID_NODES {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..CONSTANT_GRID_NODES)
        .map(|k| k * (n - 1) / (CONSTANT_GRID_NODES - 1))
        .collect();
    idx.dedup();
    idx
}

fn measure_local_constant(
    y: &ControlledPath,
    integral: &ControlledPath,
    out_dim: usize,
) -> Result<f64> {
    let rp = &y.rough_path;
    let n = rp.len();
    let p = rp.p();
    let omega_z = rp.variation_control();
    let ok = |s: usize, t: usize| y.localization.admits(s, t);
    let w_r = |i: usize, j: usize| norm(&y.remainder(i, j)).powf(p / 2.0);
    let w_d = |i: usize, j: usize| dist(y.derivative(i), y.derivative(j)).powf(p);
    let idx = subgrid(n);
    let mut worst: f64 = 0.0;
    for (a, &s) in idx.iter().enumerate() {
        let row_r = variation::variation_row(n, s, w_r, Some(&ok));
        let row_d = variation::variation_row(n, s, w_d, Some(&ok));
        for &t in &idx[a + 1..] {
            if !ok(s, t) {
                continue;
            }
            let germ = integral_germ(y, s, t, out_dim);
            let err: Vec<f64> = (0..out_dim)
                .map(|v| integral.value(t)[v] - integral.value(s)[v] - germ[v])
                .collect();
            let wz = omega_z.value(s, t);
            let rhs = row_r[t - s].max(0.0).powf(2.0 / p) * wz.powf(1.0 / p)
                + row_d[t - s].max(0.0).powf(1.0 / p) * wz.powf(2.0 / p);
            let e = norm(&err);
            if rhs > 0.0 {
                worst = worst.max(e / rhs);
            } else if e > 1e-12 {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(worst)
}

/// Terms of the stability estimate for the difference of two rough
/// integrals and the measured left-hand side.
#[derive(Debug, Clone)]
pub struct DifferenceBound {
    /// `‖∫X dZ¹ - ∫Y dZ²‖^p_{p-var}`
    pub measured: f64,
    /// Evaluated right-hand side (unit constant).
    pub bound: f64,
    pub terms: [f64; 8],
    /// `measured / bound` (zero when both vanish).
    pub ratio: f64,
    /// `ω_{Z¹-Z²}(0,T)`
    pub driver_distance: f64,
}

/// Evaluates the right-hand side of the stability inequality for
/// `∫X dZ¹ - ∫Y dZ²` and compares it with the measured p-variation.
pub fn integral_difference_bound(
    x: &ControlledPath,
    y: &ControlledPath,
) -> Result<DifferenceBound> {
    let (rp1, rp2) = (&x.rough_path, &y.rough_path);
    rp1.check_same_grid(rp2)?;
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch(
            "integrands of different dimensions".into(),
        ));
    }
    let n = rp1.len();
    let p = rp1.p().max(rp2.p());
    let ix = rough_integral(x)?;
    let iy = rough_integral(y)?;
    let out = ix.integral.dim;
    let diff: Vec<f64> = ix
        .integral
        .values
        .iter()
        .zip(&iy.integral.values)
        .map(|(a, b)| a - b)
        .collect();
    let measured = variation::p_variation(&diff, out, p)?.value;
    let sup = |f: &dyn Fn(usize) -> f64| (0..n).map(f).fold(0.0, f64::max);
    let x_minus_y = sup(&|k| dist(x.value(k), y.value(k)));
    let x_sup = x.sup_norm();
    let xp_sup = x.derivative_sup_norm();
    let dp_sup = sup(&|k| dist(x.derivative(k), y.derivative(k)));
    let w1 = rp1.variation_control().total();
    let w2 = rp2.variation_control().total();
    let w12 = rp1.distance_control(rp2)?;
    let loc = &x.localization;
    let ok = |s: usize, t: usize| loc.admits(s, t);
    let loc_var = |g: &dyn Fn(usize, usize) -> f64, q: f64| -> Result<f64> {
        Ok(variation::interval_variation(n, 0, n - 1, |s, t| g(s, t).powf(q), Some(&ok))?.value)
    };
    let r_diff = loc_var(
        &|s, t| dist(&x.remainder(s, t), &y.remainder(s, t)),
        p / 2.0,
    )?;
    let r_y = loc_var(&|s, t| norm(&y.remainder(s, t)), p / 2.0)?;
    let yp_var = loc_var(&|s, t| dist(y.derivative(s), y.derivative(t)), p)?;
    let dp_var = loc_var(
        &|s, t| {
            let a: Vec<f64> = x
                .derivative(t)
                .iter()
                .zip(y.derivative(t))
                .map(|(u, v)| u - v)
                .collect();
            let b: Vec<f64> = x
                .derivative(s)
                .iter()
                .zip(y.derivative(s))
                .map(|(u, v)| u - v)
                .collect();
            dist(&a, &b)
        },
        p,
    )?;
    let terms = [
        x_minus_y.powf(p) * w1,
        x_sup.powf(p) * w12,
        xp_sup.powf(p) * w12 * w12,
        dp_sup.powf(p) * w2 * w2,
        w1 * r_diff * r_diff,
        w12 * r_y * r_y,
        yp_var * w12 * w12,
        w2 * w2 * dp_var,
    ];
    let bound: f64 = terms.iter().sum();
    let ratio = if bound > 0.0 {
        measured / bound
    } else if measured > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(DifferenceBound {
        measured,
        bound,
        terms,
        ratio,
        driver_distance: w12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rough_path::SampledPath;

    fn smooth_rp(n: usize) -> RoughPath {
        let path = SampledPath::from_fn(n, 1.0, 1, |t| vec![(3.0 * t).sin() + t]).unwrap();
        RoughPath::lift_piecewise_linear(&path).unwrap()
    }

    #[test]
    fn additive_germ_has_no_defect() {
        let n = 20;
        let g: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).cos()).collect();
        let times: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let omega = Control::interval_power(times.clone(), 1.0, 1.0);
        let loc = Localization::unrestricted(times);
        let out = sew(n, 1, |s, t| vec![g[t] - g[s]], 0.5, &omega, &loc).unwrap();
        for k in 0..n {
            assert!((out.value(k)[0] - (g[k] - g[0])).abs() < 1e-14);
        }
        assert!(out.max_defect < 1e-14);
    }

    #[test]
    fn spike_is_located() {
        let n = 10;
        let times: Vec<f64> = (0..n).map(|k| k as f64 / 9.0).collect();
        let omega = Control::interval_power(times.clone(), 1.0, 1.0);
        let loc = Localization::unrestricted(times);
        let germ = |s: usize, t: usize| {
            let base = (t - s) as f64 / 9.0;
            vec![if (s, t) == (2, 7) { base + 5.0 } else { base }]
        };
        match sew(n, 1, germ, 0.5, &omega, &loc) {
            Err(Error::GermIncoherent { s, u, t, .. }) => {
                assert!(
                    [(s, t), (s, u), (u, t)].contains(&(2, 7)),
                    "({s}, {u}, {t})"
                )
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn constant_integrand_telescopes() {
        let rp = smooth_rp(32);
        let y = ControlledPath::constant(rp.clone(), &[2.5]).unwrap();
        let out = rough_integral(&y).unwrap();
        for k in 0..32 {
            let z = rp.increment(0, k)[0];
            assert!((out.integral.value(k)[0] - 2.5 * z).abs() < 1e-13);
        }
    }

    #[test]
    fn path_against_itself_is_second_level() {
        let path = SampledPath::from_fn(40, 1.0, 1, |t| vec![(5.0 * t).sin() * t]).unwrap();
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        let y =
            ControlledPath::from_fn(rp.clone(), 1, |k| (rp.value(k).to_vec(), vec![1.0])).unwrap();
        let out = rough_integral(&y).unwrap();
        for k in 0..=40 {
            let z = rp.value(k)[0];
            assert!((out.integral.value(k)[0] - 0.5 * z * z).abs() < 1e-13);
            assert!((out.integral.value(k)[0] - rp.second_level(0, k)[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn identical_inputs_have_zero_difference() {
        let rp = smooth_rp(16);
        let y = ControlledPath::from_fn(rp.clone(), 1, |k| {
            let z = rp.value(k)[0];
            (vec![z.sin()], vec![z.cos()])
        })
        .unwrap();
        let b = integral_difference_bound(&y, &y).unwrap();
        assert_eq!(b.measured, 0.0);
        assert_eq!(b.ratio, 0.0);
    }
}
