//! Level-2 rough paths on a finite time grid.
//!
//! A [`RoughPath`] stores the path values `Z_{t_k}` at every node and the
//! second level `𝕫_{t_k, t_{k+1}}` for consecutive nodes only. The second
//! level of an arbitrary pair of nodes is composed on demand through Chen's
//! relation
//!
//! ```text
//! 𝕫_{s,t} = 𝕫_{s,u} + 𝕫_{u,t} + Z_{s,u} ⊗ Z_{u,t}
//! ```
//!
//! which costs `O(k M²)` for a pair `k` steps apart. The index convention is
//! `𝕫^{i,j}_{s,t} = ∫_s^t Z^i_{s,r} dZ^j_r`, stored row-major (`i * M + j`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::variation::{self, Control, ControlKind};

/// Path samples on a time grid, `dim` components per node, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        check_times(&times)?;
        if dim == 0 || values.len() != times.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes of dimension {}",
                values.len(),
                times.len(),
                dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "path samples",
            });
        }
        Ok(Self { times, dim, values })
    }

    /// Samples `f` on a uniform grid of `n` steps over `[0, horizon]`.
    pub fn from_fn(
        n: usize,
        horizon: f64,
        dim: usize,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let times = uniform_grid(n, horizon);
        let mut values = Vec::with_capacity(times.len() * dim);
        for &t in &times {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "closure returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::new(times, dim, values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Keeps every `stride`-th node; the last node must be retained.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.len() - 1).is_multiple_of(stride) {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide {} steps",
                self.len() - 1
            )));
        }
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        Ok(Self {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            dim: self.dim,
            values: idx.iter().flat_map(|&k| self.value(k).to_vec()).collect(),
        })
    }

    /// Piecewise-linear interpolation onto `times` (which must lie in the
    /// sampled range).
    pub fn interpolate(&self, times: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(times.len() * self.dim);
        let t0 = self.times[0];
        let t1 = *self.times.last().unwrap();
        for &t in times {
            if t < t0 - 1e-12 || t > t1 + 1e-12 {
                return Err(Error::GridMismatch(format!(
                    "time {t} outside [{t0}, {t1}]"
                )));
            }
            let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                Ok(k) => {
                    values.extend_from_slice(self.value(k));
                    continue;
                }
                Err(k) => k.clamp(1, self.len() - 1),
            };
            let (ta, tb) = (self.times[k - 1], self.times[k]);
            let lam = (t - ta) / (tb - ta);
            let (a, b) = (self.value(k - 1), self.value(k));
            values.extend(a.iter().zip(b).map(|(x, y)| x + lam * (y - x)));
        }
        Self::new(times.to_vec(), self.dim, values)
    }
}

pub fn uniform_grid(n: usize, horizon: f64) -> Vec<f64> {
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::TooFewNodes {
            required: 2,
            got: times.len(),
        });
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite { what: "time grid" });
    }
    for (k, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::NonMonotoneTimes { index: k + 1 });
        }
    }
    Ok(())
}

/// A level-2 rough path `(Z, 𝕫)` on a grid.
#[derive(Debug, Clone)]
pub struct RoughPath {
    times: Vec<f64>,
    dim: usize,
    values: Vec<f64>,
    steps: Vec<f64>,
    p: f64,
    explicit: BTreeMap<(usize, usize), Vec<f64>>,
    control: OnceLock<Control>,
}

impl RoughPath {
    /// Assembles a rough path from node values and consecutive second levels.
    pub fn from_parts(
        times: Vec<f64>,
        dim: usize,
        values: Vec<f64>,
        steps: Vec<f64>,
        p: f64,
    ) -> Result<Self> {
        check_times(&times)?;
        if !(2.0..3.0).contains(&p) {
            return Err(Error::ExponentRange { p, range: "[2, 3)" });
        }
        let n = times.len() - 1;
        if dim == 0 || values.len() != (n + 1) * dim || steps.len() != n * dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values and {} second-level entries for {} nodes of dimension {dim}",
                values.len(),
                steps.len(),
                n + 1
            )));
        }
        if values.iter().chain(&steps).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "rough path" });
        }
        Ok(Self {
            times,
            dim,
            values,
            steps,
            p,
            explicit: BTreeMap::new(),
            control: OnceLock::new(),
        })
    }

    /// Canonical lift of the piecewise-linear interpolation of `path`.
    ///
    /// On a linear segment with increment `Δ` the iterated integral is
    /// exactly `½ Δ ⊗ Δ`; longer pairs are composed with Chen's relation.
    pub fn lift_piecewise_linear(path: &SampledPath) -> Result<Self> {
        check_times(&path.times)?;
        let m = path.dim;
        let n = path.len() - 1;
        let mut steps = Vec::with_capacity(n * m * m);
        for k in 0..n {
            let (a, b) = (path.value(k), path.value(k + 1));
            for i in 0..m {
                for j in 0..m {
                    steps.push(0.5 * (b[i] - a[i]) * (b[j] - a[j]));
                }
            }
        }
        Self::from_parts(path.times.clone(), m, path.values.clone(), steps, 2.0)
    }

    /// Same path with a different variation exponent.
    pub fn with_p(mut self, p: f64) -> Result<Self> {
        if !(2.0..3.0).contains(&p) {
            return Err(Error::ExponentRange { p, range: "[2, 3)" });
        }
        self.p = p;
        self.control = OnceLock::new();
        Ok(self)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn path(&self) -> SampledPath {
        SampledPath {
            times: self.times.clone(),
            dim: self.dim,
            values: self.values.clone(),
        }
    }

    /// Second level of the consecutive pair `(t_k, t_{k+1})`.
    pub fn step_second_level(&self, k: usize) -> &[f64] {
        let mm = self.dim * self.dim;
        &self.steps[k * mm..(k + 1) * mm]
    }

    pub fn step_increment(&self, k: usize) -> Vec<f64> {
        self.increment(k, k + 1)
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::OffGrid {
                index: k,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// `Z_{s,t} = Z_t - Z_s` for node indices `s, t`.
    pub fn increment(&self, s: usize, t: usize) -> Vec<f64> {
        self.value(t)
            .iter()
            .zip(self.value(s))
            .map(|(b, a)| b - a)
            .collect()
    }

    /// Second level `𝕫_{s,t}` for node indices `s <= t`.
    pub fn second_level(&self, s: usize, t: usize) -> Vec<f64> {
        if let Some(m) = self.explicit.get(&(s, t)) {
            return m.clone();
        }
        self.composed_second_level(s, t)
    }

    fn composed_second_level(&self, s: usize, t: usize) -> Vec<f64> {
        let m = self.dim;
        let mut acc = vec![0.0; m * m];
        if t <= s {
            return acc;
        }
        let zs = self.value(s);
        for k in s..t {
            let zk = self.value(k);
            let zk1 = self.value(k + 1);
            let st = self.step_second_level(k);
            for i in 0..m {
                let zsk = zk[i] - zs[i];
                for j in 0..m {
                    acc[i * m + j] += st[i * m + j] + zsk * (zk1[j] - zk[j]);
                }
            }
        }
        acc
    }

    /// `𝕫_{s,t}` for every `t >= s`, computed in a single sweep.
    pub fn second_level_row(&self, s: usize) -> Vec<Vec<f64>> {
        let m = self.dim;
        let mut out = Vec::with_capacity(self.len() - s);
        let mut acc = vec![0.0; m * m];
        out.push(acc.clone());
        let zs = self.value(s);
        for k in s..self.num_steps() {
            let zk = self.value(k);
            let zk1 = self.value(k + 1);
            let st = self.step_second_level(k);
            for i in 0..m {
                let zsk = zk[i] - zs[i];
                for j in 0..m {
                    acc[i * m + j] += st[i * m + j] + zsk * (zk1[j] - zk[j]);
                }
            }
            match self.explicit.get(&(s, k + 1)) {
                Some(e) => out.push(e.clone()),
                None => out.push(acc.clone()),
            }
        }
        out
    }

    /// Stores an explicit value for `𝕫_{s,t}` that overrides composition at
    /// exactly that pair. Chen's relation is then generally violated, which
    /// [`RoughPath::chen_defect`] detects.
    pub fn set_second_level(&mut self, s: usize, t: usize, value: Vec<f64>) -> Result<()> {
        self.check_index(s)?;
        self.check_index(t)?;
        if s >= t {
            return Err(Error::NodeOrder { s, u: s, t });
        }
        if value.len() != self.dim * self.dim {
            return Err(Error::DimensionMismatch(format!(
                "second level needs {} entries",
                self.dim * self.dim
            )));
        }
        self.explicit.insert((s, t), value);
        self.control = OnceLock::new();
        Ok(())
    }

    /// `𝕫_{s,t} - 𝕫_{s,u} - 𝕫_{u,t} - Z_{s,u} ⊗ Z_{u,t}`.
    pub fn chen_defect(&self, s: usize, u: usize, t: usize) -> Result<Vec<f64>> {
        self.check_index(s)?;
        self.check_index(u)?;
        self.check_index(t)?;
        if !(s <= u && u <= t) {
            return Err(Error::NodeOrder { s, u, t });
        }
        let m = self.dim;
        let st = self.second_level(s, t);
        let su = self.second_level(s, u);
        let ut = self.second_level(u, t);
        let zsu = self.increment(s, u);
        let zut = self.increment(u, t);
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let ij = i * m + j;
                d[ij] = st[ij] - su[ij] - ut[ij] - zsu[i] * zut[j];
            }
        }
        Ok(d)
    }

    /// Chen defect normalised by `|Z_{s,u}||Z_{u,t}| + |𝕫_{s,t}|` (absolute
    /// when that scale vanishes).
    pub fn chen_defect_relative(&self, s: usize, u: usize, t: usize) -> Result<f64> {
        let d = norm(&self.chen_defect(s, u, t)?);
        let scale = norm(&self.increment(s, u)) * norm(&self.increment(u, t))
            + norm(&self.second_level(s, t));
        Ok(if scale > 0.0 { d / scale } else { d })
    }

    /// `max |Sym(𝕫_{s,t}) - ½ Z_{s,t} ⊗ Z_{s,t}|`.
    pub fn geometric_defect(&self, s: usize, t: usize) -> f64 {
        let m = self.dim;
        let z = self.increment(s, t);
        let zz = self.second_level(s, t);
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let sym = 0.5 * (zz[i * m + j] + zz[j * m + i]);
                worst = worst.max((sym - 0.5 * z[i] * z[j]).abs());
            }
        }
        worst
    }

    /// Rough path seen on the sub-grid `indices` (strictly increasing node
    /// indices); second levels of the new steps are composed through Chen.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::TooFewNodes {
                required: 2,
                got: indices.len(),
            });
        }
        for (k, w) in indices.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonMonotoneTimes { index: k + 1 });
            }
        }
        self.check_index(*indices.last().unwrap())?;
        let times = indices.iter().map(|&k| self.times[k]).collect();
        let values = indices
            .iter()
            .flat_map(|&k| self.value(k).to_vec())
            .collect();
        let steps = indices
            .windows(2)
            .flat_map(|w| self.second_level(w[0], w[1]))
            .collect();
        Self::from_parts(times, self.dim, values, steps, self.p)
    }

    /// Keeps every `stride`-th node.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.num_steps().is_multiple_of(stride) {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide {} steps",
                self.num_steps()
            )));
        }
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        self.restrict(&idx)
    }

    /// Splits every step into `sub` equal pieces.
    ///
    /// The path is interpolated linearly and each piece receives
    /// `½ δ ⊗ δ + A / sub`, where `A` is the antisymmetric part of the
    /// step's second level. Composing the pieces reproduces the stored
    /// step exactly, so the refined path is Chen-consistent with the
    /// original one and remains geometric.
    pub fn refine(&self, sub: usize) -> Result<Self> {
        if sub == 0 {
            return Err(Error::InvalidParameter(
                "refinement factor must be positive".into(),
            ));
        }
        if sub == 1 {
            let mut out = self.clone();
            out.control = OnceLock::new();
            return Ok(out);
        }
        let m = self.dim;
        let n = self.num_steps();
        let mut times = Vec::with_capacity(n * sub + 1);
        let mut values = Vec::with_capacity((n * sub + 1) * m);
        let mut steps = Vec::with_capacity(n * sub * m * m);
        for k in 0..n {
            let (ta, tb) = (self.times[k], self.times[k + 1]);
            let (za, zb) = (self.value(k), self.value(k + 1));
            let st = self.step_second_level(k);
            let delta: Vec<f64> = zb
                .iter()
                .zip(za)
                .map(|(b, a)| (b - a) / sub as f64)
                .collect();
            for r in 0..sub {
                let lam = r as f64 / sub as f64;
                times.push(ta + lam * (tb - ta));
                values.extend(za.iter().zip(zb).map(|(a, b)| a + lam * (b - a)));
                for i in 0..m {
                    for j in 0..m {
                        let area = 0.5 * (st[i * m + j] - st[j * m + i]);
                        steps.push(0.5 * delta[i] * delta[j] + area / sub as f64);
                    }
                }
            }
        }
        times.push(self.horizon());
        values.extend_from_slice(self.value(n));
        Self::from_parts(times, m, values, steps, self.p)
    }

    /// Geometric rough path of `s ↦ Z_{t-s}` on `[0, t]`, `t = times[pivot]`.
    ///
    /// The reversed path carries the inverse signature, so each reversed
    /// step has second level `Δ ⊗ Δ - 𝕫` (for linear segments this is the
    /// canonical re-lift `½ Δ ⊗ Δ`).
    pub fn reverse(&self, pivot: usize) -> Result<Self> {
        self.check_index(pivot)?;
        if pivot == 0 {
            return Err(Error::TooFewNodes {
                required: 2,
                got: 1,
            });
        }
        let m = self.dim;
        let tp = self.times[pivot];
        let times: Vec<f64> = (0..=pivot).map(|k| tp - self.times[pivot - k]).collect();
        let values: Vec<f64> = (0..=pivot)
            .flat_map(|k| self.value(pivot - k).to_vec())
            .collect();
        let mut steps = Vec::with_capacity(pivot * m * m);
        for k in 0..pivot {
            // reversed step k covers forward step pivot-1-k
            let f = pivot - 1 - k;
            let d = self.increment(f, f + 1);
            let st = self.second_level(f, f + 1);
            for i in 0..m {
                for j in 0..m {
                    steps.push(d[i] * d[j] - st[i * m + j]);
                }
            }
        }
        Self::from_parts(times, m, values, steps, self.p)
    }

    /// `(-Z, 𝕫)`: the driver obtained by flipping the sign of the path.
    pub fn negate(&self) -> Self {
        self.scale(-1.0)
    }

    /// `(cZ, c²𝕫)`.
    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.steps.iter_mut().for_each(|v| *v *= c * c);
        for e in out.explicit.values_mut() {
            e.iter_mut().for_each(|v| *v *= c * c);
        }
        out.control = OnceLock::new();
        out
    }

    /// `|Z_{t_k,t_{k+1}}|^p + |𝕫_{t_k,t_{k+1}}|^{p/2}` for one step.
    pub fn step_control(&self, k: usize) -> f64 {
        norm(&self.increment(k, k + 1)).powf(self.p)
            + norm(self.step_second_level(k)).powf(self.p / 2.0)
    }

    /// The control `ω_Z(s,t) = ‖Z‖^p_{p-var,[s,t]} + ‖𝕫‖^{p/2}_{p/2-var,[s,t]}`
    /// tabulated on the grid; computed once and cached (`O(n³)`).
    pub fn variation_control(&self) -> &Control {
        self.control.get_or_init(|| {
            let n = self.len();
            let p = self.p;
            let mut first = vec![0.0; n * n];
            let mut second = vec![0.0; n * n];
            for s in 0..n {
                let row = self.second_level_row(s);
                let zs = self.value(s);
                for t in s..n {
                    let zt = self.value(t);
                    let d: f64 = zs
                        .iter()
                        .zip(zt)
                        .map(|(a, b)| (b - a) * (b - a))
                        .sum::<f64>()
                        .sqrt();
                    first[s * n + t] = d.powf(p);
                    second[s * n + t] = norm(&row[t - s]).powf(p / 2.0);
                }
            }
            let a = variation::all_pairs_variation(n, |s, t| first[s * n + t], None);
            let b = variation::all_pairs_variation(n, |s, t| second[s * n + t], None);
            let table: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            Control::from_table(self.times.clone(), table, ControlKind::RoughPathVariation)
        })
    }

    /// `ω_{Z¹-Z²}(0,T)`: p-variation of the difference of first levels plus
    /// p/2-variation of the difference of second levels, on the common grid.
    pub fn distance_control(&self, other: &RoughPath) -> Result<f64> {
        self.check_same_grid(other)?;
        let n = self.len();
        let p = self.p.max(other.p);
        let mut first = vec![0.0; n * n];
        let mut second = vec![0.0; n * n];
        for s in 0..n {
            let r1 = self.second_level_row(s);
            let r2 = other.second_level_row(s);
            for t in s..n {
                let d1 = self.increment(s, t);
                let d2 = other.increment(s, t);
                let dz: f64 = d1
                    .iter()
                    .zip(&d2)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let dzz: f64 = r1[t - s]
                    .iter()
                    .zip(&r2[t - s])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                first[s * n + t] = dz.powf(p);
                second[s * n + t] = dzz.powf(p / 2.0);
            }
        }
        let a = variation::interval_variation(n, 0, n - 1, |s, t| first[s * n + t], None)?;
        let b = variation::interval_variation(n, 0, n - 1, |s, t| second[s * n + t], None)?;
        Ok(a.value + b.value)
    }

    pub fn check_same_grid(&self, other: &RoughPath) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::GridMismatch(format!(
                "dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        if self.times.len() != other.times.len()
            || self
                .times
                .iter()
                .zip(&other.times)
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
        {
            return Err(Error::GridMismatch("time grids differ".into()));
        }
        Ok(())
    }

    /// Writes the columnar text form: header `t,Z_1..Z_M,A_11..A_MM`, one
    /// row per node, `A` on row `k` being `𝕫_{t_{k-1},t_k}` (zero on row 0).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let m = self.dim;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("Z_{i}")));
        for i in 1..=m {
            for j in 1..=m {
                header.push(format!("A_{i}{j}"));
            }
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.value(k).iter().map(|v| v.to_string()));
            if k == 0 {
                row.extend(std::iter::repeat_n("0".to_string(), m * m));
            } else {
                row.extend(self.step_second_level(k - 1).iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`RoughPath::write_csv`] and re-validates
    /// it: strictly increasing times, finite entries, a zero first-row
    /// second level, and the geometric symmetry of every step.
    pub fn read_csv<R: Read>(reader: R, p: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols = header.len();
        let m = (1..=cols).find(|m| 1 + m + m * m == cols).ok_or_else(|| {
            Error::Format(format!("{cols} columns do not match t,Z_1..Z_M,A_11..A_MM"))
        })?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut steps = Vec::new();
        for (row_idx, rec) in r.records().enumerate() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("row {row_idx}: {e}")))
                })
                .collect::<Result<_>>()?;
            if nums.len() != cols {
                return Err(Error::Format(format!(
                    "row {row_idx} has {} fields",
                    nums.len()
                )));
            }
            times.push(nums[0]);
            values.extend_from_slice(&nums[1..=m]);
            if row_idx == 0 {
                if nums[1 + m..].iter().any(|&a| a != 0.0) {
                    return Err(Error::Format(
                        "first row must carry a zero second level".into(),
                    ));
                }
            } else {
                steps.extend_from_slice(&nums[1 + m..]);
            }
        }
        let rp = Self::from_parts(times, m, values, steps, p)?;
        for k in 0..rp.num_steps() {
            let d = rp.increment(k, k + 1);
            let scale = 1.0 + d.iter().map(|x| x * x).sum::<f64>();
            let defect = rp.geometric_defect(k, k + 1);
            if defect > 1e-10 * scale {
                return Err(Error::Format(format!(
                    "step {k} is not geometric (symmetry defect {defect:e})"
                )));
            }
        }
        Ok(rp)
    }
}

/// Euclidean (Frobenius for matrices) norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(n: usize) -> RoughPath {
        let path = SampledPath::from_fn(n, 1.0, 1, |t| vec![t]).unwrap();
        RoughPath::lift_piecewise_linear(&path).unwrap()
    }

    #[test]
    fn linear_path_second_level_is_half() {
        let rp = linear(16);
        assert!((rp.second_level(0, 16)[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_path_has_zero_levels() {
        let path = SampledPath::from_fn(8, 1.0, 2, |_| vec![0.3, -1.0]).unwrap();
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        for s in 0..9 {
            for t in s..9 {
                assert!(rp.increment(s, t).iter().all(|v| *v == 0.0));
                assert!(rp.second_level(s, t).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn diagonal_path_cross_term() {
        let path = SampledPath::from_fn(10, 1.0, 2, |t| vec![t, t]).unwrap();
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        assert!((rp.second_level(0, 10)[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn perturbed_pair_shows_up_in_defect() {
        let mut rp = linear(8);
        let base = rp.second_level(2, 6);
        rp.set_second_level(2, 6, vec![base[0] + 0.25]).unwrap();
        let d = rp.chen_defect(2, 4, 6).unwrap();
        assert!((d[0] - 0.25).abs() < 1e-14);
        let d = rp.chen_defect(2, 6, 7).unwrap();
        assert!((d[0] + 0.25).abs() < 1e-14);
        assert!(rp.chen_defect(0, 3, 8).unwrap()[0].abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        let bad = SampledPath {
            times: vec![0.0, 0.5, 0.4],
            dim: 1,
            values: vec![0.0, 1.0, 2.0],
        };
        assert!(matches!(
            RoughPath::lift_piecewise_linear(&bad),
            Err(Error::NonMonotoneTimes { index: 2 })
        ));
        let short = SampledPath {
            times: vec![0.0],
            dim: 1,
            values: vec![0.0],
        };
        assert!(matches!(
            RoughPath::lift_piecewise_linear(&short),
            Err(Error::TooFewNodes { .. })
        ));
        assert!(matches!(
            linear(4).chen_defect(0, 2, 9),
            Err(Error::OffGrid { .. })
        ));
    }

    #[test]
    fn reversal_of_linear_path() {
        let rp = linear(8);
        let rev = rp.reverse(8).unwrap();
        for k in 0..=8 {
            let s = rev.times()[k];
            assert!((rev.increment(0, k)[0] + s).abs() < 1e-14);
        }
        let back = rev.reverse(8).unwrap();
        for s in 0..=8 {
            for t in s..=8 {
                assert!((back.second_level(s, t)[0] - rp.second_level(s, t)[0]).abs() < 1e-14);
            }
        }
        assert!(matches!(rp.reverse(9), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn refine_is_chen_consistent() {
        let path =
            SampledPath::new(vec![0.0, 0.3, 1.0], 2, vec![0.0, 0.0, 1.0, -0.5, 0.2, 0.7]).unwrap();
        let mut rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        // add area to the first step
        let mut steps = rp.steps.clone();
        steps[1] += 0.1;
        steps[2] -= 0.1;
        rp = RoughPath::from_parts(rp.times.clone(), 2, rp.values.clone(), steps, 2.0).unwrap();
        let fine = rp.refine(5).unwrap();
        assert_eq!(fine.len(), 11);
        let a = rp.second_level(0, 2);
        let b = fine.second_level(0, 10);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(fine.geometric_defect(0, 3) < 1e-15);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let path = SampledPath::from_fn(6, 1.0, 2, |t| vec![t.sin(), t * t]).unwrap();
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        let mut buf = Vec::new();
        rp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,Z_1,Z_2,A_11,A_12,A_21,A_22"));
        let back = RoughPath::read_csv(buf.as_slice(), 2.0).unwrap();
        assert_eq!(back.values, rp.values);
        assert_eq!(back.steps, rp.steps);
        // break symmetry on one step
        let broken = text.replacen(&format!("{}", rp.step_second_level(2)[0]), "0.75", 1);
        assert!(RoughPath::read_csv(broken.as_bytes(), 2.0).is_err());
    }
}
