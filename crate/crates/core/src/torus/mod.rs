//! Periodic fields on the torus `[0, 2π)²` sampled on an `N × N` grid.
//!
//! Node `(i, j)` sits at `x = (2πi/N, 2πj/N)` and is stored at `i * N + j`.
//! Integrals are reported against the normalized measure `dx / 4π²`, so the
//! mean of a field equals its integral and `L¹` norms are averages.

mod interp;
mod kernel;

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub use interp::{deposit, interpolate, lattice_points, Interpolation};
pub use kernel::{
    biot_savart_kernel, green_function, kernel_log_lipschitz_check, KernelCheck,
    KERNEL_CHECK_CONSTANT,
};

const MEAN_TOL: f64 = 1e-10;
const GRID_MAGIC: &[u8; 4] = b"RFGD";

/// Reduces a coordinate to `[0, 2π)`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces a coordinate difference to `[-π, π)`.
pub fn wrap_signed(d: f64) -> f64 {
    let r = (d + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Geodesic distance on the torus.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    wrap_signed(a[0] - b[0]).hypot(wrap_signed(a[1] - b[1]))
}

/// Log-Lipschitz modulus: `r(1 - ln r)` on `(0, 1/e)`, `r + 1/e` beyond.
pub fn gamma(r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::NegativeArgument(r));
    }
    let inv_e = (-1.0f64).exp();
    Ok(if r == 0.0 {
        0.0
    } else if r < inv_e {
        r * (1.0 - r.ln())
    } else {
        r + inv_e
    })
}

pub fn check_resolution(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// Signed wavenumber of FFT index `a` on an `n`-point axis.
pub fn wavenumber(a: usize, n: usize) -> i64 {
    if a <= n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

/// Wavenumber used for odd-order derivatives: the Nyquist mode is dropped.
pub(crate) fn odd_wavenumber(a: usize, n: usize) -> f64 {
    if n.is_multiple_of(2) && a == n / 2 {
        0.0
    } else {
        wavenumber(a, n) as f64
    }
}

/// Cached forward/inverse 2D transforms for one resolution.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({})", self.n)
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                buf.swap(i * n + j, j * n + i);
            }
        }
    }

    fn both_axes(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        fft.process(buf);
        self.transpose(buf);
        fft.process(buf);
        self.transpose(buf);
    }

    /// Unnormalized forward transform of real samples.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.both_axes(&mut buf, &self.forward);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.both_axes(buf, &self.forward);
    }

    /// Inverse transform including the `1/N²` factor; returns real parts.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.both_axes(&mut spec, &self.inverse);
        let s = 1.0 / (self.n * self.n) as f64;
        spec.iter().map(|c| c.re * s).collect()
    }

    /// Applies a spectral multiplier `m(k1, k2)` to a real field.
    pub fn apply(&self, values: &[f64], m: impl Fn(usize, usize) -> Complex64) -> Vec<f64> {
        let n = self.n;
        let mut spec = self.forward_real(values);
        for a in 0..n {
            for b in 0..n {
                spec[a * n + b] *= m(a, b);
            }
        }
        self.inverse_real(spec)
    }

    /// `∂/∂x₁` (axis 0) of a real field.
    pub fn d1(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        self.apply(values, |a, _| Complex64::new(0.0, odd_wavenumber(a, n)))
    }

    /// `∂/∂x₂` (axis 1) of a real field.
    pub fn d2(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        self.apply(values, |_, b| Complex64::new(0.0, odd_wavenumber(b, n)))
    }
}

/// Scalar samples of a vorticity field.
#[derive(Debug, Clone, PartialEq)]
pub struct VorticityGrid {
    n: usize,
    values: Vec<f64>,
    mean: f64,
}

impl VorticityGrid {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_resolution(n)?;
        if values.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {n}x{n} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "vorticity" });
        }
        let mean = values.iter().sum::<f64>() / (n * n) as f64;
        Ok(Self { n, values, mean })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let h = TAU / n as f64;
        let values = (0..n * n)
            .map(|k| f((k / n) as f64 * h, (k % n) as f64 * h))
            .collect();
        Self::new(n, values)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn node(&self, k: usize) -> [f64; 2] {
        let h = self.spacing();
        [(k / self.n) as f64 * h, (k % self.n) as f64 * h]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Normalized `L¹` norm, `(1/4π²) ∫ |w|`.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }

    pub fn l1_distance(&self, other: &VorticityGrid) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::GridMismatch(format!(
                "resolutions {} and {}",
                self.n, other.n
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.values.len() as f64)
    }

    /// The field with its mean removed.
    pub fn mean_free(&self) -> Self {
        let values = self.values.iter().map(|v| v - self.mean).collect();
        Self {
            n: self.n,
            values,
            mean: 0.0,
        }
    }

    fn check_mean_free(&self) -> Result<()> {
        if self.mean.abs() > MEAN_TOL * self.sup_norm().max(1.0) {
            return Err(Error::NonzeroMean(self.mean));
        }
        Ok(())
    }

    /// Writes rows `i,j,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "value"])?;
        for k in 0..self.values.len() {
            w.write_record(&[
                (k / self.n).to_string(),
                (k % self.n).to_string(),
                self.values[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k)
                    .ok_or_else(|| Error::Format("expected columns i,j,value".into()))
            };
            let i: usize = field(0)?
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{e}")))?;
            let j: usize = field(1)?
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{e}")))?;
            let v: f64 = field(2)?
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("{e}")))?;
            entries.push((i, j, v));
        }
        let n = (entries.len() as f64).sqrt().round() as usize;
        if n * n != entries.len() {
            return Err(Error::Format(format!(
                "{} entries do not form a square grid",
                entries.len()
            )));
        }
        let mut values = vec![f64::NAN; n * n];
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::Format(format!("index ({i}, {j}) outside {n}x{n}")));
            }
            values[i * n + j] = v;
        }
        Self::new(n, values)
    }

    /// Little-endian binary layout: magic `RFGD`, `u64` resolution, then the
    /// values as `f64` in storage order.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(GRID_MAGIC)?;
        writer.write_u64::<LittleEndian>(self.n as u64)?;
        for v in &self.values {
            writer.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Format("not a grid file".into()));
        }
        let n = reader.read_u64::<LittleEndian>()? as usize;
        check_resolution(n)?;
        let mut values = vec![0.0; n * n];
        reader.read_f64_into::<LittleEndian>(&mut values)?;
        Self::new(n, values)
    }
}

/// Two-component velocity samples on the same grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub n: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl VelocityGrid {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            u1: vec![0.0; n * n],
            u2: vec![0.0; n * n],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.u1
            .iter()
            .zip(&self.u2)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// Spectral divergence `∂₁u₁ + ∂₂u₂`.
    pub fn divergence(&self, fft: &Fft2) -> Vec<f64> {
        let a = fft.d1(&self.u1);
        let b = fft.d2(&self.u2);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }

    /// Spectral curl `∂₁u₂ - ∂₂u₁`.
    pub fn curl(&self, fft: &Fft2) -> Vec<f64> {
        let a = fft.d1(&self.u2);
        let b = fft.d2(&self.u1);
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
    }
}

/// Velocity `u = ∇^⊥ Δ^{-1} w` of a mean-free vorticity field.
pub fn biot_savart(w: &VorticityGrid) -> Result<VelocityGrid> {
    biot_savart_with(w, &Fft2::new(w.n))
}

pub fn biot_savart_with(w: &VorticityGrid, fft: &Fft2) -> Result<VelocityGrid> {
    w.check_mean_free()?;
    if fft.resolution() != w.n {
        return Err(Error::GridMismatch(
            "transform resolution differs from field".into(),
        ));
    }
    let n = w.n;
    let spec = fft.forward_real(&w.values);
    let mut s1 = vec![Complex64::new(0.0, 0.0); n * n];
    let mut s2 = vec![Complex64::new(0.0, 0.0); n * n];
    for a in 0..n {
        let k1 = wavenumber(a, n) as f64;
        for b in 0..n {
            let k2 = wavenumber(b, n) as f64;
            let k_sq = k1 * k1 + k2 * k2;
            if k_sq == 0.0 {
                continue;
            }
            let c = spec[a * n + b] / k_sq;
            let (o1, o2) = (odd_wavenumber(a, n), odd_wavenumber(b, n));
            s1[a * n + b] = c * Complex64::new(0.0, o2);
            s2[a * n + b] = c * Complex64::new(0.0, -o1);
        }
    }
    Ok(VelocityGrid {
        n,
        u1: fft.inverse_real(s1),
        u2: fft.inverse_real(s2),
    })
}

/// Discrete mollifier weights `ρ_η` centred at node 0 (periodically
/// wrapped), normalized to unit sum.
fn mollifier_weights(n: usize, eta: f64) -> Vec<f64> {
    let h = TAU / n as f64;
    let mut w = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        let d1 = wrap_signed(i as f64 * h);
        for j in 0..n {
            let d2 = wrap_signed(j as f64 * h);
            let r2 = (d1 * d1 + d2 * d2) / (eta * eta);
            if r2 < 1.0 {
                let v = (1.0 / (r2 - 1.0)).exp();
                w[i * n + j] = v;
                total += v;
            }
        }
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Convolution with the normalized bump `exp(1/(|z/η|² - 1))` supported
/// in the ball of radius `η`.
pub fn mollify(field: &VorticityGrid, eta: f64) -> Result<VorticityGrid> {
    let n = field.n;
    let h = TAU / n as f64;
    if !(eta <= 1.0) || eta < 2.0 * h {
        return Err(Error::MollifierRadius { eta, spacing: h });
    }
    let fft = Fft2::new(n);
    let kernel = fft.forward_real(&mollifier_weights(n, eta));
    let mut spec = fft.forward_real(&field.values);
    for (s, k) in spec.iter_mut().zip(&kernel) {
        *s *= k;
    }
    VorticityGrid::new(n, fft.inverse_real(spec))
}

/// Normalized `W^{1,1}` norm `‖f‖_{L¹} + ‖∂₁f‖_{L¹} + ‖∂₂f‖_{L¹}` computed
/// spectrally.
pub fn w11_norm(field: &VorticityGrid) -> f64 {
    let fft = Fft2::new(field.n);
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    field.l1_norm() + l1(&fft.d1(&field.values)) + l1(&fft.d2(&field.values))
}

/// Trigonometric upsampling of an `n × n` field to `m × m` (`m >= n`), by
/// zero padding in Fourier space. The Nyquist row/column is split evenly.
pub fn upsample(field: &VorticityGrid, m: usize) -> Result<VorticityGrid> {
    let n = field.n;
    check_resolution(m)?;
    if m < n {
        return Err(Error::GridMismatch(format!("cannot upsample {n} to {m}")));
    }
    if m == n {
        return Ok(field.clone());
    }
    let spec = Fft2::new(n).forward_real(&field.values);
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    let half = n / 2;
    // each source index maps to one or two target indices (Nyquist split)
    let targets = |a: usize| -> Vec<(usize, f64)> {
        if a == half {
            vec![(half, 0.5), (m - half, 0.5)]
        } else if a < half {
            vec![(a, 1.0)]
        } else {
            vec![(m - (n - a), 1.0)]
        }
    };
    let scale = (m * m) as f64 / (n * n) as f64;
    for a in 0..n {
        for (ta, fa) in targets(a) {
            for b in 0..n {
                for (tb, fb) in targets(b) {
                    out[ta * m + tb] += spec[a * n + b] * (fa * fb * scale);
                }
            }
        }
    }
    VorticityGrid::new(m, Fft2::new(m).inverse_real(out))
}
