//! Divergence-free noise fields and the driver pair `(σ, Z, sign)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rough_path::RoughPath;
use crate::torus::{Fft2, VelocityGrid};

/// Closed-form divergence-free vector fields on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaField {
    /// Uniform field `c`.
    Constant { c: [f64; 2] },
    /// `∇^⊥` of the potential `(a/|k|) sin(k·x + φ)`, i.e.
    /// `σ(x) = a cos(k·x + φ) (-k₂, k₁) / |k|`.
    Mode {
        amplitude: f64,
        k: [i32; 2],
        phase: f64,
    },
}

impl SigmaField {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SigmaField::Constant { c } => {
                if !(c[0].is_finite() && c[1].is_finite()) {
                    return Err(Error::NonFinite {
                        what: "constant field",
                    });
                }
            }
            SigmaField::Mode {
                amplitude,
                k,
                phase,
            } => {
                if k == [0, 0] {
                    return Err(Error::InvalidParameter("mode field needs k != 0".into()));
                }
                if !(amplitude.is_finite() && phase.is_finite()) {
                    return Err(Error::NonFinite { what: "mode field" });
                }
            }
        }
        Ok(())
    }

    fn mode_parts(
        amplitude: f64,
        k: [i32; 2],
        phase: f64,
        x: [f64; 2],
    ) -> (f64, f64, [f64; 2], [f64; 2]) {
        let kf = [k[0] as f64, k[1] as f64];
        let norm = kf[0].hypot(kf[1]);
        let theta = kf[0] * x[0] + kf[1] * x[1] + phase;
        let e = [-kf[1] / norm, kf[0] / norm];
        (amplitude * theta.cos(), amplitude * theta.sin(), e, kf)
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match *self {
            SigmaField::Constant { c } => c,
            SigmaField::Mode {
                amplitude,
                k,
                phase,
            } => {
                let (c, _, e, _) = Self::mode_parts(amplitude, k, phase, x);
                [c * e[0], c * e[1]]
            }
        }
    }

    /// Jacobian `J[l][m] = ∂_m σ^l`.
    pub fn jacobian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        match *self {
            SigmaField::Constant { .. } => [[0.0; 2]; 2],
            SigmaField::Mode {
                amplitude,
                k,
                phase,
            } => {
                let (_, s, e, kf) = Self::mode_parts(amplitude, k, phase, x);
                [
                    [-s * e[0] * kf[0], -s * e[0] * kf[1]],
                    [-s * e[1] * kf[0], -s * e[1] * kf[1]],
                ]
            }
        }
    }

    /// `(v·∇)σ` at `x`.
    pub fn directional(&self, x: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        let j = self.jacobian(x);
        [
            j[0][0] * v[0] + j[0][1] * v[1],
            j[1][0] * v[0] + j[1][1] * v[1],
        ]
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            SigmaField::Constant { c } => c[0].hypot(c[1]),
            SigmaField::Mode { amplitude, .. } => amplitude.abs(),
        }
    }

    fn wavenumber_norm(&self) -> f64 {
        match *self {
            SigmaField::Constant { .. } => 0.0,
            SigmaField::Mode { k, .. } => (k[0] as f64).hypot(k[1] as f64),
        }
    }

    /// `Σ_{|β| <= 2} sup |∂^β σ|`, with derivatives of order `m` of a mode
    /// bounded by `a |k|^m`.
    pub fn c2_norm(&self) -> f64 {
        let k = self.wavenumber_norm();
        self.sup_norm() * (1.0 + k + k * k)
    }

    /// `Σ_{|β| <= 3} sup |∂^β σ|` in the same convention.
    pub fn c3_norm(&self) -> f64 {
        let k = self.wavenumber_norm();
        self.sup_norm() * (1.0 + k + k * k + k * k * k)
    }

    /// Samples on the `n × n` grid.
    pub fn sample(&self, n: usize) -> VelocityGrid {
        let h = TAU / n as f64;
        let mut g = VelocityGrid::zeros(n);
        for k in 0..n * n {
            let v = self.eval([(k / n) as f64 * h, (k % n) as f64 * h]);
            g.u1[k] = v[0];
            g.u2[k] = v[1];
        }
        g
    }

    /// Largest spectral divergence of the sampled field on an `n × n` grid.
    pub fn divergence_defect(&self, n: usize) -> f64 {
        let fft = Fft2::new(n);
        self.sample(n)
            .divergence(&fft)
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `Σ_j Σ_{m <= 3} max_{|β| = m} sup |∂^β (σ_j - τ_j)|`, derivatives taken
/// spectrally from samples on an `n × n` grid.
pub fn c3_distance(a: &[SigmaField], b: &[SigmaField], n: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} and {} noise fields",
            a.len(),
            b.len()
        )));
    }
    crate::torus::check_resolution(n)?;
    let fft = Fft2::new(n);
    let k = |idx: usize| crate::torus::wavenumber(idx, n) as f64;
    let nyquist = |idx: usize| n > 1 && idx == n / 2;
    let mut total = 0.0;
    for (s, t) in a.iter().zip(b) {
        let (gs, gt) = (s.sample(n), t.sample(n));
        let d1: Vec<f64> = gs.u1.iter().zip(&gt.u1).map(|(x, y)| x - y).collect();
        let d2: Vec<f64> = gs.u2.iter().zip(&gt.u2).map(|(x, y)| x - y).collect();
        for order in 0..=3u32 {
            let mut best = 0.0f64;
            for e1 in 0..=order {
                let e2 = order - e1;
                let mult = |p: usize, q: usize| {
                    if (e1 % 2 == 1 && nyquist(p)) || (e2 % 2 == 1 && nyquist(q)) {
                        return rustfft::num_complex::Complex64::new(0.0, 0.0);
                    }
                    let i = rustfft::num_complex::Complex64::new(0.0, 1.0);
                    (i * k(p)).powu(e1) * (i * k(q)).powu(e2)
                };
                let v1 = fft.apply(&d1, mult);
                let v2 = fft.apply(&d2, mult);
                best = v1
                    .iter()
                    .zip(&v2)
                    .fold(best, |m, (x, y)| m.max(x.hypot(*y)));
            }
            total += best;
        }
    }
    Ok(total)
}

/// Sign `ε` in front of the noise term of the flow equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Noise fields, the rough path driving them and the sign convention.
#[derive(Debug, Clone)]
pub struct DriverPair {
    sigma: Vec<SigmaField>,
    rough_path: RoughPath,
    sign: Sign,
}

const DIVERGENCE_GRID: usize = 64;
const DIVERGENCE_TOL: f64 = 1e-10;

impl DriverPair {
    pub fn new(sigma: Vec<SigmaField>, rough_path: RoughPath, sign: Sign) -> Result<Self> {
        if sigma.len() != rough_path.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} noise fields for a {}-dimensional rough path",
                sigma.len(),
                rough_path.dim()
            )));
        }
        for s in &sigma {
            s.validate()?;
            let div = s.divergence_defect(DIVERGENCE_GRID);
            if div > DIVERGENCE_TOL * (1.0 + s.c3_norm()) {
                return Err(Error::NotDivergenceFree(div));
            }
        }
        Ok(Self {
            sigma,
            rough_path,
            sign,
        })
    }

    pub fn sigma(&self) -> &[SigmaField] {
        &self.sigma
    }

    pub fn rough_path(&self) -> &RoughPath {
        &self.rough_path
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn with_rough_path(&self, rough_path: RoughPath) -> Result<Self> {
        Self::new(self.sigma.clone(), rough_path, self.sign)
    }

    pub fn with_sign(&self, sign: Sign) -> Self {
        Self {
            sign,
            ..self.clone()
        }
    }

    /// `Σ_j ‖σ_j‖_{C³}`.
    pub fn c3_norm(&self) -> f64 {
        self.sigma.iter().map(|s| s.c3_norm()).sum()
    }

    pub fn c2_norm(&self) -> f64 {
        self.sigma.iter().map(|s| s.c2_norm()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.sigma.iter().map(|s| s.sup_norm()).sum()
    }

    /// `ε Σ_j σ_j(x) Z^j` for a first-level increment `z`.
    pub fn first_order(&self, x: [f64; 2], z: &[f64]) -> [f64; 2] {
        let e = self.sign.value();
        let mut out = [0.0; 2];
        for (s, zj) in self.sigma.iter().zip(z) {
            let v = s.eval(x);
            out[0] += e * v[0] * zj;
            out[1] += e * v[1] * zj;
        }
        out
    }

    /// `Σ_{i,j} ((σ_i·∇)σ_j)(x) 𝕫^{i,j}` for a second-level increment `zz`
    /// (the `ε²` factor is one).
    pub fn second_order(&self, x: [f64; 2], zz: &[f64]) -> [f64; 2] {
        let m = self.sigma.len();
        let vals: Vec<[f64; 2]> = self.sigma.iter().map(|s| s.eval(x)).collect();
        let mut out = [0.0; 2];
        for j in 0..m {
            if matches!(self.sigma[j], SigmaField::Constant { .. }) {
                continue;
            }
            let jac = self.sigma[j].jacobian(x);
            for (i, vi) in vals.iter().enumerate() {
                let c = zz[i * m + j];
                if c == 0.0 {
                    continue;
                }
                out[0] += c * (jac[0][0] * vi[0] + jac[0][1] * vi[1]);
                out[1] += c * (jac[1][0] * vi[0] + jac[1][1] * vi[1]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rough_path::SampledPath;

    #[test]
    fn c3_distance_of_amplitude_change() {
        let mode = |a: f64, k: [i32; 2]| SigmaField::Mode {
            amplitude: a,
            k,
            phase: 0.4,
        };
        let d = c3_distance(&[mode(0.3, [1, 1])], &[mode(0.2, [1, 1])], 32).unwrap();
        assert!((d - 0.4).abs() < 1e-3, "{d}");
        let d = c3_distance(&[mode(0.3, [2, 0])], &[mode(0.2, [2, 0])], 32).unwrap();
        assert!((d - 1.5).abs() < 1e-2, "{d}");
        assert_eq!(
            c3_distance(&[mode(0.3, [2, 0])], &[mode(0.3, [2, 0])], 16).unwrap(),
            0.0
        );
        assert!(c3_distance(&[mode(0.3, [2, 0])], &[], 16).is_err());
    }

    #[test]
    fn mode_is_divergence_free_with_exact_jacobian() {
        let s = SigmaField::Mode {
            amplitude: 0.7,
            k: [2, -3],
            phase: 0.4,
        };
        assert!(s.divergence_defect(32) < 1e-12);
        let x = [1.3, 0.2];
        let j = s.jacobian(x);
        assert!((j[0][0] + j[1][1]).abs() < 1e-14);
        let h = 1e-6;
        for m in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[m] += h;
            xm[m] -= h;
            for l in 0..2 {
                let fd = (s.eval(xp)[l] - s.eval(xm)[l]) / (2.0 * h);
                assert!((fd - j[l][m]).abs() < 1e-8);
            }
        }
        let k: f64 = 13f64.sqrt();
        assert!((s.c3_norm() - 0.7 * (1.0 + k + k * k + k * k * k)).abs() < 1e-12);
    }

    #[test]
    fn driver_checks_dimensions() {
        let path = SampledPath::from_fn(4, 1.0, 2, |t| vec![t, -t]).unwrap();
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        let one = vec![SigmaField::Constant { c: [1.0, 0.0] }];
        assert!(DriverPair::new(one, rp.clone(), Sign::Plus).is_err());
        let bad = vec![
            SigmaField::Constant { c: [1.0, 0.0] },
            SigmaField::Mode {
                amplitude: 1.0,
                k: [0, 0],
                phase: 0.0,
            },
        ];
        assert!(DriverPair::new(bad, rp, Sign::Plus).is_err());
    }
}
