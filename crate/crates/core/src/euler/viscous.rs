use rustfft::num_complex::Complex64;

use crate::driver::SigmaField;
use crate::error::{Error, Result};
use crate::rough_path::RoughPath;
use crate::torus::{odd_wavenumber, wavenumber, Fft2, VorticityGrid};

/// Parameters of the viscous reference solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscousSetup {
    pub nu: f64,
    /// Largest time step; driver steps are split evenly below it.
    pub dt: f64,
    pub snapshots: usize,
    /// Accepted relative overshoot of `‖w_t‖_∞` over `‖w_0‖_∞`.
    pub max_principle_tolerance: f64,
}

impl ViscousSetup {
    pub fn new(nu: f64, dt: f64) -> Self {
        Self {
            nu,
            dt,
            snapshots: 64,
            max_principle_tolerance: 1e-2,
        }
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots.max(1);
        self
    }
}

#[derive(Debug, Clone)]
pub struct ViscousTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<VorticityGrid>,
    /// `max_t ‖w_t‖_∞ / ‖w_0‖_∞` over stored snapshots.
    pub max_ratio: f64,
    pub max_principle_ok: bool,
    pub steps: usize,
}

impl ViscousTrajectory {
    pub fn last(&self) -> &VorticityGrid {
        self.fields
            .last()
            .expect("trajectory has the initial field")
    }
}

struct Spectral {
    n: usize,
    fft: Fft2,
    k1: Vec<f64>,
    k2: Vec<f64>,
    odd1: Vec<f64>,
    odd2: Vec<f64>,
    keep: Vec<bool>,
    sigma: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Spectral {
    fn new(n: usize, sigma: &[SigmaField]) -> Self {
        let idx = |f: fn(usize, usize) -> f64| (0..n).map(|a| f(a, n)).collect::<Vec<_>>();
        let k: Vec<f64> = idx(|a, n| wavenumber(a, n) as f64);
        let cut = n as f64 / 3.0;
        let mut keep = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                keep[a * n + b] = k[a].abs() < cut && k[b].abs() < cut;
            }
        }
        let sigma = sigma
            .iter()
            .map(|s| {
                let g = s.sample(n);
                (g.u1, g.u2)
            })
            .collect();
        Self {
            n,
            fft: Fft2::new(n),
            k1: k.clone(),
            k2: k,
            odd1: idx(odd_wavenumber),
            odd2: idx(odd_wavenumber),
            keep,
            sigma,
        }
    }

    fn multiply(&self, spec: &[Complex64], m: impl Fn(usize, usize) -> Complex64) -> Vec<f64> {
        let n = self.n;
        let out: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(k, c)| c * m(k / n, k % n))
            .collect();
        self.fft.inverse_real(out)
    }

    /// `-(u - σ_j Ż^j)·∇w` in spectral form, dealiased, and the sup of the
    /// advecting velocity.
    fn transport(&self, spec: &[Complex64], zdot: &[f64]) -> (Vec<Complex64>, f64) {
        let i = Complex64::new(0.0, 1.0);
        let dw1 = self.multiply(spec, |a, _| i * self.odd1[a]);
        let dw2 = self.multiply(spec, |_, b| i * self.odd2[b]);
        let ksq = |a: usize, b: usize| self.k1[a] * self.k1[a] + self.k2[b] * self.k2[b];
        let u1 = self.multiply(spec, |a, b| {
            let q = ksq(a, b);
            if q == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                i * self.odd2[b] / q
            }
        });
        let u2 = self.multiply(spec, |a, b| {
            let q = ksq(a, b);
            if q == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                -i * self.odd1[a] / q
            }
        });
        let mut vmax = 0.0f64;
        let prod: Vec<f64> = (0..self.n * self.n)
            .map(|k| {
                let mut v1 = u1[k];
                let mut v2 = u2[k];
                for ((s1, s2), z) in self.sigma.iter().zip(zdot) {
                    v1 -= s1[k] * z;
                    v2 -= s2[k] * z;
                }
                vmax = vmax.max(v1.hypot(v2));
                -(v1 * dw1[k] + v2 * dw2[k])
            })
            .collect();
        let mut out = self.fft.forward_real(&prod);
        for (c, keep) in out.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        (out, vmax)
    }
}

/// Pseudo-spectral solver for `∂_t w + (u - σ_j Ż^j)·∇w = ν Δw`,
/// `u = K * w`, with `Z` the piecewise-linear path through the nodes of
/// `path`. Transport is integrated by RK4 and diffusion exactly through an
/// integrating factor; products are dealiased by the 2/3 rule.
pub fn solve_viscous_reference(
    w0: &VorticityGrid,
    sigma: &[SigmaField],
    path: &RoughPath,
    setup: &ViscousSetup,
) -> Result<ViscousTrajectory> {
    if !(setup.nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "viscosity must be positive, got {}",
            setup.nu
        )));
    }
    if !(setup.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {}",
            setup.dt
        )));
    }
    if sigma.len() != path.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise fields for a {}-dimensional path",
            sigma.len(),
            path.dim()
        )));
    }
    let n = w0.resolution();
    let sp = Spectral::new(n, sigma);
    let h_grid = w0.spacing();
    let mut spec = sp.fft.forward_real(w0.values());
    let sup0 = w0.sup_norm();
    let stride = path.num_steps().div_ceil(setup.snapshots).max(1);
    let mut times = vec![path.times()[0]];
    let mut fields = vec![w0.clone()];
    let mut max_ratio = 1.0f64;
    let mut steps = 0;
    for k in 0..path.num_steps() {
        let t0 = path.times()[k];
        let span = path.times()[k + 1] - t0;
        let zdot: Vec<f64> = path.step_increment(k).iter().map(|z| z / span).collect();
        let sub = (span / setup.dt).ceil().max(1.0) as usize;
        let h = span / sub as f64;
        let half: Vec<f64> = (0..n * n)
            .map(|q| {
                let (a, b) = (q / n, q % n);
                (-setup.nu * (sp.k1[a] * sp.k1[a] + sp.k2[b] * sp.k2[b]) * 0.5 * h).exp()
            })
            .collect();
        for m in 0..sub {
            let (a, vmax) = sp.transport(&spec, &zdot);
            if vmax * h > h_grid {
                return Err(Error::Cfl {
                    time: t0 + m as f64 * h,
                    value: vmax * h,
                    spacing: h_grid,
                });
            }
            let stage = |base: &[Complex64], inc: &[Complex64], c: f64| -> Vec<Complex64> {
                base.iter()
                    .zip(inc)
                    .zip(&half)
                    .map(|((w, d), e)| (w + d * c) * e)
                    .collect()
            };
            let (b, _) = sp.transport(&stage(&spec, &a, 0.5 * h), &zdot);
            let ew: Vec<Complex64> = spec.iter().zip(&half).map(|(w, e)| w * e).collect();
            let c_in: Vec<Complex64> = ew.iter().zip(&b).map(|(w, d)| w + d * (0.5 * h)).collect();
            let (c, _) = sp.transport(&c_in, &zdot);
            let d_in: Vec<Complex64> = ew
                .iter()
                .zip(&c)
                .zip(&half)
                .map(|((w, c), e)| (w + c * h) * e)
                .collect();
            let (d, _) = sp.transport(&d_in, &zdot);
            for q in 0..n * n {
                let e = half[q];
                spec[q] =
                    e * e * spec[q] + (h / 6.0) * (e * e * a[q] + 2.0 * e * (b[q] + c[q]) + d[q]);
            }
            steps += 1;
        }
        if (k + 1) % stride == 0 || k + 1 == path.num_steps() {
            let w = VorticityGrid::new(n, sp.fft.inverse_real(spec.clone()))?;
            if !w.values().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "viscous vorticity",
                });
            }
            if sup0 > 0.0 {
                max_ratio = max_ratio.max(w.sup_norm() / sup0);
            }
            times.push(path.times()[k + 1]);
            fields.push(w);
        }
    }
    Ok(ViscousTrajectory {
        times,
        fields,
        max_ratio,
        max_principle_ok: max_ratio <= 1.0 + setup.max_principle_tolerance,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rough_path::SampledPath;

    fn linear_path(n: usize, slope: f64) -> RoughPath {
        let p = SampledPath::from_fn(n, 1.0, 1, |t| vec![slope * t]).unwrap();
        RoughPath::lift_piecewise_linear(&p).unwrap()
    }

    #[test]
    fn single_mode_decays_exactly() {
        let w0 = VorticityGrid::from_fn(32, |x, _| x.cos()).unwrap();
        let sigma = [SigmaField::Constant { c: [0.0, 0.0] }];
        let out = solve_viscous_reference(
            &w0,
            &sigma,
            &linear_path(8, 0.0),
            &ViscousSetup::new(0.1, 0.01),
        )
        .unwrap();
        let exact = VorticityGrid::from_fn(32, |x, _| (-0.1f64).exp() * x.cos()).unwrap();
        assert!(out.last().l1_distance(&exact).unwrap() < 1e-10);
        assert!(out.max_principle_ok);
    }

    #[test]
    fn constant_noise_translates_decaying_mode() {
        let w0 = VorticityGrid::from_fn(32, |x, _| x.cos()).unwrap();
        let c = 0.8;
        let sigma = [SigmaField::Constant { c: [c, 0.0] }];
        let slope = 1.3;
        let out = solve_viscous_reference(
            &w0,
            &sigma,
            &linear_path(16, slope),
            &ViscousSetup::new(0.05, 0.01),
        )
        .unwrap();
        let exact =
            VorticityGrid::from_fn(32, |x, _| (-0.05f64).exp() * (x + c * slope).cos()).unwrap();
        let err = out.last().l1_distance(&exact).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let w0 = VorticityGrid::from_fn(16, |x, _| x.cos()).unwrap();
        let sigma = [SigmaField::Constant { c: [0.0, 0.0] }];
        assert!(solve_viscous_reference(
            &w0,
            &sigma,
            &linear_path(4, 0.0),
            &ViscousSetup::new(0.0, 0.01)
        )
        .is_err());
        let fast = [SigmaField::Constant { c: [50.0, 0.0] }];
        assert!(matches!(
            solve_viscous_reference(
                &w0,
                &fast,
                &linear_path(4, 1.0),
                &ViscousSetup::new(0.1, 0.1)
            ),
            Err(Error::Cfl { .. })
        ));
    }
}
