use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::torus::{
    self, gamma, interpolate, mollify, torus_distance, wrap, Interpolation, VelocityGrid,
    VorticityGrid,
};

/// Time-dependent drift on the torus.
pub trait VelocityField: Send + Sync {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2];

    /// `sup_{t,x} |u(t,x)|`, or an upper bound.
    fn sup_norm(&self) -> f64;

    fn velocities(&self, t: f64, xs: &[[f64; 2]]) -> Vec<[f64; 2]> {
        xs.par_iter().map(|x| self.velocity(t, *x)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroVelocity;

impl VelocityField for ZeroVelocity {
    fn velocity(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }

    fn sup_norm(&self) -> f64 {
        0.0
    }

    fn velocities(&self, _t: f64, xs: &[[f64; 2]]) -> Vec<[f64; 2]> {
        vec![[0.0; 2]; xs.len()]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantVelocity(pub [f64; 2]);

impl VelocityField for ConstantVelocity {
    fn velocity(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        self.0
    }

    fn sup_norm(&self) -> f64 {
        self.0[0].hypot(self.0[1])
    }
}

/// Closed-form drift with a user-supplied sup-norm bound.
pub struct AnalyticVelocity {
    f: Box<dyn Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync>,
    bound: f64,
}

impl AnalyticVelocity {
    pub fn new(bound: f64, f: impl Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            bound,
        }
    }
}

impl VelocityField for AnalyticVelocity {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        (self.f)(t, x)
    }

    fn sup_norm(&self) -> f64 {
        self.bound
    }
}

/// Piecewise-constant-in-time sequence of grid velocities. Frame `k` is
/// used on `[times[k], times[k+1])`.
#[derive(Debug, Clone)]
pub struct GridVelocity {
    times: Vec<f64>,
    frames: Vec<VelocityGrid>,
    method: Interpolation,
}

impl GridVelocity {
    pub fn new(times: Vec<f64>, frames: Vec<VelocityGrid>, method: Interpolation) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty);
        }
        if times.len() != frames.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneTimes { index: k + 1 });
        }
        let n = frames[0].n;
        if frames.iter().any(|f| f.n != n) {
            return Err(Error::GridMismatch("frames of different resolution".into()));
        }
        Ok(Self {
            times,
            frames,
            method,
        })
    }

    /// Time-independent drift.
    pub fn steady(frame: VelocityGrid, method: Interpolation) -> Self {
        Self {
            times: vec![0.0],
            frames: vec![frame],
            method,
        }
    }

    /// Biot–Savart velocity of a vorticity field.
    pub fn from_vorticity(w: &VorticityGrid, method: Interpolation) -> Result<Self> {
        Ok(Self::steady(torus::biot_savart(&w.mean_free())?, method))
    }

    /// Every frame convolved with the bump of radius `eta`.
    pub fn mollified(&self, eta: f64) -> Result<Self> {
        let n = self.frames[0].n;
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let u1 = mollify(&VorticityGrid::new(n, f.u1.clone())?, eta)?.into_values();
                let u2 = mollify(&VorticityGrid::new(n, f.u2.clone())?, eta)?.into_values();
                Ok(VelocityGrid { n, u1, u2 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: self.times.clone(),
            frames,
            method: self.method,
        })
    }

    pub fn frames(&self) -> &[VelocityGrid] {
        &self.frames
    }

    fn frame(&self, t: f64) -> &VelocityGrid {
        let k = self.times.partition_point(|&s| s <= t + 1e-12);
        &self.frames[k.saturating_sub(1)]
    }
}

impl VelocityField for GridVelocity {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        self.velocities(t, &[x])[0]
    }

    fn sup_norm(&self) -> f64 {
        self.frames.iter().map(|f| f.sup_norm()).fold(0.0, f64::max)
    }

    fn velocities(&self, t: f64, xs: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let f = self.frame(t);
        let a = interpolate(f.n, &f.u1, xs, self.method).expect("frame resolution checked");
        let b = interpolate(f.n, &f.u2, xs, self.method).expect("frame resolution checked");
        a.into_iter().zip(b).map(|(u1, u2)| [u1, u2]).collect()
    }
}

/// `-u(pivot - s, x)`: drift of the backward flow.
pub struct ReversedVelocity {
    base: Arc<dyn VelocityField>,
    pivot: f64,
}

impl ReversedVelocity {
    pub fn new(base: Arc<dyn VelocityField>, pivot: f64) -> Self {
        Self { base, pivot }
    }

    fn time(&self, s: f64) -> f64 {
        // the forward drift is evaluated at left endpoints; the backward step
        // [s, s+h] covers forward [pivot-s-h, pivot-s]
        self.pivot - s
    }
}

impl VelocityField for ReversedVelocity {
    fn velocity(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let u = self.base.velocity(self.time(t), x);
        [-u[0], -u[1]]
    }

    fn sup_norm(&self) -> f64 {
        self.base.sup_norm()
    }

    fn velocities(&self, t: f64, xs: &[[f64; 2]]) -> Vec<[f64; 2]> {
        self.base
            .velocities(self.time(t), xs)
            .into_iter()
            .map(|u| [-u[0], -u[1]])
            .collect()
    }
}

/// Sampled log-Lipschitz constant
/// `max |u(t,x) - u(t,y)| / γ(|x - y|)` over `pairs` random pairs at
/// log-uniform distances in `[1e-4, 1]`.
pub fn log_lipschitz_constant(
    field: &dyn VelocityField,
    t: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(pairs);
    let mut ys = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let x = [
            rng.random::<f64>() * std::f64::consts::TAU,
            rng.random::<f64>() * std::f64::consts::TAU,
        ];
        let r = 10f64.powf(rng.random_range(-4.0..0.0));
        let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        xs.push(x);
        ys.push([wrap(x[0] + r * th.cos()), wrap(x[1] + r * th.sin())]);
    }
    let ux = field.velocities(t, &xs);
    let uy = field.velocities(t, &ys);
    let mut best = 0.0f64;
    for k in 0..pairs {
        let d = torus_distance(xs[k], ys[k]);
        if d == 0.0 {
            continue;
        }
        let du = (ux[k][0] - uy[k][0]).hypot(ux[k][1] - uy[k][1]);
        best = best.max(du / gamma(d)?);
    }
    Ok(best)
}
