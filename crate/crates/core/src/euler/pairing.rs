use rayon::prelude::*;

use crate::driver::SigmaField;
use crate::error::{Error, Result};

/// Trigonometric test functions `cos(k·x)` and `sin(k·x)` for a fixed set
/// of wavevectors. Index `2a` is the cosine of wavevector `a`, `2a + 1` the
/// sine.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFamily {
    wavevectors: Vec<[i32; 2]>,
}

impl TestFamily {
    pub fn new(wavevectors: Vec<[i32; 2]>) -> Result<Self> {
        if wavevectors.is_empty() {
            return Err(Error::Empty);
        }
        if wavevectors.contains(&[0, 0]) {
            return Err(Error::InvalidParameter(
                "test wavevector must be nonzero".into(),
            ));
        }
        Ok(Self { wavevectors })
    }

    /// Sixteen wavevectors: for each `m ∈ {1, 2, 4, 8}` the vectors
    /// `(m,0), (0,m), (m,1), (1,-m)`.
    pub fn standard() -> Self {
        let mut wavevectors = Vec::with_capacity(16);
        for m in [1, 2, 4, 8] {
            wavevectors.extend([[m, 0], [0, m], [m, 1], [1, -m]]);
        }
        Self { wavevectors }
    }

    pub fn wavevectors(&self) -> &[[i32; 2]] {
        &self.wavevectors
    }

    /// Number of test functions (two per wavevector).
    pub fn len(&self) -> usize {
        2 * self.wavevectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavevectors.is_empty()
    }

    fn wavenumber(&self, f: usize) -> f64 {
        let k = self.wavevectors[f / 2];
        (k[0] as f64).hypot(k[1] as f64)
    }

    /// `Σ_{m <= order} |k|^m`, the sup-type Sobolev weight of test function `f`.
    pub fn weight(&self, f: usize, order: u32) -> f64 {
        let k = self.wavenumber(f);
        (0..=order).map(|m| k.powi(m as i32)).sum()
    }

    pub fn eval(&self, f: usize, x: [f64; 2]) -> f64 {
        let k = self.wavevectors[f / 2];
        let theta = k[0] as f64 * x[0] + k[1] as f64 * x[1];
        if f.is_multiple_of(2) {
            theta.cos()
        } else {
            theta.sin()
        }
    }
}

/// Pairings of the particle measure `Σ_p w_p δ_{X_p} / N_p` with the test
/// family at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePairing {
    /// `w(ψ)`
    pub value: Vec<f64>,
    /// `w((σ_j·∇)ψ)`, index `j * F + f`.
    pub first: Vec<f64>,
    /// `w((σ_i·∇)(σ_j·∇)ψ)`, index `(i * M + j) * F + f`.
    pub second: Vec<f64>,
    /// `w(u·∇ψ)`
    pub drift: Vec<f64>,
}

const CHUNK: usize = 2048;

pub(crate) fn pair_particles(
    family: &TestFamily,
    sigma: &[SigmaField],
    positions: &[[f64; 2]],
    velocities: &[[f64; 2]],
    weights: &[f64],
) -> NodePairing {
    let f = family.len();
    let m = sigma.len();
    let width = f * (2 + m + m * m);
    let partials: Vec<Vec<f64>> = positions
        .par_chunks(CHUNK)
        .zip(velocities.par_chunks(CHUNK))
        .zip(weights.par_chunks(CHUNK))
        .map(|((pos, vel), wts)| {
            let mut acc = vec![0.0; width];
            let mut sv = vec![[0.0; 2]; m];
            let mut dd = vec![[0.0; 2]; m * m];
            for ((x, u), &w) in pos.iter().zip(vel).zip(wts) {
                for (j, s) in sigma.iter().enumerate() {
                    sv[j] = s.eval(*x);
                }
                for i in 0..m {
                    for j in 0..m {
                        dd[i * m + j] = sigma[j].directional(*x, sv[i]);
                    }
                }
                for (a, k) in family.wavevectors.iter().enumerate() {
                    let kf = [k[0] as f64, k[1] as f64];
                    let (s, c) = (kf[0] * x[0] + kf[1] * x[1]).sin_cos();
                    let dot = |v: [f64; 2]| v[0] * kf[0] + v[1] * kf[1];
                    // (value, derivative factor, second derivative factor) for cos and sin
                    let fns = [(c, -s, -c), (s, c, -s)];
                    for (b, (val, d1, d2)) in fns.into_iter().enumerate() {
                        let idx = 2 * a + b;
                        acc[idx] += w * val;
                        acc[f + idx] += w * dot(*u) * d1;
                        for j in 0..m {
                            acc[2 * f + j * f + idx] += w * dot(sv[j]) * d1;
                        }
                        for i in 0..m {
                            for j in 0..m {
                                let v = dot(dd[i * m + j]) * d1 + dot(sv[j]) * dot(sv[i]) * d2;
                                acc[(2 + m) * f + (i * m + j) * f + idx] += w * v;
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    let inv = 1.0 / positions.len() as f64;
    total.iter_mut().for_each(|v| *v *= inv);
    NodePairing {
        value: total[..f].to_vec(),
        drift: total[f..2 * f].to_vec(),
        first: total[2 * f..(2 + m) * f].to_vec(),
        second: total[(2 + m) * f..].to_vec(),
    }
}

/// Pairings recorded along a Lagrangian run at the nodes of the driver
/// grid, with the drift integral `∫_0^t w_r(u_r·∇ψ) dr` accumulated by the
/// trapezoid rule over every solver step.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingSeries {
    pub family: TestFamily,
    pub noise_dim: usize,
    pub times: Vec<f64>,
    pub nodes: Vec<NodePairing>,
    /// Cumulative drift integral at each driver node.
    pub drift_integral: Vec<Vec<f64>>,
    /// `max |I_h - I_{2h}|` between trapezoid sums on the solver grid and
    /// on every other solver node.
    pub richardson_gap: f64,
}

/// Incremental builder of a [`PairingSeries`].
#[derive(Debug)]
pub(crate) struct PairingRecorder {
    family: TestFamily,
    sigma: Vec<SigmaField>,
    weights: Vec<f64>,
    refine: usize,
    fine: Vec<f64>,
    coarse: Vec<f64>,
    prev: Option<(f64, Vec<f64>)>,
    prev2: Option<(f64, Vec<f64>)>,
    gap: f64,
    series: PairingSeries,
}

impl PairingRecorder {
    pub fn new(
        family: TestFamily,
        sigma: Vec<SigmaField>,
        weights: Vec<f64>,
        refine: usize,
    ) -> Self {
        let f = family.len();
        let m = sigma.len();
        Self {
            series: PairingSeries {
                family: family.clone(),
                noise_dim: m,
                times: Vec::new(),
                nodes: Vec::new(),
                drift_integral: Vec::new(),
                richardson_gap: 0.0,
            },
            family,
            sigma,
            weights,
            refine,
            fine: vec![0.0; f],
            coarse: vec![0.0; f],
            prev: None,
            prev2: None,
            gap: 0.0,
        }
    }

    pub fn observe(&mut self, k: usize, t: f64, positions: &[[f64; 2]], velocities: &[[f64; 2]]) {
        let node = pair_particles(
            &self.family,
            &self.sigma,
            positions,
            velocities,
            &self.weights,
        );
        if let Some((t0, d0)) = &self.prev {
            let h = t - t0;
            for ((acc, a), b) in self.fine.iter_mut().zip(d0).zip(&node.drift) {
                *acc += 0.5 * h * (a + b);
            }
        }
        if k.is_multiple_of(2) {
            if let Some((t0, d0)) = &self.prev2 {
                let h = t - t0;
                for ((acc, a), b) in self.coarse.iter_mut().zip(d0).zip(&node.drift) {
                    *acc += 0.5 * h * (a + b);
                }
            }
            self.prev2 = Some((t, node.drift.clone()));
            for (a, b) in self.fine.iter().zip(&self.coarse) {
                self.gap = self.gap.max((a - b).abs());
            }
        }
        self.prev = Some((t, node.drift.clone()));
        if k.is_multiple_of(self.refine) {
            self.series.times.push(t);
            self.series.drift_integral.push(self.fine.clone());
            self.series.nodes.push(node);
        }
    }

    pub fn finish(mut self) -> PairingSeries {
        self.series.richardson_gap = self.gap;
        self.series
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::lattice_points;

    #[test]
    fn pairings_match_quadrature_of_closed_forms() {
        let family = TestFamily::new(vec![[1, 0], [2, 1]]).unwrap();
        let sigma = vec![SigmaField::Mode {
            amplitude: 0.5,
            k: [0, 1],
            phase: 0.3,
        }];
        let pos = lattice_points(64);
        let weights: Vec<f64> = pos
            .iter()
            .map(|x| (x[0] + 0.2).cos() + 0.5 * x[1].sin())
            .collect();
        let vel: Vec<[f64; 2]> = pos.iter().map(|x| [x[1].sin(), 0.3]).collect();
        let got = pair_particles(&family, &sigma, &pos, &vel, &weights);
        // finite-difference oracle for the derivative pairings
        let h = 1e-5;
        let grad = |f: usize, x: [f64; 2]| {
            [
                (family.eval(f, [x[0] + h, x[1]]) - family.eval(f, [x[0] - h, x[1]])) / (2.0 * h),
                (family.eval(f, [x[0], x[1] + h]) - family.eval(f, [x[0], x[1] - h])) / (2.0 * h),
            ]
        };
        let s = sigma[0];
        let dir = |f: usize, x: [f64; 2]| {
            let g = grad(f, x);
            let v = s.eval(x);
            v[0] * g[0] + v[1] * g[1]
        };
        for f in 0..family.len() {
            let mut value = 0.0;
            let mut drift = 0.0;
            let mut first = 0.0;
            let mut second = 0.0;
            for ((x, u), w) in pos.iter().zip(&vel).zip(&weights) {
                let g = grad(f, *x);
                value += w * family.eval(f, *x);
                drift += w * (u[0] * g[0] + u[1] * g[1]);
                first += w * dir(f, *x);
                let v = s.eval(*x);
                let d = [
                    (dir(f, [x[0] + h, x[1]]) - dir(f, [x[0] - h, x[1]])) / (2.0 * h),
                    (dir(f, [x[0], x[1] + h]) - dir(f, [x[0], x[1] - h])) / (2.0 * h),
                ];
                second += w * (v[0] * d[0] + v[1] * d[1]);
            }
            let n = pos.len() as f64;
            assert!((got.value[f] - value / n).abs() < 1e-12);
            assert!((got.drift[f] - drift / n).abs() < 1e-7);
            assert!((got.first[f] - first / n).abs() < 1e-7);
            assert!((got.second[f] - second / n).abs() < 1e-5);
        }
    }
}
