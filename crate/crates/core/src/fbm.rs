//! Fractional Brownian motion by circulant embedding of the increment
//! covariance (Davies–Harte).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rough_path::{uniform_grid, RoughPath, SampledPath};

/// Reusable sampler for fBm on a uniform grid of `n` steps over `[0, T]`.
#[derive(Debug, Clone)]
pub struct FbmGenerator {
    hurst: f64,
    steps: usize,
    horizon: f64,
    /// `sqrt(λ_k / m)` for the circulant of size `m = 2n`.
    amplitudes: Vec<f64>,
}

pub fn check_hurst(hurst: f64) -> Result<()> {
    if !(hurst > 1.0 / 3.0 && hurst <= 0.5) {
        return Err(Error::HurstRange(hurst));
    }
    Ok(())
}

/// A variation exponent suitable for lifts of fBm with the given Hurst index.
pub fn exponent_for_hurst(hurst: f64) -> f64 {
    (1.0 / hurst + 0.1).min(2.95)
}

impl FbmGenerator {
    pub fn new(hurst: f64, steps: usize, horizon: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if steps < 2 {
            return Err(Error::TooFewNodes {
                required: 3,
                got: steps + 1,
            });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon {horizon}")));
        }
        let n = steps;
        let m = 2 * n;
        let dt = horizon / n as f64;
        let h2 = 2.0 * hurst;
        let gamma = |k: f64| {
            0.5 * dt.powf(h2)
                * ((k + 1.0).abs().powf(h2) - 2.0 * k.abs().powf(h2) + (k - 1.0).abs().powf(h2))
        };
        let mut row: Vec<Complex64> = (0..m)
            .map(|j| {
                let k = if j <= n { j } else { m - j };
                Complex64::new(gamma(k as f64), 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut row);
        let scale = row[0].re.abs().max(f64::MIN_POSITIVE);
        let mut amplitudes = Vec::with_capacity(m);
        for c in &row {
            let lam = c.re;
            if lam < -1e-10 * scale {
                return Err(Error::Hypothesis(format!(
                    "circulant embedding is not nonnegative definite (eigenvalue {lam:e})"
                )));
            }
            amplitudes.push((lam.max(0.0) / m as f64).sqrt());
        }
        Ok(Self {
            hurst,
            steps,
            horizon,
            amplitudes,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// One realization of the `n` increments of a scalar fBm.
    pub fn sample_increments<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.steps;
        let m = 2 * n;
        let mut w = vec![Complex64::new(0.0, 0.0); m];
        let half = std::f64::consts::FRAC_1_SQRT_2;
        w[0] = Complex64::new(
            self.amplitudes[0] * rng.sample::<f64, _>(StandardNormal),
            0.0,
        );
        w[n] = Complex64::new(
            self.amplitudes[n] * rng.sample::<f64, _>(StandardNormal),
            0.0,
        );
        for k in 1..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(a * half, b * half) * self.amplitudes[k];
            w[k] = z;
            w[m - k] = z.conj();
        }
        FftPlanner::new().plan_fft_forward(m).process(&mut w);
        w[..n].iter().map(|c| c.re).collect()
    }

    /// `dim` independent components, each started at zero.
    pub fn sample_path<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> SampledPath {
        let n = self.steps;
        let mut values = vec![0.0; (n + 1) * dim];
        for c in 0..dim {
            let inc = self.sample_increments(rng);
            let mut acc = 0.0;
            for (k, d) in inc.iter().enumerate() {
                acc += d;
                values[(k + 1) * dim + c] = acc;
            }
        }
        SampledPath {
            times: uniform_grid(n, self.horizon),
            dim,
            values,
        }
    }
}

/// Seeded `dim`-dimensional fBm on a uniform grid of `steps` steps.
pub fn sample_fbm(
    hurst: f64,
    steps: usize,
    horizon: f64,
    dim: usize,
    seed: u64,
) -> Result<SampledPath> {
    if dim == 0 {
        return Err(Error::DimensionMismatch(
            "dimension must be positive".into(),
        ));
    }
    let gen = FbmGenerator::new(hurst, steps, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gen.sample_path(dim, &mut rng))
}

/// Rough path of an fBm sample: the canonical lift of the piecewise-linear
/// interpolation at `oversample × steps` nodes, restricted to the working
/// grid of `steps` steps.
pub fn fbm_rough_path(
    hurst: f64,
    steps: usize,
    oversample: usize,
    horizon: f64,
    dim: usize,
    seed: u64,
) -> Result<RoughPath> {
    if oversample == 0 {
        return Err(Error::InvalidParameter(
            "oversampling factor must be positive".into(),
        ));
    }
    let fine = sample_fbm(hurst, steps * oversample, horizon, dim, seed)?;
    RoughPath::lift_piecewise_linear(&fine)?
        .coarsen(oversample)?
        .with_p(exponent_for_hurst(hurst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            FbmGenerator::new(0.3, 16, 1.0),
            Err(Error::HurstRange(_))
        ));
        assert!(matches!(
            FbmGenerator::new(0.6, 16, 1.0),
            Err(Error::HurstRange(_))
        ));
        assert!(FbmGenerator::new(0.4, 1, 1.0).is_err());
    }

    #[test]
    fn reproducible_from_seed() {
        let a = sample_fbm(0.4, 64, 1.0, 2, 11).unwrap();
        let b = sample_fbm(0.4, 64, 1.0, 2, 11).unwrap();
        let c = sample_fbm(0.4, 64, 1.0, 2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.value(0), &[0.0, 0.0]);
    }

    #[test]
    fn brownian_increment_variance() {
        let gen = FbmGenerator::new(0.5, 256, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..400 {
            for d in gen.sample_increments(&mut rng) {
                sum += d * d;
                count += 1;
            }
        }
        let var = sum / count as f64;
        assert!(
            (var * 256.0 - 1.0).abs() < 0.05,
            "variance ratio {}",
            var * 256.0
        );
    }
}
