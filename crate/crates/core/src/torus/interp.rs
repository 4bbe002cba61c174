use std::f64::consts::TAU;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{wavenumber, wrap, Fft2, VorticityGrid};
use crate::error::{Error, Result};

/// Point evaluation scheme for grid fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Trigonometric interpolant; exact on every resolved mode.
    Spectral,
    /// Tensor-product four-point Lagrange interpolation.
    #[default]
    Cubic,
}

/// Values of the grid field `values` (resolution `n`) at `points`.
pub fn interpolate(
    n: usize,
    values: &[f64],
    points: &[[f64; 2]],
    method: Interpolation,
) -> Result<Vec<f64>> {
    super::check_resolution(n)?;
    if values.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for a {n}x{n} grid",
            values.len()
        )));
    }
    Ok(match method {
        Interpolation::Cubic => points.par_iter().map(|p| cubic_at(n, values, *p)).collect(),
        Interpolation::Spectral => {
            let spec = Fft2::new(n).forward_real(values);
            points
                .par_iter()
                .map(|p| spectral_at(n, &spec, *p))
                .collect()
        }
    })
}

fn lagrange_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

fn cubic_at(n: usize, values: &[f64], p: [f64; 2]) -> f64 {
    let h = TAU / n as f64;
    let s1 = wrap(p[0]) / h;
    let s2 = wrap(p[1]) / h;
    let (i0, j0) = (s1.floor(), s2.floor());
    let wa = lagrange_weights(s1 - i0);
    let wb = lagrange_weights(s2 - j0);
    let (i0, j0) = (i0 as i64, j0 as i64);
    let ni = n as i64;
    let mut acc = 0.0;
    for (a, wa) in wa.iter().enumerate() {
        let i = (i0 + a as i64 - 1).rem_euclid(ni) as usize;
        let mut row = 0.0;
        for (b, wb) in wb.iter().enumerate() {
            let j = (j0 + b as i64 - 1).rem_euclid(ni) as usize;
            row += wb * values[i * n + j];
        }
        acc += wa * row;
    }
    acc
}

/// Basis values on one axis; the Nyquist mode uses `cos` so real data
/// stays real and nodes are reproduced exactly.
fn axis_basis(n: usize, x: f64) -> Vec<Complex64> {
    (0..n)
        .map(|a| {
            let k = wavenumber(a, n) as f64;
            if n.is_multiple_of(2) && a == n / 2 {
                Complex64::new((k * x).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, k * x)
            }
        })
        .collect()
}

fn spectral_at(n: usize, spec: &[Complex64], p: [f64; 2]) -> f64 {
    let e1 = axis_basis(n, p[0]);
    let e2 = axis_basis(n, p[1]);
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..n {
        let row: Complex64 = spec[a * n..(a + 1) * n]
            .iter()
            .zip(&e2)
            .map(|(c, e)| c * e)
            .sum();
        acc += row * e1[a];
    }
    acc.re / (n * n) as f64
}

/// Regular `m × m` lattice of points on the grid `(2πi/m, 2πj/m)`.
pub fn lattice_points(m: usize) -> Vec<[f64; 2]> {
    let h = TAU / m as f64;
    (0..m * m)
        .map(|k| [(k / m) as f64 * h, (k % m) as f64 * h])
        .collect()
}

const DEPOSIT_CHUNK: usize = 4096;

/// Cloud-in-cell deposition of equal-area particles carrying `weights`.
///
/// Each particle represents area `4π²/N_p`; the grid value is the carried
/// mass per cell area, so the grid integral equals `Σ w_p A_p` exactly up
/// to rounding. Chunks are accumulated independently and merged in chunk
/// order, making the result independent of the thread count.
pub fn deposit(positions: &[[f64; 2]], weights: &[f64], n: usize) -> Result<VorticityGrid> {
    super::check_resolution(n)?;
    if positions.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} positions and {} weights",
            positions.len(),
            weights.len()
        )));
    }
    if positions.len() < n * n {
        return Err(Error::Undersampled {
            particles: positions.len(),
            resolution: n,
        });
    }
    let h = TAU / n as f64;
    let cell_area = h * h;
    let particle_area = TAU * TAU / positions.len() as f64;
    let factor = particle_area / cell_area;
    let partials: Vec<Vec<f64>> = positions
        .par_chunks(DEPOSIT_CHUNK)
        .zip(weights.par_chunks(DEPOSIT_CHUNK))
        .map(|(pos, wts)| {
            let mut buf = vec![0.0; n * n];
            for (p, w) in pos.iter().zip(wts) {
                let s1 = wrap(p[0]) / h;
                let s2 = wrap(p[1]) / h;
                let (f1, f2) = (s1.floor(), s2.floor());
                let (a, b) = (s1 - f1, s2 - f2);
                let i = f1 as usize % n;
                let j = f2 as usize % n;
                let i1 = (i + 1) % n;
                let j1 = (j + 1) % n;
                let m = w * factor;
                buf[i * n + j] += m * (1.0 - a) * (1.0 - b);
                buf[i * n + j1] += m * (1.0 - a) * b;
                buf[i1 * n + j] += m * a * (1.0 - b);
                buf[i1 * n + j1] += m * a * b;
            }
            buf
        })
        .collect();
    let mut total = vec![0.0; n * n];
    for part in partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    VorticityGrid::new(n, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_reproduces_modes() {
        let g = VorticityGrid::from_fn(16, |x1, x2| x1.sin() + 0.3 * (2.0 * x1 - 3.0 * x2).cos())
            .unwrap();
        let pts = [[0.123, 4.5], [6.2, 0.01], [3.3, 3.3]];
        let v = interpolate(16, g.values(), &pts, Interpolation::Spectral).unwrap();
        for (p, v) in pts.iter().zip(&v) {
            let exact = p[0].sin() + 0.3 * (2.0 * p[0] - 3.0 * p[1]).cos();
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_and_nodes() {
        let c = vec![1.75; 64];
        let pts = [[0.4, 2.0], [5.0, 6.1]];
        for m in [Interpolation::Spectral, Interpolation::Cubic] {
            let v = interpolate(8, &c, &pts, m).unwrap();
            assert!(v.iter().all(|x| (x - 1.75).abs() < 1e-13));
        }
    }

    #[test]
    fn deposit_identity_on_lattice() {
        let n = 16;
        let pts = lattice_points(2 * n);
        let w = vec![0.7; pts.len()];
        let g = deposit(&pts, &w, n).unwrap();
        assert!(g.values().iter().all(|v| (v - 0.7).abs() < 1e-13));
        assert!(matches!(
            deposit(&lattice_points(8), &vec![1.0; 64], 16),
            Err(Error::Undersampled { .. })
        ));
    }
}
