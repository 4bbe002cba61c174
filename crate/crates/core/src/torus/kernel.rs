//! Closed-form periodic Green's function and Biot–Savart kernel, and the
//! quadrature check of the kernel's log-Lipschitz integral property
//!
//! ```text
//! ∫_{𝕋²} |K(x - y) - K(x' - y)| dy  <=  C γ(|x - x'|).
//! ```

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use super::{gamma, torus_distance, wrap_signed};
use crate::error::{Error, Result};

/// Frozen constant of the log-Lipschitz check. Measured ratios
/// `lhs / γ(d)` stay below 1.97 for `d ∈ [1e-6, 4]` and
/// `N ∈ {64, 128, 256, 512}`.
pub const KERNEL_CHECK_CONSTANT: f64 = 3.0;

/// Series terms are dropped once `e^{-kπ}` falls below this.
const SERIES_TOL: f64 = 1e-18;

struct Parts {
    /// bracket value `2π(S + R) + π²/3 - πa + a²/2`
    value: f64,
    d_a: f64,
    d_b: f64,
}

/// With `a = |x₁|`, `b = x₂` (both wrapped), the lattice sum in `x₁` gives
///
/// ```text
/// -4π² G = 2π (S + R) + π²/3 - π a + a²/2,
/// S = -½ ln(1 - 2e^{-a} cos b + e^{-2a}),
/// R = Σ_k cos(k b) f_k(a) / k,  f_k = (e^{-k(2π-a)} + e^{-k(2π+a)}) / (1 - e^{-2kπ}).
/// ```
fn parts(a: f64, b: f64) -> Parts {
    let ea = (-a).exp();
    let (sb, cb) = b.sin_cos();
    let dd = 1.0 - 2.0 * ea * cb + ea * ea;
    let s = -0.5 * dd.ln();
    let s_a = -(ea * cb - ea * ea) / dd;
    let s_b = -ea * sb / dd;
    let (mut r, mut r_a, mut r_b) = (0.0, 0.0, 0.0);
    let mut k = 1.0f64;
    loop {
        let q = (-k * TAU).exp();
        let plus = (-k * (TAU - a)).exp();
        let minus = (-k * (TAU + a)).exp();
        if plus < SERIES_TOL {
            break;
        }
        let denom = 1.0 - q;
        let f = (plus + minus) / denom;
        let fp = k * (plus - minus) / denom;
        let (skb, ckb) = (k * b).sin_cos();
        r += ckb * f / k;
        r_a += ckb * fp / k;
        r_b -= skb * f;
        k += 1.0;
    }
    Parts {
        value: TAU * (s + r) + PI * PI / 3.0 - PI * a + 0.5 * a * a,
        d_a: TAU * (s_a + r_a) - PI + a,
        d_b: TAU * (s_b + r_b),
    }
}

/// Mean-free periodic solution of `ΔG = δ - 1/4π²`.
pub fn green_function(v: [f64; 2]) -> f64 {
    let a = wrap_signed(v[0]).abs();
    let b = wrap_signed(v[1]);
    -parts(a, b).value / (4.0 * PI * PI)
}

/// `K = ∇^⊥ G = (-∂₂G, ∂₁G)`, so that `u = K ∗ w`.
pub fn biot_savart_kernel(v: [f64; 2]) -> [f64; 2] {
    let x1 = wrap_signed(v[0]);
    let b = wrap_signed(v[1]);
    let p = parts(x1.abs(), b);
    let c = -1.0 / (4.0 * PI * PI);
    let g1 = c * x1.signum() * p.d_a;
    let g2 = c * p.d_b;
    [-g2, g1]
}

/// Free-space principal part `v^⊥ / (2π|v|²)`.
fn principal_part(v: [f64; 2]) -> [f64; 2] {
    let r2 = v[0] * v[0] + v[1] * v[1];
    [-v[1] / (TAU * r2), v[0] / (TAU * r2)]
}

/// Lipschitz constant of `K - K₀` on `|v| <= 1/2` (sampled, with margin).
fn smooth_part_lipschitz() -> f64 {
    static CACHE: OnceLock<f64> = OnceLock::new();
    *CACHE.get_or_init(|| {
        let smooth = |v: [f64; 2]| {
            let k = biot_savart_kernel(v);
            let k0 = principal_part(v);
            [k[0] - k0[0], k[1] - k0[1]]
        };
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for ri in 1..=40 {
            let r = 0.5 * ri as f64 / 40.0;
            for ti in 0..48 {
                let th = TAU * ti as f64 / 48.0;
                let v = [r * th.cos(), r * th.sin()];
                for dir in [[eps, 0.0], [0.0, eps]] {
                    let p = smooth([v[0] + dir[0], v[1] + dir[1]]);
                    let m = smooth([v[0] - dir[0], v[1] - dir[1]]);
                    let g = ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt() / (2.0 * eps);
                    worst = worst.max(g);
                }
            }
        }
        1.5 * worst
    })
}

/// Complete elliptic integral of the first kind, `K(m)`, via the AGM.
fn elliptic_k(m: f64) -> f64 {
    let (mut a, mut b) = (1.0f64, (1.0 - m).max(0.0).sqrt());
    for _ in 0..60 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= 1e-16 * an {
            a = an;
            break;
        }
        a = an;
        b = bn;
    }
    PI / (2.0 * a)
}

/// `J(λ) = ∫_{|z|<λ} |K₀(z + e/2) - K₀(z - e/2)| dz` for a unit vector `e`.
///
/// Using `|a/|a|² - b/|b|²| = |a - b| / (|a||b|)` and integrating the angle
/// in closed form, `J(λ) = (2/π) ∫_0^λ r K(r²/A²) / A dr` with `A = r² + ¼`.
fn principal_difference_integral(lambda: f64) -> f64 {
    let g = |r: f64| {
        let a = r * r + 0.25;
        let m = (r * r / (a * a)).min(1.0 - 1e-300);
        2.0 / PI * r * elliptic_k(m) / a
    };
    let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize| {
        if hi <= lo {
            return 0.0;
        }
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    };
    // r = ½ - ½u² on [0, ½]; r = ½ + u² on [½, min(λ, 2)]; r = e^s beyond.
    let left_end = lambda.min(0.5);
    let u_left = ((0.5 - left_end) * 2.0).sqrt();
    let left = simpson(
        &|u: f64| {
            let r = 0.5 - 0.5 * u * u;
            if u == 0.0 {
                0.0
            } else {
                g(r) * u
            }
        },
        u_left,
        1.0,
        4000,
    );
    let mut total = left;
    if lambda > 0.5 {
        let hi = lambda.min(2.0);
        total += simpson(
            &|u: f64| {
                if u == 0.0 {
                    0.0
                } else {
                    g(0.5 + u * u) * 2.0 * u
                }
            },
            0.0,
            (hi - 0.5).sqrt(),
            4000,
        );
    }
    if lambda > 2.0 {
        total += simpson(&|s: f64| g(s.exp()) * s.exp(), 2f64.ln(), lambda.ln(), 4000);
    }
    total
}

/// Two sides of the kernel inequality at one pair of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCheck {
    pub distance: f64,
    /// Midpoint quadrature over cells outside the excised region.
    pub quadrature: f64,
    /// Analytic bound for the excised neighbourhood of the singularities.
    pub excised: f64,
    pub excision_radius: f64,
    /// `quadrature + excised`
    pub lhs: f64,
    /// `C γ(d)`
    pub rhs: f64,
}

/// Evaluates `∫ |K(x-y) - K(x'-y)| dy` with an `N × N` midpoint rule,
/// excising the singular neighbourhood (radius `2π/N` around each point)
/// and bounding it analytically.
pub fn kernel_log_lipschitz_check(x: [f64; 2], xp: [f64; 2], n: usize) -> Result<KernelCheck> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!(
            "quadrature resolution {n} is too coarse"
        )));
    }
    if !(x[0].is_finite() && x[1].is_finite() && xp[0].is_finite() && xp[1].is_finite()) {
        return Err(Error::NonFinite {
            what: "kernel check points",
        });
    }
    let rho = TAU / n as f64;
    let d = torus_distance(x, xp);
    if d == 0.0 {
        return Ok(KernelCheck {
            distance: 0.0,
            quadrature: 0.0,
            excised: 0.0,
            excision_radius: rho,
            lhs: 0.0,
            rhs: 0.0,
        });
    }
    let dv = [wrap_signed(xp[0] - x[0]), wrap_signed(xp[1] - x[1])];
    let lip = smooth_part_lipschitz();
    // Excised set in coordinates v = y - x: one ball around the midpoint when
    // the points are close, two balls otherwise.
    let close = d < 4.0 * rho;
    let mid = [0.5 * dv[0], 0.5 * dv[1]];
    let big_r = rho + 0.5 * d;
    let excluded = |v: [f64; 2]| {
        if close {
            torus_distance(v, mid) < big_r
        } else {
            torus_distance(v, [0.0, 0.0]) < rho || torus_distance(v, dv) < rho
        }
    };
    let excised = if close {
        // principal parts exactly, smooth parts through their Lipschitz bound
        d * principal_difference_integral(big_r / d) + d * lip * PI * big_r * big_r
    } else {
        // inside B(x, ρ): |K(x-y)| integrates to at most ρ + πρ²·lip·ρ, and
        // |K(x'-y)| is bounded by its value at distance d - ρ
        let far = 1.0 / (TAU * (d - rho)) + lip * (d + rho);
        2.0 * (rho + PI * rho * rho * (lip * rho + far))
    };
    let h = TAU / n as f64;
    let quadrature: f64 = (0..n * n)
        .map(|k| {
            let v = [
                ((k / n) as f64 + 0.5) * h - PI,
                ((k % n) as f64 + 0.5) * h - PI,
            ];
            if excluded(v) {
                return 0.0;
            }
            let a = biot_savart_kernel([-v[0], -v[1]]);
            let b = biot_savart_kernel([dv[0] - v[0], dv[1] - v[1]]);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .sum::<f64>()
        * h
        * h;
    let lhs = quadrature + excised;
    Ok(KernelCheck {
        distance: d,
        quadrature,
        excised,
        excision_radius: rho,
        lhs,
        rhs: KERNEL_CHECK_CONSTANT * gamma(d)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_matches_gradient_of_green() {
        let h = 1e-6;
        for v in [[0.3, -1.2], [2.5, 2.9], [-3.0, 0.4], [1e-2, 2e-2]] {
            let g1 =
                (green_function([v[0] + h, v[1]]) - green_function([v[0] - h, v[1]])) / (2.0 * h);
            let g2 =
                (green_function([v[0], v[1] + h]) - green_function([v[0], v[1] - h])) / (2.0 * h);
            let k = biot_savart_kernel(v);
            assert!((k[0] + g2).abs() < 1e-6 * (1.0 + g2.abs()));
            assert!((k[1] - g1).abs() < 1e-6 * (1.0 + g1.abs()));
        }
    }

    #[test]
    fn green_is_periodic_and_harmonic_off_origin() {
        let v = [1.1, -0.7];
        assert!((green_function(v) - green_function([v[0] + TAU, v[1] - TAU])).abs() < 1e-13);
        let h = 1e-3;
        let lap = (green_function([v[0] + h, v[1]])
            + green_function([v[0] - h, v[1]])
            + green_function([v[0], v[1] + h])
            + green_function([v[0], v[1] - h])
            - 4.0 * green_function(v))
            / (h * h);
        assert!((lap + 1.0 / (4.0 * PI * PI)).abs() < 1e-5);
    }

    #[test]
    fn kernel_near_origin_is_principal() {
        let v = [1e-4, -2e-4];
        let k = biot_savart_kernel(v);
        let k0 = principal_part(v);
        assert!((k[0] - k0[0]).abs() < 1e-2);
        assert!((k[1] - k0[1]).abs() < 1e-2);
    }

    #[test]
    fn elliptic_and_principal_integral() {
        assert!((elliptic_k(0.0) - PI / 2.0).abs() < 1e-15);
        assert!((elliptic_k(0.5) - 1.854_074_677_301_372).abs() < 1e-12);
        // J grows like ln λ for large λ
        let a = principal_difference_integral(100.0);
        let b = principal_difference_integral(1000.0);
        assert!((b - a - 10f64.ln()).abs() < 1e-2, "{a} {b}");
    }

    #[test]
    fn coincident_points() {
        let c = kernel_log_lipschitz_check([1.0, 2.0], [1.0, 2.0], 64).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    }
}
