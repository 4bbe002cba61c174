use crate::error::{Error, Result};
use crate::rough_path::RoughPath;

/// Vector fields `V_1, …, V_M` on `ℝ^d` for `dY = V_j(Y) dZ^j`.
pub trait VectorFields {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// `V_j(y)`
    fn field(&self, j: usize, y: &[f64]) -> Vec<f64>;
    /// `((V_i·∇)V_j)(y)`
    fn second(&self, i: usize, j: usize, y: &[f64]) -> Vec<f64>;
}

/// Linear fields `V_j(y) = A_j y`, so `(V_i·∇)V_j = A_j A_i y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFields {
    dim: usize,
    matrices: Vec<Vec<f64>>,
}

impl LinearFields {
    /// Row-major `d × d` matrices.
    pub fn new(dim: usize, matrices: Vec<Vec<f64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::Empty);
        }
        if matrices.iter().any(|a| a.len() != dim * dim) {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim}x{dim} matrices"
            )));
        }
        Ok(Self { dim, matrices })
    }

    fn apply(&self, j: usize, y: &[f64]) -> Vec<f64> {
        let a = &self.matrices[j];
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| a[r * self.dim + c] * y[c]).sum())
            .collect()
    }
}

impl VectorFields for LinearFields {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.matrices.len()
    }

    fn field(&self, j: usize, y: &[f64]) -> Vec<f64> {
        self.apply(j, y)
    }

    fn second(&self, i: usize, j: usize, y: &[f64]) -> Vec<f64> {
        self.apply(j, &self.apply(i, y))
    }
}

/// Davie scheme for `dY = V_j(Y) dZ^j` on the nodes of `rp`; returns the
/// state at every node.
pub fn solve_euclidean(
    fields: &dyn VectorFields,
    y0: &[f64],
    rp: &RoughPath,
) -> Result<Vec<Vec<f64>>> {
    let d = fields.state_dim();
    let m = fields.noise_dim();
    if y0.len() != d || rp.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "state {} / {d}, noise {} / {m}",
            y0.len(),
            rp.dim()
        )));
    }
    let mut out = Vec::with_capacity(rp.len());
    let mut y = y0.to_vec();
    out.push(y.clone());
    for k in 0..rp.num_steps() {
        let z = rp.step_increment(k);
        let zz = rp.step_second_level(k);
        let mut next = y.clone();
        for (j, zj) in z.iter().enumerate() {
            for (n, v) in next.iter_mut().zip(fields.field(j, &y)) {
                *n += v * zj;
            }
        }
        for i in 0..m {
            for j in 0..m {
                let c = zz[i * m + j];
                if c != 0.0 {
                    for (n, v) in next.iter_mut().zip(fields.second(i, j, &y)) {
                        *n += v * c;
                    }
                }
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "state" });
        }
        y = next;
        out.push(y.clone());
    }
    Ok(out)
}
