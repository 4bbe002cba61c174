//! Controls, p-variation over grid partitions, localized variation and the
//! rough Gronwall bound.
//!
//! All suprema are taken over partitions subordinate to the sample grid and
//! computed exactly by dynamic programming:
//!
//! ```text
//! V(s) = 0,   V(j) = max_{s <= i < j, cell (i,j) admissible} V(i) + w(i, j)
//! ```
//!
//! where `w(i, j)` is the (already powered) weight of the cell `[t_i, t_j]`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

const SUPERADDITIVE_ABS: f64 = 1e-12;
const SUPERADDITIVE_REL: f64 = 1e-10;

/// What a [`Control`] was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlKind {
    IntervalPower { exponent: f64 },
    RoughPathVariation,
    BestControl { p: f64 },
    Sum,
    Scaled { factor: f64 },
    Table,
}

type Evaluator = Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>;

/// A two-time functional on grid nodes, `ω(s, t)` for `s <= t`.
#[derive(Clone)]
pub struct Control {
    times: Arc<Vec<f64>>,
    kind: ControlKind,
    eval: Evaluator,
}

impl fmt::Debug for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Control")
            .field("nodes", &self.times.len())
            .field("kind", &self.kind)
            .finish()
    }
}

impl Control {
    pub fn new(
        times: Vec<f64>,
        kind: ControlKind,
        eval: impl Fn(usize, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            times: Arc::new(times),
            kind,
            eval: Arc::new(eval),
        }
    }

    /// `scale · |t - s|^exponent`.
    pub fn interval_power(times: Vec<f64>, exponent: f64, scale: f64) -> Self {
        let t = Arc::new(times);
        let t2 = Arc::clone(&t);
        Self {
            times: t,
            kind: ControlKind::IntervalPower { exponent },
            eval: Arc::new(move |s, u| {
                if u <= s {
                    0.0
                } else {
                    scale * (t2[u] - t2[s]).powf(exponent)
                }
            }),
        }
    }

    /// Wraps a dense `n × n` row-major table (only `s <= t` entries are read).
    pub fn from_table(times: Vec<f64>, table: Vec<f64>, kind: ControlKind) -> Self {
        let n = times.len();
        assert_eq!(table.len(), n * n, "control table must be n x n");
        let table = Arc::new(table);
        Self {
            times: Arc::new(times),
            kind,
            eval: Arc::new(move |s, t| if t <= s { 0.0 } else { table[s * n + t] }),
        }
    }

    /// Evaluates `ω(s, t)`; zero when `t <= s`.
    pub fn value(&self, s: usize, t: usize) -> f64 {
        (self.eval)(s, t)
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `ω(0, T)`.
    pub fn total(&self) -> f64 {
        self.value(0, self.len() - 1)
    }

    pub fn sum(&self, other: &Control) -> Result<Control> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(format!(
                "controls on {} and {} nodes",
                self.len(),
                other.len()
            )));
        }
        let (a, b) = (Arc::clone(&self.eval), Arc::clone(&other.eval));
        Ok(Self {
            times: Arc::clone(&self.times),
            kind: ControlKind::Sum,
            eval: Arc::new(move |s, t| a(s, t) + b(s, t)),
        })
    }

    pub fn scaled(&self, factor: f64) -> Control {
        let a = Arc::clone(&self.eval);
        Self {
            times: Arc::clone(&self.times),
            kind: ControlKind::Scaled { factor },
            eval: Arc::new(move |s, t| factor * a(s, t)),
        }
    }

    /// Materializes the control into a table (useful before repeated queries
    /// of an expensive composite).
    pub fn tabulate(&self) -> Control {
        let n = self.len();
        let mut table = vec![0.0; n * n];
        for s in 0..n {
            for t in s + 1..n {
                table[s * n + t] = self.value(s, t);
            }
        }
        Control::from_table(self.times.to_vec(), table, self.kind.clone())
    }

    /// Largest excess `ω(s,u) + ω(u,t) - ω(s,t) - tol(s,t)` over all grid
    /// triples, with `tol = 1e-12 + 1e-10 ω(s,t)`. Non-positive means
    /// superadditive within tolerance.
    pub fn superadditivity_defect(&self) -> f64 {
        let n = self.len();
        let mut worst = f64::NEG_INFINITY;
        for s in 0..n {
            for t in s..n {
                let wst = self.value(s, t);
                let tol = SUPERADDITIVE_ABS + SUPERADDITIVE_REL * wst;
                for u in s..=t {
                    let excess = self.value(s, u) + self.value(u, t) - wst - tol;
                    worst = worst.max(excess);
                }
            }
        }
        worst
    }

    pub fn is_superadditive(&self) -> bool {
        self.superadditivity_defect() <= 0.0
    }

    /// `ω(s, s) = 0` on every node.
    pub fn vanishes_on_diagonal(&self) -> bool {
        (0..self.len()).all(|s| self.value(s, s) == 0.0)
    }
}

/// A base control together with the threshold `L` that restricts which
/// cells a partition may use.
#[derive(Debug, Clone)]
pub struct Localization {
    base: Control,
    threshold: f64,
}

impl Localization {
    pub fn new(base: Control, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidThreshold(threshold));
        }
        Ok(Self { base, threshold })
    }

    /// Localization whose constraint never binds.
    pub fn unrestricted(times: Vec<f64>) -> Self {
        Self {
            base: Control::interval_power(times, 1.0, 0.0),
            threshold: 1.0,
        }
    }

    pub fn base(&self) -> &Control {
        &self.base
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn admits(&self, s: usize, t: usize) -> bool {
        self.base.value(s, t) <= self.threshold
    }

    /// Errors if some single grid step is already too large.
    pub fn check_feasible(&self) -> Result<()> {
        for k in 0..self.base.len().saturating_sub(1) {
            let v = self.base.value(k, k + 1);
            if v > self.threshold {
                return Err(Error::InfeasibleLocalization {
                    step: k,
                    value: v,
                    threshold: self.threshold,
                });
            }
        }
        Ok(())
    }
}

/// Optimal value and a maximizing partition (node indices, endpoints
/// included).
#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub value: f64,
    pub partition: Vec<usize>,
}

/// Maximizes `Σ w(t_i, t_{i+1})` over partitions of `[s, t]` whose cells
/// satisfy `admissible`.
pub fn interval_variation(
    n: usize,
    s: usize,
    t: usize,
    w: impl Fn(usize, usize) -> f64,
    admissible: Option<&dyn Fn(usize, usize) -> bool>,
) -> Result<Variation> {
    if n == 0 {
        return Err(Error::Empty);
    }
    if t >= n {
        return Err(Error::OffGrid { index: t, len: n });
    }
    if t <= s {
        return Ok(Variation {
            value: 0.0,
            partition: vec![s],
        });
    }
    let len = t - s + 1;
    let mut best = vec![f64::NEG_INFINITY; len];
    let mut prev = vec![usize::MAX; len];
    best[0] = 0.0;
    for j in 1..len {
        for i in 0..j {
            if best[i] == f64::NEG_INFINITY {
                continue;
            }
            if let Some(ok) = admissible {
                if !ok(s + i, s + j) {
                    continue;
                }
            }
            let cand = best[i] + w(s + i, s + j);
            if cand > best[j] {
                best[j] = cand;
                prev[j] = i;
            }
        }
    }
    if best[len - 1] == f64::NEG_INFINITY {
        return Err(Error::Hypothesis(format!(
            "no admissible partition of [{s}, {t}]"
        )));
    }
    let mut partition = vec![t];
    let mut j = len - 1;
    while j > 0 {
        j = prev[j];
        partition.push(s + j);
    }
    partition.reverse();
    Ok(Variation {
        value: best[len - 1],
        partition,
    })
}

/// Interval variations `V(s, t)` for every `t >= s` (entry `t - s`), from a
/// single dynamic program. Inadmissible intervals are `-∞`.
pub fn variation_row(
    n: usize,
    s: usize,
    w: impl Fn(usize, usize) -> f64,
    admissible: Option<&dyn Fn(usize, usize) -> bool>,
) -> Vec<f64> {
    let mut row = vec![f64::NEG_INFINITY; n - s];
    row[0] = 0.0;
    for j in 1..n - s {
        let mut b = f64::NEG_INFINITY;
        for i in 0..j {
            let vi = row[i];
            if vi == f64::NEG_INFINITY {
                continue;
            }
            if let Some(ok) = admissible {
                if !ok(s + i, s + j) {
                    continue;
                }
            }
            let c = vi + w(s + i, s + j);
            if c > b {
                b = c;
            }
        }
        row[j] = b;
    }
    row
}

/// Dense `n × n` table of interval variations for every `s <= t`, by one
/// dynamic program per left endpoint. Inadmissible intervals are `-∞`.
pub fn all_pairs_variation(
    n: usize,
    w: impl Fn(usize, usize) -> f64,
    admissible: Option<&dyn Fn(usize, usize) -> bool>,
) -> Vec<f64> {
    let mut table = vec![0.0; n * n];
    for s in 0..n {
        let row = variation_row(n, s, &w, admissible);
        table[s * n + s..(s + 1) * n].copy_from_slice(&row);
    }
    table
}

fn check_p(p: f64, min: f64, range: &'static str) -> Result<()> {
    if !(p >= min) || !p.is_finite() {
        return Err(Error::ExponentRange { p, range });
    }
    Ok(())
}

/// p-variation (to the power p) of a path of `dim`-dimensional samples
/// (row-major), with Euclidean increments.
pub fn p_variation(samples: &[f64], dim: usize, p: f64) -> Result<Variation> {
    check_p(p, 1.0, "[1, inf)")?;
    if samples.is_empty() || dim == 0 {
        return Err(Error::Empty);
    }
    if !samples.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch(format!(
            "{} samples is not a multiple of dimension {dim}",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    interval_variation(
        n,
        0,
        n - 1,
        |i, j| {
            let a = &samples[i * dim..(i + 1) * dim];
            let b = &samples[j * dim..(j + 1) * dim];
            a.iter()
                .zip(b)
                .map(|(x, y)| (y - x) * (y - x))
                .sum::<f64>()
                .sqrt()
                .powf(p)
        },
        None,
    )
}

/// Localized p-variation `sup Σ |g_{s,t}|^p` over partitions whose cells
/// satisfy `ω̄(s,t) <= L`. `magnitude(s, t)` returns `|g_{s,t}|`.
pub fn localized_p_variation(
    n: usize,
    magnitude: impl Fn(usize, usize) -> f64,
    p: f64,
    loc: &Localization,
) -> Result<Variation> {
    check_p(p, f64::MIN_POSITIVE, "(0, inf)")?;
    if n == 0 {
        return Err(Error::Empty);
    }
    if loc.base.len() != n {
        return Err(Error::GridMismatch(format!(
            "localization on {} nodes, increments on {n}",
            loc.base.len()
        )));
    }
    loc.check_feasible()?;
    let ok = |s: usize, t: usize| loc.admits(s, t);
    interval_variation(n, 0, n - 1, |s, t| magnitude(s, t).powf(p), Some(&ok))
}

/// The smallest control dominating `|g_{s,t}|^p` on localized cells:
/// `(s, t) ↦ ‖g‖^p_{p,(ω̄,L),[s,t]}`.
pub fn best_control(
    n: usize,
    magnitude: impl Fn(usize, usize) -> f64,
    p: f64,
    loc: &Localization,
) -> Result<Control> {
    check_p(p, f64::MIN_POSITIVE, "(0, inf)")?;
    if loc.base.len() != n {
        return Err(Error::GridMismatch(format!(
            "localization on {} nodes, increments on {n}",
            loc.base.len()
        )));
    }
    loc.check_feasible()?;
    let ok = |s: usize, t: usize| loc.admits(s, t);
    let table = all_pairs_variation(n, |s, t| magnitude(s, t).powf(p), Some(&ok));
    Ok(Control::from_table(
        loc.base.times().to_vec(),
        table,
        ControlKind::BestControl { p },
    ))
}

/// Constants of the rough Gronwall lemma.
#[derive(Debug, Clone, Copy)]
pub struct GronwallConstants {
    pub threshold: f64,
    pub c: f64,
    pub c_prime: f64,
    pub k: f64,
    pub k_prime: f64,
}

impl GronwallConstants {
    /// `α = min(1, 1 / (L (2 C e²)^k))`.
    pub fn alpha(&self) -> f64 {
        let e2 = std::f64::consts::E * std::f64::consts::E;
        (1.0 / (self.threshold * (2.0 * self.c * e2).powf(self.k))).min(1.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidThreshold(self.threshold));
        }
        if !(self.c >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "C = {} must be >= 1",
                self.c
            )));
        }
        if !(self.c_prime > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "C' = {} must be > 0",
                self.c_prime
            )));
        }
        if !(self.k_prime >= 1.0) || !(self.k > self.k_prime) {
            return Err(Error::InvalidParameter(format!(
                "need k > k' >= 1, got k = {}, k' = {}",
                self.k, self.k_prime
            )));
        }
        Ok(())
    }
}

/// Evaluates the conclusion of the rough Gronwall lemma,
///
/// ```text
/// 2 exp(ω₁(0,T)/(αL)) { G₀ + sup_t ω₃(0,t) e^{-ω₁(0,t)/(αL)}
///                          + sup_t ω₂(0,t)^{(1-θ)/k'} e^{-ω₁(0,t)/(αL)} + C' },  θ = k'/k,
/// ```
///
/// after checking `ω₂ <= ω₁` on every grid pair.
pub fn rough_gronwall_bound(
    g0: f64,
    controls: [&Control; 3],
    consts: &GronwallConstants,
) -> Result<f64> {
    consts.validate()?;
    let [w1, w2, w3] = controls;
    let n = w1.len();
    if w2.len() != n || w3.len() != n {
        return Err(Error::GridMismatch(
            "controls live on different grids".into(),
        ));
    }
    for s in 0..n {
        for t in s..n {
            let (a, b) = (w1.value(s, t), w2.value(s, t));
            if b > a * (1.0 + SUPERADDITIVE_REL) + SUPERADDITIVE_ABS {
                return Err(Error::Hypothesis(format!(
                    "second control exceeds the first on ({s}, {t}): {b:e} > {a:e}"
                )));
            }
        }
    }
    let scale = consts.alpha() * consts.threshold;
    let theta = consts.k_prime / consts.k;
    let mut tail3: f64 = 0.0;
    let mut tail2: f64 = 0.0;
    for t in 0..n {
        let damp = (-w1.value(0, t) / scale).exp();
        tail3 = tail3.max(w3.value(0, t) * damp);
        tail2 = tail2.max(w2.value(0, t).powf((1.0 - theta) / consts.k_prime) * damp);
    }
    Ok(2.0 * (w1.total() / scale).exp() * (g0 + tail3 + tail2 + consts.c_prime))
}
