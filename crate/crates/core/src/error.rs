use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid must be strictly increasing (violated at node {index})")]
    NonMonotoneTimes { index: usize },
    #[error("at least {required} nodes are required, got {got}")]
    TooFewNodes { required: usize, got: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("node index {index} is outside the grid of {len} nodes")]
    OffGrid { index: usize, len: usize },
    #[error("node order violated: expected s <= u <= t, got ({s}, {u}, {t})")]
    NodeOrder { s: usize, u: usize, t: usize },
    #[error("p-variation exponent {p} outside the admissible range {range}")]
    ExponentRange { p: f64, range: &'static str },
    #[error("Hurst parameter {0} outside (1/3, 1/2]")]
    HurstRange(f64),
    #[error("input is empty")]
    Empty,
    #[error("no partition satisfies the localization (step {step} has base control {value} > L = {threshold})")]
    InfeasibleLocalization {
        step: usize,
        value: f64,
        threshold: f64,
    },
    #[error("invalid localization threshold {0}")]
    InvalidThreshold(f64),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("germ is not coherent at triple ({s}, {u}, {t}): |delta h| = {defect:e} > {bound:e}")]
    GermIncoherent {
        s: usize,
        u: usize,
        t: usize,
        defect: f64,
        bound: f64,
    },
    #[error("grids are incompatible: {0}")]
    GridMismatch(String),
    #[error("resolution {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("field has nonzero mean {0:e}; Biot-Savart requires a mean-free vorticity")]
    NonzeroMean(f64),
    #[error("negative argument {0} for the modulus of continuity")]
    NegativeArgument(f64),
    #[error("mollifier radius {eta} is invalid for grid spacing {spacing}")]
    MollifierRadius { eta: f64, spacing: f64 },
    #[error("{particles} particles undersample a {resolution}x{resolution} grid")]
    Undersampled { particles: usize, resolution: usize },
    #[error("step {step} too large: {reason}")]
    StepTooLarge { step: usize, reason: String },
    #[error("CFL violation at t = {time}: max |velocity| * dt = {value:e} exceeds grid spacing {spacing:e}")]
    Cfl { time: f64, value: f64, spacing: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time quadrature under-resolved: Richardson gap {gap:e} > {threshold:e}")]
    QuadratureUnderResolved { gap: f64, threshold: f64 },
    #[error("sign convention mismatch: {0}")]
    SignConvention(String),
    #[error("divergence-free check failed: max |div| = {0:e}")]
    NotDivergenceFree(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
