use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] roughflow::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("driver meshes {0:?} are not nested")]
    MeshesNotNested(Vec<usize>),
    #[error("unknown noise field id `{0}`")]
    UnknownSigma(String),
    #[error("perturbation leaves the admissible class: {0}")]
    Inadmissible(String),
    #[error("experiment `{expected}` cannot run a `{found}` configuration")]
    WrongExperiment { expected: String, found: String },
}

pub type Result<T> = std::result::Result<T, HarnessError>;
