use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use roughflow::driver::SigmaField;
use roughflow::VorticityGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    WongZakai,
    Stability,
    SteadyCheck,
    RemainderScan,
    FlowConvergence,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::WongZakai,
        ExperimentKind::Stability,
        ExperimentKind::SteadyCheck,
        ExperimentKind::RemainderScan,
        ExperimentKind::FlowConvergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::WongZakai => "wong_zakai",
            ExperimentKind::Stability => "stability",
            ExperimentKind::SteadyCheck => "steady_check",
            ExperimentKind::RemainderScan => "remainder_scan",
            ExperimentKind::FlowConvergence => "flow_convergence",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A noise field given by catalog id or spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Catalog(String),
    Field(SigmaField),
}

/// Catalog ids accepted in `sigma`.
pub const SIGMA_CATALOG: [&str; 7] = [
    "zero", "shear_x", "shear_y", "mode_1_1", "mode_0_1", "mode_1_0", "mode_2_1",
];

pub fn sigma_from_catalog(id: &str) -> Option<SigmaField> {
    let mode = |amplitude, k, phase| SigmaField::Mode {
        amplitude,
        k,
        phase,
    };
    Some(match id {
        "zero" => SigmaField::Constant { c: [0.0, 0.0] },
        "shear_x" => SigmaField::Constant { c: [0.5, 0.0] },
        "shear_y" => SigmaField::Constant { c: [0.0, 0.5] },
        "mode_1_1" => mode(0.2, [1, 1], 0.2),
        "mode_0_1" => mode(0.15, [0, 1], 1.0),
        "mode_1_0" => mode(0.15, [1, 0], 0.5),
        "mode_2_1" => mode(0.1, [2, 1], 0.7),
        _ => return None,
    })
}

impl SigmaSpec {
    pub fn resolve(&self) -> Result<SigmaField> {
        match self {
            SigmaSpec::Catalog(id) => {
                sigma_from_catalog(id).ok_or_else(|| HarnessError::UnknownSigma(id.clone()))
            }
            SigmaSpec::Field(f) => {
                f.validate()?;
                Ok(*f)
            }
        }
    }
}

/// `amplitude · cos(k·x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VorticityMode {
    pub amplitude: f64,
    pub k: [i32; 2],
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Sum of cosine modes.
    Modes { modes: Vec<VorticityMode> },
    /// Grid CSV with columns `i,j,value` at the configured resolution.
    File { path: PathBuf },
}

impl InitialCondition {
    /// `sin x₁ sin x₂ + ½ cos(x₁ + 2x₂)`.
    pub fn standard() -> Self {
        let m = |amplitude, k| VorticityMode {
            amplitude,
            k,
            phase: 0.0,
        };
        InitialCondition::Modes {
            modes: vec![m(0.5, [1, -1]), m(-0.5, [1, 1]), m(0.5, [1, 2])],
        }
    }

    pub fn grid(&self, n: usize) -> Result<VorticityGrid> {
        match self {
            InitialCondition::Modes { modes } => Ok(VorticityGrid::from_fn(n, |x, y| {
                modes
                    .iter()
                    .map(|m| m.amplitude * (m.k[0] as f64 * x + m.k[1] as f64 * y + m.phase).cos())
                    .sum()
            })?),
            InitialCondition::File { path } => {
                let g = VorticityGrid::read_csv(fs::File::open(path)?)?;
                if g.resolution() != n {
                    return Err(HarnessError::Config(format!(
                        "initial field {} has resolution {}, expected {n}",
                        path.display(),
                        g.resolution()
                    )));
                }
                Ok(g)
            }
        }
    }
}

/// Pass thresholds of the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Increases tolerated in a column that should decrease.
    pub allowed_inversions: usize,
    /// An increase is tolerated only below this many combined standard errors.
    pub noise_floor_sigmas: f64,
    pub steady_l1: f64,
    pub mean_drift: f64,
    /// Smallest accepted convergence order.
    pub min_order: f64,
    /// Accepted distance of the remainder scaling slope from `3/p`.
    pub slope_tolerance: f64,
    /// Accepted relative change of the remainder variation per grid halving.
    pub variation_stability: f64,
    /// Frozen constant of the flow stability estimate.
    pub stability_constant: f64,
    /// Smallest number of disjoint windows per scale in the remainder scan.
    pub min_windows: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            allowed_inversions: 1,
            noise_floor_sigmas: 2.0,
            steady_l1: 1e-3,
            mean_drift: 1e-8,
            min_order: 1.0,
            slope_tolerance: 0.3,
            variation_stability: 0.2,
            stability_constant: 1.0,
            min_windows: 16,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_floor_sigmas", self.noise_floor_sigmas),
            ("steady_l1", self.steady_l1),
            ("mean_drift", self.mean_drift),
            ("min_order", self.min_order),
            ("slope_tolerance", self.slope_tolerance),
            ("variation_stability", self.variation_stability),
            ("stability_constant", self.stability_constant),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "tolerance {name} = {v} must be positive"
                )));
            }
        }
        if self.min_windows < 2 {
            return Err(HarnessError::Config(
                "min_windows must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

fn default_oversample() -> usize {
    8
}

/// One experiment run, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Run directory name; the experiment name when absent.
    #[serde(default)]
    pub name: Option<String>,
    /// Eulerian grid size `N`.
    pub resolution: usize,
    /// Particles per side of the initial lattice.
    pub particles: usize,
    pub horizon: f64,
    pub hurst: f64,
    /// Number of driver steps per mesh, ascending and nested.
    pub meshes: Vec<usize>,
    pub sigma: Vec<SigmaSpec>,
    pub w0: InitialCondition,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Relative perturbation sizes for the stability experiments.
    #[serde(default)]
    pub perturbations: Vec<f64>,
    /// fBm samples per finest driver step used to build the lift.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn desk(kind: ExperimentKind) -> Self {
        let ids = |v: &[&str]| {
            v.iter()
                .map(|s| SigmaSpec::Catalog(s.to_string()))
                .collect()
        };
        let base = Self {
            experiment: kind,
            name: None,
            resolution: 64,
            particles: 256,
            horizon: 1.0,
            hurst: 0.4,
            meshes: vec![64, 128, 256, 512, 1024],
            sigma: ids(&["mode_1_1", "mode_0_1"]),
            w0: InitialCondition::standard(),
            seeds: vec![0],
            tolerances: Tolerances::default(),
            perturbations: Vec::new(),
            oversample: default_oversample(),
            output: None,
        };
        match kind {
            ExperimentKind::WongZakai => Self {
                resolution: 32,
                particles: 64,
                seeds: (0..6).collect(),
                ..base
            },
            ExperimentKind::Stability => Self {
                resolution: 32,
                particles: 64,
                meshes: vec![256],
                perturbations: vec![0.04, 0.02, 0.01],
                ..base
            },
            ExperimentKind::FlowConvergence => Self {
                particles: 64,
                meshes: vec![256],
                perturbations: vec![0.04, 0.02, 0.01],
                ..base
            },
            ExperimentKind::SteadyCheck => Self {
                particles: 128,
                meshes: vec![256],
                sigma: ids(&["shear_x"]),
                ..base
            },
            ExperimentKind::RemainderScan => Self {
                resolution: 16,
                particles: 32,
                meshes: vec![128, 256, 512],
                sigma: ids(&["shear_x"]),
                seeds: vec![0, 1, 2],
                ..base
            },
        }
    }

    pub fn name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.experiment.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(format!("{digest:x}"))
    }

    pub fn sigma_fields(&self) -> Result<Vec<SigmaField>> {
        self.sigma.iter().map(SigmaSpec::resolve).collect()
    }

    pub fn initial_vorticity(&self) -> Result<VorticityGrid> {
        self.w0.grid(self.resolution)
    }

    pub fn finest_mesh(&self) -> usize {
        *self
            .meshes
            .last()
            .expect("validated configuration has meshes")
    }

    /// Same configuration with a single seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seeds: vec![seed],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let n = self.resolution;
        if !n.is_power_of_two() || !(8..=1024).contains(&n) {
            return bad(format!(
                "resolution {n} must be a power of two in [8, 1024]"
            ));
        }
        if self.particles < n || self.particles > 4096 {
            return bad(format!(
                "particles per side {} must lie in [resolution, 4096]",
                self.particles
            ));
        }
        if !(self.horizon > 0.0 && self.horizon <= 100.0) {
            return bad(format!("horizon {} must lie in (0, 100]", self.horizon));
        }
        roughflow::fbm::check_hurst(self.hurst)?;
        if self.meshes.is_empty() {
            return bad("at least one driver mesh is required".into());
        }
        if self.meshes.iter().any(|&m| !(2..=1 << 16).contains(&m)) {
            return bad(format!(
                "driver meshes {:?} must lie in [2, 65536]",
                self.meshes
            ));
        }
        let finest = self.finest_mesh();
        let nested = self.meshes.windows(2).all(|w| w[0] < w[1])
            && self.meshes.iter().all(|m| finest.is_multiple_of(*m));
        if !nested {
            return Err(HarnessError::MeshesNotNested(self.meshes.clone()));
        }
        if self.sigma.is_empty() || self.sigma.len() > 8 {
            return bad(format!(
                "{} noise fields, expected 1 to 8",
                self.sigma.len()
            ));
        }
        self.sigma_fields()?;
        if let InitialCondition::Modes { modes } = &self.w0 {
            if modes.is_empty() {
                return bad("initial condition needs at least one mode".into());
            }
            if modes
                .iter()
                .any(|m| !(m.amplitude.is_finite() && m.phase.is_finite()))
            {
                return bad("initial modes must be finite".into());
            }
            if modes.iter().any(|m| {
                2 * m.k[0].unsigned_abs() as usize >= n || 2 * m.k[1].unsigned_abs() as usize >= n
            }) {
                return bad(format!(
                    "initial modes must be resolved on the {n}x{n} grid"
                ));
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.perturbations.iter().any(|e| !(*e > 0.0 && *e <= 0.5)) {
            return bad(format!(
                "perturbations {:?} must lie in (0, 0.5]",
                self.perturbations
            ));
        }
        if !(1..=64).contains(&self.oversample) {
            return bad(format!(
                "oversample {} must lie in [1, 64]",
                self.oversample
            ));
        }
        self.tolerances.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_configs_are_valid_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::desk(kind);
            c.validate().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash().unwrap(), c.hash().unwrap());
        }
    }

    #[test]
    fn catalog_and_explicit_fields() {
        for id in SIGMA_CATALOG {
            assert!(sigma_from_catalog(id).is_some());
        }
        let text = r#"["mode_1_1", {"kind": "constant", "c": [0.1, 0.0]}]"#;
        let specs: Vec<SigmaSpec> = serde_json::from_str(text).unwrap();
        assert_eq!(
            specs[1].resolve().unwrap(),
            SigmaField::Constant { c: [0.1, 0.0] }
        );
        assert!(matches!(
            SigmaSpec::Catalog("nope".into()).resolve(),
            Err(HarnessError::UnknownSigma(_))
        ));
    }

    #[test]
    fn rejects_out_of_range() {
        let base = ExperimentConfig::desk(ExperimentKind::WongZakai);
        let cases = [
            ExperimentConfig {
                resolution: 48,
                ..base.clone()
            },
            ExperimentConfig {
                particles: 8,
                ..base.clone()
            },
            ExperimentConfig {
                hurst: 0.3,
                ..base.clone()
            },
            ExperimentConfig {
                seeds: vec![],
                ..base.clone()
            },
            ExperimentConfig {
                horizon: 0.0,
                ..base.clone()
            },
            ExperimentConfig {
                perturbations: vec![0.9],
                ..base.clone()
            },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let c = ExperimentConfig {
            meshes: vec![64, 96, 128],
            ..base
        };
        assert!(matches!(
            c.validate(),
            Err(HarnessError::MeshesNotNested(_))
        ));
    }
}
