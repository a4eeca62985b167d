//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [experiment]
//! id = "contact"          # experiment id written to the CSV
//! seed = 7                # optional; the CLI flag overrides it
//! out = "contact.csv"     # optional; the CLI flag overrides it
//!
//! [algebra]
//! source = "H1"           # built-in name or algebra file path
//! target = "H1"           # optional, defaults to source
//!
//! [map]
//! name = "contact_shear"
//! eps = 0.25
//!
//! [forms]
//! omega = "vol"
//! gamma = "1"
//!
//! [grid]
//! lo = [-0.5, -0.5, -0.5]
//! hi = [0.5, 0.5, 0.5]
//! n = 13
//!
//! [approx]
//! rho = [0.4, 0.2, 0.1, 0.05]
//! p = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::HarnessError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub algebra: AlgebraSection,
    pub map: Option<MapSpec>,
    pub forms: Option<FormSpec>,
    pub grid: Option<GridSpec>,
    pub approx: Option<ApproxSection>,
    pub dcheck: Option<DcheckSection>,
    pub rigidity: Option<RigiditySection>,
    pub pansu: Option<PansuSection>,
    pub mollify: Option<MollifySection>,
    pub com: Option<ComSection>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub id: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSection {
    pub source: String,
    pub target: Option<String>,
}

/// Built-in map and its parameters. Which keys apply depends on `name`.
///
/// Names: `identity`, `constant` (`value`), `dilation` (`lambda`),
/// `translation` (`value`), `hom` (`matrix`), `horizontal` (`block`),
/// `random_hom`, `random_auto`, `contact_shear` (`eps`, optional `block`),
/// `contact_scaling` (`eps`, optional conjugating `block`),
/// `vertical_square` (`eps`, optional `block`), `quadratic` (`coeffs`),
/// `tabulated` (`file`).
#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub value: Option<Vec<f64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub block: Option<Vec<Vec<f64>>>,
    pub coeffs: Option<Vec<Vec<Vec<f64>>>>,
    pub file: Option<PathBuf>,
}

/// Forms, written as `vol`, `1`, or 1-based monomials like `2,3` (`θ_2∧θ_3`).
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub omega: String,
    /// `one` or `bump`.
    #[serde(default = "default_coefficient")]
    pub coefficient: String,
    #[serde(default = "default_gamma")]
    pub gamma: String,
}

fn default_coefficient() -> String {
    "one".into()
}

fn default_gamma() -> String {
    "1".into()
}

/// Cell-centred tensor grid on a coordinate box.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ApproxSection {
    pub rho: Vec<f64>,
    pub p: f64,
    /// Integrability exponent of `f`; omitted means locally bounded.
    pub m: Option<f64>,
    pub kernel_nodes: Option<usize>,
    /// Caller assertion that ω has continuous bounded coefficients.
    #[serde(default = "yes")]
    pub omega_continuous: bool,
    /// Caller assertion that `f` is locally `W^{1,p}` on the grid neighbourhood.
    #[serde(default = "yes")]
    pub map_sobolev: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DcheckSection {
    /// Points per axis at level 0; each level doubles it.
    #[serde(default = "default_base")]
    pub base: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Test-function centres; three defaults are used when omitted.
    pub centers: Option<Vec<Vec<f64>>>,
    /// Half-width of each test-function support box, per coordinate.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_base() -> usize {
    6
}

fn default_levels() -> usize {
    4
}

fn default_half_width() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RigiditySection {
    pub count: usize,
    /// Grid points at which the differential is sampled per case.
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PansuSection {
    pub point: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
    pub h: Option<f64>,
}

fn default_p() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MollifySection {
    pub rho: Vec<f64>,
    /// Evaluation points; the `[grid]` section is used when omitted.
    pub points: Option<Vec<Vec<f64>>>,
    pub kernel_nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComSection {
    pub measure: PathBuf,
    /// Exact rational arithmetic (default) or floating point.
    #[serde(default = "yes")]
    pub exact: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &dir)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed.unwrap_or(0)
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, HarnessError> {
        value
            .as_ref()
            .ok_or_else(|| HarnessError::Config(format!("missing [{name}] section")))
    }
}
