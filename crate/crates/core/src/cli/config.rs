//! TOML problem description.
//!
//! ```toml
//! materials_file = "library.toml"   # relative to this file
//!
//! [mesh]
//! radius_cm = 21.486
//! n_cells = 400
//!
//! [[shells]]
//! outer_radius_cm = 13.2
//! material = "fuel"
//!
//! [solver]
//! mode = "dlra"
//! rank = 25
//!
//! [outputs]
//! directory = "out"                 # relative to this file
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::Shell;
use crate::operators::OuterBoundary;
use crate::power_full::{DEFAULT_EPS, DEFAULT_MAX_ITER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    Full,
    Dlra,
    DlraAdaptive,
    Simplified,
}

impl SolverMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Dlra => "dlra",
            Self::DlraAdaptive => "dlra-adaptive",
            Self::Simplified => "simplified",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "dlra" => Ok(Self::Dlra),
            "dlra-adaptive" => Ok(Self::DlraAdaptive),
            "simplified" => Ok(Self::Simplified),
            other => Err(Error::config("solver.mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaKind {
    /// `ϑ` is multiplied by `‖Ŝ‖_F` each step.
    #[default]
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub radius_cm: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub boundary: OuterBoundary,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default)]
    pub theta_kind: ThetaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub emit_history: bool,
    #[serde(default = "yes")]
    pub emit_modes: bool,
    #[serde(default = "yes")]
    pub emit_flux: bool,
    #[serde(default = "yes")]
    pub emit_memory: bool,
    /// Per-iteration wall times break byte-for-byte reproducibility, so they
    /// are left blank unless requested.
    #[serde(default)]
    pub emit_timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            emit_history: true,
            emit_modes: true,
            emit_flux: true,
            emit_memory: true,
            emit_timing: false,
        }
    }
}

fn default_seeds() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplifiedConfig {
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Use seeded similarity transforms (otherwise the spectra stay diagonal).
    #[serde(default = "yes")]
    pub random_similarity: bool,
    #[serde(default)]
    pub split: bool,
    /// Number of seeded problems, seeds `seed, seed + 1, ...`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub materials_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shells: Vec<Shell>,
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplified: Option<SimplifiedConfig>,
}

/// Command-line replacements for config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<SolverMode>,
    pub rank: Option<usize>,
    pub eps: Option<f64>,
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl ProblemConfig {
    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(mode) = overrides.mode {
            self.solver.mode = mode;
        }
        if overrides.rank.is_some() {
            self.solver.rank = overrides.rank;
        }
        if let Some(eps) = overrides.eps {
            self.solver.eps = eps;
        }
        if overrides.theta.is_some() {
            self.solver.theta = overrides.theta;
        }
        if let Some(seed) = overrides.seed {
            self.solver.seed = seed;
        }
        if let Some(dir) = &overrides.out_dir {
            self.outputs.directory = dir.clone();
        }
        self.validate()
    }

    /// Mode-dependent consistency checks.
    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        if !(s.eps > 0.0 && s.eps.is_finite()) {
            return Err(Error::config("solver.eps", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(Error::config("solver.max_iter", "must be at least 1"));
        }
        if s.rank == Some(0) {
            return Err(Error::config("solver.rank", "must be at least 1"));
        }
        if let Some(theta) = s.theta {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(Error::config("solver.theta", "must be non-negative"));
            }
        }
        if let (Some(lo), Some(hi)) = (s.r_min, s.r_max) {
            if lo > hi {
                return Err(Error::config("solver.r_min", "exceeds solver.r_max"));
            }
        }
        if s.r_min == Some(0) {
            return Err(Error::config("solver.r_min", "must be at least 1"));
        }
        match s.mode {
            SolverMode::Simplified => {
                let simplified = self
                    .simplified
                    .as_ref()
                    .ok_or_else(|| Error::config("simplified", "section required for mode simplified"))?;
                if simplified.seeds == 0 {
                    return Err(Error::config("simplified.seeds", "must be at least 1"));
                }
                let full = simplified.lambdas.len().min(simplified.sigmas.len());
                if s.rank.unwrap_or(1) > full {
                    return Err(Error::config("solver.rank", format!("exceeds min(N, M) = {full}")));
                }
            }
            mode => {
                if self.materials_file.is_none() {
                    return Err(Error::config("materials_file", "required"));
                }
                let mesh = self.mesh.as_ref().ok_or_else(|| Error::config("mesh", "section required"))?;
                if self.shells.is_empty() {
                    return Err(Error::config("shells", "at least one shell is required"));
                }
                if matches!(mode, SolverMode::Dlra | SolverMode::DlraAdaptive) {
                    let rank = s
                        .rank
                        .ok_or_else(|| Error::config("solver.rank", format!("rank required for mode {}", mode.name())))?;
                    if rank > mesh.n_cells {
                        return Err(Error::config("solver.rank", "exceeds mesh.n_cells"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML form; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

pub fn parse_config_str(text: &str) -> Result<ProblemConfig> {
    let config: ProblemConfig = toml::from_str(text).map_err(|e| {
        let path = e.span().map_or_else(|| "<document>".to_string(), |span| format!("bytes {}..{}", span.start, span.end));
        Error::config(path, e.message().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    parse_config_str(&text)
}
