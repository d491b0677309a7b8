//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use grushin::critical_solver::{CriticalOptions, ProfileOptions, SobolevOptions, DEFAULT_EPS};
use grushin::nehari_solver::SolveOptions;
use grushin::ProblemSpec;
use serde::{Deserialize, Serialize};

/// Environment variable that, when set, prefixes relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "GRUSHIN_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BranchChoice {
    Plus,
    Minus,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub critical: CriticalSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Nodes per axis, boundary included.
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub branch: BranchChoice,
    /// When set, μ is this multiple of the estimated μ₀ instead of the
    /// problem's value.
    pub mu_fraction: Option<f64>,
    pub sobolev: SobolevOptions,
    #[serde(flatten)]
    pub options: SolveOptions,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            branch: BranchChoice::Both,
            mu_fraction: None,
            sobolev: SobolevOptions::default(),
            options: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalSection {
    /// When set, μ is this multiple of the estimated μ* instead of the
    /// problem's value.
    pub mu_fraction: Option<f64>,
    pub eps: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Bubble center; must lie on x = 0.
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub sphere_samples: usize,
    pub seed: u64,
    /// Tolerance of the local minimizer.
    pub local_tol: f64,
    pub profile: ProfileOptions,
    #[serde(flatten)]
    pub options: CriticalOptions,
}

impl Default for CriticalSection {
    fn default() -> Self {
        CriticalSection {
            mu_fraction: None,
            eps: DEFAULT_EPS.to_vec(),
            gammas: vec![4.75, 5.0],
            center: None,
            radius: 0.45,
            sphere_samples: 100,
            seed: 0,
            local_tol: 1e-9,
            profile: ProfileOptions::default(),
            options: CriticalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write one CSV per solution field.
    pub fields: bool,
    /// Cache the reference profile under `<dir>/cache`.
    pub cache_profile: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            fields: true,
            cache_profile: true,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "invalid config: {e}"),
        }
    }
}

/// Sections with flattened solver options cannot use `deny_unknown_fields`,
/// so their keys are checked against the serialized defaults instead.
fn reject_unknown<T: Serialize>(table: &toml::Table, section: &str, default: &T) -> Result<(), ConfigError> {
    let Some(toml::Value::Table(given)) = table.get(section) else {
        return Ok(());
    };
    let known = serde_json::to_value(default).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let known = known.as_object().expect("sections serialize to maps");
    match given.keys().find(|k| !known.contains_key(k.as_str())) {
        Some(k) => {
            let mut names: Vec<&str> = known.keys().map(String::as_str).collect();
            names.sort_unstable();
            Err(ConfigError::Parse(format!(
                "unknown field `{k}` in [{section}], expected one of {}",
                names.join(", ")
            )))
        }
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        reject_unknown(&table, "solver", &SolverSection::default())?;
        reject_unknown(&table, "critical", &CriticalSection::default())?;
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.grid.nodes.len() != cfg.problem.bounds.len() {
            return Err(ConfigError::Parse(format!(
                "grid.nodes has {} entries but the box has {} axes",
                cfg.grid.nodes.len(),
                cfg.problem.bounds.len()
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        RunConfig::parse(&text)
    }

    /// Output directory, placed under the output-root variable when that is
    /// set and the configured path is relative.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output.dir.is_relative() => PathBuf::from(root).join(&self.output.dir),
            _ => self.output.dir.clone(),
        }
    }

    pub fn bubble_center(&self) -> Vec<f64> {
        self.critical
            .center
            .clone()
            .unwrap_or_else(|| vec![0.0; self.problem.bounds.len()])
    }
}
