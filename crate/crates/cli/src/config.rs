//! The JSON run configuration.

use std::path::{Path, PathBuf};

use nlsred::fields::{FieldSpec, FieldsBlock};
use nlsred::landscape::Convention;
use nlsred::reduction::GridRule;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoSeeds {
    Auto,
}

/// Seeds in slow variables, or `"auto"` to take them from the landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Auto(AutoSeeds),
    Points(Vec<Vec<f64>>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Auto(AutoSeeds::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_ode_tol")]
    pub ode_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

fn default_fp_tol() -> f64 {
    1e-9
}
fn default_newton_tol() -> f64 {
    1e-8
}
fn default_ode_tol() -> f64 {
    1e-10
}
fn default_newton_max_iter() -> usize {
    40
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            fp_tol: default_fp_tol(),
            newton_tol: default_newton_tol(),
            ode_tol: default_ode_tol(),
            newton_max_iter: default_newton_max_iter(),
        }
    }
}

/// Multistart search settings for `landscape` and automatic seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSettings {
    #[serde(default = "default_search_half_width")]
    pub half_width: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_newton_tol_landscape")]
    pub tol: f64,
    #[serde(default = "default_cluster_tol")]
    pub cluster_tol: f64,
}

fn default_search_half_width() -> f64 {
    1.0
}
fn default_starts() -> usize {
    128
}
fn default_newton_tol_landscape() -> f64 {
    1e-10
}
fn default_cluster_tol() -> f64 {
    0.25
}

impl Default for LandscapeSettings {
    fn default() -> Self {
        LandscapeSettings {
            half_width: default_search_half_width(),
            starts: default_starts(),
            tol: default_newton_tol_landscape(),
            cluster_tol: default_cluster_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    pub exponent: f64,
    #[serde(default = "default_grid")]
    pub grid: GridRule,
    pub fields: FieldsBlock,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub seeds: Seeds,
    /// Expansion point `εξ` for `reduce`; the first seed when absent.
    #[serde(default)]
    pub slow_point: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub landscape: LandscapeSettings,
    /// Lanczos steps for the coercivity column of `reduce`.
    #[serde(default)]
    pub lanczos_steps: Option<usize>,
    #[serde(default = "default_gradient_step")]
    pub gradient_step: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_grid() -> GridRule {
    GridRule::recentering(12.0, 129)
}
fn default_gradient_step() -> Option<f64> {
    Some(1e-3)
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config does not match the schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Default for RunConfig {
    /// Gaussian bump in `V`, `K ≡ 1`, `A ≡ 0` in two dimensions with `p = 3`.
    fn default() -> Self {
        let fields = serde_json::from_value(json!({
            "V": {"family": "gaussian", "params": {"amplitude": 1.0, "center": [0.0, 0.0], "width": 1.0, "offset": 0.0}},
            "K": {"expr": "1"},
            "A": {"components": ["0", "0"]}
        }))
        .expect("default fields parse");
        RunConfig {
            dimension: 2,
            exponent: 3.0,
            grid: default_grid(),
            fields,
            epsilon: vec![0.2, 0.1, 0.05],
            seeds: Seeds::Points(vec![vec![0.0, 0.0]]),
            slow_point: None,
            tolerances: Tolerances::default(),
            output_dir: None,
            convention: Convention::Derived,
            landscape: LandscapeSettings::default(),
            lanczos_steps: None,
            gradient_step: default_gradient_step(),
            seed: default_seed(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Schema-level checks that serde cannot express. `ground` accepts any
    /// `p > 1`; the PDE commands need `p ≥ 2`.
    pub fn validate(&self, pde: bool) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(1..=3).contains(&self.dimension) {
            return bad(format!("dimension must be 1, 2 or 3, got {}", self.dimension));
        }
        if !(self.exponent > 1.0) {
            return bad(format!("exponent must exceed 1, got {}", self.exponent));
        }
        if pde && self.exponent < 2.0 {
            return bad(format!("this command needs exponent >= 2, got {}", self.exponent));
        }
        let t = &self.tolerances;
        for (name, v) in [("fp_tol", t.fp_tol), ("newton_tol", t.newton_tol), ("ode_tol", t.ode_tol), ("landscape.tol", self.landscape.tol)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.grid.half_width > 0.0) || self.grid.points < 5 {
            return bad("grid needs half_width > 0 and at least 5 points".into());
        }
        if let Some(c) = &self.grid.center {
            if c.len() != self.dimension {
                return bad("grid centre has the wrong dimension".into());
            }
        }
        if self.epsilon.iter().any(|e| !(*e > 0.0)) || self.epsilon.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("epsilon must be positive and strictly decreasing".into());
        }
        if let Seeds::Points(pts) = &self.seeds {
            if pts.iter().any(|p| p.len() != self.dimension) {
                return bad("every seed needs the configured dimension".into());
            }
        }
        if let Some(x) = &self.slow_point {
            if x.len() != self.dimension {
                return bad("slow_point has the wrong dimension".into());
            }
        }
        if let Some(h) = self.gradient_step {
            if !(h > 0.0) {
                return bad("gradient_step must be positive".into());
            }
        }
        Ok(())
    }

    pub fn field_spec(&self) -> nlsred::Result<FieldSpec> {
        self.fields.build(self.dimension)
    }
}
