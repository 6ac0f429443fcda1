//! Run configuration: JSON schema with strict key checking, preset loading,
//! and flag overrides.

use std::path::{Path, PathBuf};

use resnf_core::dynamics::FlowConfig;
use resnf_core::ModelSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormConfig {
    pub order: u32,
    #[serde(default = "default_grade_max")]
    pub grade_max: u32,
    #[serde(default = "default_divisor_floor")]
    pub divisor_floor: f64,
}

fn default_grade_max() -> u32 {
    8
}
fn default_divisor_floor() -> f64 {
    1e-8
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        NormalFormConfig {
            order: 2,
            grade_max: default_grade_max(),
            divisor_floor: default_divisor_floor(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    #[serde(default = "default_grid_density")]
    pub grid_density: usize,
    /// Family seeds as (base point, integer direction) in the slow angles.
    #[serde(default)]
    pub family_seeds: Vec<(Vec<f64>, Vec<i64>)>,
}

fn default_grid_density() -> usize {
    24
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig { grid_density: default_grid_density(), family_seeds: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default)]
    pub max_step: Option<f64>,
}

fn default_rel_tol() -> f64 {
    1e-12
}
fn default_abs_tol() -> f64 {
    1e-14
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_step: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Any of "json", "text", "csv"; all three when empty.
    #[serde(default)]
    pub formats: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub normal_form: NormalFormConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default = "resnf_core::dynamics::eps_grid")]
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl RunConfig {
    pub fn from_preset(name: &str) -> anyhow::Result<Self> {
        let model = resnf_core::presets::preset(name)
            .ok_or_else(|| anyhow::anyhow!("unknown preset '{name}'"))?;
        let order = match name {
            "railway" | "quartic" => 3,
            "res_211" => 1,
            _ => 2,
        };
        // the order-3 lattices resolve their soft modes at ε³, so their
        // scaling fits need the window shifted up to clear the noise floor
        let epsilon_grid = match name {
            "railway" | "quartic" => resnf_core::dynamics::eps_log_grid(5e-3, 5e-2, 8),
            _ => resnf_core::dynamics::eps_grid(),
        };
        Ok(RunConfig {
            model,
            normal_form: NormalFormConfig { order, ..Default::default() },
            continuation: ContinuationConfig::default(),
            epsilon_grid,
            integrator: IntegratorConfig::default(),
            outputs: OutputConfig::default(),
        })
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate().map_err(|e| anyhow::anyhow!("model: {e}"))?;
        if self.normal_form.order == 0 {
            anyhow::bail!("normal_form.order must be >= 1");
        }
        if (self.normal_form.divisor_floor - 1e-8).abs() > 1e-20 {
            anyhow::bail!("divisor_floor is fixed at 1e-8 in this build");
        }
        if self.epsilon_grid.is_empty() {
            anyhow::bail!("epsilon_grid is empty");
        }
        if self.epsilon_grid.iter().any(|&e| e <= 0.0) {
            anyhow::bail!("epsilon_grid values must be positive");
        }
        if !self.epsilon_grid.windows(2).all(|w| w[0] < w[1]) {
            anyhow::bail!("epsilon_grid must be strictly increasing");
        }
        for f in &self.outputs.formats {
            if !matches!(f.as_str(), "json" | "text" | "csv") {
                anyhow::bail!("unknown output format '{f}'");
            }
        }
        Ok(())
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            rel_tol: self.integrator.rel_tol,
            abs_tol: self.integrator.abs_tol,
            max_step: self.integrator.max_step.unwrap_or(f64::INFINITY),
            ..FlowConfig::default()
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        self.outputs.formats.is_empty() || self.outputs.formats.iter().any(|f| f == format)
    }
}
