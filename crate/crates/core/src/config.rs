//! Pipeline configuration.
//!
//! A config file is TOML. Every section is optional; omitted keys take the
//! `paper_defaults` preset values, and any key that differs from the preset is
//! reported by [`PipelineConfig::deviations`].
//!
//! ```toml
//! preset = "paper_defaults"
//! seed = 7
//!
//! [edges]
//! d_max = 4.0
//!
//! [solver]
//! preconditioner = "jacobi"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffusion::{DiffusionParams, SolverConfig};
use crate::epi_edges::EdgeParams;
use crate::error::{Error, Result};
use crate::refine::{SearchParams, TrilateralParams};

pub const PRESET_PAPER_DEFAULTS: &str = "paper_defaults";

/// How the offset side of each label is chosen before the final solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Step-likeness of the two directional solves.
    #[default]
    Bidirectional,
    /// Lowest multi-view reprojection error of the two directional solves.
    ReprojectionBaseline,
    /// No offset; a single solve with the directional weights.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: String,
    pub seed: u64,
    pub mode: Mode,
    /// Standard deviation of Gaussian noise added to the sparse labels after
    /// filtering. Zero disables it.
    pub label_noise_sigma: f64,
    pub edges: EdgeParams,
    pub search: SearchParams,
    pub trilateral: TrilateralParams,
    pub diffusion: DiffusionParams,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preset: PRESET_PAPER_DEFAULTS.to_string(),
            seed: 0,
            mode: Mode::default(),
            label_noise_sigma: 0.0,
            edges: EdgeParams::default(),
            search: SearchParams::default(),
            trilateral: TrilateralParams::default(),
            diffusion: DiffusionParams::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset != PRESET_PAPER_DEFAULTS {
            return Err(Error::Config(format!(
                "unknown preset {:?}; the only preset is {PRESET_PAPER_DEFAULTS:?}",
                self.preset
            )));
        }
        let e = &self.edges;
        if !(e.d_max > 0.0) {
            return Err(Error::Config("edges.d_max must be positive".into()));
        }
        if e.bank_size < 3 || e.bank_size.is_multiple_of(2) {
            return Err(Error::Config("edges.bank_size must be odd and at least 3".into()));
        }
        if !(e.c > 0.0) {
            return Err(Error::Config("edges.c must be positive".into()));
        }
        let t = &self.trilateral;
        if !(t.sigma_s > 0.0 && t.sigma_d > 0.0 && t.sigma_c > 0.0) {
            return Err(Error::Config("trilateral sigmas must be positive".into()));
        }
        if self.search.bins == 0 {
            return Err(Error::Config("search.bins must be positive".into()));
        }
        let d = &self.diffusion;
        if !(d.data_weight > 0.0 && d.omega > 0.0 && d.epsilon > 0.0) {
            return Err(Error::Config("diffusion weights and epsilon must be positive".into()));
        }
        if !(self.label_noise_sigma >= 0.0) {
            return Err(Error::Config("label_noise_sigma must be non-negative".into()));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Dotted keys whose values differ from the preset, as `key = value (default)`.
    pub fn deviations(&self) -> Vec<String> {
        let base = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
        let cur = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        diff_values("", &base, &cur, &mut out);
        out
    }
}

fn diff_values(prefix: &str, base: &Value, cur: &Value, out: &mut Vec<String>) {
    match (base, cur) {
        (Value::Object(b), Value::Object(c)) => {
            for (k, cv) in c {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get(k) {
                    Some(bv) => diff_values(&key, bv, cv, out),
                    None => out.push(format!("{key} = {cv}")),
                }
            }
        }
        _ if base != cur => out.push(format!("{prefix} = {cur} ({base})")),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(cfg.deviations().is_empty());
    }

    #[test]
    fn partial_file_reports_deviations() {
        let cfg = PipelineConfig::from_toml_str("seed = 3\n[edges]\nd_max = 4.0\n").unwrap();
        assert_eq!(cfg.edges.d_max, 4.0);
        assert_eq!(cfg.edges.c, 4.0);
        let dev = cfg.deviations();
        assert_eq!(dev.len(), 2, "{dev:?}");
        assert!(dev.iter().any(|d| d.starts_with("edges.d_max = 4.0")));
    }

    #[test]
    fn rejects_unknown_keys_and_presets() {
        assert!(PipelineConfig::from_toml_str("[edges]\nfoo = 1\n").is_err());
        assert!(PipelineConfig::from_toml_str("preset = \"fast\"\n").is_err());
        assert!(PipelineConfig::from_toml_str("[edges]\nbank_size = 16\n").is_err());
    }
}
