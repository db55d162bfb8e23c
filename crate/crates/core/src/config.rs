//! Run configuration: JSON schema, builtin resolution, and overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::builtins;
use crate::error::{HbrdError, Result};
use crate::optimizer::{OptimizerConfig, RdMode};
use crate::source::{
    classify_degradedness_default, ComponentSource, DistortionQuadruple, DistortionSpec,
    ProductSource,
};

/// Scenario the run dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Discrete,
    Gaussian,
    Simulate,
    Lemma,
}

/// Source specification: a named builtin or inline pmf arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Builtin { builtin: String },
    Inline {
        component1: ComponentSource,
        component2: ComponentSource,
        distortion1: DistortionSpec,
        distortion2: DistortionSpec,
    },
}

impl SourceSpec {
    pub fn resolve(&self) -> Result<ProductSource> {
        match self {
            SourceSpec::Builtin { builtin } => builtins::by_name(builtin),
            SourceSpec::Inline {
                component1,
                component2,
                distortion1,
                distortion2,
            } => {
                for (i, c) in [component1, component2].into_iter().enumerate() {
                    let report = c.validate()?;
                    if !report.is_empty() {
                        return Err(HbrdError::Config(format!(
                            "component{} pmf invalid: {}",
                            i + 1,
                            report.join("; ")
                        )));
                    }
                }
                ProductSource::new(
                    component1.clone(),
                    component2.clone(),
                    distortion1.clone(),
                    distortion2.clone(),
                )
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            SourceSpec::Builtin { builtin } => builtin.clone(),
            SourceSpec::Inline { .. } => "inline".to_string(),
        }
    }
}

/// Optimizer overrides; unset fields fall back to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub penalty_init: Option<f64>,
    pub penalty_growth: Option<f64>,
    pub penalty_stages: Option<usize>,
    pub tolerance: Option<f64>,
    pub grid_resolution: Option<usize>,
}

impl OptimizerSettings {
    pub fn build(&self, seed: u64) -> OptimizerConfig {
        let d = OptimizerConfig::default();
        OptimizerConfig {
            restarts: self.restarts.unwrap_or(d.restarts),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            penalty_init: self.penalty_init.unwrap_or(d.penalty_init),
            penalty_growth: self.penalty_growth.unwrap_or(d.penalty_growth),
            penalty_stages: self.penalty_stages.unwrap_or(d.penalty_stages),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            seed,
            grid_resolution: self.grid_resolution.unwrap_or(d.grid_resolution),
        }
    }
}

/// Gaussian scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSettings {
    pub sigma_x: [f64; 2],
    pub sigma_ny: [f64; 2],
    pub sigma_nz: [f64; 2],
    pub distortion: DistortionQuadruple,
    /// Oracle grid points per parameter.
    pub grid: Option<usize>,
}

/// Simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub block_length: usize,
    pub epsilon: f64,
    pub trials: usize,
}

/// Inequality-audit sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSettings {
    pub count: usize,
    pub block_length: usize,
}

/// Distortion sweep: targets interpolate linearly from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub from: DistortionQuadruple,
    pub to: DistortionQuadruple,
    pub steps: usize,
}

/// Explicit mode request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    Matched,
    Mismatched,
}

/// One run's configuration as read from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub source: Option<SourceSpec>,
    pub distortion: Option<DistortionQuadruple>,
    pub mode: Option<ModeSpec>,
    pub optimizer: Option<OptimizerSettings>,
    pub gaussian: Option<GaussianSettings>,
    pub simulate: Option<SimulateSettings>,
    pub lemma: Option<LemmaSettings>,
    pub sweep: Option<SweepSettings>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HbrdError::Config(format!("cannot read config {}: {}", path.display(), e))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| HbrdError::Config(format!("config schema error in field path: {}", e)))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require_source(&self) -> Result<(ProductSource, String)> {
        let spec = self.source.as_ref().ok_or_else(|| {
            HbrdError::Config("field 'source' is required for this subcommand".into())
        })?;
        Ok((spec.resolve()?, spec.name()))
    }

    pub fn distortion_or_zero(&self) -> DistortionQuadruple {
        self.distortion.unwrap_or(DistortionQuadruple::ZERO)
    }

    pub fn optimizer_config(&self, seed: u64) -> OptimizerConfig {
        self.optimizer.clone().unwrap_or_default().build(seed)
    }

    /// Explicit mode, or the one implied by the degradedness class
    /// (mismatched wins when both hold; unclassified sources default to
    /// mismatched and the optimizer attaches its upper-bound warning).
    pub fn resolve_mode(&self, ps: &ProductSource) -> Result<RdMode> {
        if let Some(m) = self.mode {
            return Ok(match m {
                ModeSpec::Matched => RdMode::Matched,
                ModeSpec::Mismatched => RdMode::Mismatched,
            });
        }
        let class = classify_degradedness_default(ps)?;
        Ok(if class.chain1_y && class.chain2_z {
            RdMode::Mismatched
        } else if class.chain1_y && class.chain2_y {
            RdMode::Matched
        } else {
            RdMode::Mismatched
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_config_parses_and_resolves() {
        let json = r#"{
            "scenario": "discrete",
            "source": {"builtin": "fig2-butterfly"},
            "distortion": {"dhat1": 0.0, "dhat2": 0.0, "dtilde1": 0.0, "dtilde2": 0.0},
            "seed": 3
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        let (ps, name) = cfg.require_source().unwrap();
        assert_eq!(name, "fig2-butterfly");
        assert_eq!(cfg.seed(), 3);
        assert_eq!(cfg.resolve_mode(&ps).unwrap(), RdMode::Mismatched);
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let json = r#"{"scenario": "discrete", "sorce": {"builtin": "x"}}"#;
        assert!(serde_json::from_str::<RunConfig>(json).is_err());
    }

    #[test]
    fn inline_source_roundtrips() {
        let ps = crate::builtins::binary_matched();
        let spec = SourceSpec::Inline {
            component1: ps.component1.clone(),
            component2: ps.component2.clone(),
            distortion1: ps.distortion1.clone(),
            distortion2: ps.distortion2.clone(),
        };
        let text = serde_json::to_string(&spec).unwrap();
        let parsed: SourceSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.resolve().unwrap(), ps);
    }

    #[test]
    fn optimizer_overrides_apply() {
        let settings = OptimizerSettings {
            restarts: Some(5),
            ..OptimizerSettings::default()
        };
        let cfg = settings.build(9);
        assert_eq!(cfg.restarts, 5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.max_iters, OptimizerConfig::default().max_iters);
    }
}
