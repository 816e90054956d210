use std::path::{Path, PathBuf};

use nls_core::{select_params, PenalizationParams, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Penalization block: either the literal string "auto" (parameters chosen
/// from the geometry with a 0.5 safety factor) or explicit values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenalizationChoice {
    Keyword(String),
    Explicit(PenalizationParams),
}

impl Default for PenalizationChoice {
    fn default() -> Self {
        PenalizationChoice::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub core_end: f64,
    pub n_core: usize,
    pub r_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    pub solves_original: bool,
    pub envelope: bool,
    pub tail: bool,
    pub rescaled: bool,
    pub comparison: bool,
    /// residual acceptance: residual_max <= residual_factor * u_max
    pub residual_factor: f64,
    /// window for the tail lower bound and the log-log slope
    pub tail_window: [f64; 2],
    /// accepted range for the far-field log-log slope
    pub slope_range: [f64; 2],
    pub rescaled_max: f64,
    /// normalization radius R (the barrier is pinned on the sphere eps R)
    pub barrier_r_cap: f64,
    /// smallness fraction nu in (0, 1) for the barrier
    pub barrier_nu: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            solves_original: true,
            envelope: true,
            tail: true,
            rescaled: true,
            comparison: true,
            residual_factor: 1e-8,
            tail_window: [50.0, 300.0],
            slope_range: [-1.3, -0.7],
            rescaled_max: 0.05,
            barrier_r_cap: 3.0,
            barrier_nu: 0.5,
        }
    }
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub penalization: PenalizationChoice,
    pub grid: GridConfig,
    /// epsilon values for `sweep`; empty means use problem.epsilons
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub verification: VerificationConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::io(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn epsilons(&self) -> Vec<f64> {
        let mut eps = if self.sweep.is_empty() {
            self.problem.epsilons.clone()
        } else {
            self.sweep.clone()
        };
        eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eps
    }

    pub fn resolve_penalization(&self) -> CliResult<PenalizationParams> {
        match &self.penalization {
            PenalizationChoice::Keyword(s) if s == "auto" => {
                Ok(select_params(&self.problem, 0.5)?)
            }
            PenalizationChoice::Keyword(s) => Err(CliError::config(format!(
                "penalization must be \"auto\" or explicit parameters, got \"{s}\""
            ))),
            PenalizationChoice::Explicit(p) => {
                p.validate(self.problem.n_dim, &self.problem.lambda)?;
                Ok(*p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> &'static str {
        r#"{
            "problem": {
                "N": 3, "p": 4.0, "epsilons": [0.2, 0.1, 0.05],
                "V": {"family": "plateau", "poly": [1.0, 0.0, 1.0], "r_on": 2.0, "r_off": 3.0},
                "K": {"family": "constant", "value": 1.0},
                "Lambda": {"shape": "ball", "radius": 1.0},
                "sigma": 0.0, "M": 1.0
            },
            "penalization": "auto",
            "grid": {"core_end": 5.0, "n_core": 2048, "r_max": 1000.0},
            "output": {"directory": "out"}
        }"#
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg: RunConfig = serde_json::from_str(sample_json()).unwrap();
        let emitted = serde_json::to_string_pretty(&cfg).unwrap();
        let cfg2: RunConfig = serde_json::from_str(&emitted).unwrap();
        let emitted2 = serde_json::to_string_pretty(&cfg2).unwrap();
        assert_eq!(emitted, emitted2);
    }

    #[test]
    fn auto_penalization_resolves() {
        let cfg: RunConfig = serde_json::from_str(sample_json()).unwrap();
        let params = cfg.resolve_penalization().unwrap();
        assert!(params.kappa > 0.0);
    }

    #[test]
    fn explicit_penalization_is_validated() {
        let mut cfg: RunConfig = serde_json::from_str(sample_json()).unwrap();
        cfg.penalization = PenalizationChoice::Explicit(PenalizationParams {
            kappa: 1e9,
            beta: 1.0,
            rho0: 0.5 / std::f64::consts::E,
            rho: 0.5,
        });
        assert!(cfg.resolve_penalization().is_err());
    }

    #[test]
    fn unknown_keyword_rejected() {
        let mut cfg: RunConfig = serde_json::from_str(sample_json()).unwrap();
        cfg.penalization = PenalizationChoice::Keyword("magic".into());
        let err = cfg.resolve_penalization().unwrap_err();
        assert_eq!(err.kind, crate::ExitKind::Config);
    }

    #[test]
    fn sweep_defaults_to_problem_epsilons_sorted_descending() {
        let cfg: RunConfig = serde_json::from_str(sample_json()).unwrap();
        assert_eq!(cfg.epsilons(), vec![0.2, 0.1, 0.05]);
    }
}
