use std::path::{Path, PathBuf};

use sben_core::solver::Drift;
use sben_core::{SamplerBackend, Scenario, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Deterministic,
    Stochastic,
    Liouville,
    WorkPump,
    Selftest,
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Deterministic => "deterministic",
            RunKind::Stochastic => "stochastic",
            RunKind::Liouville => "liouville",
            RunKind::WorkPump => "work_pump",
            RunKind::Selftest => "selftest",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowChoice {
    #[default]
    Sben,
    Perturbed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub amplitude: f64,
    pub angular_frequency: f64,
}

/// The `[run]` block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub kind: RunKind,
    #[serde(default)]
    pub seed: u64,
    /// Relative paths resolve against the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub plots: bool,
    /// Quadrature nodes per axis (liouville, work_pump).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Refinement levels reported for liouville runs; 1 = the (coarse, fine) pair.
    #[serde(default = "one")]
    pub refine: usize,
    /// Trajectories in a stochastic ensemble.
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub sampler: SamplerBackend,
    #[serde(default)]
    pub flow: FlowChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftConfig>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    /// Absent only for selftest runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Validation(format!("{field}: {}", reason.into()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    /// Kind-specific required fields.
    fn check(&self) -> Result<(), CliError> {
        let r = &self.run;
        if r.kind == RunKind::Selftest {
            return Ok(());
        }
        let sc = self.scenario.as_ref().ok_or_else(|| invalid("scenario", "missing block"))?;
        match r.kind {
            RunKind::Deterministic | RunKind::Stochastic => {
                if sc.initial.is_none() {
                    return Err(invalid("scenario.initial", "required for this run kind"));
                }
            }
            RunKind::Liouville | RunKind::WorkPump => {
                if sc.initial_set.is_none() {
                    return Err(invalid("scenario.initial_set", "required for this run kind"));
                }
                match r.resolution {
                    None => return Err(invalid("run.resolution", "required for this run kind")),
                    Some(n) if n < sben_core::liouville::MIN_RESOLUTION => {
                        return Err(invalid("run.resolution", format!("{n} is below 8")))
                    }
                    _ => {}
                }
            }
            RunKind::Selftest => unreachable!(),
        }
        if r.kind == RunKind::Stochastic && r.ensemble == 0 {
            return Err(invalid("run.ensemble", "must be at least 1"));
        }
        if r.refine == 0 {
            return Err(invalid("run.refine", "must be at least 1"));
        }
        if r.flow == FlowChoice::Perturbed && r.drift.is_none() {
            return Err(invalid("run.drift", "required when run.flow = \"perturbed\""));
        }
        if let Some(d) = r.drift {
            if !d.amplitude.is_finite() || !d.angular_frequency.is_finite() {
                return Err(invalid("run.drift", "amplitude and angular_frequency must be finite"));
            }
        }
        Ok(())
    }

    /// Wires the scenario block; errors carry `scenario.` field paths.
    pub fn scenario(&self, base_dir: Option<&Path>) -> Result<Scenario, CliError> {
        let sc = self.scenario.as_ref().ok_or_else(|| invalid("scenario", "missing block"))?;
        sc.build(base_dir, self.run.seed).map_err(|e| match e {
            sben_core::Error::InvalidParameter { field, reason } => invalid(&format!("scenario.{field}"), reason),
            other => CliError::Validation(format!("scenario: {other}")),
        })
    }

    pub fn drift(&self) -> Option<Drift> {
        self.run.drift.map(|d| Drift {
            amplitude: d.amplitude,
            angular_frequency: d.angular_frequency,
        })
    }
}

/// Annotated schema with one example per run kind, printed by `export-schema`.
pub const SCHEMA: &str = include_str!("../schema.toml");

#[cfg(test)]
mod tests {
    use super::*;

    const DET: &str = r#"
[run]
kind = "deterministic"
seed = 3

[scenario]
dimension = 1
horizon = 1.0
step = 0.01
beta = 1.0
initial = { q = [1.0], p = [0.0] }
hamiltonian = { kind = "separable", mass = 1.0, potential = { kind = "harmonic", stiffness = 1.0 } }
dissipation = { kind = "quadratic", coefficient = 0.5 }
"#;

    #[test]
    fn parses_and_echoes() {
        let cfg = RunConfig::parse(DET).unwrap();
        assert_eq!(cfg.run.kind, RunKind::Deterministic);
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.scenario(None).unwrap().seed, 3);
    }

    #[test]
    fn missing_beta_names_the_field() {
        let text = DET.replace("beta = 1.0\n", "");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn kind_specific_fields() {
        let text = DET.replace("\"deterministic\"", "\"liouville\"");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("scenario.initial_set"), "{err}");
        let text = DET.replace("seed = 3", "seed = 3\nflow = \"perturbed\"");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("run.drift"));
    }

    #[test]
    fn scenario_errors_carry_paths() {
        let text = DET.replace("mass = 1.0", "mass = -1.0");
        let cfg = RunConfig::parse(&text).unwrap();
        let err = cfg.scenario(None).unwrap_err().to_string();
        assert!(err.contains("scenario.hamiltonian.mass"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = DET.replace("seed = 3", "seed = 3\nsede = 4");
        assert!(RunConfig::parse(&text).is_err());
    }
}
