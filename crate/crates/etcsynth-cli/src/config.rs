//! Pipeline configuration: one TOML document drives every stage.
//!
//! ```toml
//! [plant]
//! a = [[0.0, 0.0], [-1.0, -2.0]]
//! b = [[1.0], [0.0]]
//!
//! [experiment]
//! ts = 0.1
//! samples = 10
//!
//! [disturbance]
//! kind = "uniform-bounded"
//! delta = 0.1
//!
//! [design]
//! regime = "robust"
//! rule = "mixed"
//!
//! [simulation]
//! x0 = [1.0, 1.0]
//! ```
//!
//! Unknown keys are rejected so typos cannot silently fall back to
//! defaults.

use std::path::Path;

use etcsynth::dataset::{DisturbanceKind, DisturbanceSignal, ExperimentConfig, PlantModel};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::CliError;

/// Rules that tolerate disturbances; everything else assumes exact data.
pub const ROBUST_RULES: [&str; 7] = [
    "mixed",
    "mixed-squared",
    "time-regularized",
    "combined",
    "quadratic-noisy",
    "dynamic-noisy",
    "lyap-threshold-noisy",
];

/// Rules for exact data.
pub const NOISEFREE_RULES: [&str; 4] =
    ["static-relative", "quadratic", "dynamic", "lyap-threshold"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub plant: PlantBlock,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub disturbance: DisturbanceBlock,
    pub design: DesignBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
}

/// State and input maps as row-major nested arrays.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceBlock {
    pub kind: DisturbanceKind,
    /// Pointwise amplitude bound `delta`.
    pub delta: f64,
}

impl Default for DisturbanceBlock {
    fn default() -> Self {
        Self { kind: DisturbanceKind::Zero, delta: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeChoice {
    NoiseFree,
    Robust,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    pub regime: RegimeChoice,
    /// Trigger rule name; see [`ROBUST_RULES`] and [`NOISEFREE_RULES`].
    pub rule: String,
    /// Decay weight `Omega = omega_scale * I` for robust designs.
    #[serde(default = "default_omega_scale")]
    pub omega_scale: f64,
    /// Additive threshold of the noisy rules.
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Optional decay split in `(0, 1)` for the relative rule: keep this
    /// fraction of the certified rate, spend the rest on threshold size.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Reference decay fraction of the threshold-comparison rules.
    #[serde(default = "default_varsigma")]
    pub varsigma: f64,
    /// Back-off margin for the noisy reference decay rate.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Fraction of the admissible threshold supremum used by the
    /// time-regularized rule.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Maximize the relative threshold (otherwise only certify
    /// feasibility).
    #[serde(default = "default_true")]
    pub maximize: bool,
    /// Filter decay rate of the dynamic rules.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Filter mixing weight of the dynamic rules.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Initial auxiliary state of filtered and threshold rules.
    #[serde(default = "default_eta0")]
    pub eta0: f64,
}

fn default_omega_scale() -> f64 {
    10.0
}
fn default_nu() -> f64 {
    0.01
}
fn default_varsigma() -> f64 {
    0.9
}
fn default_margin() -> f64 {
    0.05
}
fn default_fraction() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}
fn default_lambda() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    0.5
}
fn default_eta0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    /// Initial state; defaults to the all-ones vector.
    pub x0: Vec<f64>,
    pub t_end: f64,
    /// Requested step; shrunk automatically when a waiting time demands
    /// finer resolution.
    pub h: f64,
    pub event_tol: f64,
    pub record_stride: usize,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self { x0: Vec::new(), t_end: 10.0, h: 1e-4, event_tol: 1e-9, record_stride: 1 }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Io(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::Io(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.plant()?;
        let rule = self.design.rule.as_str();
        let robust = ROBUST_RULES.contains(&rule);
        let noisefree = NOISEFREE_RULES.contains(&rule);
        if !robust && !noisefree {
            return Err(CliError::Io(format!("unknown trigger rule \"{rule}\"")));
        }
        match self.design.regime {
            RegimeChoice::Robust if noisefree => {
                return Err(CliError::Io(format!(
                    "rule \"{rule}\" assumes exact data; use regime = \"noise-free\""
                )));
            }
            RegimeChoice::NoiseFree if robust => {
                return Err(CliError::Io(format!(
                    "rule \"{rule}\" tolerates disturbances; use regime = \"robust\""
                )));
            }
            _ => {}
        }
        if self.design.regime == RegimeChoice::Robust {
            if self.disturbance.delta <= 0.0 {
                return Err(CliError::Io(
                    "robust designs need a positive disturbance.delta".into(),
                ));
            }
            if self.design.omega_scale <= 0.0 {
                return Err(CliError::Io("design.omega_scale must be positive".into()));
            }
        }
        if !self.simulation.x0.is_empty() && self.simulation.x0.len() != self.plant()?.n() {
            return Err(CliError::Io(format!(
                "simulation.x0 has {} entries for a {}-state plant",
                self.simulation.x0.len(),
                self.plant()?.n()
            )));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<PlantModel, CliError> {
        let a = rows_to_matrix(&self.plant.a, "plant.a")?;
        let b = rows_to_matrix(&self.plant.b, "plant.b")?;
        PlantModel::new(a, b).map_err(|e| CliError::Io(format!("plant: {e}")))
    }

    pub fn disturbance_signal(&self) -> DisturbanceSignal {
        DisturbanceSignal { kind: self.disturbance.kind, amplitude: self.disturbance.delta }
    }

    /// Initial state for simulations: configured, or all ones.
    pub fn x0(&self, n: usize) -> DVector<f64> {
        if self.simulation.x0.is_empty() {
            DVector::from_element(n, 1.0)
        } else {
            DVector::from_vec(self.simulation.x0.clone())
        }
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(CliError::Io(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Io(format!("{what}: rows must be nonempty and equally long")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Io(format!("{what}: entries must be finite")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [plant]
        a = [[0.0, 0.0], [-1.0, -2.0]]
        b = [[1.0], [0.0]]

        [design]
        regime = "noise-free"
        rule = "static-relative"
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.experiment.samples, 10);
        assert!((cfg.experiment.ts - 0.1).abs() < 1e-15);
        assert_eq!(cfg.simulation.t_end, 10.0);
        assert_eq!(cfg.x0(2), DVector::from_vec(vec![1.0, 1.0]));
        let plant = cfg.plant().unwrap();
        assert_eq!((plant.n(), plant.m()), (2, 1));
    }

    #[test]
    fn unknown_keys_and_rules_are_rejected() {
        let bad = MINIMAL.replace("rule = \"static-relative\"", "rule = \"does-not-exist\"");
        assert!(PipelineConfig::from_toml(&bad).is_err());
        let typo = format!("{MINIMAL}\n[simulation]\nt_endd = 3.0\n");
        assert!(PipelineConfig::from_toml(&typo).is_err());
    }

    #[test]
    fn regime_and_rule_must_agree() {
        let mismatched = MINIMAL.replace("rule = \"static-relative\"", "rule = \"mixed\"");
        let err = PipelineConfig::from_toml(&mismatched).unwrap_err();
        assert!(err.to_string().contains("robust"));

        let robust = r#"
            [plant]
            a = [[0.0]]
            b = [[1.0]]
            [disturbance]
            kind = "uniform-bounded"
            delta = 0.0
            [design]
            regime = "robust"
            rule = "mixed"
        "#;
        let err = PipelineConfig::from_toml(robust).unwrap_err();
        assert!(err.to_string().contains("delta"));
    }

    #[test]
    fn ragged_plant_rows_are_rejected() {
        let bad = MINIMAL.replace("[[0.0, 0.0], [-1.0, -2.0]]", "[[0.0, 0.0], [-1.0]]");
        assert!(PipelineConfig::from_toml(&bad).is_err());
    }
}
