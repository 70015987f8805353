//! The design report: everything a controller run produces, in one JSON
//! document that later stages reload and independently re-verify.
//!
//! Matrices are stored as row-major nested arrays. Numbers round-trip
//! bit-exactly through JSON, so re-verification after a reload sees the
//! same floats the designer saw.

use std::path::Path;

use etcsynth::dataset::{disturbance_bound_from_amplitude, DisturbanceModel, SampleMode};
use etcsynth::lmi::ConstraintResidual;
use etcsynth::synthesis::{ControllerDesign, NormCache, Regime, SigmaBound};
use etcsynth::triggers::TriggerSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::rows_to_matrix;
use crate::error::CliError;

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub residual: f64,
    pub shift: f64,
}

impl From<&ConstraintResidual> for ResidualReport {
    fn from(r: &ConstraintResidual) -> Self {
        Self { name: r.name.clone(), residual: r.residual, shift: r.shift }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormsReport {
    pub acl: f64,
    pub bk: f64,
    pub a_open: f64,
    pub g: f64,
    pub l: f64,
    pub v0: f64,
    pub delta: f64,
    pub alpha: f64,
    pub c_phi: f64,
    pub c_e: f64,
    pub c_a: f64,
}

impl From<&NormCache> for NormsReport {
    fn from(n: &NormCache) -> Self {
        Self {
            acl: n.acl,
            bk: n.bk,
            a_open: n.a_open,
            g: n.g,
            l: n.l,
            v0: n.v0,
            delta: n.delta,
            alpha: n.alpha,
            c_phi: n.c_phi,
            c_e: n.c_e,
            c_a: n.c_a,
        }
    }
}

impl NormsReport {
    pub fn to_cache(&self) -> NormCache {
        NormCache {
            acl: self.acl,
            bk: self.bk,
            a_open: self.a_open,
            g: self.g,
            l: self.l,
            v0: self.v0,
            delta: self.delta,
            alpha: self.alpha,
            c_phi: self.c_phi,
            c_e: self.c_e,
            c_a: self.c_a,
        }
    }
}

/// Tuned trigger rule: the name plus whichever parameters the rule uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerReport {
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Waiting-time threshold (`sigma_1`) when it differs from the firing
    /// threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_bar_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varsigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varsigma_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_tilde: Option<Vec<Vec<f64>>>,
}

impl TriggerReport {
    pub fn empty(rule: &str) -> Self {
        Self {
            rule: rule.to_string(),
            sigma: None,
            sigma1: None,
            nu: None,
            mu: None,
            eps: None,
            gamma: None,
            tau_d: None,
            tau_bar_d: None,
            lambda: None,
            theta: None,
            eta0: None,
            varsigma: None,
            varsigma_d: None,
            rho1: None,
            psi_tilde: None,
        }
    }
}

/// Inter-event guarantee attached to the design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MietReport {
    /// The guaranteed minimum inter-event time of the selected rule.
    pub bound: f64,
    /// Disturbance-robust waiting time, when the rule enforces one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_d: Option<f64>,
    /// Additive-threshold separation, for the mixed rules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_bar: Option<f64>,
    /// Radius of the ball the undisturbed loop settles into, for rules with
    /// practical (not asymptotic) guarantees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ultimate_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SigmaBoundReport {
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub sigma_sup: f64,
    pub sigma: f64,
}

impl From<&SigmaBound> for SigmaBoundReport {
    fn from(b: &SigmaBound) -> Self {
        Self {
            omega1: b.omega1,
            omega2: b.omega2,
            omega3: b.omega3,
            sigma_sup: b.sigma_sup,
            sigma: b.sigma,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    /// "noise-free" or "robust".
    pub regime: String,
    pub data_mode: SampleMode,
    pub ts: f64,
    pub t_count: usize,
    /// Pointwise disturbance amplitude the experiment was run with.
    pub delta: f64,
    /// Amplitude the design certified against (integral data scales the
    /// pointwise bound by the sample period).
    pub delta_effective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_scale: Option<f64>,
    pub k_gain: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub j0: Vec<Vec<f64>>,
    pub v0: Vec<Vec<f64>>,
    pub acl_data: Vec<Vec<f64>>,
    pub bk_data: Vec<Vec<f64>>,
    pub a_data: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub norms: NormsReport,
    pub design_residuals: Vec<ResidualReport>,
    pub trigger: TriggerReport,
    pub trigger_residuals: Vec<ResidualReport>,
    pub miet: MietReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_bound: Option<SigmaBoundReport>,
}

impl DesignReport {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn regime(&self) -> Result<Regime, CliError> {
        match self.regime.as_str() {
            "noise-free" => Ok(Regime::NoiseFree),
            "robust" => Ok(Regime::Robust),
            other => Err(CliError::Io(format!("unknown regime \"{other}\" in design report"))),
        }
    }

    /// The disturbance model the design certified against, for robust
    /// regimes.
    pub fn disturbance_model(&self) -> Result<Option<DisturbanceModel>, CliError> {
        if self.regime()? == Regime::NoiseFree {
            return Ok(None);
        }
        let n = self.s.len();
        let model = disturbance_bound_from_amplitude(self.delta_effective, self.t_count, n)
            .map_err(CliError::from)?;
        Ok(Some(model))
    }

    /// Rebuilds the full design object for re-verification and simulation.
    pub fn controller(&self) -> Result<ControllerDesign, CliError> {
        let regime = self.regime()?;
        let omega = match (regime, self.omega_scale) {
            (Regime::Robust, Some(scale)) => {
                Some(DMatrix::identity(self.s.len(), self.s.len()) * scale)
            }
            (Regime::Robust, None) => {
                return Err(CliError::Io("robust design report lacks omega_scale".into()))
            }
            (Regime::NoiseFree, _) => None,
        };
        Ok(ControllerDesign {
            regime,
            y: rows_to_matrix(&self.y, "design.y")?,
            s: rows_to_matrix(&self.s, "design.s")?,
            k_gain: rows_to_matrix(&self.k_gain, "design.k_gain")?,
            g: rows_to_matrix(&self.g, "design.g")?,
            l: rows_to_matrix(&self.l, "design.l")?,
            j0: rows_to_matrix(&self.j0, "design.j0")?,
            v0: rows_to_matrix(&self.v0, "design.v0")?,
            acl_data: rows_to_matrix(&self.acl_data, "design.acl_data")?,
            bk_data: rows_to_matrix(&self.bk_data, "design.bk_data")?,
            a_data: rows_to_matrix(&self.a_data, "design.a_data")?,
            q: rows_to_matrix(&self.q, "design.q")?,
            omega,
            eps: self.eps,
            norms: self.norms.to_cache(),
            residuals: Vec::new(),
        })
    }

    /// Rebuilds the trigger rule the simulator should run.
    pub fn trigger_spec(&self) -> Result<TriggerSpec, CliError> {
        let t = &self.trigger;
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| CliError::Io(format!("trigger report lacks {what}")))
        };
        let psi = || -> Result<DMatrix<f64>, CliError> {
            let rows = t
                .psi_tilde
                .as_ref()
                .ok_or_else(|| CliError::Io("trigger report lacks psi_tilde".into()))?;
            rows_to_matrix(rows, "trigger.psi_tilde")
        };
        let s_mat = || rows_to_matrix(&self.s, "design.s");
        let spec = match t.rule.as_str() {
            "static-relative" => TriggerSpec::StaticRelative { sigma: need(t.sigma, "sigma")? },
            "mixed" => {
                TriggerSpec::Mixed { sigma: need(t.sigma, "sigma")?, nu: need(t.nu, "nu")? }
            }
            "mixed-squared" => {
                TriggerSpec::MixedSquared { sigma: need(t.sigma, "sigma")?, nu: need(t.nu, "nu")? }
            }
            "time-regularized" => TriggerSpec::TimeRegularized {
                sigma: need(t.sigma, "sigma")?,
                tau_d: need(t.tau_d, "tau_d")?,
            },
            "combined" => TriggerSpec::Combined {
                tau_d: need(t.tau_d, "tau_d")?,
                sigma2: need(t.sigma, "sigma")?,
                nu: need(t.nu, "nu")?,
            },
            "quadratic" => TriggerSpec::QuadraticNoiseFree { psi_tilde: psi()? },
            "quadratic-noisy" => TriggerSpec::QuadraticNoisy {
                psi_tilde: psi()?,
                tau_bar_d: need(t.tau_bar_d, "tau_bar_d")?,
                nu: need(t.nu, "nu")?,
            },
            "dynamic" => TriggerSpec::DynamicNoiseFree {
                psi_tilde: psi()?,
                lambda: need(t.lambda, "lambda")?,
                theta: need(t.theta, "theta")?,
                eta0: need(t.eta0, "eta0")?,
            },
            "dynamic-noisy" => TriggerSpec::DynamicNoisy {
                psi_tilde: psi()?,
                lambda: need(t.lambda, "lambda")?,
                theta: need(t.theta, "theta")?,
                nu: need(t.nu, "nu")?,
                tau_bar_d: need(t.tau_bar_d, "tau_bar_d")?,
                eta0: need(t.eta0, "eta0")?,
            },
            "lyap-threshold" => TriggerSpec::LyapThresholdNoiseFree {
                s: s_mat()?,
                varsigma: need(t.varsigma, "varsigma")?,
                rho1: need(t.rho1, "rho1")?,
                eta0: need(t.eta0, "eta0")?,
            },
            "lyap-threshold-noisy" => TriggerSpec::LyapThresholdNoisy {
                s: s_mat()?,
                varsigma_d: need(t.varsigma_d, "varsigma_d")?,
                nu: need(t.nu, "nu")?,
                tau_d: need(t.tau_d, "tau_d")?,
                eta0: need(t.eta0, "eta0")?,
            },
            other => return Err(CliError::Io(format!("unknown trigger rule \"{other}\""))),
        };
        Ok(spec)
    }
}
