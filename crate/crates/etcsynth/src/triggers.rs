//! Event-triggering rules: guard functions and auxiliary-state dynamics.
//!
//! A rule decides when the controller transmits a fresh state sample. All
//! rules share one convention: [`event_value`] returns a guard `g` that is
//! negative while no event is due, and an event fires at the first time
//! where `g >= 0` (subject to the rule's dwell time, and to the freeze
//! semantics for rules that stop transmitting once the state has converged).
//! The simulator owns arming, dwell enforcement, and crossing refinement;
//! this module owns the pointwise rule semantics.
//!
//! The quadratic forms act on the stacked vector `z = (x, e)` where `x` is
//! the current state and `e = x(t_k) - x(t)` the hold error.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Triggering rule with its tuned parameters.
///
/// Rules come in two families. The noise-free family (`StaticRelative`,
/// `QuadraticNoiseFree`, `DynamicNoiseFree`, `LyapThresholdNoiseFree`)
/// certifies asymptotic stability for undisturbed closed loops; the robust
/// family tolerates bounded disturbances through additive thresholds,
/// enforced waiting times, or auxiliary-state filtering.
#[derive(Debug, Clone)]
pub enum TriggerSpec {
    /// Fires when `|e|^2 >= sigma^2 |x|^2`.
    StaticRelative { sigma: f64 },
    /// Fires when `|e| >= sigma |x| + nu`.
    Mixed { sigma: f64, nu: f64 },
    /// Fires when `|e|^2 >= 2 sigma^2 |x|^2 + 2 nu^2`; never earlier than
    /// `Mixed` with the same parameters.
    MixedSquared { sigma: f64, nu: f64 },
    /// Fires at the first time past the waiting time `tau_d` with
    /// `|e|^2 >= sigma^2 |x|^2`.
    TimeRegularized { sigma: f64, tau_d: f64 },
    /// Waiting time from `sigma1`, then fires when
    /// `|e|^2 >= 2 sigma2^2 |x|^2 + nu`.
    Combined { tau_d: f64, sigma2: f64, nu: f64 },
    /// Fires when `z' PsiTilde z >= 0` for a designed matrix `PsiTilde`.
    QuadraticNoiseFree { psi_tilde: DMatrix<f64> },
    /// Fires at the first time past `tau_bar_d` with
    /// `z' PsiTilde z >= nu`. Needs a positive dwell or threshold.
    QuadraticNoisy { psi_tilde: DMatrix<f64>, tau_bar_d: f64, nu: f64 },
    /// Filtered version: `eta' = -lambda eta - z' PsiTilde z`, fires when
    /// `eta <= theta z' PsiTilde z`. With `theta = 0` the event additionally
    /// waits for `eta' <= 0`, so it cannot fire while the filter is being
    /// recharged.
    DynamicNoiseFree { psi_tilde: DMatrix<f64>, lambda: f64, theta: f64, eta0: f64 },
    /// Filtered noisy version with a gated filter: the forcing term
    /// `z' PsiTilde z - nu` only enters after the waiting time.
    DynamicNoisy {
        psi_tilde: DMatrix<f64>,
        lambda: f64,
        theta: f64,
        nu: f64,
        tau_bar_d: f64,
        eta0: f64,
    },
    /// Compares `V(x) = x' S x` against a reference `eta` decaying at the
    /// slowed-down certified rate `varsigma * rho1`.
    LyapThresholdNoiseFree { s: DMatrix<f64>, varsigma: f64, rho1: f64, eta0: f64 },
    /// Noisy threshold rule: `eta' = -varsigma_d eta + nu`, fires past the
    /// waiting time once `V(x) >= eta`.
    LyapThresholdNoisy { s: DMatrix<f64>, varsigma_d: f64, nu: f64, tau_d: f64, eta0: f64 },
}

/// What a rule resets to zero and stops updating once the sampled state has
/// numerically converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezeKind {
    /// No freeze: the rule keeps scheduling events.
    None,
    /// Transmissions stop once `x(t_k) = 0`.
    State,
    /// Transmissions stop once `(x(t_k), eta) = 0`.
    StateAndEta,
}

/// Instantaneous data a guard sees.
#[derive(Debug, Clone)]
pub struct TriggerState {
    pub x: DVector<f64>,
    pub e: DVector<f64>,
    /// Auxiliary filter state; ignored by rules without one.
    pub eta: f64,
    /// Time since the last event.
    pub elapsed: f64,
}

#[derive(Debug, Error)]
pub enum TriggerError {
    #[error("rule requires auxiliary state")]
    NoAuxiliaryState,
    #[error("invalid trigger parameter: {0}")]
    InvalidParameter(&'static str),
}

/// The relative-threshold form `Psi(sigma) = diag(-sigma^2 I, I)`.
pub fn psi_matrix(n: usize, sigma: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = -sigma * sigma;
        m[(n + i, n + i)] = 1.0;
    }
    m
}

/// The doubled form `diag(-2 sigma^2 I, I)` used by the robust rules.
pub fn psi_bar_matrix(n: usize, sigma: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = -2.0 * sigma * sigma;
        m[(n + i, n + i)] = 1.0;
    }
    m
}

/// Evaluates `z' M z` for `z = (x, e)` without forming `z`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>, e: &DVector<f64>) -> f64 {
    let n = x.len();
    debug_assert_eq!(m.nrows(), 2 * n);
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, n).copy_from(e);
    (m * &z).dot(&z)
}

fn check_pos(v: f64, what: &'static str) -> Result<(), TriggerError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(TriggerError::InvalidParameter(what));
    }
    Ok(())
}

fn check_nonneg(v: f64, what: &'static str) -> Result<(), TriggerError> {
    if !v.is_finite() || v < 0.0 {
        return Err(TriggerError::InvalidParameter(what));
    }
    Ok(())
}

fn check_quad_matrix(m: &DMatrix<f64>) -> Result<(), TriggerError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 || m.nrows() % 2 != 0 {
        return Err(TriggerError::InvalidParameter("quadratic form must be square with even size"));
    }
    if (m - m.transpose()).amax() > 1e-9 * (1.0 + m.amax()) {
        return Err(TriggerError::InvalidParameter("quadratic form must be symmetric"));
    }
    Ok(())
}

impl TriggerSpec {
    /// Stable machine-readable rule name.
    pub fn name(&self) -> &'static str {
        match self {
            TriggerSpec::StaticRelative { .. } => "static-relative",
            TriggerSpec::Mixed { .. } => "mixed",
            TriggerSpec::MixedSquared { .. } => "mixed-squared",
            TriggerSpec::TimeRegularized { .. } => "time-regularized",
            TriggerSpec::Combined { .. } => "combined",
            TriggerSpec::QuadraticNoiseFree { .. } => "quadratic",
            TriggerSpec::QuadraticNoisy { .. } => "quadratic-noisy",
            TriggerSpec::DynamicNoiseFree { .. } => "dynamic",
            TriggerSpec::DynamicNoisy { .. } => "dynamic-noisy",
            TriggerSpec::LyapThresholdNoiseFree { .. } => "lyap-threshold",
            TriggerSpec::LyapThresholdNoisy { .. } => "lyap-threshold-noisy",
        }
    }

    /// Enforced minimum waiting time after each event.
    pub fn dwell(&self) -> f64 {
        match *self {
            TriggerSpec::TimeRegularized { tau_d, .. } => tau_d,
            TriggerSpec::Combined { tau_d, .. } => tau_d,
            TriggerSpec::QuadraticNoisy { tau_bar_d, .. } => tau_bar_d,
            TriggerSpec::DynamicNoisy { tau_bar_d, .. } => tau_bar_d,
            TriggerSpec::LyapThresholdNoisy { tau_d, .. } => tau_d,
            _ => 0.0,
        }
    }

    pub fn has_eta(&self) -> bool {
        matches!(
            self,
            TriggerSpec::DynamicNoiseFree { .. }
                | TriggerSpec::DynamicNoisy { .. }
                | TriggerSpec::LyapThresholdNoiseFree { .. }
                | TriggerSpec::LyapThresholdNoisy { .. }
        )
    }

    /// Initial auxiliary state, for rules that carry one.
    pub fn eta0(&self) -> Option<f64> {
        match *self {
            TriggerSpec::DynamicNoiseFree { eta0, .. } => Some(eta0),
            TriggerSpec::DynamicNoisy { eta0, .. } => Some(eta0),
            TriggerSpec::LyapThresholdNoiseFree { eta0, .. } => Some(eta0),
            TriggerSpec::LyapThresholdNoisy { eta0, .. } => Some(eta0),
            _ => None,
        }
    }

    pub fn freeze(&self) -> FreezeKind {
        match self {
            TriggerSpec::StaticRelative { .. } | TriggerSpec::QuadraticNoiseFree { .. } => {
                FreezeKind::State
            }
            TriggerSpec::DynamicNoiseFree { .. } | TriggerSpec::LyapThresholdNoiseFree { .. } => {
                FreezeKind::StateAndEta
            }
            _ => FreezeKind::None,
        }
    }

    /// Whether the guard reads only `x` and `eta`: re-anchoring the error
    /// at a transmission then leaves the guard value unchanged, so right
    /// after an event these rules sit exactly on the firing surface
    /// instead of jumping below it.
    pub fn guard_ignores_error(&self) -> bool {
        matches!(
            self,
            TriggerSpec::LyapThresholdNoiseFree { .. } | TriggerSpec::LyapThresholdNoisy { .. }
        )
    }

    /// Parameter sanity: positivity and shape requirements.
    pub fn validate(&self) -> Result<(), TriggerError> {
        match self {
            TriggerSpec::StaticRelative { sigma } => check_pos(*sigma, "sigma must be positive"),
            TriggerSpec::Mixed { sigma, nu } | TriggerSpec::MixedSquared { sigma, nu } => {
                check_pos(*sigma, "sigma must be positive")?;
                check_nonneg(*nu, "nu must be nonnegative")
            }
            TriggerSpec::TimeRegularized { sigma, tau_d } => {
                check_pos(*sigma, "sigma must be positive")?;
                check_pos(*tau_d, "waiting time must be positive")
            }
            TriggerSpec::Combined { tau_d, sigma2, nu } => {
                check_pos(*tau_d, "waiting time must be positive")?;
                check_pos(*sigma2, "sigma must be positive")?;
                check_nonneg(*nu, "nu must be nonnegative")
            }
            TriggerSpec::QuadraticNoiseFree { psi_tilde } => check_quad_matrix(psi_tilde),
            TriggerSpec::QuadraticNoisy { psi_tilde, tau_bar_d, nu } => {
                check_quad_matrix(psi_tilde)?;
                check_nonneg(*tau_bar_d, "waiting time must be nonnegative")?;
                check_nonneg(*nu, "nu must be nonnegative")?;
                if *tau_bar_d <= 0.0 && *nu <= 0.0 {
                    return Err(TriggerError::InvalidParameter(
                        "a positive waiting time or threshold is required",
                    ));
                }
                Ok(())
            }
            TriggerSpec::DynamicNoiseFree { psi_tilde, lambda, theta, eta0 } => {
                check_quad_matrix(psi_tilde)?;
                check_pos(*lambda, "filter rate must be positive")?;
                check_nonneg(*theta, "theta must be nonnegative")?;
                check_nonneg(*eta0, "initial filter state must be nonnegative")
            }
            TriggerSpec::DynamicNoisy { psi_tilde, lambda, theta, nu, tau_bar_d, eta0 } => {
                check_quad_matrix(psi_tilde)?;
                check_pos(*lambda, "filter rate must be positive")?;
                check_nonneg(*theta, "theta must be nonnegative")?;
                check_nonneg(*nu, "nu must be nonnegative")?;
                check_nonneg(*tau_bar_d, "waiting time must be nonnegative")?;
                check_nonneg(*eta0, "initial filter state must be nonnegative")?;
                if *tau_bar_d <= 0.0 && *nu <= 0.0 {
                    return Err(TriggerError::InvalidParameter(
                        "a positive waiting time or threshold is required",
                    ));
                }
                Ok(())
            }
            TriggerSpec::LyapThresholdNoiseFree { s, varsigma, rho1, eta0 } => {
                check_lyap_matrix(s)?;
                if !varsigma.is_finite() || *varsigma <= 0.0 || *varsigma >= 1.0 {
                    return Err(TriggerError::InvalidParameter("varsigma must lie in (0, 1)"));
                }
                check_pos(*rho1, "decay rate must be positive")?;
                check_nonneg(*eta0, "initial threshold must be nonnegative")
            }
            TriggerSpec::LyapThresholdNoisy { s, varsigma_d, nu, tau_d, eta0 } => {
                check_lyap_matrix(s)?;
                check_pos(*varsigma_d, "decay rate must be positive")?;
                check_nonneg(*nu, "nu must be nonnegative")?;
                check_pos(*tau_d, "waiting time must be positive")?;
                check_nonneg(*eta0, "initial threshold must be nonnegative")
            }
        }
    }
}

fn check_lyap_matrix(s: &DMatrix<f64>) -> Result<(), TriggerError> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(TriggerError::InvalidParameter("Lyapunov matrix must be square"));
    }
    if (s - s.transpose()).amax() > 1e-9 * (1.0 + s.amax()) {
        return Err(TriggerError::InvalidParameter("Lyapunov matrix must be symmetric"));
    }
    if s.clone().cholesky().is_none() {
        return Err(TriggerError::InvalidParameter("Lyapunov matrix must be positive definite"));
    }
    Ok(())
}

/// Guard value of a rule at one instant: negative means no event, an event
/// fires at the first time with `g >= 0` past the dwell.
pub fn event_value(spec: &TriggerSpec, state: &TriggerState) -> Result<f64, TriggerError> {
    let x = &state.x;
    let e = &state.e;
    Ok(match spec {
        TriggerSpec::StaticRelative { sigma } => e.norm_squared() - sigma * sigma * x.norm_squared(),
        TriggerSpec::Mixed { sigma, nu } => e.norm() - sigma * x.norm() - nu,
        TriggerSpec::MixedSquared { sigma, nu } => {
            e.norm_squared() - 2.0 * sigma * sigma * x.norm_squared() - 2.0 * nu * nu
        }
        TriggerSpec::TimeRegularized { sigma, .. } => {
            e.norm_squared() - sigma * sigma * x.norm_squared()
        }
        TriggerSpec::Combined { sigma2, nu, .. } => {
            e.norm_squared() - 2.0 * sigma2 * sigma2 * x.norm_squared() - nu
        }
        TriggerSpec::QuadraticNoiseFree { psi_tilde } => quad_form(psi_tilde, x, e),
        TriggerSpec::QuadraticNoisy { psi_tilde, nu, .. } => quad_form(psi_tilde, x, e) - nu,
        TriggerSpec::DynamicNoiseFree { psi_tilde, lambda, theta, .. } => {
            let q = quad_form(psi_tilde, x, e);
            if *theta > 0.0 {
                theta * q - state.eta
            } else {
                // Fire only once the filter is exhausted and not recharging:
                // eta <= 0 and eta' = -lambda eta - q <= 0 together.
                (-state.eta).min(lambda * state.eta + q)
            }
        }
        TriggerSpec::DynamicNoisy { psi_tilde, theta, nu, .. } => {
            theta * (quad_form(psi_tilde, x, e) - nu) - state.eta
        }
        TriggerSpec::LyapThresholdNoiseFree { s, .. } => x.dot(&(s * x)) - state.eta,
        TriggerSpec::LyapThresholdNoisy { s, .. } => x.dot(&(s * x)) - state.eta,
    })
}

/// Time derivative of the auxiliary state for rules that carry one.
///
/// The gated noisy filter reads its gate off `state.elapsed`, open from the
/// waiting time onward (closed-from-the-right convention at the boundary).
pub fn eta_derivative(spec: &TriggerSpec, state: &TriggerState) -> Result<f64, TriggerError> {
    match spec {
        TriggerSpec::DynamicNoisy { tau_bar_d, .. } => {
            eta_derivative_gated(spec, state, state.elapsed >= *tau_bar_d)
        }
        _ => eta_derivative_gated(spec, state, true),
    }
}

/// Like [`eta_derivative`], with the waiting-time gate made explicit. The
/// simulator integrates the pre-dwell segment with the gate closed up to and
/// including its right endpoint, then switches.
pub fn eta_derivative_gated(
    spec: &TriggerSpec,
    state: &TriggerState,
    gate_open: bool,
) -> Result<f64, TriggerError> {
    match spec {
        TriggerSpec::DynamicNoiseFree { psi_tilde, lambda, .. } => {
            Ok(-lambda * state.eta - quad_form(psi_tilde, &state.x, &state.e))
        }
        TriggerSpec::DynamicNoisy { psi_tilde, lambda, nu, .. } => {
            let forcing = if gate_open {
                quad_form(psi_tilde, &state.x, &state.e) - nu
            } else {
                0.0
            };
            Ok(-lambda * state.eta - forcing)
        }
        TriggerSpec::LyapThresholdNoiseFree { varsigma, rho1, .. } => {
            Ok(-varsigma * rho1 * state.eta)
        }
        TriggerSpec::LyapThresholdNoisy { varsigma_d, nu, .. } => {
            Ok(-varsigma_d * state.eta + nu)
        }
        _ => Err(TriggerError::NoAuxiliaryState),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(x: &[f64], e: &[f64], eta: f64, elapsed: f64) -> TriggerState {
        TriggerState {
            x: DVector::from_row_slice(x),
            e: DVector::from_row_slice(e),
            eta,
            elapsed,
        }
    }

    #[test]
    fn psi_matrices_have_expected_blocks() {
        let p = psi_matrix(2, 0.5);
        assert_eq!(p[(0, 0)], -0.25);
        assert_eq!(p[(2, 2)], 1.0);
        assert_eq!(p[(0, 2)], 0.0);
        let pb = psi_bar_matrix(2, 0.5);
        assert_eq!(pb[(1, 1)], -0.5);
        assert_eq!(pb[(3, 3)], 1.0);
    }

    #[test]
    fn quad_form_matches_explicit_stack() {
        let m = psi_matrix(2, 0.7);
        let s = state(&[1.0, -2.0], &[0.3, 0.4], 0.0, 0.0);
        let by_hand = 0.25 - 0.49 * 5.0;
        assert!((quad_form(&m, &s.x, &s.e) - by_hand).abs() < 1e-12);
    }

    #[test]
    fn squared_threshold_never_fires_before_linear_one() {
        //g_squared >= 0 implies g_linear >= 0 at every point, which is the
        // pointwise half of the ordering between the two rules.
        let mixed = TriggerSpec::Mixed { sigma: 0.3, nu: 0.05 };
        let squared = TriggerSpec::MixedSquared { sigma: 0.3, nu: 0.05 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let s = state(
                &[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                &[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                0.0,
                0.0,
            );
            let gs = event_value(&squared, &s).unwrap();
            let gl = event_value(&mixed, &s).unwrap();
            if gs >= 0.0 {
                assert!(gl >= 0.0, "squared fired first at x={:?} e={:?}", s.x, s.e);
            }
        }
    }

    #[test]
    fn exhausted_filter_fires_only_while_not_recharging() {
        let psi = psi_matrix(1, 0.5);
        let spec = TriggerSpec::DynamicNoiseFree {
            psi_tilde: psi,
            lambda: 1.0,
            theta: 0.0,
            eta0: 1.0,
        };
        // eta = 0, z' Psi z > 0: exhausted and draining, must fire.
        let firing = state(&[0.1], &[1.0], 0.0, 0.0);
        assert!(event_value(&spec, &firing).unwrap() >= 0.0);
        // eta = 0 but z' Psi z < 0: the filter is recharging, no event.
        let charging = state(&[1.0], &[0.0], 0.0, 0.0);
        assert!(event_value(&spec, &charging).unwrap() < 0.0);
        // Positive filter state always blocks the event.
        let held = state(&[0.1], &[1.0], 0.5, 0.0);
        assert!(event_value(&spec, &held).unwrap() < 0.0);
    }

    #[test]
    fn gated_filter_ignores_forcing_before_dwell() {
        let psi = psi_matrix(1, 0.5);
        let spec = TriggerSpec::DynamicNoisy {
            psi_tilde: psi,
            lambda: 2.0,
            theta: 0.0,
            nu: 0.1,
            tau_bar_d: 0.3,
            eta0: 1.0,
        };
        let pre = state(&[0.1], &[1.0], 0.5, 0.1);
        assert!((eta_derivative(&spec, &pre).unwrap() - (-1.0)).abs() < 1e-12);
        let post = state(&[0.1], &[1.0], 0.5, 0.3);
        let q = quad_form(&psi_matrix(1, 0.5), &post.x, &post.e);
        assert!((eta_derivative(&spec, &post).unwrap() - (-1.0 - (q - 0.1))).abs() < 1e-12);
    }

    #[test]
    fn zero_dwell_gate_is_always_open() {
        let psi = psi_matrix(1, 0.5);
        let spec = TriggerSpec::DynamicNoisy {
            psi_tilde: psi.clone(),
            lambda: 1.0,
            theta: 0.0,
            nu: 0.2,
            tau_bar_d: 0.0,
            eta0: 0.0,
        };
        let s = state(&[1.0], &[0.2], 0.3, 0.0);
        let q = quad_form(&psi, &s.x, &s.e);
        assert!((eta_derivative(&spec, &s).unwrap() - (-0.3 - (q - 0.2))).abs() < 1e-12);
    }

    #[test]
    fn aux_state_queries_reject_memoryless_rules() {
        let spec = TriggerSpec::StaticRelative { sigma: 0.5 };
        let s = state(&[1.0], &[0.0], 0.0, 0.0);
        assert!(matches!(
            eta_derivative(&spec, &s),
            Err(TriggerError::NoAuxiliaryState)
        ));
    }

    #[test]
    fn validation_catches_bad_parameters() {
        assert!(TriggerSpec::StaticRelative { sigma: 0.0 }.validate().is_err());
        assert!(TriggerSpec::Mixed { sigma: 0.1, nu: -0.1 }.validate().is_err());
        assert!(TriggerSpec::QuadraticNoisy {
            psi_tilde: psi_matrix(1, 0.5),
            tau_bar_d: 0.0,
            nu: 0.0,
        }
        .validate()
        .is_err());
        assert!(TriggerSpec::LyapThresholdNoiseFree {
            s: DMatrix::identity(2, 2),
            varsigma: 1.0,
            rho1: 0.5,
            eta0: 0.0,
        }
        .validate()
        .is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(TriggerSpec::QuadraticNoiseFree { psi_tilde: asym }.validate().is_err());
        assert!(TriggerSpec::TimeRegularized { sigma: 0.5, tau_d: 0.01 }.validate().is_ok());
    }

    #[test]
    fn freeze_kinds_split_by_family() {
        use FreezeKind::*;
        assert_eq!(TriggerSpec::StaticRelative { sigma: 0.1 }.freeze(), State);
        assert_eq!(
            TriggerSpec::LyapThresholdNoiseFree {
                s: DMatrix::identity(1, 1),
                varsigma: 0.5,
                rho1: 1.0,
                eta0: 1.0
            }
            .freeze(),
            StateAndEta
        );
        assert_eq!(TriggerSpec::Mixed { sigma: 0.1, nu: 0.01 }.freeze(), None);
        assert_eq!(
            TriggerSpec::TimeRegularized { sigma: 0.1, tau_d: 0.01 }.freeze(),
            None
        );
    }

    #[test]
    fn dwell_is_reported_per_rule() {
        assert_eq!(TriggerSpec::StaticRelative { sigma: 0.1 }.dwell(), 0.0);
        assert_eq!(
            TriggerSpec::TimeRegularized { sigma: 0.1, tau_d: 0.02 }.dwell(),
            0.02
        );
        assert_eq!(
            TriggerSpec::Combined { tau_d: 0.03, sigma2: 0.1, nu: 0.0 }.dwell(),
            0.03
        );
    }
}
