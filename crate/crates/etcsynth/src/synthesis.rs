//! Controller and trigger design straight from experiment data.
//!
//! Everything here consumes the stacked data matrices and never an explicit
//! plant model. The chain is: a feasibility program over a matrix variable
//! `Y` yields the feedback gain `K`, the Lyapunov matrix `S = (X0 Y)^{-1}`,
//! and consistency matrices `G`, `L`, `V0` that reproduce the closed-loop
//! maps from data (`X1 G` plays `A + B K`, `X1 L` plays `B K`, `X1 V0`
//! plays `A`). On top of that, small second-stage programs tune each
//! triggering rule, and closed-form expressions turn the cached operator
//! norms into guaranteed minimum inter-event times.
//!
//! Robust variants accept any disturbance whose stacked sample matrix `D`
//! satisfies `D D' <= Delta Delta'`; their certified inequalities are also
//! spot-checked on sampled members of that set after every solve.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{check_richness, DataMatrices, DisturbanceModel};
use crate::lmi::{
    sample_disturbance_matrix, ConstraintKind, ConstraintResidual, LmiError, LmiProblem,
    Objective, SolveStatus, VarShape,
};
use crate::triggers::{psi_bar_matrix, psi_matrix};

/// Which guarantees a design carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Exact data: asymptotic stability.
    NoiseFree,
    /// Disturbed data: practical stability against the disturbance bound.
    Robust,
}

/// Operator norms derived from a design, cached because every inter-event
/// bound is a closed form in them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache {
    /// `|X1 G|`: closed-loop map from data.
    pub acl: f64,
    /// `|X1 L|`: input-injection map from data.
    pub bk: f64,
    /// `|X1 V0|`: open-loop map from data.
    pub a_open: f64,
    pub g: f64,
    pub l: f64,
    pub v0: f64,
    /// `|Delta|` of the model the design was computed against; zero in the
    /// noise-free regime.
    pub delta: f64,
    /// `max(|X1 G|, |X1 L|)`.
    pub alpha: f64,
    /// `|X1 G| + |Delta| |G|`: bound on the closed-loop map.
    pub c_phi: f64,
    /// `|X1 L| + |Delta| |L|`: bound on the input-injection map.
    pub c_e: f64,
    /// `|X1 V0| + |Delta| |V0|`: bound on the open-loop map.
    pub c_a: f64,
}

/// A complete feedback design with its certificate matrices.
#[derive(Debug, Clone)]
pub struct ControllerDesign {
    pub regime: Regime,
    /// Decision matrix of the feasibility program, `T x n`.
    pub y: DMatrix<f64>,
    /// Lyapunov matrix `S = (X0 Y)^{-1}`, symmetric positive definite.
    pub s: DMatrix<f64>,
    /// Feedback gain `K = U0 Y S`.
    pub k_gain: DMatrix<f64>,
    /// `G = Y S`; satisfies `U0 G = K`, `X0 G = I`.
    pub g: DMatrix<f64>,
    /// Least-norm solution of `[U0; X0] L = [K; 0]`.
    pub l: DMatrix<f64>,
    /// First block of the right inverse of `[U0; X0]`.
    pub j0: DMatrix<f64>,
    /// Second block of the right inverse of `[U0; X0]`.
    pub v0: DMatrix<f64>,
    /// `X1 G`: data estimate of the closed-loop state matrix.
    pub acl_data: DMatrix<f64>,
    /// `X1 L`: data estimate of the feedback injection.
    pub bk_data: DMatrix<f64>,
    /// `X1 V0`: data estimate of the open-loop state matrix.
    pub a_data: DMatrix<f64>,
    /// Certified decay form `Q = -(S X1 G)' - S X1 G`, positive definite.
    pub q: DMatrix<f64>,
    /// Robust designs carry their decay weight and solver multiplier.
    pub omega: Option<DMatrix<f64>>,
    pub eps: Option<f64>,
    pub norms: NormCache,
    /// Verified residuals of the design program.
    pub residuals: Vec<ConstraintResidual>,
}

/// Output of a trigger-tuning program.
#[derive(Debug, Clone)]
pub struct TriggerDesignResult {
    /// Relative threshold; for the robust quadratic design this is the
    /// doubled-form threshold (sigma_2).
    pub sigma: f64,
    pub mu: f64,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub psi_tilde: Option<DMatrix<f64>>,
    pub rho1: Option<f64>,
    pub varsigma: Option<f64>,
    pub residuals: Vec<ConstraintResidual>,
}

/// Threshold range for the time-regularized rule.
#[derive(Debug, Clone, Copy)]
pub struct SigmaBound {
    /// `lambda_min(S Omega S)`.
    pub omega1: f64,
    /// `2 |S X1 L| + 2 |S| |Delta| |L|`.
    pub omega2: f64,
    /// `2 |S|`.
    pub omega3: f64,
    /// Supremum `omega1 / omega2` of admissible thresholds.
    pub sigma_sup: f64,
    /// Selected threshold, `fraction * sigma_sup`.
    pub sigma: f64,
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("stabilization SDP infeasible")]
    StabilizationInfeasible,
    #[error("robust SDP infeasible (noise level too high)")]
    RobustInfeasible,
    #[error("mixed-trigger SDP infeasible")]
    MixedTriggerInfeasible,
    #[error("trigger SDP infeasible")]
    TriggerInfeasible,
    #[error("system of equations unsolvable")]
    Unsolvable,
    #[error("mixed MIET undefined at nu=0")]
    MixedMietUndefined,
    #[error("data matrix [U0; X0] is rank deficient")]
    DataNotRich,
    #[error("invalid design parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("design regime mismatch: {0}")]
    WrongRegime(&'static str),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Lmi(#[from] LmiError),
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Residual tolerance for linear-equation post-checks.
const EQ_TOL: f64 = 1e-8;

/// Right inverse of `[U0; X0]`: returns `(J0, V0)` with
/// `U0 J0 = I, U0 V0 = 0, X0 J0 = 0, X0 V0 = I`.
pub fn compute_v0(data: &DataMatrices) -> Result<(DMatrix<f64>, DMatrix<f64>), SynthesisError> {
    let stacked = data.stacked();
    let pinv = stacked
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(|_| SynthesisError::Unsolvable)?;
    let check = &stacked * &pinv - DMatrix::identity(stacked.nrows(), stacked.nrows());
    if check.norm() > EQ_TOL * (1.0 + stacked.norm()) {
        return Err(SynthesisError::Unsolvable);
    }
    let m = data.m();
    let n = data.n();
    Ok((pinv.columns(0, m).into(), pinv.columns(m, n).into()))
}

/// Least-norm solution of `[U0; X0] L = [K; 0]`, the decomposition that
/// isolates the feedback injection: `X1 L` reproduces `B K` from data.
pub fn solve_l(data: &DataMatrices, k_gain: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthesisError> {
    let stacked = data.stacked();
    let mut rhs = DMatrix::zeros(data.m() + data.n(), data.n());
    rhs.rows_mut(0, data.m()).copy_from(k_gain);
    let pinv = stacked
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(|_| SynthesisError::Unsolvable)?;
    let l = &pinv * &rhs;
    let residual = (&stacked * &l - &rhs).norm();
    if residual > EQ_TOL * (1.0 + rhs.norm()) {
        return Err(SynthesisError::Unsolvable);
    }
    Ok(l)
}

fn norm_cache(
    data: &DataMatrices,
    g: &DMatrix<f64>,
    l: &DMatrix<f64>,
    v0: &DMatrix<f64>,
    delta_norm: f64,
) -> NormCache {
    let acl = spectral_norm(&(&data.x1 * g));
    let bk = spectral_norm(&(&data.x1 * l));
    let a_open = spectral_norm(&(&data.x1 * v0));
    let gn = spectral_norm(g);
    let ln = spectral_norm(l);
    let vn = spectral_norm(v0);
    NormCache {
        acl,
        bk,
        a_open,
        g: gn,
        l: ln,
        v0: vn,
        delta: delta_norm,
        alpha: acl.max(bk),
        c_phi: acl + delta_norm * gn,
        c_e: bk + delta_norm * ln,
        c_a: a_open + delta_norm * vn,
    }
}

fn finish_design(
    data: &DataMatrices,
    y: DMatrix<f64>,
    regime: Regime,
    omega: Option<DMatrix<f64>>,
    eps: Option<f64>,
    delta_norm: f64,
    residuals: Vec<ConstraintResidual>,
) -> Result<ControllerDesign, SynthesisError> {
    let gram = sym(&(&data.x0 * &y));
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| SynthesisError::Numerical("X0 Y is not positive definite".into()))?;
    let s = chol.inverse();
    let k_gain = &data.u0 * &y * &s;
    let g = &y * &s;
    let l = solve_l(data, &k_gain)?;
    let (j0, v0) = compute_v0(data)?;
    let acl_data = &data.x1 * &g;
    let bk_data = &data.x1 * &l;
    let a_data = &data.x1 * &v0;
    let sxg = &s * &acl_data;
    let q = -&sxg.transpose() - &sxg;
    let q = sym(&q);

    let q_min = q.symmetric_eigenvalues().min();
    if q_min <= 0.0 {
        return Err(SynthesisError::Numerical(format!(
            "certified decay form is not positive definite (min eigenvalue {q_min:e})"
        )));
    }
    let spectrum = acl_data.complex_eigenvalues();
    if let Some(worst) = spectrum.iter().map(|c| c.re).reduce(f64::max) {
        if worst >= 0.0 {
            return Err(SynthesisError::Numerical(format!(
                "closed-loop data matrix is not Hurwitz (max real part {worst:e})"
            )));
        }
    }

    let norms = norm_cache(data, &g, &l, &v0, delta_norm);
    Ok(ControllerDesign {
        regime,
        y,
        s,
        k_gain,
        g,
        l,
        j0,
        v0,
        acl_data,
        bk_data,
        a_data,
        q,
        omega,
        eps,
        norms,
        residuals,
    })
}

/// Stabilizing design from exact data: find `Y` with `X1 Y + (X1 Y)' < 0`
/// and `X0 Y > 0` symmetric, then read off `K` and `S`.
///
/// The program is homogeneous in `Y`, so the Gram constraint is pinned at
/// `X0 Y >= I` to fix the scale.
pub fn design_controller_noisefree(data: &DataMatrices) -> Result<ControllerDesign, SynthesisError> {
    if !check_richness(data).pass {
        return Err(SynthesisError::DataNotRich);
    }
    let (t, n) = (data.t_count(), data.n());
    let x1 = data.x1.clone();
    let x0 = data.x0.clone();

    let mut p = LmiProblem::new();
    p.add_var("y", VarShape::Rect(t, n));
    {
        let x1 = x1.clone();
        p.add_constraint("stability", ConstraintKind::NegDef, move |a| {
            let xy = &x1 * a.mat("y");
            &xy + xy.transpose()
        });
    }
    {
        let x0 = x0.clone();
        p.add_constraint_with_shift("gram", ConstraintKind::PosDef, 1.0, move |a| {
            sym(&(&x0 * a.mat("y")))
        });
    }
    {
        let x0 = x0.clone();
        p.add_constraint("gram-symmetry", ConstraintKind::Zero, move |a| {
            let xy = &x0 * a.mat("y");
            &xy - xy.transpose()
        });
    }

    let sol = p.solve()?;
    match sol.status {
        SolveStatus::Feasible => {}
        SolveStatus::Infeasible => return Err(SynthesisError::StabilizationInfeasible),
        SolveStatus::NumericalFailure => {
            return Err(SynthesisError::Numerical(format!(
                "stabilization program did not verify (solver: {})",
                sol.solver_status
            )))
        }
    }
    finish_design(data, sol.mat("y").clone(), Regime::NoiseFree, None, None, 0.0, sol.residuals)
}

/// Worst certified-slack over sampled admissible disturbance matrices for a
/// robust stabilization certificate: returns
/// `max_D lambda_max((X1 - D) Y + Y'(X1 - D)' + Omega)` over `draws`
/// samples.
pub fn robust_stability_slack(
    data: &DataMatrices,
    y: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    model: &DisturbanceModel,
    draws: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..draws {
        let d = sample_disturbance_matrix(&model.delta_mat, data.t_count(), rng);
        let xy = (&data.x1 - d) * y;
        let m = &xy + xy.transpose() + omega;
        worst = worst.max(m.symmetric_eigenvalues().max());
    }
    worst
}

/// Fixed seed for in-design spot checks; keeps design output deterministic.
const SPOT_CHECK_SEED: u64 = 0x5EED_0001;
const SPOT_CHECK_DRAWS: usize = 200;

/// Robust stabilizing design from disturbed data.
///
/// Finds `Y` and a multiplier `eps` so that the disturbance-expanded block
/// matrix is negative definite, which certifies
/// `(X1 - D) Y + Y'(X1 - D)' <= -Omega` for every admissible `D`. The
/// resulting certificate is spot-checked on 200 sampled members.
pub fn design_controller_robust(
    data: &DataMatrices,
    model: &DisturbanceModel,
    omega: &DMatrix<f64>,
) -> Result<ControllerDesign, SynthesisError> {
    if !check_richness(data).pass {
        return Err(SynthesisError::DataNotRich);
    }
    let n = data.n();
    let t = data.t_count();
    if omega.nrows() != n || omega.ncols() != n {
        return Err(SynthesisError::InvalidParameter("decay weight must be n x n"));
    }
    if (omega - omega.transpose()).amax() > 1e-9 * (1.0 + omega.amax()) {
        return Err(SynthesisError::InvalidParameter("decay weight must be symmetric"));
    }
    if omega.clone().symmetric_eigenvalues().min() <= 0.0 {
        return Err(SynthesisError::InvalidParameter("decay weight must be positive definite"));
    }
    if model.delta_mat.nrows() != n {
        return Err(SynthesisError::InvalidParameter("disturbance bound must have n rows"));
    }

    let x1 = data.x1.clone();
    let x0 = data.x0.clone();
    let gram_gg = &model.delta_mat * model.delta_mat.transpose();
    let omega_c = omega.clone();

    let mut p = LmiProblem::new();
    p.add_var("y", VarShape::Rect(t, n));
    p.add_scalar("eps", Some(1e-9));
    {
        let x1 = x1.clone();
        p.add_constraint("robust-stability", ConstraintKind::NegDef, move |a| {
            let y = a.mat("y");
            let eps = a.scalar("eps");
            let xy = &x1 * y;
            let mut f = DMatrix::zeros(n + t, n + t);
            f.view_mut((0, 0), (n, n))
                .copy_from(&(&xy + xy.transpose() + &omega_c + &gram_gg * eps));
            f.view_mut((0, n), (n, t)).copy_from(&y.transpose());
            f.view_mut((n, 0), (t, n)).copy_from(y);
            f.view_mut((n, n), (t, t))
                .copy_from(&(DMatrix::identity(t, t) * -eps));
            f
        });
    }
    {
        let x0 = x0.clone();
        p.add_constraint("gram", ConstraintKind::PosDef, move |a| sym(&(&x0 * a.mat("y"))));
    }
    {
        let x0 = x0.clone();
        p.add_constraint("gram-symmetry", ConstraintKind::Zero, move |a| {
            let xy = &x0 * a.mat("y");
            &xy - xy.transpose()
        });
    }

    let sol = p.solve()?;
    match sol.status {
        SolveStatus::Feasible => {}
        SolveStatus::Infeasible => return Err(SynthesisError::RobustInfeasible),
        SolveStatus::NumericalFailure => {
            return Err(SynthesisError::Numerical(format!(
                "robust stabilization program did not verify (solver: {})",
                sol.solver_status
            )))
        }
    }

    let y = sol.mat("y").clone();
    let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED);
    let slack = robust_stability_slack(data, &y, omega, model, SPOT_CHECK_DRAWS, &mut rng);
    if slack > -1e-8 {
        return Err(SynthesisError::Numerical(format!(
            "sampled robustness check failed (worst slack {slack:e})"
        )));
    }

    finish_design(
        data,
        y,
        Regime::Robust,
        Some(omega.clone()),
        Some(sol.scalar("eps")),
        model.norm(),
        sol.residuals,
    )
}

/// Named closure identities tying a design back to its data. Each entry is
/// `(name, residual norm)`; all residuals are small for a genuine design and
/// blow up under tampering.
pub fn verify_closure(cd: &ControllerDesign, data: &DataMatrices) -> Vec<(String, f64)> {
    let stacked = data.stacked();
    let m = data.m();
    let n = data.n();
    let mut out = Vec::new();

    let gram = sym(&(&data.x0 * &cd.y));
    out.push(("gram-inverse".into(), (&cd.s * gram - DMatrix::identity(n, n)).norm()));
    out.push(("gain-from-y".into(), (&data.u0 * &cd.y * &cd.s - &cd.k_gain).norm()));

    let mut target_g = DMatrix::zeros(m + n, n);
    target_g.rows_mut(0, m).copy_from(&cd.k_gain);
    target_g.rows_mut(m, n).copy_from(&DMatrix::identity(n, n));
    out.push(("anchor-g".into(), (&stacked * &cd.g - target_g).norm()));

    let mut target_l = DMatrix::zeros(m + n, n);
    target_l.rows_mut(0, m).copy_from(&cd.k_gain);
    out.push(("anchor-l".into(), (&stacked * &cd.l - target_l).norm()));

    let mut right = DMatrix::zeros(data.t_count(), m + n);
    right.columns_mut(0, m).copy_from(&cd.j0);
    right.columns_mut(m, n).copy_from(&cd.v0);
    out.push((
        "right-inverse".into(),
        (&stacked * right - DMatrix::identity(m + n, m + n)).norm(),
    ));

    let sxg = &cd.s * &data.x1 * &cd.g;
    out.push(("decay-form".into(), (&cd.q + sxg.transpose() + sxg).norm()));
    out
}

/// Transition matrix of the event-error dynamics, `M` such that the
/// certified derivative bound is `z' M z`: top-left `-Q` (scaled), off
/// diagonal `S X1 L`.
fn decay_matrix(cd: &ControllerDesign, q_scale: f64) -> DMatrix<f64> {
    let n = cd.q.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&cd.q * -q_scale));
    let sxl = &cd.s * &cd.bk_data;
    m.view_mut((0, n), (n, n)).copy_from(&sxl);
    m.view_mut((n, 0), (n, n)).copy_from(&sxl.transpose());
    m
}

fn solve_status_to_trigger_err(
    sol: &crate::lmi::LmiSolution,
    infeasible: SynthesisError,
) -> Result<(), SynthesisError> {
    match sol.status {
        SolveStatus::Feasible => Ok(()),
        SolveStatus::Infeasible => Err(infeasible),
        SolveStatus::NumericalFailure => Err(SynthesisError::Numerical(format!(
            "trigger program did not verify (solver: {})",
            sol.solver_status
        ))),
    }
}

/// Tunes the relative threshold of the noise-free rules: finds `mu > 0` and
/// the largest `sigma^2` with `mu M - Psi(sigma) < 0`, which certifies a
/// negative Lyapunov derivative up to the triggering surface.
///
/// With `gamma` in `(0, 1)` the certified decay keeps a `gamma` fraction of
/// the full rate, trading threshold size for speed. With `maximize` off the
/// program only asks for feasibility.
pub fn design_sigma_noisefree(
    cd: &ControllerDesign,
    gamma: Option<f64>,
    maximize: bool,
) -> Result<TriggerDesignResult, SynthesisError> {
    if let Some(g) = gamma {
        if !g.is_finite() || g <= 0.0 || g >= 1.0 {
            return Err(SynthesisError::InvalidParameter("decay fraction must lie in (0, 1)"));
        }
    }
    let n = cd.q.nrows();
    let m = decay_matrix(cd, 1.0 - gamma.unwrap_or(0.0));

    let mut p = LmiProblem::new();
    p.add_scalar("mu", Some(1e-8));
    p.add_scalar("s2", Some(1e-10));
    {
        let m = m.clone();
        p.add_constraint("trigger", ConstraintKind::NegDef, move |a| {
            let mu = a.scalar("mu");
            let s2 = a.scalar("s2");
            &m * mu - psi_matrix(n, s2.max(0.0).sqrt())
        });
    }
    if maximize {
        p.set_objective(Objective::MaximizeScalar("s2".into()));
    }
    let sol = p.solve()?;
    solve_status_to_trigger_err(&sol, SynthesisError::TriggerInfeasible)?;
    Ok(TriggerDesignResult {
        sigma: sol.scalar("s2").max(0.0).sqrt(),
        mu: sol.scalar("mu"),
        eps: None,
        gamma,
        psi_tilde: None,
        rho1: None,
        varsigma: None,
        residuals: sol.residuals,
    })
}

/// Blocks shared by the robust trigger programs: for multipliers
/// `(mu, eps)` builds the 3n x 3n matrix
/// `[[-mu S Omega S / 2, mu S X1 L, mu S Delta], [., eps L' L - I_swap, 0], [., ., -eps I]]`
/// where the middle diagonal term is `eps L' L` plus `identity_weight * I`.
fn robust_trigger_block(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
    mu: f64,
    eps: f64,
    identity_weight: f64,
) -> Result<DMatrix<f64>, SynthesisError> {
    let omega = cd
        .omega
        .as_ref()
        .ok_or(SynthesisError::WrongRegime("design lacks a disturbance model"))?;
    let n = cd.s.nrows();
    let w = &cd.s * omega * &cd.s * 0.5;
    let p_blk = &cd.s * &cd.bk_data;
    let r_blk = &cd.s * &model.delta_mat;
    let e_blk = cd.l.transpose() * &cd.l;

    let mut f = DMatrix::zeros(3 * n, 3 * n);
    f.view_mut((0, 0), (n, n)).copy_from(&(&w * -mu));
    f.view_mut((0, n), (n, n)).copy_from(&(&p_blk * mu));
    f.view_mut((n, 0), (n, n)).copy_from(&(&p_blk.transpose() * mu));
    f.view_mut((0, 2 * n), (n, n)).copy_from(&(&r_blk * mu));
    f.view_mut((2 * n, 0), (n, n)).copy_from(&(&r_blk.transpose() * mu));
    f.view_mut((n, n), (n, n))
        .copy_from(&(&e_blk * eps + DMatrix::identity(n, n) * identity_weight));
    f.view_mut((2 * n, 2 * n), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * -eps));
    Ok(f)
}

/// Tunes the mixed triggering threshold from disturbed data: maximizes
/// `sigma^2` subject to the robust block inequality that certifies
/// `mu (z' Mbar(D) z) <= z' PsiBar(sigma) z` for every admissible `D`.
pub fn design_sigma_mixed(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
) -> Result<TriggerDesignResult, SynthesisError> {
    let n = cd.s.nrows();
    // Probes verify the regime before the solver runs.
    robust_trigger_block(cd, model, 1.0, 1.0, 0.0)?;
    let cd_c = cd.clone();
    let model_c = model.clone();

    let mut p = LmiProblem::new();
    p.add_scalar("mu", Some(1e-8));
    p.add_scalar("eps", Some(1e-9));
    p.add_scalar("s2", Some(1e-12));
    p.add_constraint("mixed-trigger", ConstraintKind::NegSemiDef, move |a| {
        let mu = a.scalar("mu");
        let eps = a.scalar("eps");
        let s2 = a.scalar("s2");
        let mut f = robust_trigger_block(&cd_c, &model_c, mu, eps, -1.0)
            .expect("regime checked before solve");
        for i in 0..n {
            f[(i, i)] += 2.0 * s2;
        }
        f
    });
    p.set_objective(Objective::MaximizeScalar("s2".into()));
    let sol = p.solve()?;
    solve_status_to_trigger_err(&sol, SynthesisError::MixedTriggerInfeasible)?;

    let sigma = sol.scalar("s2").max(0.0).sqrt();
    let mu = sol.scalar("mu");
    let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED ^ 0x1);
    let slack = mixed_trigger_slack(cd, model, sigma, mu, SPOT_CHECK_DRAWS, &mut rng)?;
    let scale = 1.0 + mu * (cd.norms.acl + cd.norms.bk + model.norm());
    if slack > 1e-8 * scale {
        return Err(SynthesisError::Numerical(format!(
            "sampled mixed-trigger check failed (worst slack {slack:e})"
        )));
    }
    Ok(TriggerDesignResult {
        sigma,
        mu,
        eps: Some(sol.scalar("eps")),
        gamma: None,
        psi_tilde: None,
        rho1: None,
        varsigma: None,
        residuals: sol.residuals,
    })
}

/// Worst slack of `mu z' Mbar(D) z <= z' PsiBar(sigma) z` over sampled
/// admissible `D`: returns `max_D lambda_max(mu Mbar(D) - PsiBar(sigma))`.
pub fn mixed_trigger_slack(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
    sigma: f64,
    mu: f64,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<f64, SynthesisError> {
    let omega = cd
        .omega
        .as_ref()
        .ok_or(SynthesisError::WrongRegime("design lacks a disturbance model"))?;
    let n = cd.s.nrows();
    let w = &cd.s * omega * &cd.s * 0.5;
    let psi = psi_bar_matrix(n, sigma);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..draws {
        let d = sample_disturbance_matrix(&model.delta_mat, model.t_count, rng);
        let inj = &cd.s * (&cd.bk_data - d * &cd.l);
        let mut mbar = DMatrix::zeros(2 * n, 2 * n);
        mbar.view_mut((0, 0), (n, n)).copy_from(&(&w * -1.0));
        mbar.view_mut((0, n), (n, n)).copy_from(&inj);
        mbar.view_mut((n, 0), (n, n)).copy_from(&inj.transpose());
        let test = mbar * mu - &psi;
        worst = worst.max(test.symmetric_eigenvalues().max());
    }
    Ok(worst)
}

/// Admissible threshold range for the time-regularized rule, and a default
/// selection at `fraction` of the supremum.
pub fn sigma_bound_timereg(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
    fraction: f64,
) -> Result<SigmaBound, SynthesisError> {
    let omega = cd
        .omega
        .as_ref()
        .ok_or(SynthesisError::WrongRegime("design lacks a disturbance model"))?;
    if !fraction.is_finite() || fraction <= 0.0 || fraction >= 1.0 {
        return Err(SynthesisError::InvalidParameter("threshold fraction must lie in (0, 1)"));
    }
    let sos = &cd.s * omega * &cd.s;
    let omega1 = sym(&sos).symmetric_eigenvalues().min();
    let s_norm = spectral_norm(&cd.s);
    let omega2 =
        2.0 * spectral_norm(&(&cd.s * &cd.bk_data)) + 2.0 * s_norm * model.norm() * cd.norms.l;
    let omega3 = 2.0 * s_norm;
    if omega1 <= 0.0 || omega2 <= 0.0 {
        return Err(SynthesisError::Numerical("degenerate threshold bound".into()));
    }
    let sigma_sup = omega1 / omega2;
    Ok(SigmaBound { omega1, omega2, omega3, sigma_sup, sigma: fraction * sigma_sup })
}

/// Tunes a full quadratic triggering form. Two stages: maximize the
/// relative threshold, then (with the threshold pinned just below its
/// optimum) maximize the trace of the form, which picks the least eager
/// rule among the optimal ones.
///
/// Without a disturbance model this runs the noise-free program
/// (`mu M - PsiTilde < 0`, `PsiTilde <= Psi(sigma)`); with one it runs the
/// robust program against the doubled form.
pub fn design_quadratic_psi(
    cd: &ControllerDesign,
    model: Option<&DisturbanceModel>,
) -> Result<TriggerDesignResult, SynthesisError> {
    match (cd.regime, model) {
        (Regime::NoiseFree, None) => design_quadratic_noisefree(cd),
        (Regime::Robust, Some(m)) => design_quadratic_robust(cd, m),
        (Regime::NoiseFree, Some(_)) => {
            Err(SynthesisError::WrongRegime("noise-free design cannot use a disturbance model"))
        }
        (Regime::Robust, None) => {
            Err(SynthesisError::WrongRegime("robust design requires its disturbance model"))
        }
    }
}

fn design_quadratic_noisefree(cd: &ControllerDesign) -> Result<TriggerDesignResult, SynthesisError> {
    let n = cd.q.nrows();
    let m = decay_matrix(cd, 1.0);

    let stage1 = {
        let mut p = LmiProblem::new();
        p.add_scalar("mu", Some(1e-8));
        p.add_scalar("s2", Some(1e-10));
        p.add_var("psi", VarShape::Sym(2 * n));
        {
            let m = m.clone();
            p.add_constraint("decay", ConstraintKind::NegDef, move |a| {
                &m * a.scalar("mu") - a.mat("psi")
            });
        }
        p.add_constraint("cap", ConstraintKind::NegSemiDef, move |a| {
            let s2 = a.scalar("s2");
            a.mat("psi") - psi_matrix(n, s2.max(0.0).sqrt())
        });
        p.set_objective(Objective::MaximizeScalar("s2".into()));
        let sol = p.solve()?;
        solve_status_to_trigger_err(&sol, SynthesisError::TriggerInfeasible)?;
        sol.scalar("s2").max(0.0)
    };

    // Pin the threshold marginally inside the optimum so the trace stage
    // retains slack to move the form.
    let s2_fix = stage1 * (1.0 - 1e-6);
    let sigma = s2_fix.sqrt();
    let mut p = LmiProblem::new();
    p.add_scalar("mu", Some(1e-8));
    p.add_var("psi", VarShape::Sym(2 * n));
    {
        let m = m.clone();
        p.add_constraint("decay", ConstraintKind::NegDef, move |a| {
            &m * a.scalar("mu") - a.mat("psi")
        });
    }
    {
        let cap = psi_matrix(n, sigma);
        p.add_constraint("cap", ConstraintKind::NegSemiDef, move |a| a.mat("psi") - &cap);
    }
    p.set_objective(Objective::MaximizeTrace("psi".into()));
    let sol = p.solve()?;
    solve_status_to_trigger_err(&sol, SynthesisError::TriggerInfeasible)?;
    Ok(TriggerDesignResult {
        sigma,
        mu: sol.scalar("mu"),
        eps: None,
        gamma: None,
        psi_tilde: Some(sym(sol.mat("psi"))),
        rho1: None,
        varsigma: None,
        residuals: sol.residuals,
    })
}

fn design_quadratic_robust(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
) -> Result<TriggerDesignResult, SynthesisError> {
    let n = cd.s.nrows();
    robust_trigger_block(cd, model, 1.0, 1.0, 0.0)?;

    let add_decay = |p: &mut LmiProblem, cd: &ControllerDesign, model: &DisturbanceModel| {
        let cd = cd.clone();
        let model = model.clone();
        p.add_constraint("decay", ConstraintKind::NegSemiDef, move |a| {
            let mut f = robust_trigger_block(&cd, &model, a.scalar("mu"), a.scalar("eps"), 0.0)
                .expect("regime checked before solve");
            let psi = a.mat("psi");
            for r in 0..2 * n {
                for c in 0..2 * n {
                    f[(r, c)] -= psi[(r, c)];
                }
            }
            f
        });
    };

    let stage1 = {
        let mut p = LmiProblem::new();
        p.add_scalar("mu", Some(1e-8));
        p.add_scalar("eps", Some(1e-9));
        p.add_scalar("s2", Some(1e-12));
        p.add_var("psi", VarShape::Sym(2 * n));
        add_decay(&mut p, cd, model);
        p.add_constraint("cap", ConstraintKind::NegSemiDef, move |a| {
            let s2 = a.scalar("s2");
            a.mat("psi") - psi_bar_matrix(n, s2.max(0.0).sqrt())
        });
        p.set_objective(Objective::MaximizeScalar("s2".into()));
        let sol = p.solve()?;
        solve_status_to_trigger_err(&sol, SynthesisError::TriggerInfeasible)?;
        sol.scalar("s2").max(0.0)
    };

    let s2_fix = stage1 * (1.0 - 1e-6);
    let sigma = s2_fix.sqrt();
    let mut p = LmiProblem::new();
    p.add_scalar("mu", Some(1e-8));
    p.add_scalar("eps", Some(1e-9));
    p.add_var("psi", VarShape::Sym(2 * n));
    add_decay(&mut p, cd, model);
    {
        let cap = psi_bar_matrix(n, sigma);
        p.add_constraint("cap", ConstraintKind::NegSemiDef, move |a| a.mat("psi") - &cap);
    }
    p.set_objective(Objective::MaximizeTrace("psi".into()));
    let sol = p.solve()?;
    solve_status_to_trigger_err(&sol, SynthesisError::TriggerInfeasible)?;
    Ok(TriggerDesignResult {
        sigma,
        mu: sol.scalar("mu"),
        eps: Some(sol.scalar("eps")),
        gamma: None,
        psi_tilde: Some(sym(sol.mat("psi"))),
        rho1: None,
        varsigma: None,
        residuals: sol.residuals,
    })
}

/// Certified contraction rate of the sampled-state dynamics: the largest
/// `rho1` with `(X1 G)' S + S (X1 G) <= -rho1 S`, backed off by 1%.
pub fn compute_rho1(cd: &ControllerDesign) -> Result<f64, SynthesisError> {
    let chol = cd
        .s
        .clone()
        .cholesky()
        .ok_or_else(|| SynthesisError::Numerical("Lyapunov matrix is not positive definite".into()))?;
    // lambda_min(S^{-1/2} Q S^{-1/2}) via the Cholesky factor.
    let li_q = chol
        .l()
        .solve_lower_triangular(&cd.q)
        .ok_or(SynthesisError::Unsolvable)?;
    let li_q_lit = chol
        .l()
        .solve_lower_triangular(&li_q.transpose())
        .ok_or(SynthesisError::Unsolvable)?;
    let lam = sym(&li_q_lit).symmetric_eigenvalues().min();
    if lam <= 0.0 {
        return Err(SynthesisError::Numerical("certified decay rate is not positive".into()));
    }
    Ok(0.99 * lam)
}

/// Tunes the threshold rule that compares `V` against a decaying
/// reference: finds the largest `sigma` with
/// `mu (M + diag(varsigma rho1 S, 0)) - Psi(sigma) <= 0`, which certifies
/// `Vdot <= -varsigma rho1 V` up to the triggering surface.
pub fn design_sigma_decay_v(
    cd: &ControllerDesign,
    varsigma: f64,
) -> Result<TriggerDesignResult, SynthesisError> {
    if !varsigma.is_finite() || varsigma <= 0.0 || varsigma >= 1.0 {
        return Err(SynthesisError::InvalidParameter("decay fraction must lie in (0, 1)"));
    }
    let rho1 = compute_rho1(cd)?;
    let n = cd.q.nrows();
    let mut m = decay_matrix(cd, 1.0);
    let shift = &cd.s * (varsigma * rho1);
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] += shift[(r, c)];
        }
    }

    let mut p = LmiProblem::new();
    p.add_scalar("mu", Some(1e-8));
    p.add_scalar("s2", Some(1e-12));
    {
        let m = m.clone();
        p.add_constraint("decay-v", ConstraintKind::NegSemiDef, move |a| {
            &m * a.scalar("mu") - psi_matrix(n, a.scalar("s2").max(0.0).sqrt())
        });
    }
    p.set_objective(Objective::MaximizeScalar("s2".into()));
    let sol = p.solve()?;
    solve_status_to_trigger_err(&sol, SynthesisError::TriggerInfeasible)?;
    Ok(TriggerDesignResult {
        sigma: sol.scalar("s2").max(0.0).sqrt(),
        mu: sol.scalar("mu"),
        eps: None,
        gamma: None,
        psi_tilde: None,
        rho1: Some(rho1),
        varsigma: Some(varsigma),
        residuals: sol.residuals,
    })
}

/// Reference decay rate for the noisy threshold rule: a `(1 - margin)`
/// fraction of the largest `varsigma_d` with `varsigma_d S < S Omega S`.
pub fn select_varsigma_d(cd: &ControllerDesign, margin: f64) -> Result<f64, SynthesisError> {
    let omega = cd
        .omega
        .as_ref()
        .ok_or(SynthesisError::WrongRegime("design lacks a disturbance model"))?;
    if !margin.is_finite() || margin <= 0.0 || margin >= 1.0 {
        return Err(SynthesisError::InvalidParameter("margin must lie in (0, 1)"));
    }
    let chol = cd
        .s
        .clone()
        .cholesky()
        .ok_or_else(|| SynthesisError::Numerical("Lyapunov matrix is not positive definite".into()))?;
    // lambda_min(S^{1/2} Omega S^{1/2}) = lambda_min(L' Omega L).
    let l = chol.l();
    let lam = sym(&(l.transpose() * omega * &l)).symmetric_eigenvalues().min();
    if lam <= 0.0 {
        return Err(SynthesisError::Numerical("decay weight loses definiteness".into()));
    }
    Ok((1.0 - margin) * lam)
}

/// Largest eigenvalue of the noise-free relative-rule certificate
/// `mu M - Psi(sigma)` (with `gamma` the decay split used at tuning time):
/// negative exactly when the certificate still holds at these parameters.
pub fn static_trigger_certificate(
    cd: &ControllerDesign,
    sigma: f64,
    mu: f64,
    gamma: Option<f64>,
) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    check_mu(mu)?;
    if let Some(g) = gamma {
        if !g.is_finite() || g <= 0.0 || g >= 1.0 {
            return Err(SynthesisError::InvalidParameter("decay fraction must lie in (0, 1)"));
        }
    }
    let n = cd.q.nrows();
    let m = decay_matrix(cd, 1.0 - gamma.unwrap_or(0.0));
    Ok(sym(&(m * mu - psi_matrix(n, sigma))).symmetric_eigenvalues().max())
}

/// Largest eigenvalue of the mixed-rule robust certificate block at
/// `(sigma, mu, eps)`: nonpositive exactly when the threshold inequality is
/// certified against every admissible disturbance matrix.
pub fn mixed_trigger_certificate(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
    sigma: f64,
    mu: f64,
    eps: f64,
) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    check_mu(mu)?;
    check_mu(eps)?;
    let n = cd.s.nrows();
    let mut f = robust_trigger_block(cd, model, mu, eps, -1.0)?;
    for i in 0..n {
        f[(i, i)] += 2.0 * sigma * sigma;
    }
    Ok(sym(&f).symmetric_eigenvalues().max())
}

/// Certificate eigenvalues for a full quadratic form: the decay slack
/// (negative certifies the Lyapunov decay up to the form's surface) and the
/// cap slack (nonpositive keeps the form inside the relative threshold it
/// was tuned against).
pub fn quadratic_certificate(
    cd: &ControllerDesign,
    model: Option<&DisturbanceModel>,
    psi_tilde: &DMatrix<f64>,
    sigma: f64,
    mu: f64,
    eps: Option<f64>,
) -> Result<(f64, f64), SynthesisError> {
    check_sigma(sigma)?;
    check_mu(mu)?;
    let n = cd.q.nrows();
    if psi_tilde.nrows() != 2 * n || psi_tilde.ncols() != 2 * n {
        return Err(SynthesisError::InvalidParameter("quadratic form has the wrong dimension"));
    }
    match (cd.regime, model) {
        (Regime::NoiseFree, None) => {
            let m = decay_matrix(cd, 1.0);
            let decay = sym(&(m * mu - psi_tilde)).symmetric_eigenvalues().max();
            let cap = sym(&(psi_tilde - psi_matrix(n, sigma))).symmetric_eigenvalues().max();
            Ok((decay, cap))
        }
        (Regime::Robust, Some(model)) => {
            let eps = eps
                .ok_or(SynthesisError::InvalidParameter("missing the S-procedure multiplier"))?;
            check_mu(eps)?;
            let mut f = robust_trigger_block(cd, model, mu, eps, 0.0)?;
            for r in 0..2 * n {
                for c in 0..2 * n {
                    f[(r, c)] -= psi_tilde[(r, c)];
                }
            }
            let decay = sym(&f).symmetric_eigenvalues().max();
            let cap = sym(&(psi_tilde - psi_bar_matrix(n, sigma))).symmetric_eigenvalues().max();
            Ok((decay, cap))
        }
        (Regime::NoiseFree, Some(_)) => {
            Err(SynthesisError::WrongRegime("noise-free design cannot use a disturbance model"))
        }
        (Regime::Robust, None) => {
            Err(SynthesisError::WrongRegime("robust design requires its disturbance model"))
        }
    }
}

/// Largest eigenvalue of the decaying-threshold certificate
/// `mu (M + diag(varsigma rho1 S, 0)) - Psi(sigma)`.
pub fn decay_v_certificate(
    cd: &ControllerDesign,
    sigma: f64,
    mu: f64,
    varsigma: f64,
    rho1: f64,
) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    check_mu(mu)?;
    if !(varsigma.is_finite() && varsigma > 0.0 && varsigma < 1.0) || !(rho1 > 0.0) {
        return Err(SynthesisError::InvalidParameter("decay parameters must be positive"));
    }
    let n = cd.q.nrows();
    let mut m = decay_matrix(cd, 1.0);
    let shift = &cd.s * (varsigma * rho1);
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] += shift[(r, c)];
        }
    }
    Ok(sym(&(m * mu - psi_matrix(n, sigma))).symmetric_eigenvalues().max())
}

fn check_sigma(sigma: f64) -> Result<(), SynthesisError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(SynthesisError::InvalidParameter("sigma must be positive"));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<(), SynthesisError> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(SynthesisError::InvalidParameter("multiplier must be positive"));
    }
    Ok(())
}

/// Guaranteed minimum inter-event time of the noise-free relative rules:
/// `tau = sigma / (alpha (1 + sigma))` with `alpha = max(|X1 G|, |X1 L|)`.
pub fn miet_tau(cd: &ControllerDesign, sigma: f64) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    if cd.norms.alpha <= 0.0 {
        return Err(SynthesisError::Numerical("degenerate norm cache".into()));
    }
    Ok(sigma / ((1.0 + sigma) * cd.norms.alpha))
}

/// Guaranteed minimum inter-event time of the mixed rule with threshold
/// `nu`. Undefined at `nu = 0`.
pub fn miet_bar_tau(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
    sigma: f64,
    nu: f64,
) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    if !nu.is_finite() || nu <= 0.0 {
        return Err(SynthesisError::MixedMietUndefined);
    }
    let c_phi = cd.norms.acl + model.norm() * cd.norms.g;
    let c_e = cd.norms.bk + model.norm() * cd.norms.l;
    let abar = c_phi.max(c_e).max(sigma * model.delta / nu);
    if abar <= 0.0 {
        return Err(SynthesisError::Numerical("degenerate norm cache".into()));
    }
    Ok(sigma / ((1.0 + sigma) * abar))
}

/// Guaranteed waiting time of the time-regularized rules: the time the
/// relative error needs to grow from zero to `sigma` under the worst-case
/// data-consistent dynamics.
pub fn miet_tau_d(
    cd: &ControllerDesign,
    model: &DisturbanceModel,
    sigma: f64,
) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    let c_a = cd.norms.a_open + model.norm() * cd.norms.v0;
    let c_phi = cd.norms.acl + model.norm() * cd.norms.g;
    let s_frac = sigma / (1.0 + sigma);
    let denom = c_phi.max(1.0);
    if c_a <= 1e-300 {
        // Limit of log(1 + c x) / c as c drops to zero.
        return Ok(s_frac / denom);
    }
    Ok((s_frac * c_a / denom + 1.0).ln() / c_a)
}

/// Model-based counterpart of [`miet_tau_d`], for reference comparisons:
/// uses the true `|A|` and `|A + B K|` instead of their data bounds.
pub fn miet_tau_m(
    a: &DMatrix<f64>,
    a_cl: &DMatrix<f64>,
    sigma: f64,
) -> Result<f64, SynthesisError> {
    check_sigma(sigma)?;
    let na = spectral_norm(a);
    let ncl = spectral_norm(a_cl).max(1.0);
    let s_frac = sigma / (1.0 + sigma);
    if na <= 1e-300 {
        return Ok(s_frac / ncl);
    }
    Ok((s_frac * na / ncl + 1.0).ln() / na)
}

/// Disturbance-independent event separation on a bounded operating region:
/// the time the absolute error needs to reach `nu` from zero while the
/// state stays below `x_bound` and the disturbance below `d_bound`.
pub fn miet_semiglobal(
    cd: &ControllerDesign,
    nu: f64,
    x_bound: f64,
    d_bound: f64,
) -> Result<f64, SynthesisError> {
    if !nu.is_finite() || nu <= 0.0 {
        return Err(SynthesisError::InvalidParameter("nu must be positive"));
    }
    if x_bound <= 0.0 || d_bound < 0.0 {
        return Err(SynthesisError::InvalidParameter("region bounds must be positive"));
    }
    let c_e = cd.norms.c_e;
    let drive = cd.norms.c_phi * x_bound + d_bound;
    if drive <= 0.0 {
        return Err(SynthesisError::Numerical("degenerate region bound".into()));
    }
    if c_e <= 1e-300 {
        return Ok(nu / drive);
    }
    Ok((c_e * nu / drive + 1.0).ln() / c_e)
}

/// Radius of the ball the undisturbed mixed-rule loop converges to:
/// `r = nu sqrt(2 cond(S) / (omega mu))` with
/// `omega = lambda_min(S Omega S / 2)`.
pub fn ultimate_bound_radius(
    cd: &ControllerDesign,
    mu: f64,
    nu: f64,
) -> Result<f64, SynthesisError> {
    let omega = cd
        .omega
        .as_ref()
        .ok_or(SynthesisError::WrongRegime("design lacks a disturbance model"))?;
    if !mu.is_finite() || mu <= 0.0 {
        return Err(SynthesisError::InvalidParameter("multiplier must be positive"));
    }
    if !nu.is_finite() || nu < 0.0 {
        return Err(SynthesisError::InvalidParameter("nu must be nonnegative"));
    }
    let sos = sym(&(&cd.s * omega * &cd.s));
    let w = sos.symmetric_eigenvalues().min() / 2.0;
    let eigs = cd.s.clone().symmetric_eigenvalues();
    let (smin, smax) = (eigs.min(), eigs.max());
    if w <= 0.0 || smin <= 0.0 {
        return Err(SynthesisError::Numerical("degenerate Lyapunov data".into()));
    }
    Ok(nu * (2.0 * (smax / smin) / (w * mu)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        run_experiment, DisturbanceKind, DisturbanceSignal, ExperimentConfig, PlantModel,
    };
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn demo_plant() -> PlantModel {
        PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap()
    }

    fn noisefree_data() -> DataMatrices {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        run_experiment(&demo_plant(), &ExperimentConfig::default(), &DisturbanceSignal::zero(), &mut rng)
            .unwrap()
            .data
    }

    fn noisy_data(delta: f64, seed: u64) -> (DataMatrices, DisturbanceModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = DisturbanceSignal { kind: DisturbanceKind::UniformBounded, amplitude: delta };
        let rec = run_experiment(&demo_plant(), &ExperimentConfig::default(), &dist, &mut rng).unwrap();
        let model = crate::dataset::disturbance_bound_from_amplitude(delta, 10, 2).unwrap();
        assert!(model.contains(&rec.d0));
        (rec.data, model)
    }

    #[test]
    fn noisefree_design_recovers_exact_closed_loop() {
        let plant = demo_plant();
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();

        // Exact data: the data products equal the model quantities.
        let acl_true = &plant.a + &plant.b * &cd.k_gain;
        assert!((&cd.acl_data - &acl_true).norm() < 1e-8);
        assert!((&cd.bk_data - &plant.b * &cd.k_gain).norm() < 1e-8);
        assert!((&cd.a_data - &plant.a).norm() < 1e-8);

        assert!(cd.q.clone().symmetric_eigenvalues().min() > 0.0);
        let worst = cd.acl_data.complex_eigenvalues().iter().map(|c| c.re).fold(f64::MIN, f64::max);
        assert!(worst < 0.0);

        for (name, r) in verify_closure(&cd, &data) {
            assert!(r < 1e-8, "{name} residual {r}");
        }
    }

    #[test]
    fn noisefree_trigger_gives_positive_threshold_and_implication() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        let tr = design_sigma_noisefree(&cd, None, true).unwrap();
        assert!(tr.sigma > 0.0 && tr.mu > 0.0);

        // Below the triggering surface the certified derivative is negative.
        let m = decay_matrix(&cd, 1.0);
        let n = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0_f64));
            if x.norm() < 1e-3 {
                continue;
            }
            let scale = rng.gen_range(0.0..1.0) * tr.sigma;
            let mut e = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0_f64));
            if e.norm() > 0.0 {
                e *= scale * x.norm() / e.norm();
            }
            let z = crate::triggers::quad_form(&m, &x, &e);
            assert!(z < 0.0, "certified derivative not negative inside surface");
        }
    }

    #[test]
    fn decay_fraction_shrinks_threshold() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        let base = design_sigma_noisefree(&cd, None, true).unwrap();
        let slowed = design_sigma_noisefree(&cd, Some(0.5), true).unwrap();
        assert!(slowed.sigma <= base.sigma * (1.0 + 1e-6));
        assert!(slowed.sigma > 0.0);
    }

    #[test]
    fn gamma_outside_unit_interval_is_rejected() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        assert!(matches!(
            design_sigma_noisefree(&cd, Some(1.0), true),
            Err(SynthesisError::InvalidParameter(_))
        ));
    }

    #[test]
    fn robust_design_certifies_sampled_disturbances() {
        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        assert_eq!(cd.regime, Regime::Robust);
        // Decay dominates the weight: Q >= S Omega S.
        let gap = &cd.q - &cd.s * &omega * &cd.s;
        assert!(sym(&gap).symmetric_eigenvalues().min() > -1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let slack = robust_stability_slack(&data, &cd.y, &omega, &model, 200, &mut rng);
        assert!(slack <= -1e-8, "slack {slack}");
    }

    #[test]
    fn robust_design_rejects_hopeless_noise() {
        let (data, _) = noisy_data(0.1, 31);
        let model = crate::dataset::disturbance_bound_from_amplitude(50.0, 10, 2).unwrap();
        let omega = DMatrix::identity(2, 2) * 10.0;
        assert!(matches!(
            design_controller_robust(&data, &model, &omega),
            Err(SynthesisError::RobustInfeasible)
        ));
    }

    #[test]
    fn mixed_trigger_design_is_spot_checked() {
        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let tr = design_sigma_mixed(&cd, &model).unwrap();
        assert!(tr.sigma > 0.0 && tr.mu > 0.0 && tr.eps.unwrap() > 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let slack = mixed_trigger_slack(&cd, &model, tr.sigma, tr.mu, 100, &mut rng).unwrap();
        let scale = 1.0 + tr.mu * (cd.norms.acl + cd.norms.bk + model.norm());
        assert!(slack <= 1e-8 * scale, "slack {slack}");
    }

    #[test]
    fn certificate_slacks_flip_sign_past_the_tuned_threshold() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        let tr = design_sigma_noisefree(&cd, None, true).unwrap();
        let at = static_trigger_certificate(&cd, tr.sigma, tr.mu, None).unwrap();
        let past = static_trigger_certificate(&cd, tr.sigma * 2.0, tr.mu, None).unwrap();
        assert!(at < 1e-7, "slack at the tuned threshold: {at}");
        assert!(past > 0.0, "doubled threshold should break the certificate");

        let quad = design_quadratic_psi(&cd, None).unwrap();
        let (decay, cap) = quadratic_certificate(
            &cd,
            None,
            quad.psi_tilde.as_ref().unwrap(),
            quad.sigma,
            quad.mu,
            None,
        )
        .unwrap();
        assert!(decay < 1e-7, "decay slack {decay}");
        assert!(cap < 1e-6, "cap slack {cap}");

        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let tr = design_sigma_mixed(&cd, &model).unwrap();
        let at = mixed_trigger_certificate(&cd, &model, tr.sigma, tr.mu, tr.eps.unwrap()).unwrap();
        let past =
            mixed_trigger_certificate(&cd, &model, tr.sigma * 3.0, tr.mu, tr.eps.unwrap()).unwrap();
        assert!(at < 1e-6, "mixed slack at tuned threshold: {at}");
        assert!(past > at, "mixed slack must grow with the threshold");

        let dv = design_sigma_decay_v(&cd_noisefree_for_decay(), 0.9).unwrap();
        let at = decay_v_certificate(
            &cd_noisefree_for_decay(),
            dv.sigma,
            dv.mu,
            dv.varsigma.unwrap(),
            dv.rho1.unwrap(),
        )
        .unwrap();
        assert!(at < 1e-6, "decay-v slack {at}");
    }

    fn cd_noisefree_for_decay() -> ControllerDesign {
        design_controller_noisefree(&noisefree_data()).unwrap()
    }

    #[test]
    fn quadratic_form_nests_between_bounds() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        let stat = design_sigma_noisefree(&cd, None, true).unwrap();
        let quad = design_quadratic_psi(&cd, None).unwrap();
        let psi = quad.psi_tilde.clone().unwrap();

        // The designed form stays below Psi(sigma)...
        let cap = psi_matrix(2, quad.sigma);
        assert!(sym(&(&psi - cap)).symmetric_eigenvalues().max() <= 1e-7);
        // ...and the achievable threshold matches the static design.
        assert!(quad.sigma >= 0.99 * stat.sigma);
        assert!(quad.sigma <= stat.sigma * 1.01);
    }

    #[test]
    fn robust_quadratic_reduces_to_mixed_threshold() {
        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let mixed = design_sigma_mixed(&cd, &model).unwrap();
        let quad = design_quadratic_psi(&cd, Some(&model)).unwrap();
        assert!(quad.sigma >= 0.95 * mixed.sigma);
        let psi = quad.psi_tilde.unwrap();
        let cap = psi_bar_matrix(2, quad.sigma);
        assert!(sym(&(&psi - cap)).symmetric_eigenvalues().max() <= 1e-7);
    }

    #[test]
    fn contraction_rate_is_positive_and_below_generalized_eig() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        let rho1 = compute_rho1(&cd).unwrap();
        assert!(rho1 > 0.0);
        // Direct check: Q - rho1 S stays positive semidefinite.
        let gap = &cd.q - &cd.s * rho1;
        assert!(sym(&gap).symmetric_eigenvalues().min() > -1e-9);
    }

    #[test]
    fn decay_v_design_produces_threshold() {
        let data = noisefree_data();
        let cd = design_controller_noisefree(&data).unwrap();
        let tr = design_sigma_decay_v(&cd, 0.9).unwrap();
        assert!(tr.sigma > 0.0);
        assert_eq!(tr.varsigma, Some(0.9));
        assert!(tr.rho1.unwrap() > 0.0);
    }

    #[test]
    fn varsigma_d_selection_respects_margin() {
        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let vd = select_varsigma_d(&cd, 0.1).unwrap();
        assert!(vd > 0.0);
        // varsigma_d S < S Omega S must hold strictly.
        let gap = &cd.s * &omega * &cd.s - &cd.s * vd;
        assert!(sym(&gap).symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn timereg_bound_matches_hand_numbers() {
        // S = I, Omega = I, Delta = 0, |S X1 L| = 1 gives omega1 = 1,
        // omega2 = 2, sigma_sup = 0.5.
        let data = noisefree_data();
        let mut cd = design_controller_noisefree(&data).unwrap();
        cd.omega = Some(DMatrix::identity(2, 2));
        cd.s = DMatrix::identity(2, 2);
        cd.bk_data = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        cd.norms.l = 0.0;
        let model = crate::dataset::disturbance_bound_from_amplitude(0.0, 10, 2).unwrap();
        let b = sigma_bound_timereg(&cd, &model, 0.9).unwrap();
        assert_abs_diff_eq!(b.omega1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.omega2, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.sigma_sup, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.sigma, 0.45, epsilon = 1e-12);
    }

    #[test]
    fn miet_formulas_match_hand_values() {
        let data = noisefree_data();
        let mut cd = design_controller_noisefree(&data).unwrap();
        cd.norms.alpha = 2.0;
        assert_abs_diff_eq!(miet_tau(&cd, 1.0).unwrap(), 0.25, epsilon = 1e-12);

        // nu = 0 has no mixed bound.
        let model = crate::dataset::disturbance_bound_from_amplitude(0.1, 10, 2).unwrap();
        assert!(matches!(
            miet_bar_tau(&cd, &model, 0.5, 0.0),
            Err(SynthesisError::MixedMietUndefined)
        ));

        // When the amplitude term dominates, the bound is nu / delta scaled.
        cd.norms.acl = 0.1;
        cd.norms.bk = 0.1;
        cd.norms.g = 0.0;
        cd.norms.l = 0.0;
        let tb = miet_bar_tau(&cd, &model, 1.0, 0.01).unwrap();
        // abar = max(0.1, 0.1, 1.0 * 0.1 / 0.01 = 10) = 10.
        assert_abs_diff_eq!(tb, 0.5 / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn data_waiting_time_never_exceeds_model_one() {
        // The data norms overestimate the true operators, and the waiting
        // time shrinks with them.
        let plant = demo_plant();
        let (data, model) = noisy_data(0.05, 41);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let a_cl = &plant.a + &plant.b * &cd.k_gain;
        for i in 1..=30 {
            let sigma = 10.0_f64.powf(-3.0 + 4.0 * (i as f64 - 1.0) / 29.0);
            let td = miet_tau_d(&cd, &model, sigma).unwrap();
            let tm = miet_tau_m(&plant.a, &a_cl, sigma).unwrap();
            assert!(td <= tm + 1e-12, "sigma {sigma}: data {td} model {tm}");
        }
    }

    #[test]
    fn ultimate_bound_radius_scales_with_nu() {
        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let r1 = ultimate_bound_radius(&cd, 1.0, 0.01).unwrap();
        let r2 = ultimate_bound_radius(&cd, 1.0, 0.02).unwrap();
        assert!(r1 > 0.0);
        assert_abs_diff_eq!(r2, 2.0 * r1, epsilon = 1e-12);
    }

    #[test]
    fn semiglobal_bound_is_positive_and_monotone_in_nu() {
        let (data, model) = noisy_data(0.1, 23);
        let omega = DMatrix::identity(2, 2) * 10.0;
        let cd = design_controller_robust(&data, &model, &omega).unwrap();
        let t1 = miet_semiglobal(&cd, 0.01, 5.0, model.delta).unwrap();
        let t2 = miet_semiglobal(&cd, 0.02, 5.0, model.delta).unwrap();
        assert!(t1 > 0.0 && t2 > t1);
    }
}
