//! Small dense linear-matrix-inequality problems over a conic solver.
//!
//! The designs in this crate all reduce to feasibility or maximization
//! problems with affine matrix constraints: definite (strict) or
//! semidefinite (nonstrict) cone memberships, matrix equalities, and scalar
//! bounds. [`LmiProblem`] collects matrix variables and constraint closures,
//! expands them into sparse conic data by probing the closures on a basis,
//! hands the cone program to Clarabel, and then re-verifies every constraint
//! from scratch on the returned point with an eigenvalue check. Feasibility
//! reported here is always backed by that independent residual check, never
//! by the solver status alone.
//!
//! Strict inequalities are implemented by an explicit definiteness margin:
//! `F(w) < 0` becomes `F(w) + shift I <= 0` with
//! `shift = 1e-6 * (1 + data scale)`, so any verified point satisfies the
//! original strict constraint with a concrete margin.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Scaled upper-triangle vectorization of a symmetric matrix, column-major,
/// off-diagonal entries multiplied by sqrt(2). Matches the layout the PSD
/// triangle cone expects, and preserves Frobenius inner products.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let k = m.nrows();
    debug_assert_eq!(k, m.ncols());
    let mut out = DVector::zeros(k * (k + 1) / 2);
    let mut idx = 0;
    for c in 0..k {
        for r in 0..=c {
            out[idx] = if r == c { m[(r, c)] } else { m[(r, c)] * SQRT2 };
            idx += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>, k: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), k * (k + 1) / 2);
    let mut out = DMatrix::zeros(k, k);
    let mut idx = 0;
    for c in 0..k {
        for r in 0..=c {
            let val = if r == c { v[idx] } else { v[idx] / SQRT2 };
            out[(r, c)] = val;
            out[(c, r)] = val;
            idx += 1;
        }
    }
    out
}

/// Shape of a decision variable.
#[derive(Debug, Clone, PartialEq)]
pub enum VarShape {
    /// One scalar, optionally bounded below.
    Scalar { min: Option<f64> },
    /// Dense rectangular matrix, rows x cols.
    Rect(usize, usize),
    /// Symmetric matrix of the given side length; only the upper triangle
    /// carries decision coordinates.
    Sym(usize),
}

impl VarShape {
    fn coords(&self) -> usize {
        match *self {
            VarShape::Scalar { .. } => 1,
            VarShape::Rect(r, c) => r * c,
            VarShape::Sym(k) => k * (k + 1) / 2,
        }
    }
}

/// Sense of a matrix constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `F(w) < 0`, enforced as `F(w) + shift I <= 0`.
    NegDef,
    /// `F(w) <= 0`.
    NegSemiDef,
    /// `F(w) > 0`, enforced as `F(w) - shift I >= 0`.
    PosDef,
    /// `F(w) >= 0`.
    PosSemiDef,
    /// `F(w) = 0` entrywise; the block may be rectangular.
    Zero,
}

impl ConstraintKind {
    fn strict(self) -> bool {
        matches!(self, ConstraintKind::NegDef | ConstraintKind::PosDef)
    }

    fn label(self) -> &'static str {
        match self {
            ConstraintKind::NegDef => "negdef",
            ConstraintKind::NegSemiDef => "negsemidef",
            ConstraintKind::PosDef => "posdef",
            ConstraintKind::PosSemiDef => "possemidef",
            ConstraintKind::Zero => "zero",
        }
    }
}

/// Values of all variables at one point, keyed by name.
pub struct Assignment {
    map: BTreeMap<String, DMatrix<f64>>,
}

impl Assignment {
    /// Matrix value of a variable. Panics on an unknown name: constraint
    /// closures are builder-internal code, not user input.
    pub fn mat(&self, name: &str) -> &DMatrix<f64> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown variable {name:?} in constraint"))
    }

    pub fn scalar(&self, name: &str) -> f64 {
        let m = self.mat(name);
        debug_assert_eq!((m.nrows(), m.ncols()), (1, 1));
        m[(0, 0)]
    }
}

type ConstraintFn = Box<dyn Fn(&Assignment) -> DMatrix<f64>>;

struct Constraint {
    name: String,
    kind: ConstraintKind,
    func: ConstraintFn,
    /// Explicit margin override; `None` means auto for strict kinds, zero
    /// for nonstrict ones.
    shift: Option<f64>,
}

/// What to optimize. Feasibility problems use `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    MaximizeScalar(String),
    /// Maximize the trace of a symmetric matrix variable.
    MaximizeTrace(String),
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Solver returned a point and every constraint re-verified.
    Feasible,
    /// Solver produced an infeasibility certificate.
    Infeasible,
    /// No trustworthy answer: solver failed, or its point failed
    /// re-verification.
    NumericalFailure,
}

/// Per-constraint verification outcome: the most-positive eigenvalue of the
/// shifted constraint at the solution (max |entry| for equalities).
#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub name: String,
    pub residual: f64,
    pub shift: f64,
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub status: SolveStatus,
    pub values: BTreeMap<String, DMatrix<f64>>,
    pub residuals: Vec<ConstraintResidual>,
    pub objective: Option<f64>,
    /// Raw solver verdict, for diagnostics.
    pub solver_status: String,
}

impl LmiSolution {
    pub fn mat(&self, name: &str) -> &DMatrix<f64> {
        &self.values[name]
    }

    pub fn scalar(&self, name: &str) -> f64 {
        self.values[name][(0, 0)]
    }
}

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("invalid multiplier")]
    InvalidMultiplier,
    #[error("Schur pivot singular")]
    SchurPivotSingular,
    #[error("lmi problem is malformed: {0}")]
    Malformed(String),
}

/// Residuals are accepted up to this absolute eigenvalue tolerance.
pub const VERIFY_TOL: f64 = 1e-7;

/// Builder for one LMI problem.
pub struct LmiProblem {
    vars: Vec<(String, VarShape)>,
    constraints: Vec<Constraint>,
    objective: Option<Objective>,
}

impl Default for LmiProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self { vars: Vec::new(), constraints: Vec::new(), objective: None }
    }

    pub fn add_var(&mut self, name: &str, shape: VarShape) {
        assert!(
            self.vars.iter().all(|(n, _)| n != name),
            "duplicate variable {name:?}"
        );
        self.vars.push((name.to_string(), shape));
    }

    pub fn add_scalar(&mut self, name: &str, min: Option<f64>) {
        self.add_var(name, VarShape::Scalar { min });
    }

    /// Adds a matrix constraint. `func` must be affine in the variables and
    /// return a symmetric block for the cone kinds.
    pub fn add_constraint<F>(&mut self, name: &str, kind: ConstraintKind, func: F)
    where
        F: Fn(&Assignment) -> DMatrix<f64> + 'static,
    {
        self.constraints.push(Constraint {
            name: name.to_string(),
            kind,
            func: Box::new(func),
            shift: None,
        });
    }

    /// Like [`add_constraint`](Self::add_constraint) with an explicit
    /// definiteness margin instead of the automatic one.
    pub fn add_constraint_with_shift<F>(
        &mut self,
        name: &str,
        kind: ConstraintKind,
        shift: f64,
        func: F,
    ) where
        F: Fn(&Assignment) -> DMatrix<f64> + 'static,
    {
        self.constraints.push(Constraint {
            name: name.to_string(),
            kind,
            func: Box::new(func),
            shift: Some(shift),
        });
    }

    pub fn set_objective(&mut self, objective: Objective) {
        self.objective = Some(objective);
    }

    fn total_coords(&self) -> usize {
        self.vars.iter().map(|(_, s)| s.coords()).sum()
    }

    /// Reconstructs named matrices from a flat coordinate vector.
    fn assignment(&self, w: &[f64]) -> Assignment {
        let mut map = BTreeMap::new();
        let mut off = 0;
        for (name, shape) in &self.vars {
            let mat = match *shape {
                VarShape::Scalar { .. } => DMatrix::from_element(1, 1, w[off]),
                VarShape::Rect(r, c) => {
                    DMatrix::from_column_slice(r, c, &w[off..off + r * c])
                }
                VarShape::Sym(k) => {
                    let mut m = DMatrix::zeros(k, k);
                    let mut idx = off;
                    for c in 0..k {
                        for r in 0..=c {
                            m[(r, c)] = w[idx];
                            m[(c, r)] = w[idx];
                            idx += 1;
                        }
                    }
                    m
                }
            };
            map.insert(name.clone(), mat);
            off += shape.coords();
        }
        Assignment { map }
    }

    /// Affine expansion of one constraint: constant block and per-coordinate
    /// coefficient blocks.
    fn expand(&self, c: &Constraint, coords: usize) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let zero = vec![0.0; coords];
        let f0 = (c.func)(&self.assignment(&zero));
        let mut basis = Vec::with_capacity(coords);
        let mut probe = zero;
        for j in 0..coords {
            probe[j] = 1.0;
            let fj = (c.func)(&self.assignment(&probe)) - &f0;
            probe[j] = 0.0;
            basis.push(fj);
        }
        (f0, basis)
    }

    fn effective_shift(c: &Constraint, f0: &DMatrix<f64>, basis: &[DMatrix<f64>]) -> f64 {
        if let Some(s) = c.shift {
            return s;
        }
        if !c.kind.strict() {
            return 0.0;
        }
        let scale = basis
            .iter()
            .map(|b| b.norm())
            .fold(f0.norm(), f64::max);
        1e-6 * (1.0 + scale)
    }

    fn objective_gradient(&self, coords: usize) -> Result<Vec<f64>, LmiError> {
        let mut grad = vec![0.0; coords];
        let Some(obj) = &self.objective else {
            return Ok(grad);
        };
        let mut off = 0;
        for (name, shape) in &self.vars {
            match (obj, shape) {
                (Objective::MaximizeScalar(target), VarShape::Scalar { .. }) if target == name => {
                    grad[off] = 1.0;
                    return Ok(grad);
                }
                (Objective::MaximizeTrace(target), VarShape::Sym(k)) if target == name => {
                    let mut idx = off;
                    for c in 0..*k {
                        for r in 0..=c {
                            if r == c {
                                grad[idx] = 1.0;
                            }
                            idx += 1;
                        }
                    }
                    return Ok(grad);
                }
                _ => {}
            }
            off += shape.coords();
        }
        Err(LmiError::Malformed(format!("objective references unknown variable: {obj:?}")))
    }

    /// Assembles the cone program, solves it, and re-verifies the answer.
    pub fn solve(&self) -> Result<LmiSolution, LmiError> {
        let coords = self.total_coords();
        if coords == 0 {
            return Err(LmiError::Malformed("no variables declared".into()));
        }

        // Rows: scalar lower bounds first, then constraints in declaration
        // order. Each column j collects (row, coeff) pairs.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); coords];
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let mut off = 0;
        let mut bound_count = 0;
        for (_, shape) in &self.vars {
            if let VarShape::Scalar { min: Some(lo) } = shape {
                // w_j - lo >= 0  =>  s = -lo - (-1) w_j in the nonnegative cone.
                cols[off].push((row, -1.0));
                b.push(-lo);
                row += 1;
                bound_count += 1;
            }
            off += shape.coords();
        }
        if bound_count > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(bound_count));
        }

        struct Expanded {
            kind: ConstraintKind,
            shift: f64,
            dim: (usize, usize),
        }
        let mut expanded = Vec::new();
        for c in &self.constraints {
            let (f0, basis) = self.expand(c, coords);
            let (r, k) = (f0.nrows(), f0.ncols());
            if r == 0 || k == 0 {
                return Err(LmiError::Malformed(format!("constraint {:?} is empty", c.name)));
            }
            if c.kind != ConstraintKind::Zero && r != k {
                return Err(LmiError::Malformed(format!(
                    "constraint {:?} must be square for a cone membership",
                    c.name
                )));
            }
            let shift = Self::effective_shift(c, &f0, &basis);
            match c.kind {
                ConstraintKind::Zero => {
                    // Sigma w_j vec(Fj) = -vec(F0).
                    for (j, fj) in basis.iter().enumerate() {
                        for (idx, &v) in fj.iter().enumerate() {
                            if v != 0.0 {
                                cols[j].push((row + idx, v));
                            }
                        }
                    }
                    b.extend(f0.iter().map(|&v| -v));
                    cones.push(SupportedConeT::ZeroConeT(r * k));
                    row += r * k;
                }
                ConstraintKind::NegDef | ConstraintKind::NegSemiDef => {
                    // svec(-F0 - shift I) - Sigma w_j svec(Fj) in PSD cone.
                    let shifted = -&f0 - DMatrix::identity(r, r) * shift;
                    let sb = svec(&shifted);
                    for (j, fj) in basis.iter().enumerate() {
                        let sf = svec(fj);
                        for (idx, &v) in sf.iter().enumerate() {
                            if v != 0.0 {
                                cols[j].push((row + idx, v));
                            }
                        }
                    }
                    b.extend(sb.iter());
                    cones.push(SupportedConeT::PSDTriangleConeT(r));
                    row += r * (r + 1) / 2;
                }
                ConstraintKind::PosDef | ConstraintKind::PosSemiDef => {
                    // svec(F0 - shift I) + Sigma w_j svec(Fj) in PSD cone.
                    let shifted = &f0 - DMatrix::identity(r, r) * shift;
                    let sb = svec(&shifted);
                    for (j, fj) in basis.iter().enumerate() {
                        let sf = svec(fj);
                        for (idx, &v) in sf.iter().enumerate() {
                            if v != 0.0 {
                                cols[j].push((row + idx, -v));
                            }
                        }
                    }
                    b.extend(sb.iter());
                    cones.push(SupportedConeT::PSDTriangleConeT(r));
                    row += r * (r + 1) / 2;
                }
            }
            expanded.push(Expanded { kind: c.kind, shift, dim: (r, k) });
        }

        // Flatten to CSC.
        let mut colptr = Vec::with_capacity(coords + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut cols {
            col.sort_by_key(|&(r, _)| r);
            for &(r, v) in col.iter() {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(row, coords, colptr, rowval, nzval);
        let p = CscMatrix::zeros((coords, coords));
        let grad = self.objective_gradient(coords)?;
        let q: Vec<f64> = grad.iter().map(|&g| -g).collect();

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(500)
            .tol_feas(1e-10)
            .tol_gap_abs(1e-10)
            .tol_gap_rel(1e-10)
            .build()
            .map_err(|e| LmiError::Malformed(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings);
        solver.solve();
        let raw_status = solver.solution.status;
        let solver_status = format!("{raw_status:?}");

        let infeasible = matches!(
            raw_status,
            SolverStatus::PrimalInfeasible
                | SolverStatus::DualInfeasible
                | SolverStatus::AlmostPrimalInfeasible
                | SolverStatus::AlmostDualInfeasible
        );
        if infeasible {
            return Ok(LmiSolution {
                status: SolveStatus::Infeasible,
                values: BTreeMap::new(),
                residuals: Vec::new(),
                objective: None,
                solver_status,
            });
        }

        // Any returned point is judged by our own residual check, whatever
        // the solver called it.
        let w: Vec<f64> = solver.solution.x.clone();
        if w.len() != coords || w.iter().any(|v| !v.is_finite()) {
            return Ok(LmiSolution {
                status: SolveStatus::NumericalFailure,
                values: BTreeMap::new(),
                residuals: Vec::new(),
                objective: None,
                solver_status,
            });
        }
        let assignment = self.assignment(&w);
        let mut residuals = Vec::new();
        let mut ok = true;
        for (c, ex) in self.constraints.iter().zip(&expanded) {
            let f = (c.func)(&assignment);
            let residual = match ex.kind {
                ConstraintKind::Zero => f.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())),
                ConstraintKind::NegDef | ConstraintKind::NegSemiDef => {
                    let shifted = (&f + f.transpose()) * 0.5
                        + DMatrix::identity(ex.dim.0, ex.dim.0) * ex.shift;
                    shifted.symmetric_eigenvalues().max()
                }
                ConstraintKind::PosDef | ConstraintKind::PosSemiDef => {
                    let shifted = (&f + f.transpose()) * 0.5
                        - DMatrix::identity(ex.dim.0, ex.dim.0) * ex.shift;
                    -shifted.symmetric_eigenvalues().min()
                }
            };
            ok &= residual <= VERIFY_TOL;
            residuals.push(ConstraintResidual {
                name: c.name.clone(),
                residual,
                shift: ex.shift,
            });
        }
        for (name, shape) in &self.vars {
            if let VarShape::Scalar { min: Some(lo) } = shape {
                let v = assignment.scalar(name);
                ok &= v >= lo - VERIFY_TOL;
            }
        }

        let objective = self.objective.as_ref().map(|obj| match obj {
            Objective::MaximizeScalar(name) => assignment.scalar(name),
            Objective::MaximizeTrace(name) => assignment.mat(name).trace(),
        });
        let status = if ok { SolveStatus::Feasible } else { SolveStatus::NumericalFailure };
        Ok(LmiSolution {
            status,
            values: assignment.map,
            residuals,
            objective,
            solver_status,
        })
    }

    /// Plain-text description of the problem: variables, objective, and per
    /// constraint the sense, block size, margin, and data scales. Line
    /// oriented, for debugging and logs.
    pub fn dump(&self) -> String {
        let coords = self.total_coords();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "lmi problem: {} variables ({} coordinates), {} constraints",
            self.vars.len(),
            coords,
            self.constraints.len()
        );
        for (name, shape) in &self.vars {
            let desc = match shape {
                VarShape::Scalar { min: Some(lo) } => format!("scalar, min {lo:e}"),
                VarShape::Scalar { min: None } => "scalar".to_string(),
                VarShape::Rect(r, c) => format!("rect {r}x{c}"),
                VarShape::Sym(k) => format!("sym {k}x{k}"),
            };
            let _ = writeln!(out, "var {name}: {desc}");
        }
        match &self.objective {
            Some(Objective::MaximizeScalar(n)) => {
                let _ = writeln!(out, "objective: maximize {n}");
            }
            Some(Objective::MaximizeTrace(n)) => {
                let _ = writeln!(out, "objective: maximize trace({n})");
            }
            None => {
                let _ = writeln!(out, "objective: feasibility");
            }
        }
        for c in &self.constraints {
            let (f0, basis) = self.expand(c, coords);
            let shift = Self::effective_shift(c, &f0, &basis);
            let _ = writeln!(
                out,
                "constraint {}: {}, {}x{}, shift {:e}, const norm {:e}",
                c.name,
                c.kind.label(),
                f0.nrows(),
                f0.ncols(),
                shift,
                f0.norm()
            );
            let mut off = 0;
            for (name, shape) in &self.vars {
                let nc = shape.coords();
                let sens: f64 = basis[off..off + nc].iter().map(|m| m.norm_squared()).sum();
                if sens > 0.0 {
                    let _ = writeln!(out, "  d/d {name}: norm {:e}", sens.sqrt());
                }
                off += nc;
            }
        }
        out
    }
}

/// Decides `[A11 A12; A12' A22] <= 0` through the Schur complement
/// `A11 - A12 A22^{-1} A12' <= 0`, which is valid exactly when `A22 < 0`.
pub fn schur_nsd_equivalent(
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a22: &DMatrix<f64>,
) -> Result<bool, LmiError> {
    if a11.nrows() != a11.ncols() || a22.nrows() != a22.ncols() {
        return Err(LmiError::Malformed("diagonal blocks must be square".into()));
    }
    if a12.nrows() != a11.nrows() || a12.ncols() != a22.nrows() {
        return Err(LmiError::Malformed("off-diagonal block shape mismatch".into()));
    }
    let neg = -(a22 + a22.transpose()) * 0.5;
    let Some(chol) = neg.clone().cholesky() else {
        return Err(LmiError::SchurPivotSingular);
    };
    // A11 + A12 (-A22)^{-1} A12' = A11 + X' X with L X = A12'.
    let x = chol.l().solve_lower_triangular(&a12.transpose()).ok_or(LmiError::SchurPivotSingular)?;
    let complement = (a11 + a11.transpose()) * 0.5 + x.transpose() * &x;
    Ok(complement.symmetric_eigenvalues().max() <= 0.0)
}

/// Robust completion-of-squares bound: for every `D` with `D D' <= Delta
/// Delta'`, `B D' C + C' D B' <= eps^{-1} B B' + eps C' Delta Delta' C`.
pub fn petersen_upper_bound(
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    eps: f64,
) -> Result<DMatrix<f64>, LmiError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(LmiError::InvalidMultiplier);
    }
    if b.nrows() != c.ncols() {
        return Err(LmiError::Malformed("B and C do not share the outer dimension".into()));
    }
    if delta.nrows() != c.nrows() {
        return Err(LmiError::Malformed("Delta rows must match C rows".into()));
    }
    let bbt = b * b.transpose();
    let cdc = c.transpose() * delta * delta.transpose() * c;
    Ok(bbt / eps + cdc * eps)
}

/// Random member of `{D : D D' <= Delta Delta'}` with the requested column
/// count: a spectrally normalized random direction scaled by a uniform
/// factor in `[0, 1]`.
pub fn sample_disturbance_matrix(
    delta: &DMatrix<f64>,
    cols: usize,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    let s = delta.ncols();
    let mut w = DMatrix::zeros(s, cols);
    for v in w.iter_mut() {
        *v = rng.gen_range(-1.0..=1.0);
    }
    let top = w.clone().svd(false, false).singular_values.max();
    if top > 0.0 {
        let rho: f64 = rng.gen_range(0.0..=1.0);
        w *= rho / top;
    }
    delta * w
}
