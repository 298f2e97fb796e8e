//! Embedded convex solvers: LP and convex QP with linear equality and
//! inequality constraints, plus shortest-path and negative-cycle routines
//! on the clinical activity network.
//!
//! The QP engine is operator splitting (alternating projection onto the
//! constraint set with a proximal objective step) with an active-set KKT
//! polish; LPs run through the same engine with a Bland-rule simplex
//! fallback for degenerate instances.

mod admm;
mod graph;
mod simplex;

pub use graph::{detect_negative_cycle, shortest_path_cost, NegativeCycleDetected};
pub use simplex::duality_gap as lp_duality_gap;

use thiserror::Error;

use crate::linalg::{dot, Mat};
use crate::scalar::Real;

pub const DEFAULT_MAX_ITER: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("malformed program: {0}")]
    Malformed(String),
}

/// Solution report. When `status` is `Optimal` the residuals are within
/// the requested tolerance.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SolveReport<R> {
    pub status: Status,
    pub x: Vec<R>,
    /// Multipliers for the equality rows followed by the inequality rows.
    pub eq_duals: Vec<R>,
    pub ineq_duals: Vec<R>,
    pub objective: R,
    pub max_primal_residual: R,
    pub max_dual_residual: R,
    pub iterations: usize,
}

/// Per-variable bounds; use `±infinity` for unbounded sides.
pub type Bounds<R> = Vec<(R, R)>;

#[derive(Clone, Debug, Default)]
pub struct Constraints<R> {
    pub eq: Option<(Mat<R>, Vec<R>)>,
    /// `G x <= h`.
    pub ineq: Option<(Mat<R>, Vec<R>)>,
    pub bounds: Bounds<R>,
}

#[derive(Clone, Debug)]
pub struct LinearProgram<R> {
    pub objective: Vec<R>,
    pub constraints: Constraints<R>,
}

#[derive(Clone, Debug)]
pub enum QuadTerm<R> {
    Diag(Vec<R>),
    Dense(Mat<R>),
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram<R> {
    pub quadratic: QuadTerm<R>,
    pub linear: Vec<R>,
    pub constraints: Constraints<R>,
}

impl<R: Real> Constraints<R> {
    fn validate(&self, nvar: usize) -> Result<(), SolveError> {
        if let Some((a, b)) = &self.eq {
            if a.ncols() != nvar || a.nrows() != b.len() {
                return Err(SolveError::Malformed("equality dimensions".into()));
            }
            if a.has_nan() || b.iter().any(|v| v.is_nan()) {
                return Err(SolveError::Malformed("NaN in equality rows".into()));
            }
        }
        if let Some((g, h)) = &self.ineq {
            if g.ncols() != nvar || g.nrows() != h.len() {
                return Err(SolveError::Malformed("inequality dimensions".into()));
            }
            if g.has_nan() || h.iter().any(|v| v.is_nan()) {
                return Err(SolveError::Malformed("NaN in inequality rows".into()));
            }
        }
        if !self.bounds.is_empty() && self.bounds.len() != nvar {
            return Err(SolveError::Malformed("bounds length".into()));
        }
        if self.bounds.iter().any(|(l, u)| l.is_nan() || u.is_nan()) {
            return Err(SolveError::Malformed("NaN in bounds".into()));
        }
        Ok(())
    }

    fn n_eq(&self) -> usize {
        self.eq.as_ref().map_or(0, |(a, _)| a.nrows())
    }

    fn n_ineq(&self) -> usize {
        self.ineq.as_ref().map_or(0, |(g, _)| g.nrows())
    }
}

impl<R: Real> QuadTerm<R> {
    pub fn zero(nvar: usize) -> Self {
        QuadTerm::Diag(vec![R::zero(); nvar])
    }

    fn validate(&self, nvar: usize) -> Result<(), SolveError> {
        match self {
            QuadTerm::Diag(d) => {
                if d.len() != nvar {
                    return Err(SolveError::Malformed("quadratic diagonal length".into()));
                }
                if d.iter().any(|v| v.is_nan() || *v < R::zero()) {
                    return Err(SolveError::Malformed(
                        "diagonal quadratic term must be nonnegative".into(),
                    ));
                }
            }
            QuadTerm::Dense(p) => {
                if p.nrows() != nvar || p.ncols() != nvar {
                    return Err(SolveError::Malformed("quadratic matrix shape".into()));
                }
                if p.has_nan() {
                    return Err(SolveError::Malformed("NaN in quadratic matrix".into()));
                }
                for i in 0..nvar {
                    for j in 0..i {
                        if (p.get(i, j) - p.get(j, i)).abs() > R::real(1e-12) {
                            return Err(SolveError::Malformed(
                                "quadratic matrix must be symmetric".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn matvec(&self, x: &[R]) -> Vec<R> {
        match self {
            QuadTerm::Diag(d) => d.iter().zip(x).map(|(di, xi)| *di * *xi).collect(),
            QuadTerm::Dense(p) => p.matvec(x),
        }
    }

    pub(crate) fn quad_form(&self, x: &[R]) -> R {
        dot(&self.matvec(x), x)
    }
}

/// Solve a linear program to the requested infinity-norm residual
/// tolerance.
pub fn solve_lp<R: Real>(lp: &LinearProgram<R>, tol: R) -> Result<SolveReport<R>, SolveError> {
    let nvar = lp.objective.len();
    lp.constraints.validate(nvar)?;
    if lp.objective.iter().any(|v| v.is_nan()) {
        return Err(SolveError::Malformed("NaN in objective".into()));
    }
    let qp = QuadraticProgram {
        quadratic: QuadTerm::zero(nvar),
        linear: lp.objective.clone(),
        constraints: lp.constraints.clone(),
    };
    match admm::solve(&qp, tol) {
        Ok(report) if report.status == Status::Optimal => Ok(report),
        // Degenerate or non-converging LPs go to the exact simplex path,
        // which also certifies infeasible/unbounded statuses.
        _ => simplex::solve(lp, tol),
    }
}

/// Solve a convex QP (PSD quadratic term) to the requested tolerance.
pub fn solve_qp<R: Real>(qp: &QuadraticProgram<R>, tol: R) -> Result<SolveReport<R>, SolveError> {
    let nvar = qp.linear.len();
    qp.quadratic.validate(nvar)?;
    qp.constraints.validate(nvar)?;
    if qp.linear.iter().any(|v| v.is_nan()) {
        return Err(SolveError::Malformed("NaN in objective".into()));
    }
    admm::solve(qp, tol)
}
