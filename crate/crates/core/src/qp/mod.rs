//! Dense convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 x' Q x + q' x
//!     subject to  A x >= c
//!                 x_j >= 0    for j in nonneg
//! ```
//!
//! with `Q` symmetric positive semidefinite. [`solve`] is a primal-dual
//! interior-point method; [`solve_oracle`] enumerates active sets and is only
//! meant for tiny instances in tests.

mod ipm;
mod oracle;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub use ipm::{solve, solve_from};
pub use oracle::{solve_oracle, ORACLE_MAX_CONSTRAINTS, ORACLE_MAX_VARIABLES};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    /// `Q`, `p x p`.
    pub hessian: DMatrix<f64>,
    /// `q`, length `p`.
    pub linear: DVector<f64>,
    /// `A`, `k x p`.
    pub constraints: DMatrix<f64>,
    /// `c`, length `k`.
    pub rhs: DVector<f64>,
    /// Sorted, distinct indices of variables constrained to be nonnegative.
    pub nonneg: Vec<usize>,
}

impl QuadraticProgram {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        constraints: DMatrix<f64>,
        rhs: DVector<f64>,
        mut nonneg: Vec<usize>,
    ) -> Result<Self> {
        let p = linear.len();
        if hessian.nrows() != p || hessian.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: hessian.nrows(),
            });
        }
        if constraints.ncols() != p && constraints.nrows() > 0 {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: constraints.ncols(),
            });
        }
        if constraints.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: constraints.nrows(),
                got: rhs.len(),
            });
        }
        nonneg.sort_unstable();
        nonneg.dedup();
        if let Some(&j) = nonneg.last() {
            if j >= p {
                return Err(Error::InvalidConfig(format!(
                    "nonnegativity index {j} out of range for {p} variables"
                )));
            }
        }
        let scale = hessian.amax().max(1.0);
        for j in 0..p {
            for i in (j + 1)..p {
                if (hessian[(i, j)] - hessian[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let constraints = if constraints.nrows() == 0 {
            DMatrix::zeros(0, p)
        } else {
            constraints
        };
        Ok(Self {
            hessian,
            linear,
            constraints,
            rhs,
            nonneg,
        })
    }

    pub fn num_variables(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    /// PSD up to `-tol * ||Q||_2` on the smallest eigenvalue.
    pub fn is_convex(&self, tol: f64) -> bool {
        if self.num_variables() == 0 {
            return true;
        }
        let (min, max_abs) = linalg::eigen_extremes(&self.hessian);
        min >= -tol * max_abs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    /// A phase-1 elastic problem showed the constraints cannot all hold.
    Infeasible,
    /// Feasible but unbounded below; only reported by the oracle.
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub max_iterations: usize,
    /// Initial diagonal shift tried when the Newton matrix is not positive
    /// definite; escalated tenfold up to `1e-6`.
    pub static_regularization: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            tol_gap: 1e-8,
            max_iterations: 200,
            static_regularization: 1e-10,
        }
    }
}

/// Max-norm KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub primal_infeasibility: f64,
    /// Stationarity `||Qx + q - A'y - bound_dual||_inf`, or the most negative
    /// multiplier if that is larger.
    pub dual_infeasibility: f64,
    pub complementarity_gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal_infeasibility
            .max(self.dual_infeasibility)
            .max(self.complementarity_gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the rows of `A`.
    pub dual: DVector<f64>,
    /// Multipliers of the nonnegativity bounds, aligned with `nonneg`.
    pub bound_dual: DVector<f64>,
    pub status: QpStatus,
    /// Absolute residuals, recomputed from `(x, dual, bound_dual)`.
    pub residuals: Residuals,
    pub objective: f64,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Absolute KKT residuals of a candidate primal-dual triple.
pub fn kkt_residuals(qp: &QuadraticProgram, sol: &QpSolution) -> Residuals {
    residuals_of(qp, &sol.x, &sol.dual, &sol.bound_dual)
}

pub(crate) fn residuals_of(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    dual: &DVector<f64>,
    bound_dual: &DVector<f64>,
) -> Residuals {
    let slack = &qp.constraints * x - &qp.rhs;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut neg_mult: f64 = 0.0;
    for i in 0..slack.len() {
        primal = primal.max(-slack[i]);
        comp = comp.max((dual[i] * slack[i]).abs());
        neg_mult = neg_mult.max(-dual[i]);
    }
    let mut grad = &qp.hessian * x + &qp.linear;
    if qp.num_constraints() > 0 {
        grad -= qp.constraints.tr_mul(dual);
    }
    for (b, &j) in qp.nonneg.iter().enumerate() {
        primal = primal.max(-x[j]);
        comp = comp.max((bound_dual[b] * x[j]).abs());
        neg_mult = neg_mult.max(-bound_dual[b]);
        grad[j] -= bound_dual[b];
    }
    Residuals {
        primal_infeasibility: primal,
        dual_infeasibility: grad.amax().max(neg_mult),
        complementarity_gap: comp,
    }
}

/// Magnitudes the absolute residuals are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualScale {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

pub fn residual_scale(qp: &QuadraticProgram, sol: &QpSolution) -> ResidualScale {
    scale_of(qp, &sol.x, &sol.dual, &sol.bound_dual)
}

pub(crate) fn scale_of(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    dual: &DVector<f64>,
    bound_dual: &DVector<f64>,
) -> ResidualScale {
    let qx = &qp.hessian * x;
    let aty = if qp.num_constraints() > 0 {
        qp.constraints.tr_mul(dual).amax()
    } else {
        0.0
    };
    let primal = 1.0 + amax(&qp.rhs);
    let dual_scale = 1.0
        + qx.amax()
            .max(amax(&qp.linear))
            .max(aty)
            .max(amax(bound_dual));
    let obj = 0.5 * x.dot(&qx) + qp.linear.dot(x);
    ResidualScale {
        primal,
        dual: dual_scale,
        gap: 1.0 + obj.abs(),
    }
}

/// Residuals divided by their scales; these are what the tolerances in
/// [`SolveOptions`] bound.
pub fn relative_residuals(qp: &QuadraticProgram, sol: &QpSolution) -> Residuals {
    let r = kkt_residuals(qp, sol);
    let s = residual_scale(qp, sol);
    relative(&r, &s)
}

pub(crate) fn relative(r: &Residuals, s: &ResidualScale) -> Residuals {
    Residuals {
        primal_infeasibility: r.primal_infeasibility / s.primal,
        dual_infeasibility: r.dual_infeasibility / s.dual,
        complementarity_gap: r.complementarity_gap / s.gap,
    }
}

pub(crate) fn within(rel: &Residuals, opts: &SolveOptions) -> bool {
    rel.primal_infeasibility <= opts.tol_primal
        && rel.dual_infeasibility <= opts.tol_dual
        && rel.complementarity_gap <= opts.tol_gap
}

fn amax(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}
