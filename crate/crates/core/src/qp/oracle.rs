//! Brute-force active-set enumeration for tiny problems.
//!
//! Every subset of at most `p` inequality rows is assumed active, the
//! resulting equality-constrained KKT system is solved directly, and the best
//! primal-dual feasible candidate wins. Exponential, but independent of the
//! interior-point code, which makes it useful as a reference.

use nalgebra::{DMatrix, DVector};

use super::{residuals_of, QpSolution, QpStatus, QuadraticProgram};
use crate::error::{Error, Result};

pub const ORACLE_MAX_VARIABLES: usize = 8;
/// Rows of `A` plus nonnegativity bounds.
pub const ORACLE_MAX_CONSTRAINTS: usize = 12;

const TOL: f64 = 1e-9;

struct Candidate {
    x: DVector<f64>,
    z: DVector<f64>,
    objective: f64,
}

pub fn solve_oracle(qp: &QuadraticProgram) -> Result<QpSolution> {
    let p = qp.num_variables();
    let k = qp.num_constraints();
    let rows = k + qp.nonneg.len();
    if p > ORACLE_MAX_VARIABLES || rows > ORACLE_MAX_CONSTRAINTS {
        return Err(Error::OracleTooLarge {
            variables: p,
            constraints: rows,
        });
    }
    let (c, d) = stacked_rows(qp);

    if let Some(best) = enumerate(&qp.hessian, &qp.linear, &c, &d) {
        return Ok(package(qp, best.x, &best.z, QpStatus::Optimal));
    }

    // no KKT point: either empty feasible set or unbounded below; the
    // strongly convex projection problem tells the two apart
    let eye = DMatrix::identity(p, p);
    let zero = DVector::zeros(p);
    let (status, x, z) = match enumerate(&eye, &zero, &c, &d) {
        Some(f) => (QpStatus::Unbounded, f.x, DVector::zeros(rows)),
        None => (
            QpStatus::Infeasible,
            DVector::zeros(p),
            DVector::zeros(rows),
        ),
    };
    Ok(package(qp, x, &z, status))
}

fn stacked_rows(qp: &QuadraticProgram) -> (DMatrix<f64>, DVector<f64>) {
    let p = qp.num_variables();
    let k = qp.num_constraints();
    let rows = k + qp.nonneg.len();
    let mut c = DMatrix::zeros(rows, p);
    let mut d = DVector::zeros(rows);
    if k > 0 {
        c.view_mut((0, 0), (k, p)).copy_from(&qp.constraints);
        d.rows_mut(0, k).copy_from(&qp.rhs);
    }
    for (b, &j) in qp.nonneg.iter().enumerate() {
        c[(k + b, j)] = 1.0;
    }
    (c, d)
}

fn package(
    qp: &QuadraticProgram,
    x: DVector<f64>,
    z: &DVector<f64>,
    status: QpStatus,
) -> QpSolution {
    let k = qp.num_constraints();
    let dual = z.rows(0, k).into_owned();
    let bound_dual = z.rows(k, z.len() - k).into_owned();
    let residuals = residuals_of(qp, &x, &dual, &bound_dual);
    let objective = qp.objective(&x);
    QpSolution {
        x,
        dual,
        bound_dual,
        status,
        residuals,
        objective,
        iterations: 0,
    }
}

fn enumerate(
    q_mat: &DMatrix<f64>,
    q_lin: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Option<Candidate> {
    let p = q_lin.len();
    let rows = d.len();
    let scale = 1.0
        + [q_mat.amax(), amax(q_lin), amax_m(c), amax(d)]
            .into_iter()
            .fold(0.0, f64::max);
    let tol = TOL * scale;

    let mut best: Option<Candidate> = None;
    for mask in 0u32..(1u32 << rows) {
        if mask.count_ones() as usize > p {
            continue;
        }
        let active: Vec<usize> = (0..rows).filter(|&i| mask & (1 << i) != 0).collect();
        let Some((x, z_active)) = solve_kkt(q_mat, q_lin, c, d, &active, scale) else {
            continue;
        };
        if (0..rows).any(|i| c.row(i).dot(&x.transpose()) - d[i] < -tol * (1.0 + amax(&x))) {
            continue;
        }
        if z_active.iter().any(|&v| v < -tol) {
            continue;
        }
        let objective = 0.5 * x.dot(&(q_mat * &x)) + q_lin.dot(&x);
        if best
            .as_ref()
            .is_none_or(|b| objective < b.objective - tol * 1e-3)
        {
            let mut z = DVector::zeros(rows);
            for (a, &i) in active.iter().enumerate() {
                z[i] = z_active[a].max(0.0);
            }
            best = Some(Candidate { x, z, objective });
        }
    }
    best
}

/// Minimum-norm solution of `[Q -C_S'; C_S 0] [x; z] = [-q; d_S]`, or `None`
/// when the system is inconsistent.
fn solve_kkt(
    q_mat: &DMatrix<f64>,
    q_lin: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    active: &[usize],
    scale: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let p = q_lin.len();
    let s = active.len();
    let mut kkt = DMatrix::zeros(p + s, p + s);
    kkt.view_mut((0, 0), (p, p)).copy_from(q_mat);
    let mut rhs = DVector::zeros(p + s);
    rhs.rows_mut(0, p).copy_from(&(-q_lin));
    for (a, &i) in active.iter().enumerate() {
        for j in 0..p {
            kkt[(p + a, j)] = c[(i, j)];
            kkt[(j, p + a)] = -c[(i, j)];
        }
        rhs[p + a] = d[i];
    }

    let svd = kkt.clone().svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.max();
    let sol = svd.solve(&rhs, cutoff).ok()?;
    if !sol.iter().all(|e| e.is_finite()) || !consistent(&kkt, &sol, &rhs, scale) {
        return None;
    }
    Some((sol.rows(0, p).into_owned(), sol.rows(p, s).into_owned()))
}

/// The residual is measured against the data, not the solution, so that
/// near-singular systems cannot pass with huge spurious solutions.
fn consistent(kkt: &DMatrix<f64>, v: &DVector<f64>, rhs: &DVector<f64>, scale: f64) -> bool {
    let r = kkt * v - rhs;
    amax(&r) <= 1e-8 * scale * (1.0 + amax(rhs))
}

fn amax(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

fn amax_m(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(h: &[f64], q: &[f64], a: &[f64], c: &[f64], nonneg: Vec<usize>) -> QuadraticProgram {
        let p = q.len();
        QuadraticProgram::new(
            DMatrix::from_row_slice(p, p, h),
            DVector::from_column_slice(q),
            DMatrix::from_row_slice(c.len(), p, a),
            DVector::from_column_slice(c),
            nonneg,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_optimum() {
        let sol = solve_oracle(&qp(&[1.0], &[0.0], &[1.0], &[1.0], vec![])).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.dual[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let inf = solve_oracle(&qp(&[1.0], &[0.0], &[1.0, -1.0], &[1.0, 0.0], vec![])).unwrap();
        assert_eq!(inf.status, QpStatus::Infeasible);
        let unb = solve_oracle(&qp(&[0.0], &[-1.0], &[1.0], &[0.0], vec![])).unwrap();
        assert_eq!(unb.status, QpStatus::Unbounded);
    }

    #[test]
    fn refuses_large_problems() {
        let p = ORACLE_MAX_VARIABLES + 1;
        let big = QuadraticProgram::new(
            DMatrix::identity(p, p),
            DVector::zeros(p),
            DMatrix::zeros(0, p),
            DVector::zeros(0),
            vec![],
        )
        .unwrap();
        assert!(matches!(
            solve_oracle(&big),
            Err(Error::OracleTooLarge { .. })
        ));
    }
}
