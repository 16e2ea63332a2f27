//! Mehrotra predictor-corrector interior-point method.
//!
//! Every inequality, including the nonnegativity bounds, is written as a row
//! of `C x - s = d` with slack `s >= 0` and multiplier `z >= 0`. Each Newton
//! step is reduced to the normal system
//!
//! ```text
//!     (Q + C' diag(z/s) C) dx = rhs
//! ```
//!
//! whose bound rows only touch the diagonal. When the weights spread so far
//! that the normal system loses the direction, the step falls back to an LU
//! solve of the augmented system in `(dx, dz)` over the general rows.

use std::cell::OnceCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::{
    relative, residuals_of, scale_of, within, QpSolution, QpStatus, QuadraticProgram, SolveOptions,
};

const STEP_FRACTION: f64 = 0.99;
const MAX_REGULARIZATION: f64 = 1e-6;
const SAFE_SIGMA: f64 = 0.5;
const REFINEMENT_STEPS: usize = 2;
const SUFFICIENT_DECREASE: f64 = 1e-2;
const DIRECTION_TOL: f64 = 1e-9;
const ELASTIC_CURVATURE: f64 = 1e-9;
const ELASTIC_FEASIBILITY_TOL: f64 = 1e-6;

/// Solves `qp`. The returned residuals are recomputed from the final
/// iterate, so `status == Optimal` is a certificate and not a promise.
pub fn solve(qp: &QuadraticProgram, opts: &SolveOptions) -> QpSolution {
    solve_impl(qp, opts, None)
}

/// Like [`solve`], but the primal iterate starts at `x0` instead of the
/// least-squares point. Slacks and multipliers are initialised as usual.
pub fn solve_from(qp: &QuadraticProgram, opts: &SolveOptions, x0: &DVector<f64>) -> QpSolution {
    solve_impl(qp, opts, Some(x0))
}

fn solve_impl(qp: &QuadraticProgram, opts: &SolveOptions, x0: Option<&DVector<f64>>) -> QpSolution {
    let sol = run(qp, opts, x0);
    if sol.status == QpStatus::Optimal || qp.num_constraints() + qp.nonneg.len() == 0 {
        return sol;
    }
    if provably_infeasible(qp) {
        return QpSolution {
            status: QpStatus::Infeasible,
            ..sol
        };
    }
    sol
}

struct Rows<'a> {
    qp: &'a QuadraticProgram,
    k: usize,
}

impl Rows<'_> {
    fn len(&self) -> usize {
        self.k + self.qp.nonneg.len()
    }

    /// `C x`
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        if self.k > 0 {
            out.rows_mut(0, self.k)
                .copy_from(&(&self.qp.constraints * x));
        }
        for (b, &j) in self.qp.nonneg.iter().enumerate() {
            out[self.k + b] = x[j];
        }
        out
    }

    /// `C' v`
    fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = if self.k > 0 {
            self.qp.constraints.tr_mul(&v.rows(0, self.k))
        } else {
            DVector::zeros(self.qp.num_variables())
        };
        for (b, &j) in self.qp.nonneg.iter().enumerate() {
            out[j] += v[self.k + b];
        }
        out
    }

    fn rhs(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.len());
        d.rows_mut(0, self.k).copy_from(&self.qp.rhs);
        d
    }

    /// `Q + C' diag(weights) C`
    fn normal_matrix(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let mut n = self.qp.hessian.clone();
        if self.k > 0 {
            let mut scaled = self.qp.constraints.clone();
            for i in 0..self.k {
                let w = weights[i].sqrt();
                scaled.row_mut(i).scale_mut(w);
            }
            n.gemm_tr(1.0, &scaled, &scaled, 1.0);
        }
        for (b, &j) in self.qp.nonneg.iter().enumerate() {
            n[(j, j)] += weights[self.k + b];
        }
        n
    }
}

/// Cholesky factor of the Jacobi-scaled matrix `D N D`, `D = diag(N)^(-1/2)`,
/// with a diagonal shift if the plain factorization fails.
struct Factor {
    chol: Cholesky<f64, Dyn>,
    scale: DVector<f64>,
}

impl Factor {
    fn new(n: &DMatrix<f64>, opts: &SolveOptions) -> Option<Self> {
        let p = n.nrows();
        let max_diag = n.diagonal().amax().max(1.0);
        let scale = DVector::from_fn(p, |i, _| 1.0 / n[(i, i)].max(1e-14 * max_diag).sqrt());
        let mut scaled = n.clone();
        for j in 0..p {
            for i in 0..p {
                scaled[(i, j)] *= scale[i] * scale[j];
            }
        }
        if let Some(chol) = Cholesky::new(scaled.clone()) {
            return Some(Self { chol, scale });
        }
        let mut reg = opts.static_regularization.max(f64::MIN_POSITIVE);
        while reg <= MAX_REGULARIZATION * (1.0 + 1e-9) {
            let mut m = scaled.clone();
            for i in 0..p {
                m[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(m) {
                return Some(Self { chol, scale });
            }
            reg *= 10.0;
        }
        None
    }

    fn solve_scaled(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut y = self.chol.solve(&rhs.component_mul(&self.scale));
        y.component_mul_assign(&self.scale);
        y
    }

    /// Solves `n x = rhs` with two steps of iterative refinement.
    fn solve(&self, n: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.solve_scaled(rhs);
        for _ in 0..2 {
            let r = rhs - n * &x;
            x += self.solve_scaled(&r);
        }
        x
    }
}

/// LU factor of the augmented system
///
/// ```text
///     [ Q + D_b   -A'  ] [dx ]
///     [ A        S/Z   ] [dzg]
/// ```
///
/// with the bound rows folded into `D_b = diag(z_b/s_b)`.
struct Augmented {
    lu: LU<f64, Dyn, Dyn>,
}

impl Augmented {
    fn new(rows: &Rows, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let p = rows.qp.num_variables();
        let k = rows.k;
        let mut m = DMatrix::zeros(p + k, p + k);
        m.view_mut((0, 0), (p, p)).copy_from(&rows.qp.hessian);
        for (b, &j) in rows.qp.nonneg.iter().enumerate() {
            m[(j, j)] += z[k + b] / s[k + b];
        }
        if k > 0 {
            m.view_mut((0, p), (p, k))
                .copy_from(&(-rows.qp.constraints.transpose()));
            m.view_mut((p, 0), (k, p)).copy_from(&rows.qp.constraints);
            for i in 0..k {
                m[(p + i, p + i)] = s[i] / z[i];
            }
        }
        Self { lu: m.lu() }
    }

    /// Solves the Newton system of [`run`] for `(dx, ds, dz)`.
    fn solve(
        &self,
        rows: &Rows,
        s: &DVector<f64>,
        z: &DVector<f64>,
        (e1, e2, e3): (&DVector<f64>, &DVector<f64>, &DVector<f64>),
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let p = rows.qp.num_variables();
        let k = rows.k;
        let mut rhs = DVector::zeros(p + k);
        rhs.rows_mut(0, p).copy_from(e1);
        for (b, &j) in rows.qp.nonneg.iter().enumerate() {
            let r = k + b;
            rhs[j] += (e3[r] + z[r] * e2[r]) / s[r];
        }
        for i in 0..k {
            rhs[p + i] = e2[i] + e3[i] / z[i];
        }
        let sol = self.lu.solve(&rhs)?;
        let dx = sol.rows(0, p).into_owned();
        let ds = rows.apply(&dx) - e2;
        let mut dz = (e3 - z.component_mul(&ds)).component_div(s);
        dz.rows_mut(0, k).copy_from(&sol.rows(p, k));
        Some((dx, ds, dz))
    }
}

type Step = (DVector<f64>, DVector<f64>, DVector<f64>);
type StepSolver<'a> = dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> Option<Step> + 'a;

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

fn split_dual(z: &DVector<f64>, k: usize) -> (DVector<f64>, DVector<f64>) {
    let a = z.rows(0, k).into_owned();
    let b = z.rows(k, z.len() - k).into_owned();
    (a, b)
}

fn data_norm(qp: &QuadraticProgram) -> f64 {
    let m = |v: f64, w: f64| v.max(w);
    let mut s = 0.0f64;
    if !qp.hessian.is_empty() {
        s = m(s, qp.hessian.amax());
    }
    if !qp.linear.is_empty() {
        s = m(s, qp.linear.amax());
    }
    if !qp.constraints.is_empty() {
        s = m(s, qp.constraints.amax());
    }
    if !qp.rhs.is_empty() {
        s = m(s, qp.rhs.amax());
    }
    s
}

fn finish(
    qp: &QuadraticProgram,
    x: DVector<f64>,
    z: &DVector<f64>,
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    let k = qp.num_constraints();
    let (dual, bound_dual) = split_dual(z, k);
    let residuals = residuals_of(qp, &x, &dual, &bound_dual);
    let objective = qp.objective(&x);
    QpSolution {
        x,
        dual,
        bound_dual,
        status,
        residuals,
        objective,
        iterations,
    }
}

fn run(qp: &QuadraticProgram, opts: &SolveOptions, x0: Option<&DVector<f64>>) -> QpSolution {
    let p = qp.num_variables();
    let rows = Rows {
        qp,
        k: qp.num_constraints(),
    };
    let mrows = rows.len();
    let d = rows.rhs();
    let big = 1e12 * (1.0 + data_norm(qp));

    if mrows == 0 {
        return unconstrained(qp, opts);
    }

    // starting point: minimize the objective plus the squared constraint
    // residual, then push slacks and multipliers into the interior
    let ones = DVector::from_element(mrows, 1.0);
    let n0 = rows.normal_matrix(&ones);
    let rhs0 = -&qp.linear + rows.apply_transpose(&d);
    let mut x = match (x0, Factor::new(&n0, opts)) {
        (Some(start), _) if start.len() == p => start.clone(),
        (_, Some(f)) => f.solve(&n0, &rhs0),
        _ => DVector::zeros(p),
    };
    let (mut s, mut z) = interior_start(&rows, &x, &d);

    let mut stalled = 0;
    for it in 0..=opts.max_iterations {
        let (dual, bound_dual) = split_dual(&z, rows.k);
        let res = residuals_of(qp, &x, &dual, &bound_dual);
        let rel = relative(&res, &scale_of(qp, &x, &dual, &bound_dual));
        if within(&rel, opts) {
            return finish(qp, x, &z, QpStatus::Optimal, it);
        }
        if it == opts.max_iterations || stalled >= 10 || z.amax() > big || x.amax() > big {
            return finish(qp, x, &z, QpStatus::IterationLimit, it);
        }

        let r_d = &qp.hessian * &x + &qp.linear - rows.apply_transpose(&z);
        let r_p = rows.apply(&x) - &s - &d;
        let mu = s.dot(&z) / mrows as f64;

        let weights = z.component_div(&s);
        let n = rows.normal_matrix(&weights);
        let Some(factor) = Factor::new(&n, opts) else {
            return finish(qp, x, &z, QpStatus::NumericalFailure, it);
        };

        // Newton system in (dx, ds, dz):
        //   Q dx - C' dz = e1,  C dx - ds = e2,  Z ds + S dz = e3
        let reduced = |e1: &DVector<f64>, e2: &DVector<f64>, e3: &DVector<f64>| {
            let inner = (e3 + z.component_mul(e2)).component_div(&s);
            let dx = factor.solve(&n, &(e1 + rows.apply_transpose(&inner)));
            let ds = rows.apply(&dx) - e2;
            let dz = (e3 - z.component_mul(&ds)).component_div(&s);
            (dx, ds, dz)
        };
        let augmented = OnceCell::new();
        let refine = |solve: &StepSolver, r_c: &DVector<f64>| {
            let (e1, e2) = (-&r_d, -&r_p);
            let (mut dx, mut ds, mut dz) = solve(&e1, &e2, r_c)?;
            // refinement on the full system; the reduction amplifies
            // rounding by z/s near the boundary
            let mut err = 0.0;
            for step in 0..=REFINEMENT_STEPS {
                let f1 = &e1 - (&qp.hessian * &dx - rows.apply_transpose(&dz));
                let f2 = &e2 - (rows.apply(&dx) - &ds);
                let f3 = r_c - (z.component_mul(&ds) + s.component_mul(&dz));
                let size = 1.0 + e1.amax().max(e2.amax()).max(r_c.amax());
                err = f1.amax().max(f2.amax()).max(f3.amax()) / size;
                if step == REFINEMENT_STEPS {
                    break;
                }
                let (cx, cs, cz) = solve(&f1, &f2, &f3)?;
                dx += cx;
                ds += cs;
                dz += cz;
            }
            Some(((dx, ds, dz), err))
        };
        let direction = |r_c: &DVector<f64>| -> Step {
            let normal =
                |e1: &DVector<f64>, e2: &DVector<f64>, e3: &DVector<f64>| Some(reduced(e1, e2, e3));
            let (step, err) = refine(&normal, r_c).expect("normal solve is total");
            if err <= DIRECTION_TOL {
                return step;
            }
            let aug = augmented.get_or_init(|| Augmented::new(&rows, &s, &z));
            let full = |e1: &DVector<f64>, e2: &DVector<f64>, e3: &DVector<f64>| {
                aug.solve(&rows, &s, &z, (e1, e2, e3))
            };
            match refine(&full, r_c) {
                Some((alt, alt_err)) if alt_err < err => alt,
                _ => step,
            }
        };

        // predictor
        let r_aff = -s.component_mul(&z);
        let (_, ds_aff, dz_aff) = direction(&r_aff);
        let a_aff = max_step(&s, &ds_aff).min(max_step(&z, &dz_aff));
        let mu_aff = (&s + &ds_aff * a_aff).dot(&(&z + &dz_aff * a_aff)) / mrows as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let r_c = DVector::from_element(mrows, sigma * mu)
            - s.component_mul(&z)
            - ds_aff.component_mul(&dz_aff);
        let (mut dx, mut ds, mut dz) = direction(&r_c);
        let mut alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);

        // Mehrotra steps can cycle; without sufficient decrease in mu, fall
        // back to a damped centering step
        let trial_mu = |a: f64, ds: &DVector<f64>, dz: &DVector<f64>| {
            (&s + ds * a).dot(&(&z + dz * a)) / mrows as f64
        };
        if trial_mu(alpha, &ds, &dz) > (1.0 - SUFFICIENT_DECREASE * alpha) * mu {
            let r_safe =
                DVector::from_element(mrows, sigma.max(SAFE_SIGMA) * mu) - s.component_mul(&z);
            (dx, ds, dz) = direction(&r_safe);
            alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
            for _ in 0..30 {
                if trial_mu(alpha, &ds, &dz) <= (1.0 - SUFFICIENT_DECREASE * alpha) * mu {
                    break;
                }
                alpha *= 0.5;
            }
        }

        if !(alpha.is_finite() && dx.iter().all(|v| v.is_finite())) {
            return finish(qp, x, &z, QpStatus::NumericalFailure, it);
        }
        stalled = if alpha < 1e-8 { stalled + 1 } else { 0 };

        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        // keep strictly interior against rounding
        s.apply(|v| *v = v.max(f64::MIN_POSITIVE));
        z.apply(|v| *v = v.max(f64::MIN_POSITIVE));
    }
    unreachable!("loop returns on its last iteration")
}

/// Mehrotra's heuristic: least-squares slacks and multipliers, shifted into
/// the positive orthant and balanced so that `s'z` is comparable across
/// components.
fn interior_start(
    rows: &Rows<'_>,
    x: &DVector<f64>,
    d: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let qp = rows.qp;
    let mrows = rows.len();
    let mut s = rows.apply(x) - d;
    let grad = &qp.hessian * x + &qp.linear;
    let mut c = DMatrix::zeros(mrows, qp.num_variables());
    if rows.k > 0 {
        c.view_mut((0, 0), (rows.k, c.ncols()))
            .copy_from(&qp.constraints);
    }
    for (b, &j) in qp.nonneg.iter().enumerate() {
        c[(rows.k + b, j)] = 1.0;
    }
    let mut cct = &c * c.transpose();
    let ridge = 1e-8 * cct.diagonal().amax().max(1.0);
    for i in 0..mrows {
        cct[(i, i)] += ridge;
    }
    let mut z = match Cholesky::new(cct) {
        Some(f) => f.solve(&(&c * &grad)),
        None => DVector::from_element(mrows, 1.0),
    };

    s.add_scalar_mut((-1.5 * s.min()).max(0.0));
    z.add_scalar_mut((-1.5 * z.min()).max(0.0));
    let sz = s.dot(&z);
    let (s_sum, z_sum) = (s.sum(), z.sum());
    if sz > 0.0 && s_sum > 0.0 && z_sum > 0.0 {
        s.add_scalar_mut(0.5 * sz / z_sum);
        z.add_scalar_mut(0.5 * sz / s_sum);
    }
    let floor = 1e-2;
    s.apply(|v| *v = v.max(floor));
    z.apply(|v| *v = v.max(floor));
    (s, z)
}

fn unconstrained(qp: &QuadraticProgram, opts: &SolveOptions) -> QpSolution {
    let p = qp.num_variables();
    let (x, status) = match Factor::new(&qp.hessian, opts) {
        Some(f) => (f.solve(&qp.hessian, &(-&qp.linear)), QpStatus::Optimal),
        None => (DVector::zeros(p), QpStatus::NumericalFailure),
    };
    let empty = DVector::zeros(0);
    let res = residuals_of(qp, &x, &empty, &empty);
    let rel = relative(&res, &scale_of(qp, &x, &empty, &empty));
    let status = if status == QpStatus::Optimal && !within(&rel, opts) {
        QpStatus::IterationLimit
    } else {
        status
    };
    finish(qp, x, &empty, status, 1)
}

/// Phase 1: minimize the total constraint violation `sum t` subject to
/// `A x + t >= c`, `t >= 0` and the original bounds. The elastic problem is
/// always feasible, so a positive optimum proves the original is not.
fn provably_infeasible(qp: &QuadraticProgram) -> bool {
    let p = qp.num_variables();
    let k = qp.num_constraints();
    let total = p + k;

    let mut hessian = DMatrix::zeros(total, total);
    for j in 0..p {
        hessian[(j, j)] = ELASTIC_CURVATURE;
    }
    let mut linear = DVector::zeros(total);
    linear.rows_mut(p, k).fill(1.0);
    let mut constraints = DMatrix::zeros(k, total);
    if k > 0 {
        constraints
            .view_mut((0, 0), (k, p))
            .copy_from(&qp.constraints);
        for i in 0..k {
            constraints[(i, p + i)] = 1.0;
        }
    }
    let mut nonneg = qp.nonneg.clone();
    nonneg.extend(p..total);
    let Ok(elastic) = QuadraticProgram::new(hessian, linear, constraints, qp.rhs.clone(), nonneg)
    else {
        return false;
    };
    let opts = SolveOptions {
        tol_primal: 1e-9,
        tol_dual: 1e-9,
        tol_gap: 1e-9,
        max_iterations: 200,
        ..SolveOptions::default()
    };
    let sol = run(&elastic, &opts, None);
    if sol.status != QpStatus::Optimal {
        return false;
    }
    let violation: f64 = sol.x.rows(p, k).sum();
    let rhs_scale = if k > 0 { qp.rhs.amax() } else { 0.0 };
    violation > ELASTIC_FEASIBILITY_TOL * (1.0 + rhs_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(h: &[f64], q: &[f64], a: &[f64], c: &[f64], nonneg: Vec<usize>) -> QuadraticProgram {
        let p = q.len();
        let k = c.len();
        QuadraticProgram::new(
            DMatrix::from_row_slice(p, p, h),
            DVector::from_column_slice(q),
            DMatrix::from_row_slice(k, p, a),
            DVector::from_column_slice(c),
            nonneg,
        )
        .unwrap()
    }

    #[test]
    fn single_active_constraint() {
        let sol = solve(
            &qp(&[1.0], &[0.0], &[1.0], &[1.0], vec![]),
            &SolveOptions::default(),
        );
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
        assert!((sol.dual[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn symmetric_split() {
        let sol = solve(
            &qp(
                &[1.0, 0.0, 0.0, 1.0],
                &[0.0, 0.0],
                &[1.0, 1.0],
                &[2.0],
                vec![],
            ),
            &SolveOptions::default(),
        );
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn contradictory_constraints_are_infeasible() {
        let sol = solve(
            &qp(&[1.0], &[0.0], &[1.0, -1.0], &[1.0, 0.0], vec![]),
            &SolveOptions::default(),
        );
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn bound_against_linear_term() {
        // min 1/2 x^2 + x, x >= 0  ->  x = 0 with bound multiplier 1
        let sol = solve(
            &qp(&[1.0], &[1.0], &[], &[], vec![0]),
            &SolveOptions::default(),
        );
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-7);
        assert!((sol.bound_dual[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unconstrained_and_zero_problems() {
        let sol = solve(
            &qp(&[2.0], &[-4.0], &[], &[], vec![]),
            &SolveOptions::default(),
        );
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
        let zero = solve(
            &qp(&[0.0], &[0.0], &[], &[], vec![]),
            &SolveOptions::default(),
        );
        assert_eq!(zero.status, QpStatus::Optimal);
        assert_eq!(zero.x[0], 0.0);
    }

    #[test]
    fn linear_program_with_bounds() {
        // min x + y  s.t. x + 2y >= 2, x, y >= 0  ->  (0, 1)
        let sol = solve(
            &qp(&[0.0; 4], &[1.0, 1.0], &[1.0, 2.0], &[2.0], vec![0, 1]),
            &SolveOptions::default(),
        );
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-7);
    }
}
