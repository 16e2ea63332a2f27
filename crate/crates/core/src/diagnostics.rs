//! Numerical checks of the assumptions and optimality conditions the models
//! rely on: rank conditions on the data, definiteness of `G`, separability
//! certificates and KKT residuals of trained models on their original,
//! nonsmooth formulations.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::halfvec::{assemble_design, hvec_len, DesignCache, SymmetricMatrix};
use crate::linalg;
use crate::models::{self, QuadSurfaceModel, TrainConfig, TrainReport, Variant};
use crate::qp::{self, QpStatus, QuadraticProgram, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assumptions {
    /// `X` has full column rank.
    pub a1: bool,
    /// The all-ones vector is not in the column space of `X`.
    pub a2: bool,
}

pub fn check_assumptions(dataset: &Dataset) -> Assumptions {
    let x = dataset.x();
    let (m, n) = x.shape();
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax * m.max(n) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let ones = DVector::from_element(m, 1.0);
    let a2 = match svd.solve(&ones, cut) {
        Ok(coef) => (x * coef - &ones).norm() > 1e-8 * (m as f64).sqrt(),
        Err(_) => true,
    };
    Assumptions { a1: rank == n, a2 }
}

/// Smallest eigenvalue of `G` relative to `||G||_2`.
pub fn g_min_eigen_ratio(cache: &DesignCache) -> f64 {
    let (min, max_abs) = linalg::eigen_extremes(cache.g());
    if max_abs == 0.0 {
        0.0
    } else {
        min / max_abs
    }
}

/// `G` is positive definite: its smallest eigenvalue exceeds `1e-8 ||G||_2`.
pub fn is_g_pd(cache: &DesignCache) -> bool {
    g_min_eigen_ratio(cache) > 1e-8
}

/// Same question through the Schur complement of the `2m I` block:
/// `G` is PD iff `G_ww - G_wb G_bw / (2m)` is.
pub fn is_g_pd_schur(cache: &DesignCache) -> bool {
    let n = cache.dim();
    let h = hvec_len(n);
    let g = cache.g();
    let gww = g.view((0, 0), (h, h));
    let gwb = g.view((0, h), (h, n));
    let two_m = 2.0 * cache.samples() as f64;
    let schur = gww - gwb * gwb.transpose() / two_m;
    let norm = linalg::eigen_extremes(g).1;
    let (min, _) = linalg::eigen_extremes(&schur);
    norm > 0.0 && min > 1e-8 * norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparabilityKind {
    Linear,
    Quadratic,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityCertificate {
    pub kind: SeparabilityKind,
    /// Separator with `y_i f(x_i) >= 1` on every sample.
    pub witness: Option<QuadSurfaceModel>,
    /// `min_i y_i f(x_i)` of the witness; zero without one.
    pub min_margin: f64,
}

/// Looks for a separator of the requested kind by solving
/// `min 1/2 ||vars||^2  s.t.  y_i f(x_i) >= 1`.
pub fn check_separability(
    dataset: &Dataset,
    kind: SeparabilityKind,
) -> Result<SeparabilityCertificate> {
    let n = dataset.dim();
    let m = dataset.len();
    let quadratic = match kind {
        SeparabilityKind::Linear => false,
        SeparabilityKind::Quadratic => true,
        SeparabilityKind::None => {
            return Err(Error::InvalidConfig(
                "nothing to certify for kind None".into(),
            ))
        }
    };
    let cache = quadratic.then(|| assemble_design(dataset));
    let wlen = if quadratic { hvec_len(n) } else { 0 };
    let p = wlen + n + 1;
    let mut a = DMatrix::zeros(m, p);
    for i in 0..m {
        let y = dataset.label(i);
        if let Some(cache) = &cache {
            for (j, v) in cache.s(i).iter().enumerate() {
                a[(i, j)] = y * v;
            }
        }
        for k in 0..n {
            a[(i, wlen + k)] = y * dataset.x()[(i, k)];
        }
        a[(i, p - 1)] = y;
    }
    let qp = QuadraticProgram::new(
        DMatrix::identity(p, p),
        DVector::zeros(p),
        a,
        DVector::from_element(m, 1.0),
        vec![],
    )?;
    let sol = qp::solve(&qp, &SolveOptions::default());
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Ok(SeparabilityCertificate {
                kind: SeparabilityKind::None,
                witness: None,
                min_margin: 0.0,
            })
        }
        s => return Err(Error::SolverFailure(s)),
    }
    let w = if quadratic {
        crate::halfvec::HalfVector::new(n, sol.x.rows(0, wlen).iter().copied().collect())?.unhvec()
    } else {
        SymmetricMatrix::zeros(n)
    };
    let mut witness = QuadSurfaceModel::new(w, sol.x.rows(wlen, n).into_owned(), sol.x[p - 1])?;
    witness.variant = if quadratic {
        Variant::Qssvm
    } else {
        Variant::Svm
    };
    let min_margin = (0..m)
        .map(|i| dataset.label(i) * witness.eval(&dataset.sample(i)).unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    Ok(SeparabilityCertificate {
        kind,
        witness: Some(witness),
        min_margin,
    })
}

/// Magnitudes the KKT residuals are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktScale {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    pub dual: f64,
}

/// Worst violation of each group of KKT conditions of a variant's original
/// formulation. All residuals are absolute; see [`KktReport::worst_relative`].
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Max-norm stationarity residual. Coordinates of `w` at zero only need
    /// their gradient inside `[-lambda, lambda]`.
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub complementarity: f64,
    /// Most negative multiplier, or the largest excess `alpha_i - mu`.
    pub dual_feasibility: f64,
    pub alpha: DVector<f64>,
    /// `mu - alpha` for soft variants.
    pub eta: Option<DVector<f64>>,
    pub scale: KktScale,
}

impl KktReport {
    pub fn worst_absolute(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.complementarity)
            .max(self.dual_feasibility)
    }

    pub fn worst_relative(&self) -> f64 {
        (self.stationarity / self.scale.stationarity)
            .max(self.primal_feasibility / self.scale.primal)
            .max(self.complementarity / self.scale.complementarity)
            .max(self.dual_feasibility / self.scale.dual)
    }
}

/// Stationarity vector of the smooth part, `grad - sum_i alpha_i y_i r_i`,
/// over `[w; b]` (quadratic) or `u` (linear), plus `sum_i alpha_i y_i`.
fn smooth_residual(
    dataset: &Dataset,
    cache: &DesignCache,
    model: &QuadSurfaceModel,
    alpha: &DVector<f64>,
) -> (DVector<f64>, f64, f64) {
    let n = dataset.dim();
    let m = dataset.len();
    let mut combo = if model.variant.is_linear() {
        DVector::zeros(n)
    } else {
        DVector::zeros(cache.z_len())
    };
    let mut ysum = 0.0;
    for i in 0..m {
        let ay = alpha[i] * dataset.label(i);
        ysum += ay;
        if model.variant.is_linear() {
            combo.axpy(ay, &dataset.sample(i), 1.0);
        } else {
            combo.axpy(ay, cache.r(i), 1.0);
        }
    }
    let grad = if model.variant.is_linear() {
        model.b.clone()
    } else {
        cache.g() * model.z()
    };
    let scale = grad.amax().max(combo.amax());
    (grad - combo, ysum, scale)
}

/// KKT residuals of `(model, xi)` with multipliers `alpha` on the
/// formulation named by `model.variant`.
pub fn kkt_report(
    dataset: &Dataset,
    cache: &DesignCache,
    model: &QuadSurfaceModel,
    xi: &DVector<f64>,
    alpha: &DVector<f64>,
    zero_set: Option<&[usize]>,
) -> KktReport {
    let m = dataset.len();
    let variant = model.variant;
    let lambda = if variant.is_l1() { model.lambda } else { 0.0 };
    let (res, ysum, grad_scale) = smooth_residual(dataset, cache, model, alpha);

    let mut stationarity = ysum.abs();
    let mut primal: f64 = 0.0;
    if variant.is_linear() {
        stationarity = stationarity.max(res.amax());
    } else {
        let h = hvec_len(model.dim());
        let w = model.hvec();
        let zeta = 1e-6 * (1.0 + w.max_abs());
        for j in 0..h {
            let g = res[j];
            let wj = w.as_slice()[j];
            let r = if zero_set.is_some_and(|z| z.contains(&j)) {
                primal = primal.max(wj.abs());
                0.0
            } else if lambda == 0.0 {
                g.abs()
            } else if wj.abs() <= zeta {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * wj.signum()).abs()
            };
            stationarity = stationarity.max(r);
        }
        for k in h..res.len() {
            stationarity = stationarity.max(res[k].abs());
        }
    }

    let mu = model.mu;
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for i in 0..m {
        let f = model.eval(&dataset.sample(i)).unwrap_or(f64::NAN);
        let slack = dataset.label(i) * f - 1.0 + xi[i];
        primal = primal.max(-slack).max(-xi[i]);
        comp = comp.max((alpha[i] * slack).abs());
        dual = dual.max(-alpha[i]);
        if let Some(mu) = mu {
            let eta = mu - alpha[i];
            dual = dual.max(-eta);
            comp = comp.max((eta * xi[i]).abs());
        } else {
            primal = primal.max(xi[i].abs());
        }
    }
    let eta = mu.map(|mu| alpha.map(|a| mu - a));
    let objective = models::objective_value(cache, model, xi);
    let amax = if m > 0 { alpha.amax() } else { 0.0 };
    KktReport {
        stationarity,
        primal_feasibility: primal,
        complementarity: comp,
        dual_feasibility: dual,
        alpha: alpha.clone(),
        eta,
        scale: KktScale {
            stationarity: 1.0 + grad_scale.max(lambda),
            primal: 1.0,
            complementarity: 1.0 + objective.abs(),
            dual: 1.0 + mu.unwrap_or(0.0).max(amax),
        },
    }
}

/// Multipliers `beta` of the constraints `w_j = 0`, recovered from
/// stationarity; zero outside `zero_set`.
pub fn zero_set_multipliers(
    dataset: &Dataset,
    cache: &DesignCache,
    model: &QuadSurfaceModel,
    alpha: &DVector<f64>,
    zero_set: &[usize],
) -> DVector<f64> {
    let h = hvec_len(model.dim());
    let (res, _, _) = smooth_residual(dataset, cache, model, alpha);
    let mut beta = DVector::zeros(h);
    for &j in zero_set {
        beta[j] = -res[j];
    }
    beta
}

/// Re-evaluates the KKT system of a training run from its stored
/// multipliers.
pub fn verify_kkt(dataset: &Dataset, report: &TrainReport) -> KktReport {
    let cache = assemble_design(dataset);
    let zero_set = match &report.layout.weights {
        models::WeightBlock::Free(idx) | models::WeightBlock::Split(idx)
            if report.model.variant == Variant::Rqssvm =>
        {
            let kept: Vec<usize> = (0..hvec_len(dataset.dim()))
                .filter(|j| !idx.contains(j))
                .collect();
            Some(kept)
        }
        _ => None,
    };
    kkt_report(
        dataset,
        &cache,
        &report.model,
        &report.xi,
        &report.alpha,
        zero_set.as_deref(),
    )
}

/// KKT check of a model that comes without multipliers, e.g. one read
/// from a file. Slacks are set to `max(0, 1 - y_i f(x_i))` for soft variants
/// and the best multipliers are found by a least-squares fit of the
/// stationarity conditions over the admissible set: `alpha_i = 0` off the
/// margin, `alpha_i = mu` where the slack is positive, and subgradient
/// entries in `[-1, 1]` at zero coordinates of `w`.
pub fn verify_model_kkt(dataset: &Dataset, model: &QuadSurfaceModel) -> Result<KktReport> {
    if model.dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: dataset.dim(),
        });
    }
    let cache = assemble_design(dataset);
    let m = dataset.len();
    let n = dataset.dim();
    let linear = model.variant.is_linear();
    let lambda = if model.variant.is_l1() {
        model.lambda
    } else {
        0.0
    };
    let mu = model.mu;

    let f: Vec<f64> = (0..m)
        .map(|i| dataset.label(i) * model.eval(&dataset.sample(i)).unwrap_or(f64::NAN))
        .collect();
    let tol = 1e-6;
    let xi = DVector::from_iterator(
        m,
        f.iter().map(|&v| {
            if mu.is_some() {
                (1.0 - v).max(0.0)
            } else {
                0.0
            }
        }),
    );
    // alpha_i: free on the margin, pinned to mu for violators, else 0
    let mut alpha_fixed = DVector::zeros(m);
    let mut free_alpha = Vec::new();
    for i in 0..m {
        let excess = f[i] - 1.0;
        if excess.abs() <= tol * (1.0 + f[i].abs()) {
            free_alpha.push(i);
        } else if excess < 0.0 {
            if let Some(mu) = mu {
                alpha_fixed[i] = mu;
            }
        }
    }
    let h = hvec_len(n);
    let w = model.hvec();
    let zeta = 1e-6 * (1.0 + w.max_abs());
    let zero_w: Vec<usize> = if linear || lambda == 0.0 {
        vec![]
    } else {
        (0..h).filter(|&j| w.as_slice()[j].abs() <= zeta).collect()
    };

    // residual R(u) = R0 + B u with u = [alpha_free; v_zero]
    let (base, _, _) = smooth_residual(dataset, &cache, model, &alpha_fixed);
    let rows = base.len() + 1;
    let mut r0 = DVector::zeros(rows);
    r0.rows_mut(0, base.len()).copy_from(&base);
    r0[rows - 1] = (0..m).map(|i| alpha_fixed[i] * dataset.label(i)).sum();
    if !linear && lambda > 0.0 {
        for j in 0..h {
            if !zero_w.contains(&j) {
                r0[j] += lambda * w.as_slice()[j].signum();
            }
        }
    }
    let nu = free_alpha.len() + zero_w.len();
    let mut bmat = DMatrix::zeros(rows, nu);
    for (k, &i) in free_alpha.iter().enumerate() {
        let y = dataset.label(i);
        let feat = if linear {
            dataset.sample(i)
        } else {
            cache.r(i).clone()
        };
        for (row, v) in feat.iter().enumerate() {
            bmat[(row, k)] = -y * v;
        }
        bmat[(rows - 1, k)] = y;
    }
    for (k, &j) in zero_w.iter().enumerate() {
        bmat[(j, free_alpha.len() + k)] = lambda;
    }

    let mut alpha = alpha_fixed;
    if nu > 0 {
        let hess = bmat.tr_mul(&bmat);
        let lin = bmat.tr_mul(&r0);
        // alpha <= mu and -1 <= v <= 1 as rows; alpha >= 0 as bounds
        let mut a_rows = Vec::new();
        let mut c_rows = Vec::new();
        if let Some(mu) = mu {
            for k in 0..free_alpha.len() {
                let mut r = vec![0.0; nu];
                r[k] = -1.0;
                a_rows.push(r);
                c_rows.push(-mu);
            }
        }
        for k in 0..zero_w.len() {
            let col = free_alpha.len() + k;
            let mut lo = vec![0.0; nu];
            lo[col] = 1.0;
            a_rows.push(lo);
            c_rows.push(-1.0);
            let mut hi = vec![0.0; nu];
            hi[col] = -1.0;
            a_rows.push(hi);
            c_rows.push(-1.0);
        }
        let flat: Vec<f64> = a_rows.iter().flatten().copied().collect();
        let qp = QuadraticProgram::new(
            hess,
            lin,
            DMatrix::from_row_slice(a_rows.len(), nu, &flat),
            DVector::from_vec(c_rows),
            (0..free_alpha.len()).collect(),
        )?;
        let sol = qp::solve(&qp, &SolveOptions::default());
        if matches!(
            sol.status,
            QpStatus::Infeasible | QpStatus::NumericalFailure
        ) {
            return Err(Error::SolverFailure(sol.status));
        }
        for (k, &i) in free_alpha.iter().enumerate() {
            alpha[i] = sol.x[k].max(0.0);
        }
    }
    Ok(kkt_report(dataset, &cache, model, &xi, &alpha, None))
}

#[derive(Debug, Clone)]
pub struct SvmComparison {
    pub lambda: f64,
    /// `||hvec(W*)||_inf` of L1-QSSVM.
    pub w_infnorm: f64,
    /// `||b* - u*||_inf`.
    pub b_gap: f64,
    /// `|c* - d*|`.
    pub c_gap: f64,
    /// `||sum_i M_i' u* - m sum_i beta_i y_i s_i||_inf` from the SVM
    /// solution; `W = 0` is optimal for L1-QSSVM once this is `<= lambda/2`.
    pub multiplier_condition: f64,
    pub l1_report: TrainReport,
    pub svm_report: TrainReport,
}

/// Trains hard SVM and hard L1-QSSVM at `lambda` and compares them.
pub fn compare_with_svm(dataset: &Dataset, lambda: f64) -> Result<SvmComparison> {
    let cache = assemble_design(dataset);
    let svm = match models::train_with_cache(dataset, &TrainConfig::new(Variant::Svm), &cache) {
        Err(Error::HardMarginInfeasible) => return Err(Error::NotLinearlySeparable),
        r => r?,
    };
    let l1 = models::train_with_cache(
        dataset,
        &TrainConfig::new(Variant::L1Qssvm).with_lambda(lambda),
        &cache,
    )?;
    let multiplier_condition = svm_multiplier_condition(dataset, &cache, &svm);
    Ok(SvmComparison {
        lambda,
        w_infnorm: l1.model.hvec().max_abs(),
        b_gap: (&l1.model.b - &svm.model.b).amax(),
        c_gap: (l1.model.c - svm.model.c).abs(),
        multiplier_condition,
        l1_report: l1,
        svm_report: svm,
    })
}

fn svm_multiplier_condition(dataset: &Dataset, cache: &DesignCache, svm: &TrainReport) -> f64 {
    let h = hvec_len(dataset.dim());
    let m = dataset.len();
    let u = &svm.model.b;
    let mut a = DVector::zeros(h);
    for i in 0..m {
        a += cache.m(i).tr_mul(u);
        a.axpy(
            -(m as f64) * svm.alpha[i] * dataset.label(i),
            cache.s(i),
            1.0,
        );
    }
    a.amax()
}

/// KKT residuals of the hard SVM at `(u, d) = (b*, c*)` of a trained
/// quadratic model, with `beta = alpha / (2m)`.
pub fn svm_kkt_of(dataset: &Dataset, report: &TrainReport) -> KktReport {
    let cache = assemble_design(dataset);
    let m = dataset.len() as f64;
    let lin = QuadSurfaceModel::linear(report.model.b.clone(), report.model.c);
    let beta = &report.alpha / (2.0 * m);
    kkt_report(
        dataset,
        &cache,
        &lin,
        &DVector::zeros(dataset.len()),
        &beta,
        None,
    )
}

/// `||W||_F / (||W||_F + ||b||_2 + |c| + 1e-30)`: zero for hyperplanes.
pub fn curvature(model: &QuadSurfaceModel) -> f64 {
    let wf = model.w.frobenius_norm();
    wf / (wf + model.b.norm() + model.c.abs() + 1e-30)
}

/// Range of intercepts `c` that keep `(W, b, xi)` feasible:
/// `[max_{y=+1} (1 - xi_i - g_i), min_{y=-1} (-1 + xi_i - g_i)]` where
/// `g_i = f(x_i) - c`.
pub fn intercept_interval(
    dataset: &Dataset,
    model: &QuadSurfaceModel,
    xi: &DVector<f64>,
) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..dataset.len() {
        let g = model.eval(&dataset.sample(i)).unwrap_or(f64::NAN) - model.c;
        if dataset.labels()[i] == 1 {
            lo = lo.max(1.0 - xi[i] - g);
        } else {
            hi = hi.min(-1.0 + xi[i] - g);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assumptions_examples() {
        let ones = Dataset::from_rows(&[vec![1.0], vec![1.0]], vec![1, -1]).unwrap();
        assert_eq!(
            check_assumptions(&ones),
            Assumptions {
                a1: true,
                a2: false
            }
        );
        let ramp = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1, -1]).unwrap();
        assert_eq!(check_assumptions(&ramp), Assumptions { a1: true, a2: true });
        let dup = Dataset::from_rows(
            &[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5]],
            vec![1, -1, 1],
        )
        .unwrap();
        assert!(!check_assumptions(&dup).a1);
    }

    #[test]
    fn g_pd_small_cases() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![1, -1, 1]).unwrap();
        let cache = assemble_design(&ds);
        assert!(is_g_pd(&cache) && is_g_pd_schur(&cache));
        let same = Dataset::from_rows(&vec![vec![1.0, 2.0]; 4], vec![1, -1, 1, -1]).unwrap();
        let cache = assemble_design(&same);
        assert!(!is_g_pd(&cache) && !is_g_pd_schur(&cache));
    }

    #[test]
    fn xor_is_quadratic_only() {
        let ds = Dataset::from_rows(
            &[
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
            ],
            vec![1, 1, -1, -1],
        )
        .unwrap();
        let lin = check_separability(&ds, SeparabilityKind::Linear).unwrap();
        assert_eq!(lin.kind, SeparabilityKind::None);
        assert!(lin.witness.is_none());
        let quad = check_separability(&ds, SeparabilityKind::Quadratic).unwrap();
        assert_eq!(quad.kind, SeparabilityKind::Quadratic);
        assert!(quad.min_margin >= 1.0 - 1e-7);
        // the hand-built separator x1 x2 works as well
        let mut w = SymmetricMatrix::zeros(2);
        w.set(0, 1, 1.0);
        let hand = QuadSurfaceModel::new(w, DVector::zeros(2), 0.0).unwrap();
        for i in 0..4 {
            assert_eq!(hand.predict(&ds.sample(i)).unwrap(), ds.labels()[i]);
        }
    }

    #[test]
    fn curvature_limits() {
        let lin = QuadSurfaceModel::linear(DVector::from_vec(vec![1.0, 2.0]), 3.0);
        assert_eq!(curvature(&lin), 0.0);
        let q =
            QuadSurfaceModel::new(SymmetricMatrix::identity(2), DVector::zeros(2), 0.0).unwrap();
        assert!((curvature(&q) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_svm_multipliers() {
        let ds = Dataset::from_rows(&[vec![-1.0], vec![1.0]], vec![-1, 1]).unwrap();
        let r = models::train(&ds, &TrainConfig::new(Variant::Svm)).unwrap();
        // u = sum beta_i y_i x_i = beta_1 + beta_2 with beta_1 = beta_2
        assert!((r.alpha[0] - 0.5).abs() < 1e-7 && (r.alpha[1] - 0.5).abs() < 1e-7);
        let exact = kkt_report(
            &ds,
            &assemble_design(&ds),
            &QuadSurfaceModel::linear(DVector::from_vec(vec![1.0]), 0.0),
            &DVector::zeros(2),
            &DVector::from_vec(vec![0.5, 0.5]),
            None,
        );
        assert_eq!(exact.worst_absolute(), 0.0);
    }
}
