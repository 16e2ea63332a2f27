//! The classifier formulations and their training.
//!
//! Every quadratic variant minimizes `1/2 z'Gz` with `z = [hvec(W); b]`,
//! optionally plus `lambda ||hvec(W)||_1` and `mu sum(xi)`, subject to
//! `y_i (z' r_i + c) >= 1 - xi_i`. The linear variants minimize
//! `1/2 ||u||^2 (+ mu sum(xi))` subject to `y_i (u' x_i + d) >= 1 - xi_i`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::diagnostics::{self, KktReport};
use crate::error::{Error, Result};
use crate::halfvec::{assemble_design, hvec_len, DesignCache, HalfVector, SymmetricMatrix};
use crate::linalg;
use crate::qp::{self, QpStatus, QuadraticProgram, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Svm,
    Ssvm,
    Qssvm,
    Sqssvm,
    L1Qssvm,
    L1Sqssvm,
    /// Hard-margin quadratic model with `hvec(W)_j = 0` forced on a zero set.
    Rqssvm,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Svm,
        Variant::Ssvm,
        Variant::Qssvm,
        Variant::Sqssvm,
        Variant::L1Qssvm,
        Variant::L1Sqssvm,
        Variant::Rqssvm,
    ];

    pub fn is_soft(self) -> bool {
        matches!(self, Variant::Ssvm | Variant::Sqssvm | Variant::L1Sqssvm)
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Variant::Svm | Variant::Ssvm)
    }

    /// Variants that carry the `lambda ||w||_1` term.
    pub fn is_l1(self) -> bool {
        matches!(self, Variant::L1Qssvm | Variant::L1Sqssvm | Variant::Rqssvm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Svm => "SVM",
            Variant::Ssvm => "SSVM",
            Variant::Qssvm => "QSSVM",
            Variant::Sqssvm => "SQSSVM",
            Variant::L1Qssvm => "L1-QSSVM",
            Variant::L1Sqssvm => "L1-SQSSVM",
            Variant::Rqssvm => "R-QSSVM",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| {
                v.name()
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .eq_ignore_ascii_case(&key)
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant '{s}'")))
    }
}

/// `f(x) = 1/2 x'Wx + b'x + c` together with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSurfaceModel {
    pub w: SymmetricMatrix,
    pub b: DVector<f64>,
    pub c: f64,
    pub variant: Variant,
    pub lambda: f64,
    /// `None` for hard-margin variants.
    pub mu: Option<f64>,
}

impl QuadSurfaceModel {
    pub fn new(w: SymmetricMatrix, b: DVector<f64>, c: f64) -> Result<Self> {
        if w.dim() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                got: b.len(),
            });
        }
        Ok(Self {
            w,
            b,
            c,
            variant: Variant::Qssvm,
            lambda: 0.0,
            mu: None,
        })
    }

    /// The hyperplane `u'x + d`.
    pub fn linear(u: DVector<f64>, d: f64) -> Self {
        Self {
            w: SymmetricMatrix::zeros(u.len()),
            b: u,
            c: d,
            variant: Variant::Svm,
            lambda: 0.0,
            mu: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn hvec(&self) -> HalfVector {
        self.w.hvec()
    }

    /// `z = [hvec(W); b]`.
    pub fn z(&self) -> DVector<f64> {
        let h = hvec_len(self.dim());
        let mut z = DVector::zeros(h + self.dim());
        z.rows_mut(0, h).copy_from(&self.hvec().to_dvector());
        z.rows_mut(h, self.dim()).copy_from(&self.b);
        z
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        quad_eval(self, x)
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<i8> {
        predict(self, x)
    }

    /// Serializes as `key = value` lines. Floats carry 17 significant digits,
    /// enough to reproduce every bit on reading.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mu = self
            .mu
            .map_or_else(|| "none".to_string(), |m| format!("{m:.16e}"));
        format!(
            "n = {}\nvariant = {}\nlambda = {:.16e}\nmu = {}\nc = {:.16e}\nb = {}\nw_hvec = {}\n",
            self.dim(),
            self.variant.name(),
            self.lambda,
            mu,
            self.c,
            join(self.b.as_slice()),
            join(self.hvec().as_slice()),
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::ModelFormat(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            if fields
                .insert(k.trim().to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(Error::ModelFormat(format!("duplicate key '{}'", k.trim())));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::ModelFormat(format!("missing key '{k}'")))
        };
        let num = |k: &str, s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::ModelFormat(format!("'{k}': cannot parse '{s}'")))
        };
        let list = |k: &str| -> Result<Vec<f64>> {
            get(k)?.split_whitespace().map(|s| num(k, s)).collect()
        };

        let n: usize = get("n")?
            .parse()
            .map_err(|_| Error::ModelFormat("'n' is not a count".into()))?;
        let variant: Variant = get("variant")?.parse()?;
        let lambda = num("lambda", get("lambda")?)?;
        let mu = match get("mu")? {
            "none" => None,
            s => Some(num("mu", s)?),
        };
        let c = num("c", get("c")?)?;
        let b = list("b")?;
        if b.len() != n {
            return Err(Error::ModelFormat(format!(
                "'b' has {} entries, expected {n}",
                b.len()
            )));
        }
        let w = HalfVector::new(n, list("w_hvec")?).map_err(|_| {
            Error::ModelFormat(format!("'w_hvec' must have {} entries", hvec_len(n)))
        })?;
        Ok(Self {
            w: w.unhvec(),
            b: DVector::from_vec(b),
            c,
            variant,
            lambda,
            mu,
        })
    }
}

/// `1/2 x'Wx + b'x + c`.
pub fn quad_eval(model: &QuadSurfaceModel, x: &DVector<f64>) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(0.5 * x.dot(&model.w.mul_vec(x)) + model.b.dot(x) + model.c)
}

/// Sign of the decision function; an exact zero counts as `+1`.
pub fn predict(model: &QuadSurfaceModel, x: &DVector<f64>) -> Result<i8> {
    Ok(if quad_eval(model, x)? >= 0.0 { 1 } else { -1 })
}

/// Indices `j` (hvec order) with `|hvec(W)_j| <= tol (1 + ||hvec(W)||_inf)`.
pub fn sparsity_pattern(model: &QuadSurfaceModel, tol: f64) -> Vec<usize> {
    let h = model.hvec();
    let cut = tol * (1.0 + h.max_abs());
    h.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= cut)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Weight of `||hvec(W)||_1`; only read by the L1 variants and R-QSSVM.
    pub lambda: f64,
    /// Slack weight; only read by soft variants.
    pub mu: f64,
    /// Indices into hvec order forced to zero; R-QSSVM only.
    pub zero_set: Option<Vec<usize>>,
    pub solver: SolveOptions,
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            lambda: 0.0,
            mu: 1.0,
            zero_set: None,
            solver: SolveOptions::default(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_zero_set(mut self, zero_set: Vec<usize>) -> Self {
        self.zero_set = Some(zero_set);
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.variant.is_l1() && !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.variant.is_soft() && !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mu must be finite and > 0, got {}",
                self.mu
            )));
        }
        match (&self.zero_set, self.variant) {
            (Some(z), Variant::Rqssvm) => {
                if let Some(&j) = z.iter().find(|&&j| j >= hvec_len(n)) {
                    return Err(Error::InvalidConfig(format!(
                        "zero-set index {j} out of range for n = {n}"
                    )));
                }
            }
            (None, Variant::Rqssvm) => {
                return Err(Error::InvalidConfig("R-QSSVM needs a zero set".into()))
            }
            (Some(_), _) => {
                return Err(Error::InvalidConfig(
                    "a zero set is only accepted by R-QSSVM".into(),
                ))
            }
            (None, _) => {}
        }
        let t = &self.solver;
        if !(t.tol_primal > 0.0 && t.tol_dual > 0.0 && t.tol_gap > 0.0) || t.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "solver tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    fn lambda_used(&self) -> f64 {
        if self.variant.is_l1() {
            self.lambda
        } else {
            0.0
        }
    }
}

/// How the `hvec(W)` coordinates appear among the QP variables.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightBlock {
    /// Linear variants: no quadratic part.
    Absent,
    /// One free variable per listed hvec index.
    Free(Vec<usize>),
    /// `w = p - q` with `p, q >= 0`, one pair per listed hvec index; `p`
    /// comes first, then `q`.
    Split(Vec<usize>),
}

/// Variable layout of a built QP: the weight block, then `b` (or `u`), then
/// `c` (or `d`), then `xi` for soft variants.
#[derive(Debug, Clone, PartialEq)]
pub struct QpLayout {
    pub n: usize,
    pub m: usize,
    pub weights: WeightBlock,
    pub b_offset: usize,
    pub c_index: usize,
    pub xi_offset: Option<usize>,
    pub num_variables: usize,
}

impl QpLayout {
    fn new(variant: Variant, n: usize, m: usize, lambda: f64, zero_set: Option<&[usize]>) -> Self {
        let free: Vec<usize> = (0..hvec_len(n))
            .filter(|j| zero_set.is_none_or(|z| !z.contains(j)))
            .collect();
        let weights = if variant.is_linear() {
            WeightBlock::Absent
        } else if variant.is_l1() && lambda > 0.0 {
            WeightBlock::Split(free)
        } else {
            // with lambda = 0 the penalty vanishes; splitting would leave
            // p + q unbounded on the optimal face
            WeightBlock::Free(free)
        };
        let wlen = match &weights {
            WeightBlock::Absent => 0,
            WeightBlock::Free(f) => f.len(),
            WeightBlock::Split(f) => 2 * f.len(),
        };
        let b_offset = wlen;
        let c_index = b_offset + n;
        let xi_offset = variant.is_soft().then_some(c_index + 1);
        let num_variables = c_index + 1 + if variant.is_soft() { m } else { 0 };
        Self {
            n,
            m,
            weights,
            b_offset,
            c_index,
            xi_offset,
            num_variables,
        }
    }

    /// `hvec(W)` from a QP primal.
    pub fn hvec(&self, x: &DVector<f64>) -> HalfVector {
        let mut w = vec![0.0; hvec_len(self.n)];
        match &self.weights {
            WeightBlock::Absent => {}
            WeightBlock::Free(idx) => {
                for (k, &j) in idx.iter().enumerate() {
                    w[j] = x[k];
                }
            }
            WeightBlock::Split(idx) => {
                let f = idx.len();
                for (k, &j) in idx.iter().enumerate() {
                    w[j] = x[k] - x[f + k];
                }
            }
        }
        HalfVector::new(self.n, w).expect("length is hvec_len(n)")
    }

    pub fn b(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(self.b_offset, self.n).into_owned()
    }

    pub fn xi(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.xi_offset {
            Some(o) => x.rows(o, self.m).into_owned(),
            None => DVector::zeros(self.m),
        }
    }
}

/// Builds the smooth QP for `config`. Returns the program and its layout.
pub fn build_qp(
    dataset: &Dataset,
    config: &TrainConfig,
    cache: &DesignCache,
) -> Result<(QuadraticProgram, QpLayout)> {
    let n = dataset.dim();
    let m = dataset.len();
    config.validate(n)?;
    if cache.dim() != n || cache.samples() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: cache.samples(),
        });
    }
    let lambda = config.lambda_used();
    let layout = QpLayout::new(config.variant, n, m, lambda, config.zero_set.as_deref());
    let p = layout.num_variables;
    let h = hvec_len(n);
    let g = cache.g();

    let mut hessian = DMatrix::zeros(p, p);
    let mut linear = DVector::zeros(p);
    let mut a = DMatrix::zeros(m, p);
    let rhs = DVector::from_element(m, 1.0);
    let mut nonneg = Vec::new();
    let bo = layout.b_offset;

    match &layout.weights {
        WeightBlock::Absent => {
            for k in 0..n {
                hessian[(bo + k, bo + k)] = 1.0;
            }
        }
        WeightBlock::Free(idx) | WeightBlock::Split(idx) => {
            let split = matches!(layout.weights, WeightBlock::Split(_));
            let f = idx.len();
            // rows/cols of G for the kept w entries followed by b
            let keep: Vec<usize> = idx.iter().copied().chain(h..h + n).collect();
            let gk = g.select_rows(&keep).select_columns(&keep);
            let gww = gk.view((0, 0), (f, f));
            let gwb = gk.view((0, f), (f, n));
            hessian.view_mut((0, 0), (f, f)).copy_from(&gww);
            hessian.view_mut((0, bo), (f, n)).copy_from(&gwb);
            hessian
                .view_mut((bo, 0), (n, f))
                .copy_from(&gwb.transpose());
            hessian
                .view_mut((bo, bo), (n, n))
                .copy_from(&gk.view((f, f), (n, n)));
            if split {
                hessian.view_mut((f, f), (f, f)).copy_from(&gww);
                hessian.view_mut((0, f), (f, f)).copy_from(&(-gww));
                hessian.view_mut((f, 0), (f, f)).copy_from(&(-gww));
                hessian.view_mut((f, bo), (f, n)).copy_from(&(-gwb));
                hessian
                    .view_mut((bo, f), (n, f))
                    .copy_from(&(-gwb.transpose()));
                linear.rows_mut(0, 2 * f).fill(lambda);
                nonneg.extend(0..2 * f);
            }
            for i in 0..m {
                let y = dataset.label(i);
                let s = cache.s(i);
                for (k, &j) in idx.iter().enumerate() {
                    a[(i, k)] = y * s[j];
                    if split {
                        a[(i, f + k)] = -y * s[j];
                    }
                }
            }
        }
    }
    for i in 0..m {
        let y = dataset.label(i);
        for k in 0..n {
            a[(i, bo + k)] = y * dataset.x()[(i, k)];
        }
        a[(i, layout.c_index)] = y;
    }
    if let Some(xo) = layout.xi_offset {
        for i in 0..m {
            a[(i, xo + i)] = 1.0;
        }
        linear.rows_mut(xo, m).fill(config.mu);
        nonneg.extend(xo..xo + m);
    }
    let qp = QuadraticProgram::new(hessian, linear, a, rhs, nonneg)?;
    Ok((qp, layout))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub wall_time: Duration,
    pub status: QpStatus,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: QuadSurfaceModel,
    /// Zero for hard-margin variants.
    pub xi: DVector<f64>,
    /// Objective of the original (unsplit) formulation.
    pub objective: f64,
    /// Multipliers of the classification constraints.
    pub alpha: DVector<f64>,
    /// R-QSSVM only: multipliers of `w_j = 0`, zero outside the zero set.
    pub zero_set_multipliers: Option<DVector<f64>>,
    pub kkt: KktReport,
    pub solver_stats: SolverStats,
    /// Raw QP primal in the order given by `layout`.
    pub split_solution: DVector<f64>,
    pub layout: QpLayout,
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    let cache = assemble_design(dataset);
    train_with_cache(dataset, config, &cache)
}

/// [`train`] reusing an assembled design, e.g. across a parameter grid.
pub fn train_with_cache(
    dataset: &Dataset,
    config: &TrainConfig,
    cache: &DesignCache,
) -> Result<TrainReport> {
    train_from(dataset, config, cache, None)
}

/// [`train_with_cache`] with an explicit starting point for the QP primal,
/// laid out as in [`build_qp`].
pub fn train_from(
    dataset: &Dataset,
    config: &TrainConfig,
    cache: &DesignCache,
    start: Option<&DVector<f64>>,
) -> Result<TrainReport> {
    let (qp, layout) = build_qp(dataset, config, cache)?;
    let t0 = Instant::now();
    let sol = match start {
        Some(x0) => qp::solve_from(&qp, &config.solver, x0),
        None => qp::solve(&qp, &config.solver),
    };
    let wall_time = t0.elapsed();
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible if !config.variant.is_soft() => {
            return Err(Error::HardMarginInfeasible)
        }
        s => return Err(Error::SolverFailure(s)),
    }

    let lambda = config.lambda_used();
    let hv = layout.hvec(&sol.x);
    let b = layout.b(&sol.x);
    let c = sol.x[layout.c_index];
    let xi = layout.xi(&sol.x);
    let model = QuadSurfaceModel {
        w: hv.unhvec(),
        b,
        c,
        variant: config.variant,
        lambda,
        mu: config.variant.is_soft().then_some(config.mu),
    };
    let alpha = sol.dual.clone();
    let zero_set_multipliers = config
        .zero_set
        .as_ref()
        .map(|z| diagnostics::zero_set_multipliers(dataset, cache, &model, &alpha, z));
    let kkt = diagnostics::kkt_report(
        dataset,
        cache,
        &model,
        &xi,
        &alpha,
        config.zero_set.as_deref(),
    );
    let objective = objective_value(cache, &model, &xi);
    Ok(TrainReport {
        model,
        xi,
        objective,
        alpha,
        zero_set_multipliers,
        kkt,
        solver_stats: SolverStats {
            iterations: sol.iterations,
            wall_time,
            status: sol.status,
        },
        split_solution: sol.x,
        layout,
    })
}

/// Objective of the original formulation at `(model, xi)`, using the
/// model's own variant, `lambda` and `mu`.
pub fn objective_value(cache: &DesignCache, model: &QuadSurfaceModel, xi: &DVector<f64>) -> f64 {
    let smooth = if model.variant.is_linear() {
        0.5 * model.b.norm_squared()
    } else {
        let z = model.z();
        0.5 * z.dot(&(cache.g() * &z))
    };
    let l1 = if model.variant.is_l1() {
        model.lambda * model.hvec().l1_norm()
    } else {
        0.0
    };
    let slack = model.mu.map_or(0.0, |mu| mu * xi.sum());
    smooth + l1 + slack
}

/// Sufficient `lambda` for hard L1-QSSVM to return `W = 0` on linearly
/// separable data:
///
/// ```text
///     m ||u||^2 / (2 c2) * (||X||_2 max_i ||x_i||_2 + max_i ||x_i||_inf^2)
/// ```
///
/// with the strictly feasible point `(u, d) = 2 (u*, d*)` built from the
/// hard SVM solution and `c2 = min_i y_i (u'x_i + d) - 1`.
pub fn lambda_equivalence_bound(dataset: &Dataset) -> Result<f64> {
    let svm = match train(dataset, &TrainConfig::new(Variant::Svm)) {
        Err(Error::HardMarginInfeasible) => return Err(Error::NotLinearlySeparable),
        r => r?,
    };
    let u = &svm.model.b * 2.0;
    let d = svm.model.c * 2.0;
    let c2 = (0..dataset.len())
        .map(|i| dataset.label(i) * (u.dot(&dataset.sample(i)) + d) - 1.0)
        .fold(f64::INFINITY, f64::min);
    if c2 <= 0.0 {
        return Err(Error::NotLinearlySeparable);
    }
    let x = dataset.x();
    let max2 = x.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let maxinf = x.row_iter().map(|r| r.amax()).fold(0.0, f64::max);
    let m = dataset.len() as f64;
    Ok(m * u.norm_squared() / (2.0 * c2) * (linalg::spectral_norm(x) * max2 + maxinf * maxinf))
}

/// Multiplier bound `pi = (q(2 z*) - q*) / c1` of hard L1-QSSVM at `lambda`;
/// any `mu > pi` makes every slack of L1-SQSSVM vanish on quadratically
/// separable data. `q` is `1/2 z'Gz + lambda ||w||_1` and `c1` is the
/// smallest margin excess of the doubled solution.
pub fn mu_vanishing_bound(dataset: &Dataset, lambda: f64) -> Result<f64> {
    let cache = assemble_design(dataset);
    let config = TrainConfig::new(Variant::L1Qssvm).with_lambda(lambda);
    let hard = match train_with_cache(dataset, &config, &cache) {
        Err(Error::HardMarginInfeasible) => return Err(Error::NotQuadraticallySeparable),
        r => r?,
    };
    let z = hard.model.z();
    let quad = 0.5 * z.dot(&(cache.g() * &z));
    let l1 = lambda * hard.model.hvec().l1_norm();
    let q_star = quad + l1;
    let q_bar = 4.0 * quad + 2.0 * l1;
    let c1 = (0..dataset.len())
        .map(|i| dataset.label(i) * 2.0 * (z.dot(cache.r(i)) + hard.model.c) - 1.0)
        .fold(f64::INFINITY, f64::min);
    if c1 <= 0.0 {
        return Err(Error::NotQuadraticallySeparable);
    }
    Ok(((q_bar - q_star) / c1).max(0.0))
}
