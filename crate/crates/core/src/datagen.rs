//! Deterministic synthetic data sets.
//!
//! All generators draw from ChaCha8 seeded with `seed_from_u64`. Uniform
//! variates take the top 53 bits of `next_u64`, normals use Box-Muller, and
//! noise labels use the lowest bit of `next_u64`. Together this is
//! [`GENERATOR_ID`]; changing any step must change the id.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::halfvec::SymmetricMatrix;
use crate::models::QuadSurfaceModel;

pub const GENERATOR_ID: &str = "chacha8-u53-boxmuller-v1";
pub const REJECTION_BUDGET: u64 = 10_000_000;

/// A quadratic surface `f(x) = 1/2 x'Wx + b'x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub w: SymmetricMatrix,
    pub b: DVector<f64>,
    pub c: f64,
}

impl SurfaceSpec {
    pub fn new(w: SymmetricMatrix, b: DVector<f64>, c: f64) -> Result<Self> {
        if w.dim() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                got: b.len(),
            });
        }
        Ok(Self { w, b, c })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.w.mul_vec(x)) + self.b.dot(x) + self.c
    }

    pub fn to_model(&self) -> QuadSurfaceModel {
        QuadSurfaceModel::new(self.w.clone(), self.b.clone(), self.c)
            .expect("dimensions checked at construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub m_pos: usize,
    pub m_neg: usize,
    /// Clean points satisfy `y f(x) >= margin`.
    pub margin: f64,
    /// Points are drawn uniformly from `[-box_half_width, box_half_width]^n`.
    pub box_half_width: f64,
    pub noise_count: usize,
    /// Noise points satisfy `|f(x)| <= noise_band`.
    pub noise_band: f64,
}

impl GenConfig {
    pub fn new(seed: u64, m_pos: usize, m_neg: usize) -> Self {
        Self {
            seed,
            m_pos,
            m_neg,
            margin: 0.5,
            box_half_width: 5.0,
            noise_count: 0,
            noise_band: 0.25,
        }
    }

    pub fn with_noise(mut self, count: usize) -> Self {
        self.noise_count = count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_pos == 0 || self.m_neg == 0 {
            return Err(Error::InvalidConfig(
                "class counts must be at least 1".into(),
            ));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig("margin must be positive".into()));
        }
        if !(self.box_half_width > 0.0 && self.box_half_width.is_finite()) {
            return Err(Error::InvalidConfig(
                "box half-width must be positive".into(),
            ));
        }
        if !(self.noise_band >= 0.0 && self.noise_band.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise band must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

struct Source {
    rng: ChaCha8Rng,
    draws: u64,
}

impl Source {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    /// Uniform on `[0, 1)`.
    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform(&mut self, half_width: f64) -> f64 {
        half_width * (2.0 * self.unit() - 1.0)
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn coin(&mut self) -> i8 {
        if self.rng.next_u64() & 1 == 1 {
            1
        } else {
            -1
        }
    }

    fn point(&mut self, n: usize, half_width: f64) -> Result<DVector<f64>> {
        if self.draws >= REJECTION_BUDGET {
            return Err(Error::RejectionBudgetExceeded { draws: self.draws });
        }
        self.draws += 1;
        Ok(DVector::from_fn(n, |_, _| self.uniform(half_width)))
    }
}

/// The 10-feature sparse surface used for the sparsity-recovery experiment.
pub fn builtin_sparse_surface() -> SurfaceSpec {
    let mut w = SymmetricMatrix::zeros(10);
    for k in 0..7 {
        w.set(k, k + 2, (k + 1) as f64);
    }
    let mut b = DVector::from_element(10, 1.0);
    b[9] = -1.0;
    SurfaceSpec { w, b, c: 2.0 }
}

/// Rejection-samples `m_pos` points with `f >= margin` and `m_neg` with
/// `f <= -margin` (kept in draw order), then appends `noise_count` points
/// with `|f| <= noise_band` and coin-flip labels.
pub fn gen_from_surface(spec: &SurfaceSpec, cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut src = Source::new(cfg.seed);
    sample_surface(&mut src, spec, cfg, None)
}

/// Shared sampler. With `band_labels = Some((k_pos, k_neg))` the first
/// `m_pos - k_pos` positives and `m_neg - k_neg` negatives are clean and the
/// rest are drawn from the noise band with their class label fixed.
fn sample_surface(
    src: &mut Source,
    spec: &SurfaceSpec,
    cfg: &GenConfig,
    band_labels: Option<(usize, usize)>,
) -> Result<Dataset> {
    let n = spec.dim();
    let (band_pos, band_neg) = band_labels.unwrap_or((0, 0));
    let (want_pos, want_neg) = (cfg.m_pos - band_pos, cfg.m_neg - band_neg);
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    let (mut pos, mut neg) = (0, 0);
    while pos < want_pos || neg < want_neg {
        let x = src.point(n, cfg.box_half_width)?;
        let f = spec.eval(&x);
        if f >= cfg.margin && pos < want_pos {
            pos += 1;
            rows.push(x);
            labels.push(1);
        } else if f <= -cfg.margin && neg < want_neg {
            neg += 1;
            rows.push(x);
            labels.push(-1);
        }
    }
    let noisy = cfg.noise_count + band_pos + band_neg;
    let mut fixed = std::iter::repeat_n(1i8, band_pos).chain(std::iter::repeat_n(-1i8, band_neg));
    let mut added = 0;
    while added < noisy {
        let x = src.point(n, cfg.box_half_width)?;
        if spec.eval(&x).abs() <= cfg.noise_band {
            let label = fixed.next().unwrap_or_else(|| src.coin());
            rows.push(x);
            labels.push(label);
            added += 1;
        }
    }
    let mut x = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        x.row_mut(i).copy_from(&r.transpose());
    }
    Dataset::new(x, labels)
}

/// Hyperplane through the origin with a random unit normal.
pub fn gen_linear_separable(n: usize, m_pos: usize, m_neg: usize, seed: u64) -> Result<Dataset> {
    gen_linear_with(n, &GenConfig::new(seed, m_pos, m_neg))
}

/// [`gen_linear_separable`] with full control over margin, box and noise.
pub fn gen_linear_with(n: usize, cfg: &GenConfig) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("dimension must be at least 1".into()));
    }
    cfg.validate()?;
    let mut src = Source::new(cfg.seed);
    let mut u = DVector::from_fn(n, |_, _| src.normal());
    let norm = u.norm();
    u /= norm;
    let spec = SurfaceSpec::new(SymmetricMatrix::zeros(n), u, 0.0)?;
    sample_surface(&mut src, &spec, cfg, None)
}

/// Two-class ring data in the plane: class `-1` at radii in
/// `[0.8 r_inner, r_inner]`, class `+1` at radii in `[r_outer, 1.2 r_outer]`,
/// angles uniform.
pub fn gen_ring(
    r_inner: f64,
    r_outer: f64,
    m_pos: usize,
    m_neg: usize,
    seed: u64,
) -> Result<Dataset> {
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(Error::InvalidConfig("need 0 < r_inner < r_outer".into()));
    }
    if m_pos == 0 || m_neg == 0 {
        return Err(Error::InvalidConfig(
            "class counts must be at least 1".into(),
        ));
    }
    let mut src = Source::new(seed);
    let mut flat = Vec::with_capacity(2 * (m_pos + m_neg));
    let mut labels = Vec::with_capacity(m_pos + m_neg);
    for (count, lo, hi, label) in [
        (m_neg, 0.8 * r_inner, r_inner, -1i8),
        (m_pos, r_outer, 1.2 * r_outer, 1i8),
    ] {
        for _ in 0..count {
            let r = lo + (hi - lo) * src.unit();
            let t = std::f64::consts::TAU * src.unit();
            flat.push(r * t.cos());
            flat.push(r * t.sin());
            labels.push(label);
        }
    }
    Dataset::new(DMatrix::from_row_slice(labels.len(), 2, &flat), labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table1Set {
    I,
    II,
    III,
    IV,
    ThreeD,
}

impl Table1Set {
    /// `(n, positives, negatives)`.
    pub fn shape(self) -> (usize, usize, usize) {
        match self {
            Table1Set::I => (3, 67, 58),
            Table1Set::II => (3, 79, 71),
            Table1Set::III => (5, 106, 81),
            Table1Set::IV => (10, 204, 171),
            Table1Set::ThreeD => (3, 99, 101),
        }
    }
}

impl std::str::FromStr for Table1Set {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Table1Set::I),
            "ii" | "2" => Ok(Table1Set::II),
            "iii" | "3" => Ok(Table1Set::III),
            "iv" | "4" => Ok(Table1Set::IV),
            "3d" | "threed" => Ok(Table1Set::ThreeD),
            _ => Err(Error::InvalidConfig(format!(
                "unknown artificial set '{s}'"
            ))),
        }
    }
}

/// Ellipsoid used for the quadratically separable 3-D set: negatives inside.
pub fn three_d_surface() -> SurfaceSpec {
    let mut w = SymmetricMatrix::zeros(3);
    for (k, v) in [1.0, 1.5, 2.0].into_iter().enumerate() {
        w.set(k, k, v);
    }
    SurfaceSpec {
        w,
        b: DVector::zeros(3),
        c: -3.5,
    }
}

/// Fixed-size artificial benchmark sets I to IV and ThreeD. `ThreeD` is
/// a clean ellipsoid sample; I to IV come from a random quadratic surface
/// with 10% of each class drawn from the band around it, labels kept, so
/// roughly half of those land on the wrong side.
pub fn gen_table1_artificial(which: Table1Set, seed: u64) -> Result<Dataset> {
    let (n, pos, neg) = which.shape();
    if which == Table1Set::ThreeD {
        let mut cfg = GenConfig::new(seed, pos, neg);
        cfg.box_half_width = 3.0;
        return gen_from_surface(&three_d_surface(), &cfg);
    }
    let mut src = Source::new(seed);
    let spec = random_surface(&mut src, n);
    let cfg = GenConfig::new(seed, pos, neg);
    let band = (
        (pos as f64 * 0.1).round() as usize,
        (neg as f64 * 0.1).round() as usize,
    );
    sample_surface(&mut src, &spec, &cfg, Some(band))
}

/// Standard normal `W` and `b`, scaled down by `n`, with `c` set to the
/// negated median of `f - c` over the box so both sides carry mass.
fn random_surface(src: &mut Source, n: usize) -> SurfaceSpec {
    let scale = 1.0 / n as f64;
    let w = SymmetricMatrix::from_lower_fn(n, |_, _| scale * src.normal());
    let b = DVector::from_fn(n, |_, _| src.normal());
    let mut spec = SurfaceSpec { w, b, c: 0.0 };
    let mut values: Vec<f64> = (0..1001)
        .map(|_| {
            let x = DVector::from_fn(n, |_, _| src.uniform(5.0));
            spec.eval(&x)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    spec.c = -values[500];
    spec
}
