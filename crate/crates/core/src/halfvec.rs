//! Half-vectorization of symmetric matrices and the per-sample design
//! quantities built on it.
//!
//! Every index into a half-vector uses one ordering: the lower triangle read
//! column by column, `a11, a21, .., an1, a22, .., an2, .., ann`. Sparsity
//! patterns, zero sets and serialized models all share it.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Length of the half-vector of an `n x n` symmetric matrix.
pub const fn hvec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(row, col)` of an `n x n` symmetric matrix inside its
/// half-vector. The pair is unordered.
pub fn hvec_index(n: usize, row: usize, col: usize) -> usize {
    let (i, j) = if row >= col { (row, col) } else { (col, row) };
    debug_assert!(i < n);
    // column j of the lower triangle starts after sum_{k<j} (n - k) entries
    j * n - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Inverse of [`hvec_index`]: the `(row, col)` pair, `row >= col`, stored at
/// position `k`.
pub fn hvec_position(n: usize, k: usize) -> (usize, usize) {
    let mut start = 0;
    for j in 0..n {
        let len = n - j;
        if k < start + len {
            return (j + (k - start), j);
        }
        start += len;
    }
    panic!("hvec position {k} out of range for n = {n}");
}

/// A real symmetric matrix. Symmetry is exact: every constructor either
/// checks it bit-for-bit or writes both triangles from one value.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        for j in 0..m.ncols() {
            for i in (j + 1)..m.nrows() {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { inner: m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Self::from_matrix(m)
    }

    /// Builds the matrix from its lower triangle, mirroring into the upper.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { inner: m }
    }

    /// Rebuilds a matrix from its half-vector (`unhvec`).
    pub fn from_hvec(h: &HalfVector) -> Self {
        let n = h.n;
        Self::from_lower_fn(n, |i, j| h.values[hvec_index(n, i, j)])
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.inner[(i, j)] = v;
        self.inner[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn hvec(&self) -> HalfVector {
        let n = self.dim();
        let mut values = Vec::with_capacity(hvec_len(n));
        for j in 0..n {
            for i in j..n {
                values.push(self.inner[(i, j)]);
            }
        }
        HalfVector { n, values }
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> DVector<f64> {
        DVector::from_column_slice(self.inner.as_slice())
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inner * x
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.inner.iter().all(|v| *v == 0.0)
    }
}

/// Half-vector `hvec(A)` of a symmetric `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfVector {
    n: usize,
    values: Vec<f64>,
}

impl HalfVector {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != hvec_len(n) {
            return Err(Error::DimensionMismatch {
                expected: hvec_len(n),
                got: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; hvec_len(n)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn unhvec(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_hvec(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// Elimination matrix `L_n` with `L_n vec(A) = hvec(A)`; entries are 0/1.
pub fn elimination_matrix(n: usize) -> DMatrix<i64> {
    assert!(n >= 1, "elimination matrix needs n >= 1");
    let mut l = DMatrix::zeros(hvec_len(n), n * n);
    for j in 0..n {
        for i in j..n {
            l[(hvec_index(n, i, j), j * n + i)] = 1;
        }
    }
    l
}

/// Duplication matrix `D_n` with `D_n hvec(A) = vec(A)`; entries are 0/1.
pub fn duplication_matrix(n: usize) -> DMatrix<i64> {
    assert!(n >= 1, "duplication matrix needs n >= 1");
    let mut d = DMatrix::zeros(n * n, hvec_len(n));
    for j in 0..n {
        for i in 0..n {
            d[(j * n + i, hvec_index(n, i, j))] = 1;
        }
    }
    d
}

/// Quadratic feature vector `s(x)` with `hvec(W)' s(x) = x' W x / 2`.
pub fn feature_s(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut s = DVector::zeros(hvec_len(n));
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            s[k] = if i == j {
                0.5 * x[j] * x[j]
            } else {
                x[i] * x[j]
            };
            k += 1;
        }
    }
    s
}

/// `r(x) = [s(x); x]`, so that `f(x) = z' r(x) + c` for `z = [hvec(W); b]`.
pub fn feature_r(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let h = hvec_len(n);
    let s = feature_s(x);
    let mut r = DVector::zeros(h + n);
    r.rows_mut(0, h).copy_from(&s);
    r.rows_mut(h, n).copy_from(x);
    r
}

/// Per-sample design matrix `M` (`n x n(n+1)/2`) with `M hvec(W) = W x`.
///
/// Row `k` is the gradient of `(W x)_k` with respect to `hvec(W)`.
pub fn sample_design_m(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut m = DMatrix::zeros(n, hvec_len(n));
    for k in 0..n {
        for j in 0..n {
            m[(k, hvec_index(n, k, j))] = x[j];
        }
    }
    m
}

/// Design quantities of a data set, assembled once and reused across every
/// `(lambda, mu)` pair.
#[derive(Debug, Clone)]
pub struct DesignCache {
    n: usize,
    s: Vec<DVector<f64>>,
    r: Vec<DVector<f64>>,
    m: Vec<DMatrix<f64>>,
    g: DMatrix<f64>,
}

impl DesignCache {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.s.len()
    }

    /// Size of `z = [hvec(W); b]`, i.e. `n(n+3)/2`.
    pub fn z_len(&self) -> usize {
        hvec_len(self.n) + self.n
    }

    pub fn s(&self, i: usize) -> &DVector<f64> {
        &self.s[i]
    }

    pub fn r(&self, i: usize) -> &DVector<f64> {
        &self.r[i]
    }

    pub fn m(&self, i: usize) -> &DMatrix<f64> {
        &self.m[i]
    }

    /// `G = 2 sum_i H_i' H_i` with `H_i = [M_i | I_n]`.
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
}

/// Assembles `s`, `r`, `M` for every sample and the Hessian `G`.
pub fn assemble_design(dataset: &Dataset) -> DesignCache {
    let n = dataset.dim();
    let m_count = dataset.len();
    let h = hvec_len(n);
    let p = h + n;

    let mut s = Vec::with_capacity(m_count);
    let mut r = Vec::with_capacity(m_count);
    let mut ms = Vec::with_capacity(m_count);

    let mut mtm = DMatrix::<f64>::zeros(h, h);
    let mut m_sum = DMatrix::<f64>::zeros(n, h);
    for i in 0..m_count {
        let x = dataset.sample(i);
        let mi = sample_design_m(&x);
        mtm.gemm_tr(1.0, &mi, &mi, 1.0);
        m_sum += &mi;
        s.push(feature_s(&x));
        r.push(feature_r(&x));
        ms.push(mi);
    }

    let mut g = DMatrix::<f64>::zeros(p, p);
    g.view_mut((0, 0), (h, h)).copy_from(&(mtm * 2.0));
    let cross = m_sum * 2.0;
    g.view_mut((h, 0), (n, h)).copy_from(&cross);
    g.view_mut((0, h), (h, n)).copy_from(&cross.transpose());
    for k in 0..n {
        g[(h + k, h + k)] = 2.0 * m_count as f64;
    }
    // the w-block comes out of a floating-point product; mirror it so G is
    // exactly symmetric
    for j in 0..h {
        for i in (j + 1)..h {
            g[(j, i)] = g[(i, j)];
        }
    }

    DesignCache { n, s, r, m: ms, g }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for n in 1..7 {
            for k in 0..hvec_len(n) {
                let (i, j) = hvec_position(n, k);
                assert!(i >= j);
                assert_eq!(hvec_index(n, i, j), k);
                assert_eq!(hvec_index(n, j, i), k);
            }
        }
    }

    #[test]
    fn hvec_small_cases() {
        assert_eq!(
            SymmetricMatrix::identity(2).hvec().as_slice(),
            &[1.0, 0.0, 1.0]
        );
        let a = SymmetricMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.hvec().as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let err = SymmetricMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { row: 1, col: 0 }));
        assert!(HalfVector::new(3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn elimination_duplication_n1() {
        assert_eq!(elimination_matrix(1), DMatrix::from_element(1, 1, 1));
        assert_eq!(duplication_matrix(1), DMatrix::from_element(1, 1, 1));
    }

    #[test]
    fn elimination_n2_selects_positions_1_2_4() {
        let l = elimination_matrix(2);
        let picked: Vec<usize> = (0..3)
            .map(|r| (0..4).find(|&c| l[(r, c)] == 1).unwrap())
            .collect();
        // 1-based positions 1, 2, 4 of vec(A)
        assert_eq!(picked, vec![0, 1, 3]);
    }

    #[test]
    fn feature_s_example() {
        let s = feature_s(&DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(s.as_slice(), &[0.5, 2.0, 2.0]);
        assert!(feature_s(&DVector::zeros(3)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn design_m_unit_vector() {
        let m = sample_design_m(&DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(
            m,
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        assert!(sample_design_m(&DVector::zeros(3))
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn zero_samples_give_block_identity() {
        let ds = Dataset::new(DMatrix::zeros(3, 2), vec![1, -1, 1]).unwrap();
        let cache = assemble_design(&ds);
        let g = cache.g();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j && i >= 3 { 6.0 } else { 0.0 };
                assert_eq!(g[(i, j)], expected);
            }
        }
    }
}
