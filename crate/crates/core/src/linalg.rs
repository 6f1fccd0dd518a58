//! Dense symmetric-matrix primitives: Cholesky factorization and inversion,
//! Schur complements, partial correlations, and Z-/M-matrix predicates.
//!
//! Matrices in this crate are small (dimension rarely above 20), so
//! everything is dense. [`SymMatrix`] stores only the lower triangle, which
//! makes the symmetry invariant structural: a symmetric matrix cannot drift
//! into asymmetry through arithmetic.

use crate::error::{Error, Result};

/// Relative positive-definiteness tolerance. A Cholesky pivot at or below
/// `PD_TOLERANCE` times the largest diagonal entry fails the factorization.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Tolerance for sign predicates (Z-matrix test, bias-sign classification).
/// Separates true zeros from rounding noise.
pub const SIGN_TOLERANCE: f64 = 1e-12;

/// Dense symmetric matrix, packed lower-triangular storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>, // row-major lower triangle, length dim*(dim+1)/2
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    // requires i >= j
    i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be >= 1");
        SymMatrix {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.data[packed_index(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.data[packed_index(i, i)] = v;
        }
        m
    }

    /// Build from a function evaluated on the lower triangle (`i >= j`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.data[packed_index(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from dense rows, requiring exact symmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has length {}, expected {}",
                    i,
                    row.len(),
                    dim
                )));
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Schema(format!(
                        "matrix is not symmetric at ({}, {}): {} vs {}",
                        i, j, rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        Ok(SymMatrix::from_fn(dim, |i, j| rows[i][j]))
    }

    /// Equicorrelation matrix: ones on the diagonal, `rho` off the diagonal.
    pub fn equicorrelation(dim: usize, rho: f64) -> Self {
        SymMatrix::from_fn(dim, |i, j| if i == j { 1.0 } else { rho })
    }

    /// Assemble the 2x2 block matrix [a b; b^T d].
    pub fn from_two_blocks(a: &SymMatrix, b: &RectMatrix, d: &SymMatrix) -> Self {
        let p = a.dim;
        let q = d.dim;
        assert_eq!(b.rows, p);
        assert_eq!(b.cols, q);
        SymMatrix::from_fn(p + q, |i, j| {
            if i < p {
                a.get(i, j)
            } else if j < p {
                b.get(j, i - p)
            } else {
                d.get(i - p, j - p)
            }
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.data[packed_index(i, j)]
        } else {
            self.data[packed_index(j, i)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if i >= j {
            self.data[packed_index(i, j)] = value;
        } else {
            self.data[packed_index(j, i)] = value;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Principal submatrix on the given (strictly increasing) index set.
    pub fn submatrix(&self, indices: &[usize]) -> SymMatrix {
        SymMatrix::from_fn(indices.len(), |i, j| self.get(indices[i], indices[j]))
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot add symmetric matrices of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
    }

    fn max_diagonal(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.data[packed_index(i, i)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lower Cholesky factorization with the relative pivot tolerance.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.dim;
        let tol = PD_TOLERANCE * self.max_diagonal();
        let mut l = self.data.clone();
        for j in 0..n {
            let mut pivot = l[packed_index(j, j)];
            for k in 0..j {
                let ljk = l[packed_index(j, k)];
                pivot -= ljk * ljk;
            }
            if pivot.is_nan() || pivot <= tol {
                return Err(Error::NotPositiveDefinite(format!(
                    "Cholesky pivot {pivot:.3e} at row {j} (tolerance {tol:.3e})"
                )));
            }
            let ljj = pivot.sqrt();
            l[packed_index(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = l[packed_index(i, j)];
                for k in 0..j {
                    s -= l[packed_index(i, k)] * l[packed_index(j, k)];
                }
                l[packed_index(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { dim: n, l })
    }

    pub fn is_pd(&self) -> bool {
        self.cholesky().is_ok()
    }
}

/// Lower Cholesky factor L with M = L L^T.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>, // packed lower triangle
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The dense lower-triangular factor.
    pub fn lower(&self) -> RectMatrix {
        let n = self.dim;
        let mut out = RectMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                out.set(i, j, self.l[packed_index(i, j)]);
            }
        }
        out
    }

    /// Solve M x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[packed_index(i, k)] * x[k];
            }
            x[i] = s / self.l[packed_index(i, i)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[packed_index(k, i)] * x[k];
            }
            x[i] = s / self.l[packed_index(i, i)];
        }
        x
    }

    /// Solve M X = B column by column.
    pub fn solve_rect(&self, b: &RectMatrix) -> RectMatrix {
        assert_eq!(b.rows, self.dim);
        let mut out = RectMatrix::zeros(b.rows, b.cols);
        for c in 0..b.cols {
            let col: Vec<f64> = (0..b.rows).map(|r| b.get(r, c)).collect();
            let x = self.solve(&col);
            for r in 0..b.rows {
                out.set(r, c, x[r]);
            }
        }
        out
    }

    /// M^{-1} as a symmetric matrix (computed as L^{-T} L^{-1} on the lower
    /// triangle, so the result is exactly symmetric).
    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim;
        // K = L^{-1}, lower triangular.
        let mut k = vec![0.0; n * (n + 1) / 2];
        for j in 0..n {
            k[packed_index(j, j)] = 1.0 / self.l[packed_index(j, j)];
            for i in (j + 1)..n {
                let mut s = 0.0;
                for m in j..i {
                    s -= self.l[packed_index(i, m)] * k[packed_index(m, j)];
                }
                k[packed_index(i, j)] = s / self.l[packed_index(i, i)];
            }
        }
        SymMatrix::from_fn(n, |i, j| {
            // (M^{-1})_{ij} = sum_m K_{mi} K_{mj}, m >= max(i, j) = i
            (i..n).map(|m| k[packed_index(m, i)] * k[packed_index(m, j)]).sum()
        })
    }
}

/// Dense rectangular matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RectMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RectMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RectMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return Err(Error::DimensionMismatch("matrix with zero columns".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has length {}, expected {}",
                    i,
                    row.len(),
                    ncols
                )));
            }
        }
        let mut m = RectMatrix::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = RectMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_sym(s: &SymMatrix) -> Self {
        RectMatrix::from_fn(s.dim(), s.dim(), |i, j| s.get(i, j))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn transpose(&self) -> RectMatrix {
        RectMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// self^T v
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j) * v[i]).sum())
            .collect()
    }

    pub fn mul(&self, other: &RectMatrix) -> Result<RectMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(RectMatrix::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        }))
    }

    pub fn sub(&self, other: &RectMatrix) -> Result<RectMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        Ok(RectMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j) - other.get(i, j)
        }))
    }

    pub fn scale(&self, s: f64) -> RectMatrix {
        RectMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * s)
    }
}

/// Inverse of a positive definite symmetric matrix via Cholesky.
pub fn cholesky_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(m.cholesky()?.inverse())
}

/// Schur complement of the leading `block_split` x `block_split` block:
/// writing the input as [A B; B^T D] with A of size `block_split`, returns
/// D - B^T A^{-1} B.
pub fn schur_complement(full: &SymMatrix, block_split: usize) -> Result<SymMatrix> {
    let n = full.dim();
    if block_split == 0 || block_split >= n {
        return Err(Error::IndexOutOfRange(format!(
            "block split {block_split} outside 1..{n}"
        )));
    }
    let a_idx: Vec<usize> = (0..block_split).collect();
    let a = full.submatrix(&a_idx);
    let m = n - block_split;
    let b = RectMatrix::from_fn(block_split, m, |i, j| full.get(i, block_split + j));
    let a_inv_b = a.cholesky()?.solve_rect(&b);
    Ok(SymMatrix::from_fn(m, |i, j| {
        let mut s = full.get(block_split + i, block_split + j);
        for k in 0..block_split {
            s -= b.get(k, i) * a_inv_b.get(k, j);
        }
        s
    }))
}

/// Partial correlation of variables `i` and `j` given all the others,
/// read off the precision matrix: -P_ij / sqrt(P_ii P_jj).
pub fn partial_correlation(full: &SymMatrix, i: usize, j: usize) -> Result<f64> {
    let n = full.dim();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange(format!(
            "indices ({i}, {j}) for a {n}x{n} matrix"
        )));
    }
    if i == j {
        return Err(Error::IndexOutOfRange(format!(
            "partial correlation requires distinct indices, got ({i}, {j})"
        )));
    }
    let prec = cholesky_inverse(full)?;
    Ok(precision_partial(&prec, i, j))
}

/// Same quantity computed from an already-inverted covariance matrix.
pub fn precision_partial(prec: &SymMatrix, i: usize, j: usize) -> f64 {
    let r = -prec.get(i, j) / (prec.get(i, i) * prec.get(j, j)).sqrt();
    r.clamp(-1.0, 1.0)
}

/// True iff every off-diagonal entry is nonpositive (within [`SIGN_TOLERANCE`]).
pub fn is_z_matrix(m: &SymMatrix) -> bool {
    let n = m.dim();
    for i in 0..n {
        for j in 0..i {
            if m.get(i, j) > SIGN_TOLERANCE {
                return false;
            }
        }
    }
    true
}

/// True iff `m` is a Z-matrix with strictly positive eigenvalues. For
/// symmetric input the eigenvalue condition is exactly positive
/// definiteness, so the Cholesky test suffices.
pub fn is_m_matrix(m: &SymMatrix) -> bool {
    is_z_matrix(m) && m.is_pd()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} != {b} (tol {tol})");
    }

    /// Oracle: solve M x = b by Gaussian elimination with partial pivoting.
    fn gauss_solve(m: &SymMatrix, b: &[f64]) -> Vec<f64> {
        let n = m.dim();
        let mut a = m.to_rows();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot_row);
            x.swap(col, pivot_row);
            for r in (col + 1)..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            x[col] /= a[col][col];
            for r in 0..col {
                x[r] -= a[r][col] * x[col];
            }
        }
        x
    }

    fn fixed_pd_5x5() -> SymMatrix {
        // L L^T for a fixed full-rank lower triangular L.
        let l = [
            vec![1.3],
            vec![0.4, 1.1],
            vec![-0.2, 0.5, 0.9],
            vec![0.7, -0.3, 0.2, 1.4],
            vec![0.1, 0.6, -0.4, 0.3, 0.8],
        ];
        SymMatrix::from_fn(5, |i, j| {
            (0..=j.min(i)).map(|k| l[i].get(k).unwrap_or(&0.0) * l[j].get(k).unwrap_or(&0.0)).sum()
        })
    }

    #[test]
    fn identity_inverse_is_identity() {
        let inv = cholesky_inverse(&SymMatrix::identity(3)).unwrap();
        assert_eq!(inv, SymMatrix::identity(3));
    }

    #[test]
    fn diagonal_inverse() {
        let m = SymMatrix::diagonal(&[4.0, 9.0]);
        let inv = cholesky_inverse(&m).unwrap();
        assert_close(inv.get(0, 0), 0.25, 1e-15);
        assert_close(inv.get(1, 1), 1.0 / 9.0, 1e-15);
        assert_close(inv.get(0, 1), 0.0, 0.0);
    }

    #[test]
    fn inverse_matches_gaussian_elimination_oracle() {
        let m = fixed_pd_5x5();
        let inv = cholesky_inverse(&m).unwrap();
        // oracle: invert column by column
        for c in 0..5 {
            let mut e = vec![0.0; 5];
            e[c] = 1.0;
            let col = gauss_solve(&m, &e);
            for r in 0..5 {
                assert_close(inv.get(r, c), col[r], 1e-10);
            }
        }
        // residual check ||M M^{-1} - I||_max
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += m.get(i, k) * inv.get(k, j);
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_close(s, expected, 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = SymMatrix::from_rows(&[vec![1.0, -2.0], vec![-2.0, 1.0]]).unwrap();
        assert!(matches!(m.cholesky(), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn schur_complement_identity_block() {
        let s = schur_complement(&SymMatrix::identity(2), 1).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn schur_complement_correlated_pair() {
        let m = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = schur_complement(&m, 1).unwrap();
        assert_close(s.get(0, 0), 0.75, 1e-15);
    }

    #[test]
    fn schur_complement_matches_blockwise_inversion_oracle() {
        // Oracle: (full^{-1})_{22} = (D - B^T A^{-1} B)^{-1}.
        let full = {
            let l: Vec<Vec<f64>> = vec![
                vec![1.2],
                vec![0.3, 1.0],
                vec![-0.4, 0.2, 1.1],
                vec![0.5, -0.1, 0.3, 0.9],
                vec![0.2, 0.4, -0.2, 0.1, 1.3],
                vec![-0.1, 0.2, 0.5, -0.3, 0.2, 0.8],
            ];
            SymMatrix::from_fn(6, |i, j| {
                (0..=j.min(i)).map(|k| l[i].get(k).unwrap_or(&0.0) * l[j].get(k).unwrap_or(&0.0)).sum()
            })
        };
        let schur = schur_complement(&full, 3).unwrap();
        let full_inv = cholesky_inverse(&full).unwrap();
        let lower_right = full_inv.submatrix(&[3, 4, 5]);
        let oracle = cholesky_inverse(&lower_right).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_close(schur.get(i, j), oracle.get(i, j), 1e-9);
            }
        }
    }

    #[test]
    fn partial_correlation_independent_variables() {
        assert_eq!(partial_correlation(&SymMatrix::identity(4), 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn partial_correlation_bivariate_reduces_to_correlation() {
        for &rho in &[-0.7, -0.2, 0.0, 0.3, 0.9] {
            let m = SymMatrix::equicorrelation(2, rho);
            assert_close(partial_correlation(&m, 0, 1).unwrap(), rho, 1e-12);
        }
    }

    #[test]
    fn partial_correlation_equicorrelation_oracle() {
        // Oracle (residual regression): for variables (0,1) given 2 with all
        // correlations rho, residual covariance is rho - rho^2 and residual
        // variance 1 - rho^2, so the partial correlation is rho/(1+rho).
        // At rho = 0.5 that is 1/3.
        let m = SymMatrix::equicorrelation(3, 0.5);
        assert_close(partial_correlation(&m, 0, 1).unwrap(), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn partial_correlation_index_errors() {
        let m = SymMatrix::identity(3);
        assert!(matches!(
            partial_correlation(&m, 0, 0),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(matches!(
            partial_correlation(&m, 0, 3),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn z_and_m_matrix_predicates() {
        let classic = SymMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert!(is_z_matrix(&classic));
        assert!(is_m_matrix(&classic));

        let positive_offdiag = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(!is_z_matrix(&positive_offdiag));
        assert!(!is_m_matrix(&positive_offdiag));

        // eigenvalues 3 and -1: Z-matrix but not an M-matrix
        let indefinite = SymMatrix::from_rows(&[vec![1.0, -2.0], vec![-2.0, 1.0]]).unwrap();
        assert!(is_z_matrix(&indefinite));
        assert!(!is_m_matrix(&indefinite));
    }

    // ---- property tests ----

    /// Random PD matrix via L L^T with positive diagonal on L.
    fn pd_strategy(dim: usize) -> impl Strategy<Value = SymMatrix> {
        let lower_len = dim * (dim + 1) / 2;
        (
            proptest::collection::vec(0.5f64..2.0, dim),
            proptest::collection::vec(-0.6f64..0.6, lower_len),
        )
            .prop_map(move |(diag, off)| {
                let mut l = vec![vec![0.0; dim]; dim];
                let mut idx = 0;
                for i in 0..dim {
                    for j in 0..i {
                        l[i][j] = off[idx];
                        idx += 1;
                    }
                    l[i][i] = diag[i];
                }
                SymMatrix::from_fn(dim, |i, j| (0..=j).map(|k| l[i][k] * l[j][k]).sum())
            })
    }

    /// Random symmetric M-matrix: nonpositive off-diagonals with strict
    /// diagonal dominance.
    fn m_matrix_strategy(dim: usize) -> impl Strategy<Value = SymMatrix> {
        let lower_len = dim * (dim - 1) / 2;
        (
            proptest::collection::vec(0.0f64..1.0, lower_len),
            proptest::collection::vec(0.1f64..1.0, dim),
        )
            .prop_map(move |(off, slack)| {
                let mut m = SymMatrix::zeros(dim);
                let mut idx = 0;
                for i in 0..dim {
                    for j in 0..i {
                        m.set(i, j, -off[idx]);
                        idx += 1;
                    }
                }
                for i in 0..dim {
                    let rowsum: f64 = (0..dim).filter(|&j| j != i).map(|j| m.get(i, j).abs()).sum();
                    m.set(i, i, rowsum + slack[i]);
                }
                m
            })
    }

    proptest! {
        #[test]
        fn inversion_round_trip(m in pd_strategy(4)) {
            let back = cholesky_inverse(&cholesky_inverse(&m).unwrap()).unwrap();
            let scale = m.norm_max();
            for i in 0..4 {
                for j in 0..=i {
                    prop_assert!((back.get(i, j) - m.get(i, j)).abs() < 1e-8 * scale);
                }
            }
        }

        #[test]
        fn schur_preserves_positive_definiteness(m in pd_strategy(5)) {
            let s = schur_complement(&m, 2).unwrap();
            prop_assert!(s.is_pd());
        }

        #[test]
        fn partial_correlation_is_symmetric(m in pd_strategy(5)) {
            let a = partial_correlation(&m, 1, 3).unwrap();
            let b = partial_correlation(&m, 3, 1).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn m_matrix_inverse_is_nonnegative(m in m_matrix_strategy(5)) {
            prop_assert!(is_m_matrix(&m));
            let inv = cholesky_inverse(&m).unwrap();
            for i in 0..5 {
                for j in 0..=i {
                    prop_assert!(inv.get(i, j) >= -SIGN_TOLERANCE);
                }
            }
        }
    }
}
