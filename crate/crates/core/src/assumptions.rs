//! Testable predicates on population covariances and coefficients that
//! drive the sign guarantees for the bias formulas:
//!
//! * no benefit: every pollutant coefficient is nonpositive;
//! * pairwise positive correlation of pollutant concentrations;
//! * weak partial positivity: a measured pollutant in Z keeps positive
//!   partial correlation with each error-prone pollutant given the other
//!   entries of Z;
//! * pairwise partial positivity: every pollutant pair keeps positive
//!   partial correlation given all remaining model covariates.
//!
//! All positivity checks are strict: values must exceed [`SIGN_TOLERANCE`],
//! so boundary zeros (e.g. a diagonal covariance) fail.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_inverse, precision_partial, SymMatrix, SIGN_TOLERANCE};

/// Outcome of evaluating all assumption predicates on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionProfile {
    pub no_benefit: bool,
    pub pairwise_pc_plus: bool,
    pub weak_partial_pc_plus: bool,
    pub pairwise_partial_pc_plus: bool,
    /// Mean correlation over all distinct pollutant pairs.
    pub avg_pairwise_pollutant_corr: f64,
}

/// True iff every coefficient is nonpositive (within tolerance).
pub fn check_no_benefit(beta_pollutants: &[f64]) -> bool {
    beta_pollutants.iter().all(|&b| b <= SIGN_TOLERANCE)
}

fn check_indices(cov: &SymMatrix, indices: &[usize]) -> Result<()> {
    if let Some(&i) = indices.iter().find(|&&i| i >= cov.dim()) {
        return Err(Error::IndexOutOfRange(format!(
            "pollutant index {i} for a {0}x{0} covariance",
            cov.dim()
        )));
    }
    Ok(())
}

/// True iff all distinct pollutant pairs have strictly positive covariance
/// (equivalently correlation).
pub fn check_pairwise_pc_plus(cov_zx: &SymMatrix, pollutant_indices: &[usize]) -> Result<bool> {
    check_indices(cov_zx, pollutant_indices)?;
    for (a, &i) in pollutant_indices.iter().enumerate() {
        for &j in &pollutant_indices[a + 1..] {
            if cov_zx.get(i, j) <= SIGN_TOLERANCE {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Mean pairwise correlation over the pollutant index set.
pub fn avg_pairwise_correlation(cov_zx: &SymMatrix, pollutant_indices: &[usize]) -> Result<f64> {
    check_indices(cov_zx, pollutant_indices)?;
    let m = pollutant_indices.len();
    if m < 2 {
        return Err(Error::PreconditionViolated(
            "average pairwise correlation needs at least two pollutants".into(),
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, &i) in pollutant_indices.iter().enumerate() {
        for &j in &pollutant_indices[a + 1..] {
            sum += cov_zx.get(i, j) / (cov_zx.get(i, i) * cov_zx.get(j, j)).sqrt();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Weak partial positivity for the measured pollutant Z^(k) (0-based index
/// within Z): for each error-prone pollutant X^(j), the partial correlation
/// of Z^(k) and X^(j) given the other p-1 entries of Z must be positive.
///
/// `cov_zx` is the (p + d) covariance of (Z, X).
pub fn check_weak_partial_pc_plus(cov_zx: &SymMatrix, p: usize, k: usize) -> Result<bool> {
    let n = cov_zx.dim();
    if p == 0 || p >= n {
        return Err(Error::IndexOutOfRange(format!(
            "p = {p} outside 1..{n}"
        )));
    }
    if k >= p {
        return Err(Error::IndexOutOfRange(format!(
            "measured pollutant index {k} not within Z (p = {p})"
        )));
    }
    let d = n - p;
    let mut indices: Vec<usize> = (0..p).collect();
    indices.push(0); // placeholder for the X index
    for j in 0..d {
        indices[p] = p + j;
        let sub = cov_zx.submatrix(&indices);
        let prec = cholesky_inverse(&sub)?;
        if precision_partial(&prec, k, p) <= SIGN_TOLERANCE {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Pairwise partial positivity over the error-prone pollutant block
/// (indices p..p+d of `cov_zx`), each pair conditioned on all remaining
/// entries of (Z, X).
pub fn check_pairwise_partial_pc_plus(cov_zx: &SymMatrix, p: usize) -> Result<bool> {
    let n = cov_zx.dim();
    if p >= n {
        return Err(Error::IndexOutOfRange(format!("p = {p} >= dimension {n}")));
    }
    let pollutants: Vec<usize> = (p..n).collect();
    check_pairwise_partial_pc_plus_over(cov_zx, &pollutants)
}

/// Pairwise partial positivity over an arbitrary pollutant index set
/// (used when a perfectly measured pollutant lives inside Z).
pub fn check_pairwise_partial_pc_plus_over(
    cov_zx: &SymMatrix,
    pollutant_indices: &[usize],
) -> Result<bool> {
    check_indices(cov_zx, pollutant_indices)?;
    let prec = cholesky_inverse(cov_zx)?;
    for (a, &i) in pollutant_indices.iter().enumerate() {
        for &j in &pollutant_indices[a + 1..] {
            if precision_partial(&prec, i, j) <= SIGN_TOLERANCE {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Evaluate the full profile. `pollutant_z_indices` are the indices within
/// Z (0-based) holding perfectly measured pollutants; all of p..p+d count
/// as pollutants automatically. `beta_pollutants` are the coefficients of
/// all pollutants in any order.
pub fn profile(
    cov_zx: &SymMatrix,
    p: usize,
    pollutant_z_indices: &[usize],
    beta_pollutants: &[f64],
) -> Result<AssumptionProfile> {
    let n = cov_zx.dim();
    if p >= n {
        return Err(Error::IndexOutOfRange(format!("p = {p} >= dimension {n}")));
    }
    if let Some(&k) = pollutant_z_indices.iter().find(|&&k| k >= p) {
        return Err(Error::IndexOutOfRange(format!(
            "Z pollutant index {k} not within Z (p = {p})"
        )));
    }
    let mut pollutants: Vec<usize> = pollutant_z_indices.to_vec();
    pollutants.extend(p..n);
    let mut weak = true;
    for &k in pollutant_z_indices {
        if !check_weak_partial_pc_plus(cov_zx, p, k)? {
            weak = false;
            break;
        }
    }
    Ok(AssumptionProfile {
        no_benefit: check_no_benefit(beta_pollutants),
        pairwise_pc_plus: check_pairwise_pc_plus(cov_zx, &pollutants)?,
        weak_partial_pc_plus: weak,
        pairwise_partial_pc_plus: check_pairwise_partial_pc_plus_over(cov_zx, &pollutants)?,
        avg_pairwise_pollutant_corr: avg_pairwise_correlation(cov_zx, &pollutants)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_m_matrix, schur_complement, RectMatrix};

    #[test]
    fn no_benefit_examples() {
        assert!(check_no_benefit(&[-1.2, 0.0, -0.3]));
        assert!(!check_no_benefit(&[0.1, -1.0]));
        assert!(check_no_benefit(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn pairwise_pc_plus_examples() {
        let equi = SymMatrix::equicorrelation(4, 0.2);
        assert!(check_pairwise_pc_plus(&equi, &[0, 1, 2, 3]).unwrap());

        let mut one_negative = SymMatrix::equicorrelation(3, 0.2);
        one_negative.set(0, 2, -0.01);
        assert!(!check_pairwise_pc_plus(&one_negative, &[0, 1, 2]).unwrap());

        // zero is not positive
        let diag = SymMatrix::identity(3);
        assert!(!check_pairwise_pc_plus(&diag, &[0, 1, 2]).unwrap());
    }

    #[test]
    fn pairwise_pc_plus_index_error() {
        let m = SymMatrix::identity(2);
        assert!(matches!(
            check_pairwise_pc_plus(&m, &[0, 5]),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn weak_partial_block_diagonal_fails() {
        // Z independent of X: all partial correlations vanish.
        let cov = SymMatrix::identity(4);
        assert!(!check_weak_partial_pc_plus(&cov, 2, 1).unwrap());
    }

    #[test]
    fn weak_partial_single_z_is_marginal_correlation() {
        // p = 1: no conditioning set, so the check reduces to the sign of
        // Corr(Z, X^(j)).
        let cov = SymMatrix::from_rows(&[
            vec![1.0, 0.4, 0.3],
            vec![0.4, 1.0, 0.2],
            vec![0.3, 0.2, 1.0],
        ])
        .unwrap();
        assert!(check_weak_partial_pc_plus(&cov, 1, 0).unwrap());

        let mut neg = cov.clone();
        neg.set(0, 2, -0.3);
        assert!(!check_weak_partial_pc_plus(&neg, 1, 0).unwrap());
    }

    #[test]
    fn weak_partial_implies_nonpositive_ovb_under_no_benefit() {
        // Cross-check: when the weak partial condition holds for Z^(k) and
        // all coefficients are nonpositive, the OVB entry for Z^(k) cannot
        // be positive.
        use crate::bias::{ovb, CoefficientVector, CovarianceBlocks, ErrorVariances};
        let p = 2;
        let cov = SymMatrix::from_rows(&[
            vec![1.0, 0.2, 0.5, 0.4],
            vec![0.2, 1.0, 0.3, 0.35],
            vec![0.5, 0.3, 1.0, 0.45],
            vec![0.4, 0.35, 0.45, 1.0],
        ])
        .unwrap();
        assert!(check_weak_partial_pc_plus(&cov, p, 1).unwrap());
        let a = cov.submatrix(&[0, 1]);
        let b = RectMatrix::from_fn(2, 2, |i, j| cov.get(i, p + j));
        let d = cov.submatrix(&[2, 3]);
        let blocks = CovarianceBlocks::classical_uncorrelated(
            a,
            b,
            d,
            &ErrorVariances::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let beta = CoefficientVector::new(vec![0.0, 0.0], vec![-1.0, -0.4]);
        let v = ovb(&blocks, &beta).unwrap();
        assert!(v[1] <= SIGN_TOLERANCE);
    }

    #[test]
    fn pairwise_partial_bivariate() {
        let cov = SymMatrix::equicorrelation(2, 0.4);
        assert!(check_pairwise_partial_pc_plus(&cov, 0).unwrap());
    }

    #[test]
    fn pairwise_partial_equicorrelation_oracle() {
        // Analytic oracle: partial correlation in an equicorrelation matrix
        // is rho/(1 + (m-2) rho); positive for rho = 0.5, m = 3.
        let cov = SymMatrix::equicorrelation(3, 0.5);
        assert!(check_pairwise_partial_pc_plus(&cov, 0).unwrap());
    }

    #[test]
    fn pairwise_partial_detects_negative_partial_with_positive_marginals() {
        // Oracle: build the precision matrix with one positive off-diagonal
        // entry (forcing a negative partial correlation) and invert it to
        // get a covariance whose marginal correlations are all positive.
        let prec = SymMatrix::from_rows(&[
            vec![2.0, -0.9, -0.9],
            vec![-0.9, 2.0, 0.35],
            vec![-0.9, 0.35, 2.0],
        ])
        .unwrap();
        let cov = cholesky_inverse(&prec).unwrap();
        assert!(check_pairwise_pc_plus(&cov, &[0, 1, 2]).unwrap());
        assert!(!check_pairwise_partial_pc_plus(&cov, 0).unwrap());
    }

    #[test]
    fn pairwise_partial_implies_m_matrix_precision_block() {
        // When every X pair has positive partial correlation, the lower
        // right block of the precision matrix, (D - B^T A^{-1} B)^{-1},
        // is an M-matrix.
        let cov = SymMatrix::from_rows(&[
            vec![1.0, 0.3, 0.25, 0.2],
            vec![0.3, 1.0, 0.45, 0.4],
            vec![0.25, 0.45, 1.0, 0.5],
            vec![0.2, 0.4, 0.5, 1.0],
        ])
        .unwrap();
        let p = 1;
        if check_pairwise_partial_pc_plus(&cov, p).unwrap() {
            let schur = schur_complement(&cov, p).unwrap();
            let block = cholesky_inverse(&schur).unwrap();
            assert!(is_m_matrix(&block));
        } else {
            panic!("test instance should satisfy the partial positivity condition");
        }
    }

    #[test]
    fn profile_combines_checks() {
        let cov = SymMatrix::from_rows(&[
            vec![1.0, 0.2, 0.5, 0.4],
            vec![0.2, 1.0, 0.3, 0.35],
            vec![0.5, 0.3, 1.0, 0.45],
            vec![0.4, 0.35, 0.45, 1.0],
        ])
        .unwrap();
        let prof = profile(&cov, 2, &[1], &[-0.5, -1.0, -0.2]).unwrap();
        assert!(prof.no_benefit);
        assert!(prof.pairwise_pc_plus);
        assert!(prof.weak_partial_pc_plus);
        // avg over pairs of indices {1, 2, 3}
        let expected = (0.3 + 0.35 + 0.45) / 3.0;
        assert!((prof.avg_pairwise_pollutant_corr - expected).abs() < 1e-12);
    }
}
