//! Asymptotic bias formulas for linear regression with omitted or
//! error-prone covariates.
//!
//! The model has an outcome Y, error-free covariates Z (length p), true
//! covariates X (length d) and error-prone proxies W for X. Population
//! regression coefficients are beta = (beta_Z, beta_X). Two estimators are
//! compared against the full regression of Y on (Z, X):
//!
//! * omitting X entirely (regress Y on Z) gives omitted-variable bias
//!   OVB = A^{-1} B beta_X on the Z coefficients;
//! * substituting W for X (regress Y on (Z, W)) gives measurement-error
//!   bias MEB = Sigma_M^{-1} Sigma_ME beta on the full coefficient vector,
//!   where Sigma_M = Cov(Z, W) and Sigma_ME = Cov((Z,W), (0, X-W)).
//!
//! Under classical uncorrelated measurement error (W = X + E with E
//! independent of everything and diagonal Cov(E)), the X-block of the MEB
//! factors as -Omega Sigma_E beta_X with Omega = (Sigma_E + D - B^T A^{-1}
//! B)^{-1}, which splits each entry into an attenuation term and an
//! additive term contributed by the other covariates' errors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{RectMatrix, SymMatrix, SIGN_TOLERANCE};

/// Joint covariance of (Z, X, W) partitioned into named blocks:
/// A = Cov(Z), B = Cov(Z, X), C = Cov(Z, W), D = Cov(X), F = Cov(X, W),
/// G = Cov(W).
#[derive(Debug, Clone)]
pub struct CovarianceBlocks {
    /// Number of error-free covariates (p).
    pub num_z: usize,
    /// Number of error-prone covariates (d).
    pub num_x: usize,
    /// Cov(Z), p x p.
    pub cov_zz: SymMatrix,
    /// Cov(Z, X), p x d.
    pub cov_zx: RectMatrix,
    /// Cov(Z, W), p x d.
    pub cov_zw: RectMatrix,
    /// Cov(X), d x d.
    pub cov_xx: SymMatrix,
    /// Cov(X, W), d x d (not symmetric in general).
    pub cov_xw: RectMatrix,
    /// Cov(W), d x d.
    pub cov_ww: SymMatrix,
}

impl CovarianceBlocks {
    /// Validates block shapes and positive definiteness of Cov(Z, X) and
    /// Cov(Z, W), the two matrices the bias formulas invert.
    pub fn new(
        cov_zz: SymMatrix,
        cov_zx: RectMatrix,
        cov_zw: RectMatrix,
        cov_xx: SymMatrix,
        cov_xw: RectMatrix,
        cov_ww: SymMatrix,
    ) -> Result<Self> {
        let p = cov_zz.dim();
        let d = cov_xx.dim();
        let shape_ok = cov_zx.rows() == p
            && cov_zx.cols() == d
            && cov_zw.rows() == p
            && cov_zw.cols() == d
            && cov_xw.rows() == d
            && cov_xw.cols() == d
            && cov_ww.dim() == d;
        if !shape_ok {
            return Err(Error::DimensionMismatch(format!(
                "covariance blocks inconsistent with p={p}, d={d}"
            )));
        }
        let blocks = CovarianceBlocks {
            num_z: p,
            num_x: d,
            cov_zz,
            cov_zx,
            cov_zw,
            cov_xx,
            cov_xw,
            cov_ww,
        };
        blocks
            .joint_zx()
            .cholesky()
            .map_err(|_| Error::NotPositiveDefinite("Cov(Z,X)".into()))?;
        blocks
            .sigma_m()
            .cholesky()
            .map_err(|_| Error::NotPositiveDefinite("Cov(Z,W)".into()))?;
        Ok(blocks)
    }

    /// Classical measurement error: W = X + E with E independent of
    /// (Z, X, Y), so C = B, F = D and G = D + Cov(E).
    pub fn classical(
        cov_zz: SymMatrix,
        cov_zx: RectMatrix,
        cov_xx: SymMatrix,
        error_cov: &SymMatrix,
    ) -> Result<Self> {
        if error_cov.dim() != cov_xx.dim() {
            return Err(Error::DimensionMismatch(format!(
                "error covariance has dimension {} but d = {}",
                error_cov.dim(),
                cov_xx.dim()
            )));
        }
        let cov_ww = cov_xx.add(error_cov)?;
        let cov_xw = RectMatrix::from_sym(&cov_xx);
        let cov_zw = cov_zx.clone();
        CovarianceBlocks::new(cov_zz, cov_zx, cov_zw, cov_xx, cov_xw, cov_ww)
    }

    /// Classical measurement error with errors uncorrelated across
    /// covariates: Cov(E) = diag(err).
    pub fn classical_uncorrelated(
        cov_zz: SymMatrix,
        cov_zx: RectMatrix,
        cov_xx: SymMatrix,
        err: &ErrorVariances,
    ) -> Result<Self> {
        if err.0.len() != cov_xx.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} error variances but d = {}",
                err.0.len(),
                cov_xx.dim()
            )));
        }
        CovarianceBlocks::classical(cov_zz, cov_zx, cov_xx, &SymMatrix::diagonal(&err.0))
    }

    /// Cov((Z, W)) = [A C; C^T G].
    pub fn sigma_m(&self) -> SymMatrix {
        SymMatrix::from_two_blocks(&self.cov_zz, &self.cov_zw, &self.cov_ww)
    }

    /// Cov((Z, X)) = [A B; B^T D].
    pub fn joint_zx(&self) -> SymMatrix {
        SymMatrix::from_two_blocks(&self.cov_zz, &self.cov_zx, &self.cov_xx)
    }

    /// The full (p + 2d) covariance of (Z, X, W). Symmetric by construction;
    /// not necessarily positive definite (W may duplicate X exactly).
    pub fn assemble_full(&self) -> SymMatrix {
        let p = self.num_z;
        let d = self.num_x;
        SymMatrix::from_fn(p + 2 * d, |i, j| {
            // regions: 0..p -> Z, p..p+d -> X, p+d.. -> W; i >= j here
            if i < p {
                self.cov_zz.get(i, j)
            } else if i < p + d {
                if j < p {
                    self.cov_zx.get(j, i - p)
                } else {
                    self.cov_xx.get(i - p, j - p)
                }
            } else if j < p {
                self.cov_zw.get(j, i - p - d)
            } else if j < p + d {
                self.cov_xw.get(j - p, i - p - d)
            } else {
                self.cov_ww.get(i - p - d, j - p - d)
            }
        })
    }
}

/// Population regression coefficients (beta_Z, beta_X), intercept excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientVector {
    pub beta_z: Vec<f64>,
    pub beta_x: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(beta_z: Vec<f64>, beta_x: Vec<f64>) -> Self {
        CoefficientVector { beta_z, beta_x }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.beta_z.clone();
        v.extend_from_slice(&self.beta_x);
        v
    }

    fn check_dims(&self, blocks: &CovarianceBlocks) -> Result<()> {
        if self.beta_z.len() != blocks.num_z || self.beta_x.len() != blocks.num_x {
            return Err(Error::DimensionMismatch(format!(
                "coefficients ({}, {}) do not match blocks (p={}, d={})",
                self.beta_z.len(),
                self.beta_x.len(),
                blocks.num_z,
                blocks.num_x
            )));
        }
        Ok(())
    }
}

/// Per-covariate measurement error variances (the diagonal of Cov(E)).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorVariances(pub Vec<f64>);

impl ErrorVariances {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if let Some(v) = variances.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::PreconditionViolated(format!(
                "error variances must be nonnegative, got {v}"
            )));
        }
        Ok(ErrorVariances(variances))
    }
}

/// Omitted-variable bias on the Z coefficients: A^{-1} B beta_X.
pub fn ovb(blocks: &CovarianceBlocks, beta: &CoefficientVector) -> Result<Vec<f64>> {
    beta.check_dims(blocks)?;
    let rhs = blocks.cov_zx.mul_vec(&beta.beta_x);
    Ok(blocks.cov_zz.cholesky()?.solve(&rhs))
}

/// Measurement-error bias on the full (Z, W) coefficient vector:
/// Sigma_M^{-1} Sigma_ME beta, with Sigma_ME = [0 B-C; 0 F^T-G].
pub fn meb_full(blocks: &CovarianceBlocks, beta: &CoefficientVector) -> Result<Vec<f64>> {
    beta.check_dims(blocks)?;
    let p = blocks.num_z;
    let d = blocks.num_x;
    // Sigma_ME beta: the Z columns of Sigma_ME are zero, so only beta_X enters.
    let mut rhs = vec![0.0; p + d];
    for i in 0..p {
        let mut s = 0.0;
        for j in 0..d {
            s += (blocks.cov_zx.get(i, j) - blocks.cov_zw.get(i, j)) * beta.beta_x[j];
        }
        rhs[i] = s;
    }
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..d {
            // (F^T - G)_{ij} = F_{ji} - G_{ij}
            s += (blocks.cov_xw.get(j, i) - blocks.cov_ww.get(i, j)) * beta.beta_x[j];
        }
        rhs[p + i] = s;
    }
    Ok(blocks.sigma_m().cholesky()?.solve(&rhs))
}

/// Measurement-error bias on the Z coefficients only, via its own closed
/// form (A - C G^{-1} C^T)^{-1} (B - C G^{-1} F^T) beta_X.
///
/// Deliberately not computed by slicing [`meb_full`]: keeping the two code
/// paths independent lets the equality of their Z entries serve as a
/// cross-check on formula transcription.
pub fn meb_z(blocks: &CovarianceBlocks, beta: &CoefficientVector) -> Result<Vec<f64>> {
    beta.check_dims(blocks)?;
    let p = blocks.num_z;
    let g = blocks.cov_ww.cholesky()?;
    let g_inv_ct = g.solve_rect(&blocks.cov_zw.transpose()); // d x p
    let g_inv_ft = g.solve_rect(&blocks.cov_xw.transpose()); // d x d
    // A - C G^{-1} C^T is symmetric; build it on the lower triangle.
    let lhs = SymMatrix::from_fn(p, |i, j| {
        let mut s = blocks.cov_zz.get(i, j);
        for k in 0..blocks.num_x {
            s -= blocks.cov_zw.get(i, k) * g_inv_ct.get(k, j);
        }
        s
    });
    let reduced = blocks.cov_zx.sub(&blocks.cov_zw.mul(&g_inv_ft)?)?;
    let rhs = reduced.mul_vec(&beta.beta_x);
    Ok(lhs.cholesky()?.solve(&rhs))
}

/// The inverse matrix governing the X-block MEB under classical
/// uncorrelated error, with the bias split into attenuation and additive
/// parts per covariate.
#[derive(Debug, Clone)]
pub struct OmegaDecomposition {
    /// Omega = (Sigma_E + D - B^T A^{-1} B)^{-1}.
    pub omega: SymMatrix,
    /// `attenuation[j] = -Omega_jj a_j beta_X[j]`.
    pub attenuation: Vec<f64>,
    /// `additive[j] = -sum_{jp != j} Omega_{j,jp} a_jp beta_X[jp]`.
    pub additive: Vec<f64>,
}

/// Computes Omega and the attenuation/additive split of the X-block MEB for
/// a classical uncorrelated error structure built from (A, B, D, err).
pub fn omega_and_decomposition(
    cov_zz: &SymMatrix,
    cov_zx: &RectMatrix,
    cov_xx: &SymMatrix,
    err: &ErrorVariances,
    beta_x: &[f64],
) -> Result<OmegaDecomposition> {
    let d = cov_xx.dim();
    if beta_x.len() != d || err.0.len() != d || cov_zx.cols() != d || cov_zx.rows() != cov_zz.dim()
    {
        return Err(Error::DimensionMismatch(
            "omega decomposition inputs disagree on p or d".into(),
        ));
    }
    let a_inv_b = cov_zz.cholesky()?.solve_rect(cov_zx); // p x d
    let inner = SymMatrix::from_fn(d, |i, j| {
        let mut s = cov_xx.get(i, j);
        for k in 0..cov_zz.dim() {
            s -= cov_zx.get(k, i) * a_inv_b.get(k, j);
        }
        if i == j {
            s += err.0[i];
        }
        s
    });
    let omega = inner.cholesky()?.inverse();
    let mut attenuation = vec![0.0; d];
    let mut additive = vec![0.0; d];
    for j in 0..d {
        attenuation[j] = -omega.get(j, j) * err.0[j] * beta_x[j];
        let mut s = 0.0;
        for jp in 0..d {
            if jp != j {
                s -= omega.get(j, jp) * err.0[jp] * beta_x[jp];
            }
        }
        additive[j] = s;
    }
    Ok(OmegaDecomposition {
        omega,
        attenuation,
        additive,
    })
}

/// Shrinkage factor relating MEB to OVB when d = 1 and the proxy W has zero
/// partial correlation with every entry of Z given X:
///
///   rho_factor = (1 - rho_XW^2) (1 + q / (sigma_X^2 / rho_XW^2 - q)),
///   q = B^T A^{-1} B,
///
/// in which case meb_Z = rho_factor * ovb elementwise. The factor is 1 when
/// rho_XW = 0 and lies in [0, 1) otherwise.
pub fn meb_shrinkage_factor(
    cov_zz: &SymMatrix,
    cov_zx_col: &[f64],
    sigma_x: f64,
    rho_xw: f64,
) -> Result<f64> {
    if cov_zx_col.len() != cov_zz.dim() {
        return Err(Error::DimensionMismatch(
            "Cov(Z,X) column length does not match Cov(Z)".into(),
        ));
    }
    if rho_xw.is_nan() || rho_xw.abs() > 1.0 {
        return Err(Error::PreconditionViolated(format!(
            "|rho_XW| must be <= 1, got {rho_xw}"
        )));
    }
    let a_inv_b = cov_zz.cholesky()?.solve(cov_zx_col);
    let q: f64 = cov_zx_col.iter().zip(&a_inv_b).map(|(b, x)| b * x).sum();
    let sigma_x2 = sigma_x * sigma_x;
    if sigma_x2 <= q {
        return Err(Error::PreconditionViolated(format!(
            "sigma_X^2 = {sigma_x2} must exceed B^T A^{{-1}} B = {q} (Cov(Z,X) positive definite)"
        )));
    }
    if rho_xw == 0.0 {
        return Ok(1.0);
    }
    let denom = sigma_x2 / (rho_xw * rho_xw) - q;
    Ok((1.0 - rho_xw * rho_xw) * (1.0 + q / denom))
}

/// Closed-form OVB and MEB for the scalar case p = d = 1, plus a flag for
/// the condition set under which |MEB| <= |OVB| with matching signs is
/// guaranteed: rho_XW > |rho_ZW| > 0, sign(rho_ZW) = sign(rho_ZX), and
/// |rho_ZX| >= |rho_ZW|.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarBiasComparison {
    pub ovb: f64,
    pub meb: f64,
    pub dominance_guaranteed: bool,
}

pub fn scalar_bias_comparison(
    sigma_z: f64,
    sigma_x: f64,
    sigma_w: f64,
    rho_zx: f64,
    rho_zw: f64,
    rho_xw: f64,
    beta_x: f64,
) -> Result<ScalarBiasComparison> {
    let corr = SymMatrix::from_fn(3, |i, j| match (i, j) {
        (0, 0) | (1, 1) | (2, 2) => 1.0,
        (1, 0) => rho_zx,
        (2, 0) => rho_zw,
        (2, 1) => rho_xw,
        _ => unreachable!(),
    });
    let sd = [sigma_z, sigma_x, sigma_w];
    let cov = SymMatrix::from_fn(3, |i, j| corr.get(i, j) * sd[i] * sd[j]);
    cov.cholesky()
        .map_err(|_| Error::NotPositiveDefinite("Cov(Z,X,W) implied by the correlations".into()))?;
    let meb = beta_x * sigma_x * (rho_zx - rho_zw * rho_xw) / (sigma_z * (1.0 - rho_zw * rho_zw));
    let ovb = beta_x * sigma_x * rho_zx / sigma_z;
    let dominance_guaranteed = rho_xw > rho_zw.abs()
        && rho_zw.abs() > 0.0
        && rho_zw.signum() == rho_zx.signum()
        && rho_zx.abs() >= rho_zw.abs();
    Ok(ScalarBiasComparison {
        ovb,
        meb,
        dominance_guaranteed,
    })
}

/// MEB on the Z coefficients under classical error with Cov(E) = scale * I,
/// paired with the (scale-free) OVB. As scale grows the MEB converges to
/// the OVB.
pub fn classical_limit_check(
    cov_zz: &SymMatrix,
    cov_zx: &RectMatrix,
    cov_xx: &SymMatrix,
    beta: &CoefficientVector,
    scale: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if scale.is_nan() || scale < 0.0 {
        return Err(Error::PreconditionViolated(format!(
            "error scale must be nonnegative, got {scale}"
        )));
    }
    let err = ErrorVariances::new(vec![scale; cov_xx.dim()])?;
    let blocks =
        CovarianceBlocks::classical_uncorrelated(cov_zz.clone(), cov_zx.clone(), cov_xx.clone(), &err)?;
    let meb = meb_z(&blocks, beta)?;
    let ovb = ovb(&blocks, beta)?;
    Ok((meb, ovb))
}

/// Scalar counterexample where the proxy is contaminated by the control:
/// W = X + kappa * Z, so C = B + kappa A, F = D + kappa B and
/// G = D + 2 kappa B + kappa^2 A. Analytically the MEB equals -kappa beta_X
/// regardless of the OVB (which is B/A beta_X and can be zero).
/// Returns (ovb, meb), with the MEB evaluated through the generic formula.
pub fn contaminated_proxy_bias(
    kappa: f64,
    var_z: f64,
    cov_zx: f64,
    var_x: f64,
    beta_x: f64,
) -> Result<(f64, f64)> {
    let a = SymMatrix::diagonal(&[var_z]);
    let b = RectMatrix::from_rows(&[vec![cov_zx]])?;
    let c = RectMatrix::from_rows(&[vec![cov_zx + kappa * var_z]])?;
    let d = SymMatrix::diagonal(&[var_x]);
    let f = RectMatrix::from_rows(&[vec![var_x + kappa * cov_zx]])?;
    let g = SymMatrix::diagonal(&[var_x + 2.0 * kappa * cov_zx + kappa * kappa * var_z]);
    let blocks = CovarianceBlocks::new(a, b, c, d, f, g)?;
    let beta = CoefficientVector::new(vec![0.0], vec![beta_x]);
    let ovb_val = ovb(&blocks, &beta)?[0];
    let meb_val = meb_z(&blocks, &beta)?[0];
    Ok((ovb_val, meb_val))
}

/// Classify a bias value against the sign tolerance.
pub fn classify_sign(value: f64) -> &'static str {
    if value < -SIGN_TOLERANCE {
        "negative"
    } else if value > SIGN_TOLERANCE {
        "positive"
    } else {
        "zero"
    }
}

/// Full bias report for one covariance structure and coefficient vector.
#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub ovb: Vec<f64>,
    pub ovb_signs: Vec<&'static str>,
    pub meb_full: Vec<f64>,
    pub meb_full_signs: Vec<&'static str>,
    pub meb_z: Vec<f64>,
    /// Present only when the structure is classical with uncorrelated errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_terms: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub additive_terms: Option<Vec<f64>>,
    /// Tolerance used for the sign classifications above.
    pub sign_tolerance: f64,
}

/// Evaluate all bias quantities for one structure. Pass `err` when the
/// blocks were built with [`CovarianceBlocks::classical_uncorrelated`] to
/// include Omega and the attenuation/additive split.
pub fn analyze(
    blocks: &CovarianceBlocks,
    beta: &CoefficientVector,
    err: Option<&ErrorVariances>,
) -> Result<BiasReport> {
    let ovb_vec = ovb(blocks, beta)?;
    let meb_vec = meb_full(blocks, beta)?;
    let meb_z_vec = meb_z(blocks, beta)?;
    let decomp = match err {
        Some(err) => Some(omega_and_decomposition(
            &blocks.cov_zz,
            &blocks.cov_zx,
            &blocks.cov_xx,
            err,
            &beta.beta_x,
        )?),
        None => None,
    };
    Ok(BiasReport {
        ovb_signs: ovb_vec.iter().map(|&v| classify_sign(v)).collect(),
        meb_full_signs: meb_vec.iter().map(|&v| classify_sign(v)).collect(),
        ovb: ovb_vec,
        meb_full: meb_vec,
        meb_z: meb_z_vec,
        omega: decomp.as_ref().map(|d| d.omega.to_rows()),
        attenuation_terms: decomp.as_ref().map(|d| d.attenuation.clone()),
        additive_terms: decomp.map(|d| d.additive),
        sign_tolerance: SIGN_TOLERANCE,
    })
}
