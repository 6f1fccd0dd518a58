//! Randomized verification battery for the sign and shrinkage guarantees,
//! plus the instance generators and the simulation oracle it runs on.
//!
//! Each check draws `n_instances` random structures from its own seeded
//! stream and verifies an exact property (sign structure of Omega, zero
//! Berkson bias, the shrinkage-factor identity, classical-limit
//! convergence, the contaminated-proxy closed form, M-matrix inverse
//! nonnegativity, and the nonpositive-OVB guarantee). Failures carry a
//! per-instance description so a red run is actionable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::assumptions;
use crate::bias::{self, CoefficientVector, CovarianceBlocks, ErrorVariances};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_inverse, is_m_matrix, RectMatrix, SymMatrix, SIGN_TOLERANCE,
};
use crate::montecarlo::{self, SimConfig};

/// Test hook: deliberately corrupt an intermediate quantity so the harness
/// can prove it detects violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Flip the sign of Omega's off-diagonal entries.
    OmegaSignFlip,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub n_instances: u64,
    pub n_failures: u64,
    pub passed: bool,
    /// First few failure descriptions.
    pub failures: Vec<String>,
}

impl CheckResult {
    fn new(name: &str, n_instances: u64) -> Self {
        CheckResult {
            name: name.to_string(),
            n_instances,
            n_failures: 0,
            passed: true,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, message: String) {
        self.n_failures += 1;
        self.passed = false;
        if self.failures.len() < 10 {
            self.failures.push(message);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryReport {
    pub n_instances: u64,
    pub seed: u64,
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Random instance generators shared by the battery and the test suites.
pub mod gen {
    use super::*;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }

    /// Random PD matrix with diagonal near 1: a normalized Wishart draw
    /// with enough degrees of freedom to stay well conditioned.
    pub fn random_pd<R: Rng>(dim: usize, rng: &mut R) -> SymMatrix {
        let dof = (dim + 20) as u32;
        let w = montecarlo::sample_wishart(&SymMatrix::identity(dim), dof, rng)
            .expect("identity scale is PD");
        w.scale(1.0 / f64::from(dof))
    }

    /// Fully general blocks: every submatrix of one random PD (p + 2d)
    /// joint covariance, so (Z, X, W) is a realizable triple.
    pub fn random_blocks<R: Rng>(p: usize, d: usize, rng: &mut R) -> CovarianceBlocks {
        let full = random_pd(p + 2 * d, rng);
        let z: Vec<usize> = (0..p).collect();
        let x: Vec<usize> = (p..p + d).collect();
        let w: Vec<usize> = (p + d..p + 2 * d).collect();
        CovarianceBlocks::new(
            full.submatrix(&z),
            RectMatrix::from_fn(p, d, |i, j| full.get(i, p + j)),
            RectMatrix::from_fn(p, d, |i, j| full.get(i, p + d + j)),
            full.submatrix(&x),
            RectMatrix::from_fn(d, d, |i, j| full.get(p + i, p + d + j)),
            full.submatrix(&w),
        )
        .expect("principal submatrices of a PD matrix are PD")
    }

    /// Berkson structure: X = W + E with E independent of (Z, W), so
    /// B = C, F = G and D = G + Cov(E).
    pub fn random_berkson_blocks<R: Rng>(p: usize, d: usize, rng: &mut R) -> CovarianceBlocks {
        let zw = random_pd(p + d, rng);
        let cov_zz = zw.submatrix(&(0..p).collect::<Vec<_>>());
        let cov_zw = RectMatrix::from_fn(p, d, |i, j| zw.get(i, p + j));
        let cov_ww = zw.submatrix(&(p..p + d).collect::<Vec<_>>());
        let err = random_pd(d, rng).scale(0.5);
        let cov_xx = cov_ww.add(&err).expect("dims match");
        CovarianceBlocks::new(
            cov_zz,
            cov_zw.clone(),
            cov_zw,
            cov_xx,
            RectMatrix::from_sym(&cov_ww),
            cov_ww,
        )
        .expect("Berkson construction is PD")
    }

    /// Classical structure with a full (possibly correlated) error
    /// covariance. Returns the blocks and the error covariance used.
    pub fn random_classical_blocks<R: Rng>(
        p: usize,
        d: usize,
        rng: &mut R,
    ) -> (CovarianceBlocks, SymMatrix) {
        let zx = random_pd(p + d, rng);
        let err = random_pd(d, rng).scale(0.4);
        let blocks = CovarianceBlocks::classical(
            zx.submatrix(&(0..p).collect::<Vec<_>>()),
            RectMatrix::from_fn(p, d, |i, j| zx.get(i, p + j)),
            zx.submatrix(&(p..p + d).collect::<Vec<_>>()),
            &err,
        )
        .expect("classical construction is PD");
        (blocks, err)
    }

    /// Nonpositive coefficient vector with standard-normal Z entries.
    pub fn random_beta<R: Rng>(p: usize, d: usize, rng: &mut R) -> CoefficientVector {
        let beta_z = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let beta_x = (0..d).map(|_| -rng.random_range(0.0..1.5)).collect();
        CoefficientVector::new(beta_z, beta_x)
    }

    /// Instance for the Omega sign checks: a classical uncorrelated
    /// structure whose (Z, X) covariance has strictly positive pairwise
    /// partial correlations between all X entries.
    pub struct PartialPositiveInstance {
        pub cov_zz: SymMatrix,
        pub cov_zx: RectMatrix,
        pub cov_xx: SymMatrix,
        pub err: ErrorVariances,
        pub beta_x: Vec<f64>,
    }

    /// Built by sampling the precision matrix of (Z, X) directly: the X
    /// block gets strictly negative off-diagonal entries (equivalently,
    /// positive partial correlations) and strict diagonal dominance keeps
    /// it PD; inverting gives the covariance.
    pub fn random_partial_positive_instance<R: Rng>(
        p: usize,
        d: usize,
        rng: &mut R,
    ) -> PartialPositiveInstance {
        let n = p + d;
        let mut prec = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..i {
                let v = if i >= p && j >= p {
                    -rng.random_range(0.05..0.5)
                } else {
                    rng.random_range(-0.3..0.3)
                };
                prec.set(i, j, v);
            }
        }
        for i in 0..n {
            let rowsum: f64 = (0..n).filter(|&j| j != i).map(|j| prec.get(i, j).abs()).sum();
            prec.set(i, i, rowsum + rng.random_range(0.5..1.5));
        }
        let cov = cholesky_inverse(&prec).expect("diagonally dominant precision is PD");
        debug_assert!(assumptions::check_pairwise_partial_pc_plus(&cov, p).unwrap());
        let err = ErrorVariances::new((0..d).map(|_| rng.random_range(0.0..1.5)).collect())
            .expect("nonnegative");
        let beta_x = (0..d).map(|_| -rng.random_range(0.0..2.0)).collect();
        PartialPositiveInstance {
            cov_zz: cov.submatrix(&(0..p).collect::<Vec<_>>()),
            cov_zx: RectMatrix::from_fn(p, d, |i, j| cov.get(i, p + j)),
            cov_xx: cov.submatrix(&(p..n).collect::<Vec<_>>()),
            err,
            beta_x,
        }
    }

    /// Classical instance with moderate coefficients, sized so a
    /// 200k-sample OLS drift resolves the formula values well inside an
    /// absolute 0.01 tolerance.
    pub fn random_drift_instance<R: Rng>(rng: &mut R) -> (CovarianceBlocks, CoefficientVector) {
        let p = rng.random_range(1..=3);
        let d = rng.random_range(1..=3);
        let (blocks, _) = random_classical_blocks(p, d, rng);
        let beta = CoefficientVector::new(
            (0..p).map(|_| rng.random_range(-0.5..0.5)).collect(),
            (0..d).map(|_| -rng.random_range(0.1..0.6)).collect(),
        );
        (blocks, beta)
    }

    /// Random symmetric M-matrix via nonpositive off-diagonals and strict
    /// diagonal dominance.
    pub fn random_m_matrix<R: Rng>(dim: usize, rng: &mut R) -> SymMatrix {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..i {
                m.set(i, j, -rng.random_range(0.0..1.0));
            }
        }
        for i in 0..dim {
            let rowsum: f64 = (0..dim).filter(|&j| j != i).map(|j| m.get(i, j).abs()).sum();
            m.set(i, i, rowsum + rng.random_range(0.1..1.0));
        }
        m
    }
}

/// Empirical large-sample check of the bias formulas: simulate Gaussian
/// (Z, X, W) from the assembled joint covariance, build Y from the linear
/// model with independent N(0, sigma_eps^2) noise, run the two OLS
/// regressions, and return the coefficient drifts
/// (beta_hat_Z - beta_Z, beta_hat_{Z,W} - beta).
///
/// This is an independent route to the same limits the closed forms give;
/// it never touches the bias formulas themselves.
pub fn empirical_ols_drift(
    blocks: &CovarianceBlocks,
    beta: &CoefficientVector,
    sigma_eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = blocks.num_z;
    let d = blocks.num_x;
    let full = blocks.assemble_full();
    let chol = full
        .cholesky()
        .map_err(|_| Error::NotPositiveDefinite("joint Cov(Z,X,W) for simulation".into()))?;
    let l = chol.lower();
    let dim = p + 2 * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma_eps).expect("valid sd");

    // streaming cross-products for the two regressions (centered online)
    let mut count = 0.0;
    let mut mean = vec![0.0; dim + 1]; // last entry: y
    let mut cross = SymMatrix::zeros(dim + 1);
    let mut delta = vec![0.0; dim + 1];
    let mut z = vec![0.0; dim];
    let mut v = vec![0.0; dim + 1];
    for _ in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..dim {
            let mut s = 0.0;
            for k in 0..=i {
                s += l.get(i, k) * z[k];
            }
            v[i] = s;
        }
        let mut y = noise.sample(&mut rng);
        for k in 0..p {
            y += v[k] * beta.beta_z[k];
        }
        for k in 0..d {
            y += v[p + k] * beta.beta_x[k];
        }
        v[dim] = y;
        // Welford-style update of means and centered cross-products
        count += 1.0;
        for i in 0..=dim {
            delta[i] = v[i] - mean[i];
        }
        for i in 0..=dim {
            mean[i] += delta[i] / count;
        }
        for i in 0..=dim {
            for j in 0..=i {
                let upd = delta[i] * (v[j] - mean[j]);
                cross.set(i, j, cross.get(i, j) + upd);
            }
        }
    }

    let ols = |idx: &[usize]| -> Result<Vec<f64>> {
        let xtx = SymMatrix::from_fn(idx.len(), |i, j| cross.get(idx[i], idx[j]));
        let xty: Vec<f64> = idx.iter().map(|&i| cross.get(i, dim)).collect();
        Ok(xtx.cholesky()?.solve(&xty))
    };

    let z_idx: Vec<usize> = (0..p).collect();
    let zw_idx: Vec<usize> = (0..p).chain(p + d..dim).collect();
    let beta_hat_z = ols(&z_idx)?;
    let beta_hat_zw = ols(&zw_idx)?;

    let drift_z: Vec<f64> = (0..p).map(|k| beta_hat_z[k] - beta.beta_z[k]).collect();
    let stacked = beta.stacked();
    let drift_zw: Vec<f64> = (0..p + d).map(|k| beta_hat_zw[k] - stacked[k]).collect();
    Ok((drift_z, drift_zw))
}

/// Omega sign structure, the attenuation/additive identity, and the two
/// zero-injection consequences (perfectly measured entries and null
/// coefficients keep nonpositive MEB).
pub fn check_omega_sign_structure(n_instances: u64, seed: u64, fault: Fault) -> CheckResult {
    let mut result = CheckResult::new("omega_sign_structure", n_instances);
    for t in 0..n_instances {
        let mut rng = gen::rng(seed, t);
        let p = rng.random_range(1..=3);
        let d = rng.random_range(2..=4);
        let mut inst = gen::random_partial_positive_instance(p, d, &mut rng);
        // inject boundary cases: one error-free entry, one null coefficient
        let zero_err = rng.random_range(0..d);
        let zero_beta = rng.random_range(0..d);
        inst.err.0[zero_err] = 0.0;
        inst.beta_x[zero_beta] = 0.0;

        let dec = match bias::omega_and_decomposition(
            &inst.cov_zz,
            &inst.cov_zx,
            &inst.cov_xx,
            &inst.err,
            &inst.beta_x,
        ) {
            Ok(d) => d,
            Err(e) => {
                result.fail(format!("instance {t}: {e}"));
                continue;
            }
        };
        let mut omega = dec.omega.clone();
        if fault == Fault::OmegaSignFlip {
            for i in 0..d {
                for j in 0..i {
                    omega.set(i, j, -omega.get(i, j));
                }
            }
        }
        for j in 0..d {
            let upper = if inst.err.0[j] > 0.0 {
                1.0 / inst.err.0[j] + SIGN_TOLERANCE
            } else {
                f64::INFINITY
            };
            let diag = omega.get(j, j);
            if !(diag > 0.0 && diag <= upper) {
                result.fail(format!(
                    "instance {t}: Omega[{j}][{j}] = {diag} outside (0, 1/a_j]"
                ));
            }
            for jp in 0..d {
                if jp != j && omega.get(j, jp) > SIGN_TOLERANCE {
                    result.fail(format!(
                        "instance {t}: Omega[{j}][{jp}] = {} > 0",
                        omega.get(j, jp)
                    ));
                }
            }
        }
        // decomposition identity against the generic MEB formula
        let blocks = match CovarianceBlocks::classical_uncorrelated(
            inst.cov_zz.clone(),
            inst.cov_zx.clone(),
            inst.cov_xx.clone(),
            &inst.err,
        ) {
            Ok(b) => b,
            Err(e) => {
                result.fail(format!("instance {t}: {e}"));
                continue;
            }
        };
        let beta = CoefficientVector::new(vec![0.0; p], inst.beta_x.clone());
        let meb = match bias::meb_full(&blocks, &beta) {
            Ok(m) => m,
            Err(e) => {
                result.fail(format!("instance {t}: {e}"));
                continue;
            }
        };
        for j in 0..d {
            let sum = dec.attenuation[j] + dec.additive[j];
            if (sum - meb[p + j]).abs() > 1e-10 {
                result.fail(format!(
                    "instance {t}: decomposition {sum} != MEB {} at entry {j}",
                    meb[p + j]
                ));
            }
        }
        // zero injections: nonpositive MEB at the boundary entries
        if meb[p + zero_err] > SIGN_TOLERANCE {
            result.fail(format!(
                "instance {t}: error-free entry {zero_err} has positive MEB {}",
                meb[p + zero_err]
            ));
        }
        if meb[p + zero_beta] > SIGN_TOLERANCE {
            result.fail(format!(
                "instance {t}: null entry {zero_beta} has positive MEB {}",
                meb[p + zero_beta]
            ));
        }
    }
    result
}

/// Under weak partial positivity and nonpositive coefficients the measured
/// pollutant's OVB cannot be positive. Instances come from the Monte Carlo
/// generator, filtered to the stratum where the condition holds.
pub fn check_ovb_nonpositive_guarantee(n_instances: u64, seed: u64) -> CheckResult {
    let mut result = CheckResult::new("ovb_nonpositive_guarantee", n_instances);
    let config = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let p = config.p;
    let mut found = 0u64;
    let mut stream = 0u64;
    // the condition holds in roughly a fifth of draws; cap the search
    let max_streams = n_instances.saturating_mul(60).max(1000);
    while found < n_instances && stream < max_streams {
        let mut rng = gen::rng(seed, stream);
        stream += 1;
        let Ok((blocks, cov_joint)) = montecarlo::generate_structure(&config, &mut rng) else {
            continue;
        };
        let Ok(weak) = assumptions::check_weak_partial_pc_plus(&cov_joint, p, p - 1) else {
            continue;
        };
        if !weak {
            continue;
        }
        found += 1;
        let beta = montecarlo::sample_coefficients(&config, &mut rng);
        match bias::ovb(&blocks, &beta) {
            Ok(v) => {
                if v[p - 1] > SIGN_TOLERANCE {
                    result.fail(format!(
                        "stream {}: OVB entry {} positive under the guarantee",
                        stream - 1,
                        v[p - 1]
                    ));
                }
            }
            Err(e) => result.fail(format!("stream {}: {e}", stream - 1)),
        }
    }
    if found < n_instances {
        result.fail(format!(
            "only found {found}/{n_instances} qualifying instances"
        ));
    }
    result
}

/// Berkson-type error induces exactly zero bias.
pub fn check_berkson_zero_bias(n_instances: u64, seed: u64) -> CheckResult {
    let mut result = CheckResult::new("berkson_zero_bias", n_instances);
    for t in 0..n_instances {
        let mut rng = gen::rng(seed, t);
        let p = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let blocks = gen::random_berkson_blocks(p, d, &mut rng);
        let beta = gen::random_beta(p, d, &mut rng);
        match bias::meb_full(&blocks, &beta) {
            Ok(meb) => {
                let worst = meb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if worst > 1e-10 {
                    result.fail(format!("instance {t}: ||MEB||_inf = {worst}"));
                }
            }
            Err(e) => result.fail(format!("instance {t}: {e}")),
        }
    }
    result
}

/// When the proxy has zero partial correlation with Z given X (d = 1), the
/// MEB equals the shrinkage factor times the OVB, with the factor in
/// [0, 1) for correlated proxies and exactly 1 at zero correlation.
pub fn check_shrinkage_factor(n_instances: u64, seed: u64) -> CheckResult {
    let mut result = CheckResult::new("proxy_shrinkage_factor", n_instances);
    for t in 0..n_instances {
        let mut rng = gen::rng(seed, t);
        let p = rng.random_range(1..=4);
        let cov_zz = gen::random_pd(p, &mut rng);
        let b_col: Vec<f64> = (0..p).map(|_| rng.random_range(-0.4..0.4)).collect();
        let q = {
            let sol = cov_zz.cholesky().unwrap().solve(&b_col);
            b_col.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>()
        };
        let sigma_x = (q + rng.random_range(0.1..1.5)).sqrt();
        let rho_xw = if t % 5 == 0 {
            0.0
        } else {
            rng.random_range(-0.95..0.95)
        };
        let sigma_w = rng.random_range(0.5..1.5);

        let factor = match bias::meb_shrinkage_factor(&cov_zz, &b_col, sigma_x, rho_xw) {
            Ok(f) => f,
            Err(e) => {
                result.fail(format!("instance {t}: {e}"));
                continue;
            }
        };
        if rho_xw == 0.0 {
            if factor != 1.0 {
                result.fail(format!("instance {t}: factor {factor} != 1 at rho = 0"));
                continue;
            }
        } else if !(0.0..1.0).contains(&factor) {
            result.fail(format!("instance {t}: factor {factor} outside [0, 1)"));
            continue;
        }

        let b = RectMatrix::from_fn(p, 1, |i, _| b_col[i]);
        let c = b.scale(sigma_w * rho_xw / sigma_x);
        let blocks = match CovarianceBlocks::new(
            cov_zz.clone(),
            b,
            c,
            SymMatrix::diagonal(&[sigma_x * sigma_x]),
            RectMatrix::from_fn(1, 1, |_, _| sigma_x * sigma_w * rho_xw),
            SymMatrix::diagonal(&[sigma_w * sigma_w]),
        ) {
            Ok(bl) => bl,
            Err(e) => {
                result.fail(format!("instance {t}: {e}"));
                continue;
            }
        };
        let beta = CoefficientVector::new(vec![0.0; p], vec![-rng.random_range(0.1..2.0)]);
        let (Ok(ovb), Ok(meb)) = (bias::ovb(&blocks, &beta), bias::meb_z(&blocks, &beta)) else {
            result.fail(format!("instance {t}: bias evaluation failed"));
            continue;
        };
        for k in 0..p {
            if (meb[k] - factor * ovb[k]).abs() > 1e-10 {
                result.fail(format!(
                    "instance {t}: MEB {} != factor * OVB {} at entry {k}",
                    meb[k],
                    factor * ovb[k]
                ));
            }
        }
    }
    result
}

/// As the classical error scale grows the Z-coefficient MEB converges to
/// the OVB, monotonically over the sampled scales.
pub fn check_classical_limit(n_instances: u64, seed: u64) -> CheckResult {
    let mut result = CheckResult::new("classical_limit_convergence", n_instances);
    let scales = [1.0, 1e2, 1e4, 1e6, 1e8];
    for t in 0..n_instances {
        let mut rng = gen::rng(seed, t);
        let p = rng.random_range(1..=3);
        let d = rng.random_range(1..=3);
        let zx = gen::random_pd(p + d, &mut rng);
        let cov_zz = zx.submatrix(&(0..p).collect::<Vec<_>>());
        let cov_zx = RectMatrix::from_fn(p, d, |i, j| zx.get(i, p + j));
        let cov_xx = zx.submatrix(&(p..p + d).collect::<Vec<_>>());
        let beta = CoefficientVector::new(
            vec![0.0; p],
            (0..d).map(|_| -rng.random_range(0.2..1.5)).collect(),
        );
        let mut last_gap = f64::INFINITY;
        let mut ovb_norm = 0.0;
        let mut final_gap = 0.0;
        let mut ok = true;
        for &scale in &scales {
            match bias::classical_limit_check(&cov_zz, &cov_zx, &cov_xx, &beta, scale) {
                Ok((meb, ovb)) => {
                    ovb_norm = ovb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let gap = meb
                        .iter()
                        .zip(&ovb)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    if gap >= last_gap {
                        result.fail(format!(
                            "instance {t}: gap {gap} not below {last_gap} at scale {scale}"
                        ));
                        ok = false;
                        break;
                    }
                    last_gap = gap;
                    final_gap = gap;
                }
                Err(e) => {
                    result.fail(format!("instance {t}: {e}"));
                    ok = false;
                    break;
                }
            }
        }
        if ok && final_gap >= 1e-5 * ovb_norm {
            result.fail(format!(
                "instance {t}: final gap {final_gap} not below 1e-5 * {ovb_norm}"
            ));
        }
    }
    result
}

/// The contaminated proxy W = X + kappa Z yields MEB = -kappa beta_X
/// exactly, whatever the OVB.
pub fn check_contaminated_proxy(n_instances: u64, seed: u64) -> CheckResult {
    let mut result = CheckResult::new("contaminated_proxy_closed_form", n_instances);
    for t in 0..n_instances {
        let mut rng = gen::rng(seed, t);
        let var_z: f64 = rng.random_range(0.5..2.0);
        let var_x: f64 = rng.random_range(0.5..2.0);
        let max_cov = (var_z * var_x).sqrt() * 0.9;
        let cov = rng.random_range(-max_cov..max_cov);
        let kappa = rng.random_range(-3.0..3.0);
        let beta_x = -rng.random_range(0.0..2.0);
        match bias::contaminated_proxy_bias(kappa, var_z, cov, var_x, beta_x) {
            Ok((_, meb)) => {
                if (meb - (-kappa * beta_x)).abs() > 1e-10 {
                    result.fail(format!(
                        "instance {t}: MEB {meb} != {}",
                        -kappa * beta_x
                    ));
                }
            }
            Err(e) => result.fail(format!("instance {t}: {e}")),
        }
    }
    result
}

/// Inverses of symmetric M-matrices are entrywise nonnegative.
pub fn check_m_matrix_inverse(n_instances: u64, seed: u64) -> CheckResult {
    let mut result = CheckResult::new("m_matrix_inverse_nonnegative", n_instances);
    for t in 0..n_instances {
        let mut rng = gen::rng(seed, t);
        let dim = rng.random_range(2..=8);
        let m = gen::random_m_matrix(dim, &mut rng);
        if !is_m_matrix(&m) {
            result.fail(format!("instance {t}: generator produced a non-M-matrix"));
            continue;
        }
        match cholesky_inverse(&m) {
            Ok(inv) => {
                for i in 0..dim {
                    for j in 0..=i {
                        if inv.get(i, j) < -SIGN_TOLERANCE {
                            result.fail(format!(
                                "instance {t}: inverse entry ({i},{j}) = {}",
                                inv.get(i, j)
                            ));
                        }
                    }
                }
            }
            Err(e) => result.fail(format!("instance {t}: {e}")),
        }
    }
    result
}

/// Run every check. Distinct seeds derive from the base seed so checks
/// stay independent.
pub fn run_battery(n_instances: u64, seed: u64, fault: Fault) -> BatteryReport {
    let checks = vec![
        check_omega_sign_structure(n_instances, seed ^ 0x01, fault),
        check_ovb_nonpositive_guarantee(n_instances.min(200), seed ^ 0x02),
        check_berkson_zero_bias(n_instances, seed ^ 0x03),
        check_shrinkage_factor(n_instances, seed ^ 0x04),
        check_classical_limit(n_instances, seed ^ 0x05),
        check_contaminated_proxy(n_instances, seed ^ 0x06),
        check_m_matrix_inverse(n_instances, seed ^ 0x07),
    ];
    BatteryReport {
        n_instances,
        seed,
        all_passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
