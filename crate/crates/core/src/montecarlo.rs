//! Monte Carlo experiment over random covariance structures: draws latent
//! and error covariances from Wishart distributions, nonpositive pollutant
//! coefficients from a negated Gamma, evaluates the bias formulas, and
//! tallies five sign phenomena overall, within assumption strata, and
//! binned by average pairwise pollutant correlation.
//!
//! Reproducibility contract: each trial draws from its own ChaCha8 stream
//! keyed by (seed, trial index), and all accumulators are integer counts,
//! so results are identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assumptions;
use crate::bias::{self, CoefficientVector, CovarianceBlocks};
use crate::error::{Error, Result};
use crate::linalg::{RectMatrix, SymMatrix, SIGN_TOLERANCE};

pub const N_PHENOMENA: usize = 5;
const N_BINS: usize = 8;
const R2_HIST_BINS: usize = 20;

/// Experiment parameters. Defaults reproduce the reference setup:
/// p = d = 5, latent covariance Wishart_{10}(V, 10) with V = blockdiag(I_4,
/// 0.8 I_6 + 0.2 J), error covariances Wishart_5(I/3, 10), coefficient
/// magnitudes Gamma(1.4, rate 1.6), and the last two error-prone
/// coefficients pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_trials: u64,
    pub seed: u64,
    /// Number of error-free covariates; the last one is a pollutant.
    pub p: usize,
    /// Number of error-prone covariates (all pollutants).
    pub d: usize,
    pub wishart_err_scale: f64,
    pub wishart_err_dof: u32,
    pub latent_dof: u32,
    pub latent_offdiag: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// How many trailing entries of beta_X are exactly zero.
    pub n_null_pollutants: usize,
    /// Count Z^(p) as a pollutant for correlation averages and the
    /// pairwise positivity checks.
    pub include_z_pollutant: bool,
    pub max_retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_trials: 0,
            seed: 0,
            p: 5,
            d: 5,
            wishart_err_scale: 1.0 / 3.0,
            wishart_err_dof: 10,
            latent_dof: 10,
            latent_offdiag: 0.2,
            gamma_shape: 1.4,
            gamma_rate: 1.6,
            n_null_pollutants: 2,
            include_z_pollutant: true,
            max_retries: 100,
            threads: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 1 || self.d < 1 {
            return Err(Error::PreconditionViolated("p and d must be >= 1".into()));
        }
        if (self.latent_dof as usize) < self.p + self.d {
            return Err(Error::PreconditionViolated(format!(
                "latent Wishart needs dof >= {} (p + d), got {}",
                self.p + self.d,
                self.latent_dof
            )));
        }
        if (self.wishart_err_dof as usize) < self.d {
            return Err(Error::PreconditionViolated(format!(
                "error Wishart needs dof >= {} (d), got {}",
                self.d, self.wishart_err_dof
            )));
        }
        if self.gamma_shape.is_nan() || self.gamma_shape <= 0.0 || self.gamma_rate.is_nan() || self.gamma_rate <= 0.0 {
            return Err(Error::PreconditionViolated(
                "gamma shape and rate must be positive".into(),
            ));
        }
        if self.wishart_err_scale.is_nan() || self.wishart_err_scale <= 0.0 {
            return Err(Error::PreconditionViolated(
                "wishart_err_scale must be positive".into(),
            ));
        }
        if self.n_null_pollutants > self.d {
            return Err(Error::PreconditionViolated(format!(
                "n_null_pollutants = {} exceeds d = {}",
                self.n_null_pollutants, self.d
            )));
        }
        Ok(())
    }

    /// Indices of pollutants within the (Z, X) covariance.
    fn pollutant_indices(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.d + 1);
        if self.include_z_pollutant {
            v.push(self.p - 1);
        }
        v.extend(self.p..self.p + self.d);
        v
    }
}

/// One Wishart(scale, dof) draw via the Bartlett decomposition: a lower
/// triangular factor with chi-distributed diagonal and standard-normal
/// subdiagonal, conjugated by the Cholesky factor of the scale matrix.
pub fn sample_wishart<R: Rng>(scale: &SymMatrix, dof: u32, rng: &mut R) -> Result<SymMatrix> {
    let dim = scale.dim();
    if (dof as usize) < dim {
        return Err(Error::PreconditionViolated(format!(
            "Wishart dof {dof} below dimension {dim}"
        )));
    }
    let scale_l = scale.cholesky()?.lower();
    let mut bartlett = RectMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(f64::from(dof) - i as f64).expect("valid dof");
        bartlett.set(i, i, chi.sample(rng).sqrt());
    }
    for i in 1..dim {
        for j in 0..i {
            bartlett.set(i, j, rng.sample(StandardNormal));
        }
    }
    // L = scale_l * bartlett (both lower triangular)
    let l = RectMatrix::from_fn(dim, dim, |i, j| {
        if j > i {
            0.0
        } else {
            (j..=i).map(|k| scale_l.get(i, k) * bartlett.get(k, j)).sum()
        }
    });
    Ok(SymMatrix::from_fn(dim, |i, j| {
        (0..=j).map(|k| l.get(i, k) * l.get(j, k)).sum()
    }))
}

/// Coefficient draw: non-pollutant Z entries are standard normal (they do
/// not enter any bias formula), the Z pollutant and the nonnull X entries
/// are negated Gamma(shape, rate) draws, and the last `n_null_pollutants`
/// X entries are exactly zero.
pub fn sample_coefficients<R: Rng>(config: &SimConfig, rng: &mut R) -> CoefficientVector {
    let gamma = Gamma::new(config.gamma_shape, 1.0 / config.gamma_rate).expect("valid gamma");
    let mut beta_z = Vec::with_capacity(config.p);
    for _ in 0..config.p - 1 {
        beta_z.push(rng.sample::<f64, _>(StandardNormal));
    }
    beta_z.push(-gamma.sample(rng));
    let mut beta_x = vec![0.0; config.d];
    for item in beta_x.iter_mut().take(config.d - config.n_null_pollutants) {
        *item = -gamma.sample(rng);
    }
    CoefficientVector::new(beta_z, beta_x)
}

/// Latent-plus-error covariance structure: X = L_X + U_b and W = L_X + U_c
/// with independent error components, so the measurement error W - X has
/// covariance Cov(U_b) + Cov(U_c) and is neither classical nor diagonal.
/// Returns the assembled blocks and Cov(Z, X).
pub fn generate_structure<R: Rng>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<(CovarianceBlocks, SymMatrix)> {
    let p = config.p;
    let d = config.d;
    let v_latent = SymMatrix::from_fn(p + d, |i, j| {
        if i == j {
            1.0
        } else if i >= p - 1 && j >= p - 1 {
            config.latent_offdiag
        } else {
            0.0
        }
    });
    let err_scale = SymMatrix::identity(d).scale(config.wishart_err_scale);
    for _ in 0..config.max_retries {
        let sigma_latent = sample_wishart(&v_latent, config.latent_dof, rng)?;
        let sigma_b = sample_wishart(&err_scale, config.wishart_err_dof, rng)?;
        let sigma_c = sample_wishart(&err_scale, config.wishart_err_dof, rng)?;

        let cov_zz = sigma_latent.submatrix(&(0..p).collect::<Vec<_>>());
        let cov_zx = RectMatrix::from_fn(p, d, |i, j| sigma_latent.get(i, p + j));
        let latent_xx = sigma_latent.submatrix(&(p..p + d).collect::<Vec<_>>());
        let cov_xx = latent_xx.add(&sigma_b)?;
        let cov_xw = RectMatrix::from_sym(&latent_xx);
        let cov_ww = latent_xx.add(&sigma_c)?;

        match CovarianceBlocks::new(
            cov_zz.clone(),
            cov_zx.clone(),
            cov_zx.clone(),
            cov_xx.clone(),
            cov_xw,
            cov_ww,
        ) {
            Ok(blocks) => {
                let cov_joint = SymMatrix::from_two_blocks(&cov_zz, &cov_zx, &cov_xx);
                return Ok((blocks, cov_joint));
            }
            Err(Error::NotPositiveDefinite(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed(format!(
        "no positive definite structure after {} attempts",
        config.max_retries
    )))
}

/// Everything recorded from a single trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Phenomenon flags with the strict convention (bias < -tol).
    pub phen_strict: [bool; N_PHENOMENA],
    /// Same flags with the weak convention (bias <= tol).
    pub phen_weak: [bool; N_PHENOMENA],
    pub avg_rho: f64,
    pub pairwise_pc_plus: bool,
    pub weak_partial_pc_plus: bool,
    pub pairwise_partial_pc_plus: bool,
    /// Squared correlation of each proxy with its true covariate.
    pub r_squared: Vec<f64>,
    /// Weak partial positivity held but the OVB entry was positive.
    /// Must never happen; tracked so a violation is loud.
    pub guarantee_violation: bool,
}

/// Run one trial on its own RNG substream.
pub fn run_trial(config: &SimConfig, trial_index: u64) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial_index);
    let (blocks, cov_joint) = generate_structure(config, &mut rng)?;
    let beta = sample_coefficients(config, &mut rng);

    let ovb = bias::ovb(&blocks, &beta)?;
    let meb = bias::meb_full(&blocks, &beta)?;
    let p = config.p;
    let d = config.d;

    // Watched entries: OVB and MEB of the measured pollutant Z^(p), MEB of
    // the last (null) X entry, MEB of the first (nonnull) X entry.
    let values = [ovb[p - 1], meb[p - 1], meb[p + d - 1], meb[p]];
    let mut phen_strict = [false; N_PHENOMENA];
    let mut phen_weak = [false; N_PHENOMENA];
    for (k, v) in values.iter().enumerate() {
        phen_strict[k] = *v < -SIGN_TOLERANCE;
        phen_weak[k] = *v <= SIGN_TOLERANCE;
    }
    phen_strict[4] = ovb[p - 1].abs() > meb[p - 1].abs();
    phen_weak[4] = phen_strict[4];

    let pollutants = config.pollutant_indices();
    let avg_rho = assumptions::avg_pairwise_correlation(&cov_joint, &pollutants)?;
    let pairwise = assumptions::check_pairwise_pc_plus(&cov_joint, &pollutants)?;
    let weak = assumptions::check_weak_partial_pc_plus(&cov_joint, p, p - 1)?;
    let pairwise_partial =
        assumptions::check_pairwise_partial_pc_plus_over(&cov_joint, &pollutants)?;

    let r_squared = (0..d)
        .map(|j| {
            let f = blocks.cov_xw.get(j, j);
            f * f / (blocks.cov_xx.get(j, j) * blocks.cov_ww.get(j, j))
        })
        .collect();

    Ok(TrialOutcome {
        phen_strict,
        phen_weak,
        avg_rho,
        pairwise_pc_plus: pairwise,
        weak_partial_pc_plus: weak,
        pairwise_partial_pc_plus: pairwise_partial,
        r_squared,
        guarantee_violation: weak && ovb[p - 1] > SIGN_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    n: u64,
    strict: [u64; N_PHENOMENA],
    weak: [u64; N_PHENOMENA],
}

impl Counts {
    fn absorb(&mut self, outcome: &TrialOutcome) {
        self.n += 1;
        for k in 0..N_PHENOMENA {
            self.strict[k] += u64::from(outcome.phen_strict[k]);
            self.weak[k] += u64::from(outcome.phen_weak[k]);
        }
    }

    fn merge(&mut self, other: &Counts) {
        self.n += other.n;
        for k in 0..N_PHENOMENA {
            self.strict[k] += other.strict[k];
            self.weak[k] += other.weak[k];
        }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    n_failed: u64,
    guarantee_violations: u64,
    all: Counts,
    pairwise: Counts,
    weak_partial: Counts,
    pairwise_partial: Counts,
    bins: [Counts; N_BINS],
    r2_hist: [u64; R2_HIST_BINS],
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            n_failed: 0,
            guarantee_violations: 0,
            all: Counts::default(),
            pairwise: Counts::default(),
            weak_partial: Counts::default(),
            pairwise_partial: Counts::default(),
            bins: [Counts::default(); N_BINS],
            r2_hist: [0; R2_HIST_BINS],
        }
    }

    fn absorb(&mut self, outcome: &TrialOutcome) {
        self.all.absorb(outcome);
        if outcome.pairwise_pc_plus {
            self.pairwise.absorb(outcome);
        }
        if outcome.weak_partial_pc_plus {
            self.weak_partial.absorb(outcome);
        }
        if outcome.pairwise_partial_pc_plus {
            self.pairwise_partial.absorb(outcome);
        }
        self.bins[bin_index(outcome.avg_rho)].absorb(outcome);
        if let Some(&r2) = outcome.r_squared.first() {
            let b = ((r2 * R2_HIST_BINS as f64) as usize).min(R2_HIST_BINS - 1);
            self.r2_hist[b] += 1;
        }
        self.guarantee_violations += u64::from(outcome.guarantee_violation);
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.n_failed += other.n_failed;
        self.guarantee_violations += other.guarantee_violations;
        self.all.merge(&other.all);
        self.pairwise.merge(&other.pairwise);
        self.weak_partial.merge(&other.weak_partial);
        self.pairwise_partial.merge(&other.pairwise_partial);
        for (a, b) in self.bins.iter_mut().zip(other.bins.iter()) {
            a.merge(b);
        }
        for (a, b) in self.r2_hist.iter_mut().zip(other.r2_hist.iter()) {
            *a += b;
        }
        self
    }
}

/// Bin layout for the average pairwise correlation: one open bin below
/// -0.1, six width-0.1 bins up to 0.5, one open bin above.
fn bin_index(avg_rho: f64) -> usize {
    if avg_rho <= -0.1 {
        0
    } else if avg_rho > 0.5 {
        7
    } else {
        (((avg_rho + 0.1) / 0.1).ceil() as usize).clamp(1, 6)
    }
}

fn bin_label(b: usize) -> (&'static str, Option<f64>, Option<f64>) {
    match b {
        0 => ("<=-0.1", None, Some(-0.1)),
        1 => ("(-0.1,0.0]", Some(-0.1), Some(0.0)),
        2 => ("(0.0,0.1]", Some(0.0), Some(0.1)),
        3 => ("(0.1,0.2]", Some(0.1), Some(0.2)),
        4 => ("(0.2,0.3]", Some(0.2), Some(0.3)),
        5 => ("(0.3,0.4]", Some(0.3), Some(0.4)),
        6 => ("(0.4,0.5]", Some(0.4), Some(0.5)),
        _ => (">0.5", Some(0.5), None),
    }
}

/// Phenomenon counts for one stratum or bin, with frequencies and binomial
/// standard errors precomputed for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTally {
    pub name: String,
    pub n: u64,
    pub count_strict: [u64; N_PHENOMENA],
    pub count_weak: [u64; N_PHENOMENA],
    pub freq_strict: [f64; N_PHENOMENA],
    pub freq_weak: [f64; N_PHENOMENA],
    pub se_strict: [f64; N_PHENOMENA],
    pub se_weak: [f64; N_PHENOMENA],
}

impl StratumTally {
    fn from_counts(name: &str, c: &Counts) -> Self {
        let mut t = StratumTally {
            name: name.to_string(),
            n: c.n,
            count_strict: c.strict,
            count_weak: c.weak,
            freq_strict: [0.0; N_PHENOMENA],
            freq_weak: [0.0; N_PHENOMENA],
            se_strict: [0.0; N_PHENOMENA],
            se_weak: [0.0; N_PHENOMENA],
        };
        if c.n > 0 {
            let n = c.n as f64;
            for k in 0..N_PHENOMENA {
                let ps = c.strict[k] as f64 / n;
                let pw = c.weak[k] as f64 / n;
                t.freq_strict[k] = ps;
                t.freq_weak[k] = pw;
                t.se_strict[k] = (ps * (1.0 - ps) / n).sqrt();
                t.se_weak[k] = (pw * (1.0 - pw) / n).sqrt();
            }
        }
        t
    }
}

/// Same counts for one correlation bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTally {
    pub label: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    #[serde(flatten)]
    pub counts: StratumTally,
}

/// Aggregated experiment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTally {
    pub config: SimConfig,
    pub n_trials: u64,
    pub n_failed: u64,
    /// Trials where the weak partial condition held yet the watched OVB
    /// entry was positive. Zero by theory.
    pub guarantee_violations: u64,
    /// "all", "pairwise_pc_plus", "weak_partial_pc_plus",
    /// "pairwise_partial_pc_plus".
    pub strata: Vec<StratumTally>,
    pub bins: Vec<BinTally>,
    /// Histogram of R^2 between the first proxy and its true covariate,
    /// 20 equal bins on [0, 1].
    pub r2_hist: Vec<u64>,
}

impl SimTally {
    pub fn stratum(&self, name: &str) -> Option<&StratumTally> {
        self.strata.iter().find(|s| s.name == name)
    }

    pub fn bin(&self, label: &str) -> Option<&BinTally> {
        self.bins.iter().find(|b| b.label == label)
    }
}

/// Run the experiment. Trials execute in parallel; the tally is identical
/// for any `threads` setting because every count is an integer reduced
/// associatively over per-trial substreams.
pub fn run_experiment(config: &SimConfig) -> Result<SimTally> {
    config.validate()?;
    let body = || {
        (0..config.n_trials)
            .into_par_iter()
            .fold(Accumulator::new, |mut acc, i| {
                match run_trial(config, i) {
                    Ok(outcome) => acc.absorb(&outcome),
                    Err(_) => acc.n_failed += 1,
                }
                acc
            })
            .reduce(Accumulator::new, Accumulator::merge)
    };
    let acc = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::GenerationFailed(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    };
    Ok(SimTally {
        config: config.clone(),
        n_trials: config.n_trials,
        n_failed: acc.n_failed,
        guarantee_violations: acc.guarantee_violations,
        strata: vec![
            StratumTally::from_counts("all", &acc.all),
            StratumTally::from_counts("pairwise_pc_plus", &acc.pairwise),
            StratumTally::from_counts("weak_partial_pc_plus", &acc.weak_partial),
            StratumTally::from_counts("pairwise_partial_pc_plus", &acc.pairwise_partial),
        ],
        bins: acc
            .bins
            .iter()
            .enumerate()
            .map(|(b, c)| {
                let (label, lower, upper) = bin_label(b);
                BinTally {
                    label: label.to_string(),
                    lower,
                    upper,
                    counts: StratumTally::from_counts(label, c),
                }
            })
            .collect(),
        r2_hist: acc.r2_hist.to_vec(),
    })
}

/// Flatten the tally to CSV: one row per stratum x phenomenon, then one
/// row per bin x phenomenon, with frequency and standard-error columns.
pub fn tally_to_csv(tally: &SimTally) -> String {
    let mut out = String::from(
        "scope,name,phenomenon,n,count_strict,freq_strict,se_strict,count_weak,freq_weak,se_weak\n",
    );
    let mut push_rows = |scope: &str, t: &StratumTally| {
        for k in 0..N_PHENOMENA {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                scope,
                t.name,
                k + 1,
                t.n,
                t.count_strict[k],
                t.freq_strict[k],
                t.se_strict[k],
                t.count_weak[k],
                t.freq_weak[k],
                t.se_weak[k],
            ));
        }
    };
    for s in &tally.strata {
        push_rows("stratum", s);
    }
    for b in &tally.bins {
        push_rows("bin", &b.counts);
    }
    out
}

const PHENOMENON_LABELS: [&str; N_PHENOMENA] = [
    "measured-pollutant OVB negative",
    "measured-pollutant MEB negative",
    "null-pollutant MEB negative",
    "nonnull error-prone MEB negative",
    "|OVB| exceeds |MEB|",
];

/// Human-readable frequency table, one row per phenomenon and one column
/// per assumption stratum.
pub fn format_table(tally: &SimTally) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "trials: {} (failed: {})\n",
        tally.n_trials, tally.n_failed
    ));
    out.push_str(&format!("{:<40}", "phenomenon"));
    for s in &tally.strata {
        out.push_str(&format!("{:>26}", s.name));
    }
    out.push('\n');
    out.push_str(&format!("{:<40}", "stratum size"));
    for s in &tally.strata {
        out.push_str(&format!("{:>26}", s.n));
    }
    out.push('\n');
    for k in 0..N_PHENOMENA {
        out.push_str(&format!("{} {:<38}", k + 1, PHENOMENON_LABELS[k]));
        for s in &tally.strata {
            if s.n == 0 {
                out.push_str(&format!("{:>26}", "--"));
            } else {
                out.push_str(&format!("{:>25.1}%", 100.0 * s.freq_strict[k]));
            }
        }
        out.push('\n');
    }
    out
}
