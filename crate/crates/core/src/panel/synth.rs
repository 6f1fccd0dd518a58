//! Synthetic panel generator with a known ground truth, standing in for
//! real monitor/proxy data. The generating model is the same one the
//! validation scheme fits:
//!
//!   log(Y_itc) = beta_c^T X_it + gamma^T weather_it + lambda t + c_ic + eps_itc
//!
//! Pollutant concentrations are drawn in WHO guideline units (an
//! equicorrelated Gaussian) and written to the panel in ug/m3 via the
//! guideline divisors, so the WHO rescaling path is exercised end to end.
//! The proxy is perfect, classical (W = X + E) or Berkson (X = W + E).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bias::{self, CoefficientVector, CovarianceBlocks};
use crate::error::{Error, Result};
use crate::linalg::{RectMatrix, SymMatrix};
use crate::panel::data::{PanelDataset, PanelRow};
use crate::panel::{Pollutant, ALL_POLLUTANTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxyModel {
    /// W = X exactly.
    Perfect,
    /// W = X + E, E independent with the given per-pollutant sd (WHO units).
    Classical { error_sd_who: [f64; 6] },
    /// X = W + E, E independent of W (zero population bias when the proxy
    /// replaces the truth).
    Berkson { error_sd_who: [f64; 6] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_units: usize,
    pub n_years: usize,
    pub start_year: i32,
    pub crops: Vec<String>,
    /// Per-crop multiplier applied to `beta_who`.
    pub crop_beta_scale: Vec<f64>,
    /// Mean and sd of concentrations in WHO guideline units.
    pub pollutant_mean_who: f64,
    pub pollutant_sd_who: f64,
    /// Equicorrelation between pollutant concentrations.
    pub pollutant_corr: f64,
    /// Coefficients on concentrations in WHO units (log-yield per unit).
    pub beta_who: [f64; 6],
    pub weather_beta: [f64; 4],
    pub trend_per_year: f64,
    pub fixed_effect_sd: f64,
    pub noise_sd: f64,
    pub base_log_yield: f64,
    pub proxy: ProxyModel,
    /// Probability that a monitor cell is missing (proxies stay complete).
    pub monitor_missing_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_units: 200,
            n_years: 18,
            start_year: 2002,
            crops: vec!["corn".to_string(), "soy".to_string()],
            crop_beta_scale: vec![1.0, 0.8],
            pollutant_mean_who: 1.0,
            pollutant_sd_who: 0.25,
            pollutant_corr: 0.5,
            beta_who: [-0.06, -0.1, -0.12, -0.08, -0.1, -0.07],
            weather_beta: [0.02, -0.01, 0.015, -0.02],
            trend_per_year: 0.01,
            fixed_effect_sd: 0.3,
            noise_sd: 0.05,
            base_log_yield: 5.0,
            proxy: ProxyModel::Classical {
                error_sd_who: [0.15; 6],
            },
            monitor_missing_prob: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_units == 0 || self.n_years < 2 {
            return Err(Error::PreconditionViolated(
                "need at least one unit and two years".into(),
            ));
        }
        if self.crops.is_empty() || self.crop_beta_scale.len() != self.crops.len() {
            return Err(Error::PreconditionViolated(
                "crops and crop_beta_scale must be non-empty and parallel".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.monitor_missing_prob) {
            return Err(Error::PreconditionViolated(
                "monitor_missing_prob must be in [0, 1]".into(),
            ));
        }
        let sd_ok = self.pollutant_sd_who > 0.0 && self.pollutant_sd_who.is_finite();
        let corr_ok = self.pollutant_corr > -1.0 / 5.0 && self.pollutant_corr < 1.0;
        if !sd_ok || !corr_ok {
            return Err(Error::PreconditionViolated(
                "pollutant sd must be positive and the equicorrelation strictly inside (-1/5, 1)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Covariance of the Gaussian base draw (WHO units): sd^2 times the
    /// 6x6 equicorrelation matrix.
    fn base_cov_who(&self) -> SymMatrix {
        SymMatrix::equicorrelation(6, self.pollutant_corr).scale(self.pollutant_sd_who.powi(2))
    }

    /// Covariance of the true concentrations X in WHO units.
    pub fn pollutant_cov_who(&self) -> SymMatrix {
        let base = self.base_cov_who();
        match &self.proxy {
            ProxyModel::Berkson { error_sd_who } => {
                let diag: Vec<f64> = error_sd_who.iter().map(|s| s * s).collect();
                base.add(&SymMatrix::diagonal(&diag)).expect("same dim")
            }
            _ => base,
        }
    }
}

/// Generator ground truth attached to every synthetic panel.
#[derive(Debug, Clone, Serialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub concentration_units: String,
    pub who_divisors: BTreeMap<String, f64>,
    /// True coefficients per crop, per native concentration unit.
    pub beta_native_per_crop: BTreeMap<String, Vec<f64>>,
    /// True coefficients per crop in WHO units.
    pub beta_who_per_crop: BTreeMap<String, Vec<f64>>,
    /// Cov(X) in WHO units.
    pub pollutant_cov_who: Vec<Vec<f64>>,
}

/// Draw a full synthetic panel. Deterministic in `config.seed`.
pub fn synth_panel(config: &SynthConfig) -> Result<(PanelDataset, SynthManifest)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base_chol = config
        .base_cov_who()
        .cholesky()
        .map_err(|_| Error::GenerationFailed("pollutant covariance not PD".into()))?
        .lower();

    // unit fixed effects, one per crop
    let n_crops = config.crops.len();
    let mut fixed_effects = vec![vec![0.0; n_crops]; config.n_units];
    for fe in fixed_effects.iter_mut() {
        for c in fe.iter_mut() {
            *c = config.fixed_effect_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut rows = Vec::with_capacity(config.n_units * config.n_years);
    let mut z = [0.0f64; 6];
    for unit in 0..config.n_units {
        for t in 0..config.n_years {
            let year = config.start_year + t as i32;
            let mut weather = [0.0; 4];
            for w in weather.iter_mut() {
                *w = rng.sample(StandardNormal);
            }
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let mut base = [0.0f64; 6];
            for i in 0..6 {
                let mut s = config.pollutant_mean_who;
                for k in 0..=i {
                    s += base_chol.get(i, k) * z[k];
                }
                base[i] = s;
            }
            let (x_who, w_who) = match &config.proxy {
                ProxyModel::Perfect => (base, base),
                ProxyModel::Classical { error_sd_who } => {
                    let mut w = base;
                    for (wi, sd) in w.iter_mut().zip(error_sd_who) {
                        *wi += sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    (base, w)
                }
                ProxyModel::Berkson { error_sd_who } => {
                    let mut x = base;
                    for (xi, sd) in x.iter_mut().zip(error_sd_who) {
                        *xi += sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    (x, base)
                }
            };
            let mut monitor = [None; 6];
            let mut proxy = [None; 6];
            for (k, p) in ALL_POLLUTANTS.iter().enumerate() {
                let divisor = p.who_divisor();
                monitor[k] = Some(x_who[k] * divisor);
                proxy[k] = Some(w_who[k] * divisor);
            }
            if config.monitor_missing_prob > 0.0 {
                for cell in monitor.iter_mut() {
                    if rng.random_range(0.0..1.0) < config.monitor_missing_prob {
                        *cell = None;
                    }
                }
            }
            let mut outcomes = BTreeMap::new();
            for (c, crop) in config.crops.iter().enumerate() {
                let scale = config.crop_beta_scale[c];
                let mut log_y = config.base_log_yield
                    + fixed_effects[unit][c]
                    + config.trend_per_year * f64::from(t as i32)
                    + config.noise_sd * rng.sample::<f64, _>(StandardNormal);
                for k in 0..6 {
                    log_y += scale * config.beta_who[k] * x_who[k];
                }
                for (w, g) in weather.iter().zip(&config.weather_beta) {
                    log_y += g * w;
                }
                outcomes.insert(crop.clone(), log_y.exp());
            }
            rows.push(PanelRow {
                unit_id: format!("u{unit:04}"),
                year,
                outcomes,
                monitor,
                proxy,
                weather,
            });
        }
    }

    let data = PanelDataset::new(rows)?;
    let divisors: BTreeMap<String, f64> = ALL_POLLUTANTS
        .iter()
        .map(|p| (p.key().to_string(), p.who_divisor()))
        .collect();
    let mut beta_native = BTreeMap::new();
    let mut beta_who = BTreeMap::new();
    for (c, crop) in config.crops.iter().enumerate() {
        let scale = config.crop_beta_scale[c];
        beta_who.insert(
            crop.clone(),
            config.beta_who.iter().map(|b| b * scale).collect::<Vec<_>>(),
        );
        beta_native.insert(
            crop.clone(),
            ALL_POLLUTANTS
                .iter()
                .enumerate()
                .map(|(k, p)| config.beta_who[k] * scale / p.who_divisor())
                .collect::<Vec<_>>(),
        );
    }
    let manifest = SynthManifest {
        config: config.clone(),
        concentration_units: "ug/m3".to_string(),
        who_divisors: divisors,
        beta_native_per_crop: beta_native,
        beta_who_per_crop: beta_who,
        pollutant_cov_who: config.pollutant_cov_who().to_rows(),
    };
    Ok((data, manifest))
}

/// Population OVB and MEB (in WHO units) of the main pollutant's
/// coefficient for one (main, control) pair under the generator's
/// covariance, computed through the closed-form bias formulas.
///
/// The triple regression includes only two of the six pollutants, so the
/// quantity it estimates is the projection of the structural pollutant
/// effect onto (main, control): the bias formulas are applied with that
/// projection coefficient, with the error-free covariates being (main,
/// weather, trend) and the omitted / proxied covariate the control.
///
/// For a Berkson proxy the measurement error is uncorrelated with the
/// projection residual only when the pollutants outside the pair carry
/// zero coefficients (or are uncorrelated with the pair); outside that
/// regime the zero-MEB property does not apply to the two-pollutant
/// regression and this oracle with it.
pub fn population_bias(
    config: &SynthConfig,
    main: Pollutant,
    control: Pollutant,
    crop_index: usize,
) -> Result<(f64, f64)> {
    if main == control {
        return Err(Error::PreconditionViolated(
            "main and control must differ".into(),
        ));
    }
    if crop_index >= config.crops.len() {
        return Err(Error::IndexOutOfRange(format!(
            "crop index {crop_index} (have {})",
            config.crops.len()
        )));
    }
    let base = config.base_cov_who();
    let sigma = config.pollutant_cov_who(); // Cov(X); Berkson inflates the diagonal
    let m = main.index();
    let c = control.index();
    let scale = config.crop_beta_scale[crop_index];
    let beta_struct: Vec<f64> = config.beta_who.iter().map(|b| b * scale).collect();

    // Projection of the six-pollutant effect onto (X_main, X_control):
    // the "ground truth" regression estimates these coefficients.
    let s2 = SymMatrix::from_fn(2, |i, j| {
        let idx = [m, c];
        sigma.get(idx[i], idx[j])
    });
    let u = [
        (0..6).map(|j| sigma.get(m, j) * beta_struct[j]).sum::<f64>(),
        (0..6).map(|j| sigma.get(c, j) * beta_struct[j]).sum::<f64>(),
    ];
    let beta_proj = s2.cholesky()?.solve(&u);
    let beta_control = beta_proj[1];

    // Second moments of the control's proxy: W = X + E inflates Var(W)
    // under classical error; X = W + E leaves Var(W) at the base level.
    let classical_var = match &config.proxy {
        ProxyModel::Classical { error_sd_who } => error_sd_who[c] * error_sd_who[c],
        _ => 0.0,
    };
    // Z-role covariates: main concentration, 4 weather, demeaned trend.
    let n_years = config.n_years as f64;
    let trend_var = (n_years * n_years - 1.0) / 12.0;
    let a_diag = [sigma.get(m, m), 1.0, 1.0, 1.0, 1.0, trend_var];
    let p = a_diag.len();
    let cov_zz = SymMatrix::diagonal(&a_diag);
    let pair_col = |v: f64| RectMatrix::from_fn(p, 1, |i, _| if i == 0 { v } else { 0.0 });
    let blocks = CovarianceBlocks::new(
        cov_zz,
        pair_col(base.get(m, c)),
        pair_col(base.get(m, c)),
        SymMatrix::diagonal(&[sigma.get(c, c)]),
        RectMatrix::from_fn(1, 1, |_, _| base.get(c, c)),
        SymMatrix::diagonal(&[base.get(c, c) + classical_var]),
    )?;
    let beta = CoefficientVector::new(vec![0.0; p], vec![beta_control]);
    let ovb = bias::ovb(&blocks, &beta)?[0];
    let meb = bias::meb_z(&blocks, &beta)?[0];
    Ok((ovb, meb))
}
