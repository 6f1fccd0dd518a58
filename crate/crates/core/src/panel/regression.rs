//! Fixed-effects ("within") OLS and the three-regression validation triple.
//!
//! Unit fixed effects are absorbed by demeaning the outcome and every
//! regressor within unit, then running OLS on the demeaned data with
//! classical standard errors on n_obs - k - n_units degrees of freedom.
//!
//! Because demeaning is unit-local, each unit's contribution reduces to a
//! cross-product matrix of its demeaned columns. Fits over any multiset of
//! units (the point estimate, or a bootstrap replicate where a unit drawn
//! twice enters as two pseudo-units) just sum those per-unit blocks, which
//! is what makes the cluster bootstrap cheap.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::panel::data::{monitor_value, proxy_value, PanelDataset, PanelRow, N_WEATHER};
use crate::panel::Pollutant;

/// One fitted coefficient with its classical standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub coefficient: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub n_obs: usize,
    pub n_units: usize,
}

/// A regressor in a fixed-effects formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regressor {
    Monitor(Pollutant),
    Proxy(Pollutant),
    Weather(usize),
}

/// Formula for [`fe_ols`]: outcome is log(yield) of `outcome_crop`; a
/// linear time trend is appended when `include_trend` is set (it always is
/// in the validation scheme). Unit fixed effects are always absorbed.
#[derive(Debug, Clone)]
pub struct FeFormula {
    pub outcome_crop: String,
    pub regressors: Vec<Regressor>,
    pub include_trend: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Monitor(Pollutant),
    Proxy(Pollutant),
    Weather(usize),
    Trend,
}

impl Column {
    fn value(self, row: &PanelRow, year_offset: i32) -> Result<f64> {
        match self {
            Column::Monitor(p) => monitor_value(row, p).ok_or_else(|| {
                Error::InsufficientData(format!(
                    "monitor {} missing for ({}, {})",
                    p, row.unit_id, row.year
                ))
            }),
            Column::Proxy(p) => proxy_value(row, p).ok_or_else(|| {
                Error::InsufficientData(format!(
                    "proxy {} missing for ({}, {})",
                    p, row.unit_id, row.year
                ))
            }),
            Column::Weather(k) => Ok(row.weather[k]),
            Column::Trend => Ok(f64::from(row.year - year_offset)),
        }
    }

    fn is_present(self, row: &PanelRow) -> bool {
        match self {
            Column::Monitor(p) => monitor_value(row, p).is_some(),
            Column::Proxy(p) => proxy_value(row, p).is_some(),
            Column::Weather(_) | Column::Trend => true,
        }
    }
}

/// Cross-products of one unit's demeaned columns (the outcome is the last
/// index), enough to reconstitute any OLS fit over subsets of the columns.
#[derive(Debug, Clone)]
struct UnitCross {
    n: usize,
    cross: SymMatrix, // (n_cols + 1) x (n_cols + 1)
}

/// Demeaned per-unit cross products for one filtered design.
fn build_unit_crosses(
    data: &PanelDataset,
    crop: &str,
    columns: &[Column],
    required: &[Column],
) -> Result<Vec<(usize, UnitCross)>> {
    let filtered: Vec<&PanelRow> = data
        .rows()
        .iter()
        .filter(|row| {
            row.outcomes.contains_key(crop) && required.iter().all(|c| c.is_present(row))
        })
        .collect();
    if filtered.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no rows with crop '{crop}' and the required measurements"
        )));
    }
    let year_offset = filtered.iter().map(|r| r.year).min().unwrap();
    let n_cols = columns.len();

    let mut out = Vec::new();
    let mut start = 0usize;
    while start < filtered.len() {
        let unit = &filtered[start].unit_id;
        let mut end = start;
        while end < filtered.len() && &filtered[end].unit_id == unit {
            end += 1;
        }
        let rows = &filtered[start..end];
        start = end;
        // fixed effect plus trend need within-unit variation
        if rows.len() < 2 {
            continue;
        }

        let mut values = vec![vec![0.0; n_cols + 1]; rows.len()];
        for (r, row) in rows.iter().enumerate() {
            for (c, col) in columns.iter().enumerate() {
                values[r][c] = col.value(row, year_offset)?;
            }
            values[r][n_cols] = row.outcomes[crop].ln();
        }
        let inv_n = 1.0 / rows.len() as f64;
        let mut means = vec![0.0; n_cols + 1];
        for row in &values {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v * inv_n;
            }
        }
        for row in values.iter_mut() {
            for (v, m) in row.iter_mut().zip(&means) {
                *v -= m;
            }
        }
        let cross = SymMatrix::from_fn(n_cols + 1, |i, j| {
            values.iter().map(|row| row[i] * row[j]).sum()
        });
        let unit_idx = data
            .unit_index(unit)
            .expect("unit came from the dataset itself");
        out.push((unit_idx, UnitCross { n: rows.len(), cross }));
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(format!(
            "every unit with crop '{crop}' has fewer than 2 usable years"
        )));
    }
    Ok(out)
}

struct FitOutput {
    fits: Vec<RegressionFit>,
}

/// OLS over a multiset of unit cross-products, restricted to `subset`
/// column indices.
fn fit_subset<'a>(
    crosses: impl Iterator<Item = &'a UnitCross>,
    n_cols: usize,
    subset: &[usize],
) -> Result<FitOutput> {
    let k = subset.len();
    let mut total = SymMatrix::zeros(n_cols + 1);
    let mut n_obs = 0usize;
    let mut n_units = 0usize;
    for uc in crosses {
        n_obs += uc.n;
        n_units += 1;
        total = total.add(&uc.cross)?;
    }
    if n_units == 0 {
        return Err(Error::InsufficientData("no units in the fit".into()));
    }
    if n_obs <= k + n_units {
        return Err(Error::InsufficientData(format!(
            "{n_obs} observations cannot identify {k} regressors plus {n_units} fixed effects"
        )));
    }
    let xtx = SymMatrix::from_fn(k, |i, j| total.get(subset[i], subset[j]));
    let xty: Vec<f64> = subset.iter().map(|&c| total.get(c, n_cols)).collect();
    let yty = total.get(n_cols, n_cols);
    let factor = xtx.cholesky().map_err(|_| {
        Error::RankDeficient("collinear regressors after within-unit demeaning".into())
    })?;
    let coef = factor.solve(&xty);
    let rss = (yty - coef.iter().zip(&xty).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
    let dof = n_obs - k - n_units;
    let sigma2 = rss / dof as f64;
    let inv = factor.inverse();
    let fits = (0..k)
        .map(|j| {
            let std_error = (sigma2 * inv.get(j, j)).sqrt();
            RegressionFit {
                coefficient: coef[j],
                std_error,
                t_stat: if std_error > 0.0 { coef[j] / std_error } else { 0.0 },
                n_obs,
                n_units,
            }
        })
        .collect();
    Ok(FitOutput { fits })
}

/// Fixed-effects OLS of log(yield) on the formula's regressors (plus the
/// time trend), over rows where the outcome and every regressor are
/// present. Returns one fit per regressor, in formula order.
pub fn fe_ols(data: &PanelDataset, formula: &FeFormula) -> Result<Vec<RegressionFit>> {
    let mut columns: Vec<Column> = formula
        .regressors
        .iter()
        .map(|r| match r {
            Regressor::Monitor(p) => Column::Monitor(*p),
            Regressor::Proxy(p) => Column::Proxy(*p),
            Regressor::Weather(k) => Column::Weather(*k),
        })
        .collect();
    for r in &formula.regressors {
        if let Regressor::Weather(k) = r {
            if *k >= N_WEATHER {
                return Err(Error::IndexOutOfRange(format!(
                    "weather index {k} (have {N_WEATHER})"
                )));
            }
        }
    }
    let n_regressors = columns.len();
    if formula.include_trend {
        columns.push(Column::Trend);
    }
    let required = columns.clone();
    let crosses = build_unit_crosses(data, &formula.outcome_crop, &columns, &required)?;
    let subset: Vec<usize> = (0..columns.len()).collect();
    let out = fit_subset(crosses.iter().map(|(_, uc)| uc), columns.len(), &subset)?;
    Ok(out.fits.into_iter().take(n_regressors).collect())
}

/// The three fits for one (main, control, crop) combination and the two
/// bias point estimates for the main pollutant's coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationEntry {
    pub main: Pollutant,
    pub control: Pollutant,
    pub crop: String,
    pub beta_gt: RegressionFit,
    pub beta_om: RegressionFit,
    pub beta_me: RegressionFit,
    /// beta_om - beta_gt.
    pub ovb_hat: f64,
    /// beta_me - beta_gt.
    pub meb_hat: f64,
}

/// Prebuilt per-unit statistics for one combination, reusable across
/// bootstrap replicates.
pub(crate) struct TripleDesigns {
    main: Pollutant,
    control: Pollutant,
    crop: String,
    n_cols: usize,
    crosses: Vec<UnitCross>,
    /// global unit index -> position in `crosses`
    unit_lookup: Vec<Option<usize>>,
}

const GT_SUBSET: [usize; 7] = [0, 1, 3, 4, 5, 6, 7];
const OM_SUBSET: [usize; 6] = [0, 3, 4, 5, 6, 7];
const ME_SUBSET: [usize; 7] = [0, 2, 3, 4, 5, 6, 7];

impl TripleDesigns {
    pub(crate) fn build(
        data: &PanelDataset,
        main: Pollutant,
        control: Pollutant,
        crop: &str,
    ) -> Result<Self> {
        if main == control {
            return Err(Error::PreconditionViolated(format!(
                "main and control pollutant are both {main}"
            )));
        }
        let columns = [
            Column::Monitor(main),
            Column::Monitor(control),
            Column::Proxy(control),
            Column::Weather(0),
            Column::Weather(1),
            Column::Weather(2),
            Column::Weather(3),
            Column::Trend,
        ];
        // Row filtering depends on the monitors and the outcome only; a
        // missing proxy inside the filtered set is an error, not a filter.
        let required = [Column::Monitor(main), Column::Monitor(control)];
        let pairs = build_unit_crosses(data, crop, &columns, &required)?;
        let mut unit_lookup = vec![None; data.units().len()];
        let mut crosses = Vec::with_capacity(pairs.len());
        for (pos, (unit_idx, uc)) in pairs.into_iter().enumerate() {
            unit_lookup[unit_idx] = Some(pos);
            crosses.push(uc);
        }
        Ok(TripleDesigns {
            main,
            control,
            crop: crop.to_string(),
            n_cols: columns.len(),
            crosses,
            unit_lookup,
        })
    }

    fn fit_from_positions<'a>(
        &self,
        positions: impl Iterator<Item = &'a usize> + Clone,
    ) -> Result<ValidationEntry> {
        let gather = |subset: &[usize]| {
            fit_subset(
                positions.clone().map(|&p| &self.crosses[p]),
                self.n_cols,
                subset,
            )
        };
        let gt = gather(&GT_SUBSET)?;
        let om = gather(&OM_SUBSET)?;
        let me = gather(&ME_SUBSET)?;
        let beta_gt = gt.fits[0].clone();
        let beta_om = om.fits[0].clone();
        let beta_me = me.fits[0].clone();
        Ok(ValidationEntry {
            main: self.main,
            control: self.control,
            crop: self.crop.clone(),
            ovb_hat: beta_om.coefficient - beta_gt.coefficient,
            meb_hat: beta_me.coefficient - beta_gt.coefficient,
            beta_gt,
            beta_om,
            beta_me,
        })
    }

    /// Point estimate on the full unit set.
    pub(crate) fn fit_all(&self) -> Result<ValidationEntry> {
        let positions: Vec<usize> = (0..self.crosses.len()).collect();
        self.fit_from_positions(positions.iter())
    }

    /// Fit on a resampled multiset of global unit indices; units absent
    /// from this combination contribute nothing.
    pub(crate) fn fit_resampled(&self, drawn_units: &[usize]) -> Result<ValidationEntry> {
        let positions: Vec<usize> = drawn_units
            .iter()
            .filter_map(|&u| self.unit_lookup.get(u).copied().flatten())
            .collect();
        self.fit_from_positions(positions.iter())
    }
}

/// Run the ground-truth / omitted / error-prone regression triple for one
/// (main, control, crop) combination. All three regressions share the row
/// set where the outcome and both monitors are present.
pub fn run_triple(
    data: &PanelDataset,
    main: Pollutant,
    control: Pollutant,
    crop: &str,
) -> Result<ValidationEntry> {
    TripleDesigns::build(data, main, control, crop)?.fit_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::ALL_POLLUTANTS;
    use std::collections::BTreeMap;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Deterministic synthetic panel generated exactly from the model, no
    /// noise: log(y) = beta^T monitors + gamma^T weather + lambda t + c_i.
    fn noiseless_panel(n_units: usize, n_years: usize) -> PanelDataset {
        let beta = [-0.05, -0.02, -0.04, -0.01, -0.03, -0.02];
        let gamma = [0.02, -0.01, 0.015, -0.02];
        let lambda = 0.01;
        let mut rows = Vec::new();
        // cheap deterministic pseudo-values
        let mut state = 12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for u in 0..n_units {
            let fe = 0.3 * next();
            for t in 0..n_years {
                let year = 2000 + t as i32;
                let mut monitor = [None; 6];
                let mut log_y = fe + lambda * f64::from(t as i32);
                let mut weather = [0.0; 4];
                for (w, g) in weather.iter_mut().zip(&gamma) {
                    *w = next();
                    log_y += g * *w;
                }
                for k in 0..6 {
                    let x = 1.0 + 0.5 * next();
                    monitor[k] = Some(x);
                    log_y += beta[k] * x;
                }
                let mut outcomes = BTreeMap::new();
                outcomes.insert("corn".to_string(), log_y.exp());
                rows.push(PanelRow {
                    unit_id: format!("u{u:03}"),
                    year,
                    outcomes,
                    monitor,
                    proxy: monitor,
                    weather,
                });
            }
        }
        PanelDataset::new(rows).unwrap()
    }

    fn full_formula() -> FeFormula {
        FeFormula {
            outcome_crop: "corn".to_string(),
            regressors: ALL_POLLUTANTS
                .iter()
                .map(|p| Regressor::Monitor(*p))
                .chain((0..4).map(Regressor::Weather))
                .collect(),
            include_trend: true,
        }
    }

    #[test]
    fn noiseless_panel_recovers_coefficients() {
        let data = noiseless_panel(25, 8);
        let fits = fe_ols(&data, &full_formula()).unwrap();
        let expected = [-0.05, -0.02, -0.04, -0.01, -0.03, -0.02, 0.02, -0.01, 0.015, -0.02];
        for (fit, want) in fits.iter().zip(expected) {
            assert!(
                close(fit.coefficient, want, 1e-8),
                "got {} want {want}",
                fit.coefficient
            );
        }
    }

    #[test]
    fn demeaning_matches_dummy_variable_oracle() {
        // Oracle: explicit OLS with one dummy column per unit.
        let data = noiseless_panel(20, 5);
        let fits = fe_ols(&data, &full_formula()).unwrap();

        let rows = data.rows();
        let n = rows.len();
        let n_units = data.units().len();
        let year0 = rows.iter().map(|r| r.year).min().unwrap();
        let k_reg = 11; // 6 monitors + 4 weather + trend
        let k = k_reg + n_units;
        let mut design = vec![vec![0.0; k]; n];
        let mut y = vec![0.0; n];
        for (r, row) in rows.iter().enumerate() {
            for c in 0..6 {
                design[r][c] = row.monitor[c].unwrap();
            }
            for c in 0..4 {
                design[r][6 + c] = row.weather[c];
            }
            design[r][10] = f64::from(row.year - year0);
            design[r][k_reg + data.unit_index(&row.unit_id).unwrap()] = 1.0;
            y[r] = row.outcomes["corn"].ln();
        }
        let xtx = SymMatrix::from_fn(k, |i, j| {
            (0..n).map(|r| design[r][i] * design[r][j]).sum()
        });
        let xty: Vec<f64> = (0..k)
            .map(|i| (0..n).map(|r| design[r][i] * y[r]).sum())
            .collect();
        let coef = xtx.cholesky().unwrap().solve(&xty);
        for (j, fit) in fits.iter().enumerate() {
            assert!(
                close(fit.coefficient, coef[j], 1e-9),
                "column {j}: {} vs oracle {}",
                fit.coefficient,
                coef[j]
            );
        }
    }

    #[test]
    fn row_order_does_not_change_fits() {
        let data = noiseless_panel(12, 6);
        let fits = fe_ols(&data, &full_formula()).unwrap();
        let mut rows = data.rows().to_vec();
        rows.reverse();
        rows.swap(3, 17);
        let shuffled = PanelDataset::new(rows).unwrap();
        let fits2 = fe_ols(&shuffled, &full_formula()).unwrap();
        assert_eq!(fits, fits2);
    }

    #[test]
    fn t_stat_is_coefficient_over_std_error() {
        let mut data = noiseless_panel(15, 6);
        // perturb yields so the residual is not exactly zero
        let mut rows = data.rows().to_vec();
        for (i, row) in rows.iter_mut().enumerate() {
            let y = row.outcomes.get_mut("corn").unwrap();
            *y *= 1.0 + 0.01 * ((i % 7) as f64 - 3.0);
        }
        data = PanelDataset::new(rows).unwrap();
        for fit in fe_ols(&data, &full_formula()).unwrap() {
            assert!(close(fit.t_stat, fit.coefficient / fit.std_error, 1e-10));
        }
    }

    #[test]
    fn perfect_proxy_gives_exactly_zero_meb() {
        let data = noiseless_panel(20, 6);
        let entry = run_triple(&data, Pollutant::O3, Pollutant::Pm25, "corn").unwrap();
        assert_eq!(entry.meb_hat, 0.0);
    }

    #[test]
    fn main_equal_control_rejected() {
        let data = noiseless_panel(5, 4);
        assert!(matches!(
            run_triple(&data, Pollutant::O3, Pollutant::O3, "corn"),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn missing_crop_is_insufficient_data() {
        let data = noiseless_panel(5, 4);
        assert!(matches!(
            run_triple(&data, Pollutant::O3, Pollutant::Pm25, "kale"),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        // duplicate regressor: monitor listed twice
        let data = noiseless_panel(10, 5);
        let formula = FeFormula {
            outcome_crop: "corn".to_string(),
            regressors: vec![
                Regressor::Monitor(Pollutant::O3),
                Regressor::Monitor(Pollutant::O3),
            ],
            include_trend: true,
        };
        assert!(matches!(
            fe_ols(&data, &formula),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn row_filter_ignores_proxy_availability() {
        // Blanking a proxy on a row that the monitor filter already
        // excludes must not change anything; blanking one inside the
        // filtered set is an error rather than a silent row drop.
        let data = noiseless_panel(10, 5);
        let baseline = run_triple(&data, Pollutant::O3, Pollutant::Pm25, "corn").unwrap();

        let mut rows = data.rows().to_vec();
        rows[3].monitor[Pollutant::Pm25.index()] = None; // excluded by the filter
        rows[3].proxy = [None; 6];
        let filtered_out = PanelDataset::new(rows.clone()).unwrap();
        let entry = run_triple(&filtered_out, Pollutant::O3, Pollutant::Pm25, "corn").unwrap();
        assert_eq!(entry.beta_gt.n_obs, baseline.beta_gt.n_obs - 1);

        rows[4].proxy[Pollutant::Pm25.index()] = None; // inside the filtered set
        let missing_inside = PanelDataset::new(rows).unwrap();
        assert!(matches!(
            run_triple(&missing_inside, Pollutant::O3, Pollutant::Pm25, "corn"),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn null_independent_control_gives_zero_ovb() {
        // control coefficient zero and control orthogonal in the generator:
        // with zero noise both GT and OM recover the exact coefficients.
        let mut rows = Vec::new();
        let mut state = 5u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for u in 0..15 {
            let fe = 0.2 * next();
            for t in 0..6 {
                let mut monitor = [None; 6];
                let x_main = 1.0 + 0.5 * next();
                let x_control = 1.0 + 0.5 * next(); // independent, coefficient 0
                monitor[Pollutant::O3.index()] = Some(x_main);
                monitor[Pollutant::Pm25.index()] = Some(x_control);
                let weather = [next(), next(), next(), next()];
                let log_y = fe - 0.04 * x_main + 0.01 * f64::from(t)
                    + weather.iter().sum::<f64>() * 0.01;
                let mut outcomes = BTreeMap::new();
                outcomes.insert("corn".to_string(), log_y.exp());
                rows.push(PanelRow {
                    unit_id: format!("u{u:02}"),
                    year: 2000 + t,
                    outcomes,
                    monitor,
                    proxy: monitor,
                    weather,
                });
            }
        }
        let data = PanelDataset::new(rows).unwrap();
        let entry = run_triple(&data, Pollutant::O3, Pollutant::Pm25, "corn").unwrap();
        assert!(entry.ovb_hat.abs() < 1e-8, "ovb_hat = {}", entry.ovb_hat);
    }
}
