//! Cluster bootstrap over units: resample unit ids with replacement (a
//! unit drawn twice enters as two pseudo-units carrying full copies of its
//! rows), rerun every (main, control, crop) triple, and aggregate three
//! summary statistics per bias type over the combinations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::regression::{TripleDesigns, ValidationEntry};
use crate::panel::{PanelDataset, Pollutant};

/// One (main pollutant, control pollutant, crop) combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboSpec {
    pub main: Pollutant,
    pub control: Pollutant,
    pub crop: String,
}

/// The three summary statistics for each bias type, over one evaluation of
/// all combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombosSummary {
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub count_negative_ovb: usize,
    pub count_negative_meb: usize,
    /// Mean over combos of t(beta_om) - t(beta_gt).
    pub mean_tstat_diff_ovb: f64,
    /// Mean over combos of t(beta_me) - t(beta_gt).
    pub mean_tstat_diff_meb: f64,
    /// Mean over combos of the bias in log-yield per WHO guideline unit of
    /// the main pollutant.
    pub mean_bias_ovb_who: f64,
    pub mean_bias_meb_who: f64,
}

fn summarize(entries: &[&ValidationEntry]) -> CombosSummary {
    let n = entries.len();
    let mut s = CombosSummary {
        n_evaluated: n,
        n_skipped: 0,
        count_negative_ovb: 0,
        count_negative_meb: 0,
        mean_tstat_diff_ovb: 0.0,
        mean_tstat_diff_meb: 0.0,
        mean_bias_ovb_who: 0.0,
        mean_bias_meb_who: 0.0,
    };
    if n == 0 {
        return s;
    }
    for e in entries {
        if e.ovb_hat < 0.0 {
            s.count_negative_ovb += 1;
        }
        if e.meb_hat < 0.0 {
            s.count_negative_meb += 1;
        }
        s.mean_tstat_diff_ovb += e.beta_om.t_stat - e.beta_gt.t_stat;
        s.mean_tstat_diff_meb += e.beta_me.t_stat - e.beta_gt.t_stat;
        // coefficients are per native concentration unit (ug/m3); multiply
        // by the guideline value to express per WHO unit
        let divisor = e.main.who_divisor();
        s.mean_bias_ovb_who += e.ovb_hat * divisor;
        s.mean_bias_meb_who += e.meb_hat * divisor;
    }
    let inv = 1.0 / n as f64;
    s.mean_tstat_diff_ovb *= inv;
    s.mean_tstat_diff_meb *= inv;
    s.mean_bias_ovb_who *= inv;
    s.mean_bias_meb_who *= inv;
    s
}

/// Fraction of replicates whose summary statistic does not support the
/// negative-bias hypothesis: a nonnegative mean statistic, or at most half
/// the combinations negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotSupporting {
    pub count_ovb: f64,
    pub count_meb: f64,
    pub tstat_ovb: f64,
    pub tstat_meb: f64,
    pub bias_ovb: f64,
    pub bias_meb: f64,
}

/// Point estimate plus replicate distribution for one combo group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n_combos: usize,
    pub point: CombosSummary,
    pub replicates: Vec<CombosSummary>,
    pub frac_not_supporting: NotSupporting,
}

fn group_summary(point: CombosSummary, replicates: Vec<CombosSummary>) -> GroupSummary {
    let n_reps = replicates.len().max(1) as f64;
    let frac = |f: &dyn Fn(&CombosSummary) -> bool| {
        replicates.iter().filter(|r| f(r)).count() as f64 / n_reps
    };
    let frac_not_supporting = NotSupporting {
        count_ovb: frac(&|r| 2 * r.count_negative_ovb <= r.n_evaluated),
        count_meb: frac(&|r| 2 * r.count_negative_meb <= r.n_evaluated),
        tstat_ovb: frac(&|r| r.mean_tstat_diff_ovb >= 0.0),
        tstat_meb: frac(&|r| r.mean_tstat_diff_meb >= 0.0),
        bias_ovb: frac(&|r| r.mean_bias_ovb_who >= 0.0),
        bias_meb: frac(&|r| r.mean_bias_meb_who >= 0.0),
    };
    GroupSummary {
        n_combos: point.n_evaluated + point.n_skipped,
        point,
        replicates,
        frac_not_supporting,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n_reps: u64,
    pub seed: u64,
    /// Summaries over all combinations.
    pub all: GroupSummary,
    /// Summaries over the combinations whose control pollutant is not the
    /// excluded one, when an exclusion was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<GroupSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset_excluded_control: Option<Pollutant>,
}

/// Per-combo point-estimate outcome; combos that cannot be fit are
/// reported and skipped rather than failing the run.
#[derive(Debug, Clone, Serialize)]
pub struct ComboOutcome {
    pub combo: ComboSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry: Option<ValidationEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResults {
    pub outcomes: Vec<ComboOutcome>,
    pub summary: BootstrapSummary,
}

struct PreparedCombo {
    designs: Option<TripleDesigns>,
    in_subset: bool,
}

fn replicate_summaries(
    prepared: &[PreparedCombo],
    drawn_units: &[usize],
    has_subset: bool,
) -> (CombosSummary, Option<CombosSummary>) {
    let mut entries: Vec<Option<ValidationEntry>> = Vec::with_capacity(prepared.len());
    let mut n_skipped = 0usize;
    for combo in prepared {
        match combo.designs.as_ref().map(|d| d.fit_resampled(drawn_units)) {
            Some(Ok(entry)) => entries.push(Some(entry)),
            _ => {
                n_skipped += 1;
                entries.push(None);
            }
        }
    }
    let all_entries: Vec<&ValidationEntry> = entries.iter().flatten().collect();
    let mut all = summarize(&all_entries);
    all.n_skipped = n_skipped;
    let subset = if has_subset {
        let mut n_sub_skipped = 0usize;
        let sub_entries: Vec<&ValidationEntry> = prepared
            .iter()
            .zip(&entries)
            .filter(|(c, _)| c.in_subset)
            .filter_map(|(_, e)| {
                if e.is_none() {
                    n_sub_skipped += 1;
                }
                e.as_ref()
            })
            .collect();
        let mut s = summarize(&sub_entries);
        s.n_skipped = n_sub_skipped;
        Some(s)
    } else {
        None
    };
    (all, subset)
}

/// Run the full bootstrap. Replicates are independent with per-replicate
/// RNG substreams and are merged in replicate order, so the output is
/// deterministic for a fixed seed regardless of `threads`.
pub fn cluster_bootstrap(
    data: &PanelDataset,
    combos: &[ComboSpec],
    n_reps: u64,
    seed: u64,
    exclude_control: Option<Pollutant>,
    threads: Option<usize>,
) -> Result<BootstrapResults> {
    if n_reps < 1 {
        return Err(Error::PreconditionViolated(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    if combos.is_empty() {
        return Err(Error::PreconditionViolated("no combinations requested".into()));
    }
    let n_units = data.units().len();
    if n_units == 0 {
        return Err(Error::InsufficientData("dataset has no units".into()));
    }

    let mut prepared = Vec::with_capacity(combos.len());
    let mut outcomes = Vec::with_capacity(combos.len());
    for combo in combos {
        let in_subset = exclude_control != Some(combo.control);
        match TripleDesigns::build(data, combo.main, combo.control, &combo.crop) {
            Ok(designs) => {
                let (entry, error) = match designs.fit_all() {
                    Ok(e) => (Some(e), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                outcomes.push(ComboOutcome {
                    combo: combo.clone(),
                    entry,
                    error,
                });
                prepared.push(PreparedCombo {
                    designs: Some(designs),
                    in_subset,
                });
            }
            Err(e) => {
                outcomes.push(ComboOutcome {
                    combo: combo.clone(),
                    entry: None,
                    error: Some(e.to_string()),
                });
                prepared.push(PreparedCombo {
                    designs: None,
                    in_subset,
                });
            }
        }
    }

    let has_subset = exclude_control.is_some();
    let point_entries: Vec<&ValidationEntry> =
        outcomes.iter().filter_map(|o| o.entry.as_ref()).collect();
    let mut point_all = summarize(&point_entries);
    point_all.n_skipped = outcomes.len() - point_entries.len();
    let point_subset = if has_subset {
        let mut skipped = 0usize;
        let sub: Vec<&ValidationEntry> = outcomes
            .iter()
            .zip(&prepared)
            .filter(|(_, p)| p.in_subset)
            .filter_map(|(o, _)| {
                if o.entry.is_none() {
                    skipped += 1;
                }
                o.entry.as_ref()
            })
            .collect();
        let mut s = summarize(&sub);
        s.n_skipped = skipped;
        Some(s)
    } else {
        None
    };

    let run_reps = || -> Vec<(CombosSummary, Option<CombosSummary>)> {
        (0..n_reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r + 1);
                let drawn: Vec<usize> =
                    (0..n_units).map(|_| rng.random_range(0..n_units)).collect();
                replicate_summaries(&prepared, &drawn, has_subset)
            })
            .collect()
    };
    let reps = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::GenerationFailed(format!("thread pool: {e}")))?
            .install(run_reps),
        None => run_reps(),
    };

    let (rep_all, rep_subset): (Vec<_>, Vec<_>) = reps.into_iter().unzip();
    let summary = BootstrapSummary {
        n_reps,
        seed,
        all: group_summary(point_all, rep_all),
        subset: point_subset
            .map(|p| group_summary(p, rep_subset.into_iter().flatten().collect())),
        subset_excluded_control: exclude_control,
    };
    Ok(BootstrapResults { outcomes, summary })
}

/// All ordered pollutant pairs crossed with the given crops, restricted to
/// pollutants that have any monitor data.
pub fn default_combos(data: &PanelDataset, crops: &[String]) -> Vec<ComboSpec> {
    use crate::panel::ALL_POLLUTANTS;
    let observed: Vec<Pollutant> = ALL_POLLUTANTS
        .into_iter()
        .filter(|p| data.rows().iter().any(|r| r.monitor[p.index()].is_some()))
        .collect();
    let mut combos = Vec::new();
    for crop in crops {
        for &main in &observed {
            for &control in &observed {
                if main != control {
                    combos.push(ComboSpec {
                        main,
                        control,
                        crop: crop.clone(),
                    });
                }
            }
        }
    }
    combos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::synth::{synth_panel, SynthConfig};
    use crate::panel::regression::run_triple;
    use crate::panel::data::{PanelDataset, PanelRow};

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            n_units: 40,
            n_years: 8,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn identity_resample_reproduces_point_estimates() {
        let (data, _) = synth_panel(&small_config(4)).unwrap();
        let combos = default_combos(&data, &["corn".to_string()]);
        let combo = &combos[0];
        let designs = TripleDesigns::build(&data, combo.main, combo.control, &combo.crop).unwrap();
        let point = designs.fit_all().unwrap();
        let identity: Vec<usize> = (0..data.units().len()).collect();
        let resampled = designs.fit_resampled(&identity).unwrap();
        assert_eq!(point, resampled);
    }

    #[test]
    fn duplicated_pseudo_units_leave_fits_unchanged() {
        let (data, _) = synth_panel(&small_config(9)).unwrap();
        let point = run_triple(&data, Pollutant::O3, Pollutant::Pm25, "corn").unwrap();
        let mut rows: Vec<PanelRow> = data.rows().to_vec();
        let copies: Vec<PanelRow> = rows
            .iter()
            .map(|r| {
                let mut c = r.clone();
                c.unit_id = format!("{}#dup", r.unit_id);
                c
            })
            .collect();
        rows.extend(copies);
        let doubled = PanelDataset::new(rows).unwrap();
        let fit2 = run_triple(&doubled, Pollutant::O3, Pollutant::Pm25, "corn").unwrap();
        assert!((fit2.beta_gt.coefficient - point.beta_gt.coefficient).abs() < 1e-10);
        assert!((fit2.ovb_hat - point.ovb_hat).abs() < 1e-10);
        assert!((fit2.meb_hat - point.meb_hat).abs() < 1e-10);
        assert_eq!(fit2.beta_gt.n_obs, 2 * point.beta_gt.n_obs);
        assert_eq!(fit2.beta_gt.n_units, 2 * point.beta_gt.n_units);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let (data, _) = synth_panel(&small_config(11)).unwrap();
        let combos = vec![
            ComboSpec {
                main: Pollutant::O3,
                control: Pollutant::Pm25,
                crop: "corn".to_string(),
            },
            ComboSpec {
                main: Pollutant::No2,
                control: Pollutant::Co,
                crop: "corn".to_string(),
            },
        ];
        let a = cluster_bootstrap(&data, &combos, 20, 5, Some(Pollutant::Co), Some(2)).unwrap();
        let b = cluster_bootstrap(&data, &combos, 20, 5, Some(Pollutant::Co), Some(4)).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.summary.all.replicates.len(), 20);
        let subset = a.summary.subset.as_ref().unwrap();
        assert_eq!(subset.n_combos, 1);
    }

    #[test]
    fn majority_of_combos_have_negative_ovb() {
        // Oracle: the population OVB at the generator covariance is
        // negative for every ordered pair, so most sample estimates are.
        use crate::panel::synth::population_bias;
        let config = SynthConfig {
            n_units: 120,
            n_years: 12,
            crops: vec!["corn".to_string()],
            crop_beta_scale: vec![1.0],
            seed: 44,
            ..SynthConfig::default()
        };
        let (data, _) = synth_panel(&config).unwrap();
        let combos = default_combos(&data, &["corn".to_string()]);
        assert_eq!(combos.len(), 30);
        for combo in &combos {
            let (ovb_pop, _) = population_bias(&config, combo.main, combo.control, 0).unwrap();
            assert!(ovb_pop < 0.0);
        }
        let res = cluster_bootstrap(&data, &combos, 1, 1, None, None).unwrap();
        let point = &res.summary.all.point;
        assert_eq!(point.n_evaluated, 30);
        assert!(
            2 * point.count_negative_ovb > point.n_evaluated,
            "{} of {} negative",
            point.count_negative_ovb,
            point.n_evaluated
        );
    }

    #[test]
    fn zero_replicates_rejected() {
        let (data, _) = synth_panel(&small_config(3)).unwrap();
        let combos = default_combos(&data, &["corn".to_string()]);
        assert!(matches!(
            cluster_bootstrap(&data, &combos, 0, 1, None, None),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn unfittable_combo_is_reported_and_skipped() {
        let (data, _) = synth_panel(&small_config(8)).unwrap();
        let combos = vec![
            ComboSpec {
                main: Pollutant::O3,
                control: Pollutant::Pm25,
                crop: "corn".to_string(),
            },
            ComboSpec {
                main: Pollutant::O3,
                control: Pollutant::Pm25,
                crop: "barley".to_string(), // not in the dataset
            },
        ];
        let res = cluster_bootstrap(&data, &combos, 3, 1, None, None).unwrap();
        assert!(res.outcomes[0].entry.is_some());
        assert!(res.outcomes[1].entry.is_none());
        assert!(res.outcomes[1].error.is_some());
        assert_eq!(res.summary.all.point.n_evaluated, 1);
        assert_eq!(res.summary.all.point.n_skipped, 1);
        for rep in &res.summary.all.replicates {
            assert_eq!(rep.n_evaluated, 1);
            assert_eq!(rep.n_skipped, 1);
        }
    }
}
