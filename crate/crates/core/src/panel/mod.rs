//! Panel-data validation of bias directions: fixed-effects regressions, a
//! ground-truth / omitted / error-prone regression triple per pollutant
//! pair, WHO-guideline rescaling, and a cluster bootstrap over units.

mod bootstrap;
mod data;
mod regression;
mod synth;

pub use bootstrap::{
    cluster_bootstrap, default_combos, BootstrapResults, BootstrapSummary, ComboOutcome,
    ComboSpec, CombosSummary, GroupSummary, NotSupporting,
};
pub use data::{PanelDataset, PanelRow};
pub use regression::{fe_ols, run_triple, FeFormula, RegressionFit, Regressor, ValidationEntry};
pub use synth::{population_bias, synth_panel, ProxyModel, SynthConfig, SynthManifest};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six pollutants carried by the panel schema, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Pollutant {
    Co,
    No2,
    O3,
    Pm10,
    Pm25,
    So2,
}

pub const ALL_POLLUTANTS: [Pollutant; 6] = [
    Pollutant::Co,
    Pollutant::No2,
    Pollutant::O3,
    Pollutant::Pm10,
    Pollutant::Pm25,
    Pollutant::So2,
];

impl Pollutant {
    pub fn key(self) -> &'static str {
        match self {
            Pollutant::Co => "co",
            Pollutant::No2 => "no2",
            Pollutant::O3 => "o3",
            Pollutant::Pm10 => "pm10",
            Pollutant::Pm25 => "pm25",
            Pollutant::So2 => "so2",
        }
    }

    /// WHO 2021 daily guideline value in ug/m3 (8-hour for ozone). Dividing
    /// a concentration in ug/m3 by this puts it in guideline units.
    pub fn who_divisor(self) -> f64 {
        match self {
            Pollutant::Co => 4000.0,
            Pollutant::No2 => 25.0,
            Pollutant::O3 => 100.0,
            Pollutant::Pm10 => 45.0,
            Pollutant::Pm25 => 15.0,
            Pollutant::So2 => 40.0,
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        match key.to_ascii_lowercase().as_str() {
            "co" => Ok(Pollutant::Co),
            "no2" => Ok(Pollutant::No2),
            "o3" => Ok(Pollutant::O3),
            "pm10" => Ok(Pollutant::Pm10),
            "pm25" | "pm2.5" | "pm2_5" => Ok(Pollutant::Pm25),
            "so2" => Ok(Pollutant::So2),
            other => Err(Error::UnknownPollutant(other.to_string())),
        }
    }

    pub fn index(self) -> usize {
        ALL_POLLUTANTS.iter().position(|p| *p == self).unwrap()
    }
}

impl TryFrom<String> for Pollutant {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Pollutant::from_key(&value)
    }
}

impl From<Pollutant> for String {
    fn from(p: Pollutant) -> String {
        p.key().to_string()
    }
}

impl std::fmt::Display for Pollutant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Rescale concentrations (already in ug/m3) to WHO guideline units.
pub fn who_rescale(values: &[f64], pollutant_key: &str) -> Result<Vec<f64>> {
    let divisor = Pollutant::from_key(pollutant_key)?.who_divisor();
    Ok(values.iter().map(|v| v / divisor).collect())
}
