//! Long-format panel storage and its CSV schema.
//!
//! One in-memory row per (unit, year) holding the outcome for each crop,
//! optional monitor and proxy concentrations per pollutant, and four
//! weather covariates. On disk the panel is one CSV line per
//! (unit, year, crop) with the pollutant and weather cells repeated and
//! empty cells meaning missing:
//!
//! ```text
//! unit_id,year,crop,yield,mon_co,...,mon_so2,prox_co,...,prox_so2,w1,w2,w3,w4
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{Pollutant, ALL_POLLUTANTS};

pub const N_WEATHER: usize = 4;

/// All measurements for one (unit, year).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub unit_id: String,
    pub year: i32,
    /// Crop key -> positive yield.
    pub outcomes: BTreeMap<String, f64>,
    pub monitor: [Option<f64>; 6],
    pub proxy: [Option<f64>; 6],
    pub weather: [f64; N_WEATHER],
}

/// A validated panel: unique (unit, year) pairs, positive outcomes, rows
/// sorted by (unit, year), plus the sorted unit and crop universes.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    rows: Vec<PanelRow>,
    units: Vec<String>,
    crops: Vec<String>,
}

impl PanelDataset {
    pub fn new(mut rows: Vec<PanelRow>) -> Result<Self> {
        rows.sort_by(|a, b| (a.unit_id.as_str(), a.year).cmp(&(b.unit_id.as_str(), b.year)));
        for pair in rows.windows(2) {
            if pair[0].unit_id == pair[1].unit_id && pair[0].year == pair[1].year {
                return Err(Error::Schema(format!(
                    "duplicate (unit, year) = ({}, {})",
                    pair[0].unit_id, pair[0].year
                )));
            }
        }
        let mut units: Vec<String> = Vec::new();
        let mut crops: Vec<String> = Vec::new();
        for row in &rows {
            for (crop, y) in &row.outcomes {
                if y.is_nan() || *y <= 0.0 {
                    return Err(Error::Schema(format!(
                        "nonpositive yield {y} for ({}, {}, {crop})",
                        row.unit_id, row.year
                    )));
                }
                if !crops.contains(crop) {
                    crops.push(crop.clone());
                }
            }
            if units.last() != Some(&row.unit_id) {
                units.push(row.unit_id.clone());
            }
        }
        crops.sort();
        Ok(PanelDataset { rows, units, crops })
    }

    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    /// Sorted, distinct unit ids.
    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// Sorted, distinct crop keys appearing in any outcome.
    pub fn crops(&self) -> &[String] {
        &self.crops
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        self.units.binary_search_by(|u| u.as_str().cmp(unit_id)).ok()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv_reader = csv::ReaderBuilder::new().from_reader(reader);
        let headers = csv_reader
            .headers()
            .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
            .clone();
        let expected = csv_header();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Schema(format!(
                "unexpected header: got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut by_key: BTreeMap<(String, i32), PanelRow> = BTreeMap::new();
        for (line, record) in csv_reader.records().enumerate() {
            let record = record.map_err(|e| Error::Schema(format!("line {}: {e}", line + 2)))?;
            let cell = |idx: usize| record.get(idx).unwrap_or("").trim().to_string();
            let parse_f64 = |idx: usize, what: &str| -> Result<f64> {
                cell(idx).parse::<f64>().map_err(|_| {
                    Error::Schema(format!(
                        "line {}: bad {what} value '{}'",
                        line + 2,
                        cell(idx)
                    ))
                })
            };
            let parse_opt = |idx: usize, what: &str| -> Result<Option<f64>> {
                if cell(idx).is_empty() {
                    Ok(None)
                } else {
                    parse_f64(idx, what).map(Some)
                }
            };

            let unit_id = cell(0);
            let year: i32 = cell(1)
                .parse()
                .map_err(|_| Error::Schema(format!("line {}: bad year '{}'", line + 2, cell(1))))?;
            let crop = cell(2);
            let yield_value = parse_opt(3, "yield")?;
            let mut monitor = [None; 6];
            let mut proxy = [None; 6];
            for (k, _) in ALL_POLLUTANTS.iter().enumerate() {
                monitor[k] = parse_opt(4 + k, "monitor")?;
                proxy[k] = parse_opt(10 + k, "proxy")?;
            }
            let mut weather = [0.0; N_WEATHER];
            for (k, w) in weather.iter_mut().enumerate() {
                *w = parse_f64(16 + k, "weather")?;
            }

            let entry = by_key.entry((unit_id.clone(), year)).or_insert_with(|| PanelRow {
                unit_id,
                year,
                outcomes: BTreeMap::new(),
                monitor,
                proxy,
                weather,
            });
            if entry.monitor != monitor || entry.proxy != proxy || entry.weather != weather {
                return Err(Error::Schema(format!(
                    "line {}: pollutant/weather cells disagree with an earlier line for ({}, {})",
                    line + 2,
                    entry.unit_id,
                    year
                )));
            }
            if let Some(y) = yield_value {
                if entry.outcomes.insert(crop.clone(), y).is_some() {
                    return Err(Error::Schema(format!(
                        "line {}: duplicate crop '{crop}' for ({}, {})",
                        line + 2,
                        entry.unit_id,
                        year
                    )));
                }
            }
        }
        PanelDataset::new(by_key.into_values().collect())
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        PanelDataset::read_csv(std::io::BufReader::new(file))
    }

    /// One line per (unit, year, crop) over the dataset's crop universe;
    /// a crop with no outcome gets an empty yield cell.
    pub fn write_csv<W: Write>(&self, writer: &mut W) -> Result<()> {
        let mut csv_writer = csv::Writer::from_writer(writer);
        csv_writer
            .write_record(csv_header())
            .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
        let crops: &[String] = if self.crops.is_empty() {
            &[String::new()] // degenerate panel with no outcomes at all
        } else {
            &self.crops
        };
        let fmt_opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            for crop in crops.iter() {
                let mut cells = vec![
                    row.unit_id.clone(),
                    row.year.to_string(),
                    crop.clone(),
                    row.outcomes.get(crop).map(|y| y.to_string()).unwrap_or_default(),
                ];
                cells.extend(row.monitor.iter().map(fmt_opt));
                cells.extend(row.proxy.iter().map(fmt_opt));
                cells.extend(row.weather.iter().map(|w| w.to_string()));
                csv_writer
                    .write_record(&cells)
                    .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
            }
        }
        csv_writer
            .flush()
            .map_err(|e| Error::Schema(format!("csv write: {e}")))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut file)
    }
}

fn csv_header() -> Vec<&'static str> {
    let mut h = vec!["unit_id", "year", "crop", "yield"];
    h.extend(["mon_co", "mon_no2", "mon_o3", "mon_pm10", "mon_pm25", "mon_so2"]);
    h.extend(["prox_co", "prox_no2", "prox_o3", "prox_pm10", "prox_pm25", "prox_so2"]);
    h.extend(["w1", "w2", "w3", "w4"]);
    h
}

/// Column accessor used by the regression machinery.
pub(crate) fn monitor_value(row: &PanelRow, pollutant: Pollutant) -> Option<f64> {
    row.monitor[pollutant.index()]
}

pub(crate) fn proxy_value(row: &PanelRow, pollutant: Pollutant) -> Option<f64> {
    row.proxy[pollutant.index()]
}
