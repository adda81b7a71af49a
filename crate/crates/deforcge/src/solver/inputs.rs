//! Loaders for the calibration side tables: trade/production
//! elasticities, factor endowments, and macro projections.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::calibrate::CalibrationError;

/// Behavioral elasticities per commodity. `sigma_va` applies to the
/// activity producing the commodity.
#[derive(Debug, Clone)]
pub struct ElasticityTable {
    pub by_commodity: HashMap<String, CommodityElasticities>,
}

#[derive(Debug, Clone, Copy)]
pub struct CommodityElasticities {
    pub armington: f64,
    pub cet: f64,
    pub value_added: f64,
}

/// Factor endowment row: supply (hectares for land, efficiency units
/// for labor) and base-year unemployment rate.
#[derive(Debug, Clone, Copy)]
pub struct FactorRow {
    pub supply: f64,
    pub unemployment_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FactorTable {
    pub by_factor: HashMap<String, FactorRow>,
}

impl FactorTable {
    /// Non-productive forest stock, stored under the reserved name
    /// `forest`.
    pub fn forest_stock(&self) -> Option<f64> {
        self.by_factor.get("forest").map(|r| r.supply)
    }
}

/// Per-year GDP and population growth rates.
#[derive(Debug, Clone, Default)]
pub struct ProjectionTable {
    pub by_year: BTreeMap<i32, ProjectionRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectionRow {
    pub gdp_growth: f64,
    pub pop_growth: f64,
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CalibrationError> {
    csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CalibrationError::Io {
            path: path.display().to_string(),
            source,
        },
        other => CalibrationError::MalformedRecord {
            line: 0,
            reason: format!("{other:?}"),
        },
    })
}

fn field_f64(record: &csv::StringRecord, idx: usize, line: usize) -> Result<f64, CalibrationError> {
    record[idx]
        .trim()
        .parse()
        .map_err(|_| CalibrationError::MalformedRecord {
            line,
            reason: format!("bad number '{}'", &record[idx]),
        })
}

/// CSV `commodity,sigma_armington,sigma_cet,sigma_va`.
pub fn load_elasticities(path: &Path) -> Result<ElasticityTable, CalibrationError> {
    let mut reader = open(path)?;
    let mut by_commodity = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CalibrationError::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(CalibrationError::MalformedRecord {
                line,
                reason: format!("expected 4 fields, got {}", record.len()),
            });
        }
        by_commodity.insert(
            record[0].trim().to_string(),
            CommodityElasticities {
                armington: field_f64(&record, 1, line)?,
                cet: field_f64(&record, 2, line)?,
                value_added: field_f64(&record, 3, line)?,
            },
        );
    }
    Ok(ElasticityTable { by_commodity })
}

/// CSV `factor,supply,unemployment_rate` (rate empty for the reserved
/// `forest` stock row).
pub fn load_factors(path: &Path) -> Result<FactorTable, CalibrationError> {
    let mut reader = open(path)?;
    let mut by_factor = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CalibrationError::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(CalibrationError::MalformedRecord {
                line,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let ur = if record[2].trim().is_empty() {
            None
        } else {
            Some(field_f64(&record, 2, line)?)
        };
        by_factor.insert(
            record[0].trim().to_string(),
            FactorRow {
                supply: field_f64(&record, 1, line)?,
                unemployment_rate: ur,
            },
        );
    }
    Ok(FactorTable { by_factor })
}

/// CSV `year,gdp_growth,pop_growth`.
pub fn load_projections(path: &Path) -> Result<ProjectionTable, CalibrationError> {
    let mut reader = open(path)?;
    let mut by_year = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CalibrationError::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(CalibrationError::MalformedRecord {
                line,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let year: i32 = record[0]
            .trim()
            .parse()
            .map_err(|_| CalibrationError::MalformedRecord {
                line,
                reason: format!("bad year '{}'", &record[0]),
            })?;
        by_year.insert(
            year,
            ProjectionRow {
                gdp_growth: field_f64(&record, 1, line)?,
                pop_growth: field_f64(&record, 2, line)?,
            },
        );
    }
    Ok(ProjectionTable { by_year })
}
