//! Calibration: read every share, shift, and tax parameter off a
//! balanced SAM so the base-year data point solves the full equation
//! system exactly.
//!
//! Conventions: quantity units are chosen so all base prices are one
//! except land, which is measured in physical hectares with its rent
//! read from the SAM payment and the base unemployment rate. Tax
//! accounts are identified by the reserved names `tax-dir`, `tax-sls`,
//! `tax-imp`, `tax-act`; labor and capital by `flab` and `fcap`; every
//! other factor account is a land type attached to the single activity
//! that pays it.

use thiserror::Error;

use crate::model::functions::{CesNest, CetNest};
use crate::model::params::*;
use crate::sam::{AccountKind, Compliance, Partner, SocialAccountingMatrix};

use super::inputs::{ElasticityTable, FactorTable};

pub const TAX_DIRECT: &str = "tax-dir";
pub const TAX_SALES: &str = "tax-sls";
pub const TAX_IMPORT: &str = "tax-imp";
pub const TAX_ACTIVITY: &str = "tax-act";
pub const FACTOR_LABOR: &str = "flab";
pub const FACTOR_CAPITAL: &str = "fcap";

/// Default behavioral constants, all overridable by the caller after
/// calibration.
pub const LABOR_WAGE_ELASTICITY: f64 = -0.1;
pub const LAND_WAGE_ELASTICITY: f64 = -0.4;
pub const DEPRECIATION: f64 = 0.05;
/// Net return on capital; the base gross rental rate is this plus
/// depreciation, and base stocks are SAM payments over that rate.
pub const CAPITAL_NET_RETURN: f64 = 0.10;
pub const LAND_MOBILITY: f64 = 0.25;
/// Reference land-supply elasticity before calibration.
pub const MU_REFERENCE: f64 = 0.06;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("SAM is unbalanced: max relative imbalance {max_relative:.3e} exceeds {tolerance:.1e}")]
    UnbalancedSam { max_relative: f64, tolerance: f64 },
    #[error("missing elasticity for commodity '{0}'")]
    MissingElasticity(String),
    #[error("inconsistent factor data: {0}")]
    InconsistentFactorData(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

const BALANCE_TOLERANCE: f64 = 1e-7;

/// Calibrate the full parameter set from a balanced, disaggregated SAM.
pub fn calibrate(
    sam: &SocialAccountingMatrix,
    elasticities: &ElasticityTable,
    factors: &FactorTable,
) -> Result<ModelParameters, CalibrationError> {
    let report = sam.check_balance(BALANCE_TOLERANCE);
    if !report.balanced {
        return Err(CalibrationError::UnbalancedSam {
            max_relative: report.max_relative_imbalance,
            tolerance: BALANCE_TOLERANCE,
        });
    }
    let inconsistent = |msg: String| CalibrationError::InconsistentFactorData(msg);

    let activity_idx = sam.accounts_of_kind(AccountKind::Activity);
    let commodity_idx = sam.accounts_of_kind(AccountKind::Commodity);
    let household_idx = sam.accounts_of_kind(AccountKind::Household);
    let factor_idx = sam.accounts_of_kind(AccountKind::Factor);
    let gov_idx = *sam
        .accounts_of_kind(AccountKind::Government)
        .first()
        .ok_or_else(|| inconsistent("no government account".to_string()))?;
    let savinv_idx = *sam
        .accounts_of_kind(AccountKind::SavingsInvestment)
        .first()
        .ok_or_else(|| inconsistent("no savings-investment account".to_string()))?;
    let row_idx = sam.accounts_of_kind(AccountKind::RestOfWorld);
    let mut row_by_partner = [usize::MAX; N_DEST];
    for &r in &row_idx {
        match sam.account(r).partner {
            Some(Partner::Eu) => row_by_partner[DEST_EU] = r,
            Some(Partner::Rest) => row_by_partner[DEST_REST] = r,
            None => {
                return Err(inconsistent(format!(
                    "rest-of-world account '{}' has no partner tag",
                    sam.account(r).name
                )))
            }
        }
    }
    if row_by_partner.contains(&usize::MAX) {
        return Err(inconsistent(
            "need one rest-of-world account per partner (eu, rest)".to_string(),
        ));
    }
    // 1:1 activity -> commodity mapping from the output cells.
    let mut produced_by = vec![usize::MAX; commodity_idx.len()];
    let mut activity_commodity = Vec::with_capacity(activity_idx.len());
    for (ai, &a) in activity_idx.iter().enumerate() {
        let mut found = None;
        for (ci, &c) in commodity_idx.iter().enumerate() {
            if sam.get(a, c) > 0.0 {
                if found.is_some() {
                    return Err(inconsistent(format!(
                        "activity '{}' produces more than one commodity",
                        sam.account(a).name
                    )));
                }
                found = Some(ci);
            }
        }
        let ci = found.ok_or_else(|| {
            inconsistent(format!(
                "activity '{}' produces nothing",
                sam.account(a).name
            ))
        })?;
        if produced_by[ci] != usize::MAX {
            return Err(inconsistent(format!(
                "commodity '{}' has more than one producer",
                sam.account(commodity_idx[ci]).name
            )));
        }
        produced_by[ci] = ai;
        activity_commodity.push(ci);
    }
    if produced_by.contains(&usize::MAX) {
        return Err(inconsistent("commodity with no producer".to_string()));
    }

    // Factor taxonomy: labor, capital, land types.
    let mut labor_fi = None;
    let mut capital_fi = None;
    let mut land_fi: Vec<usize> = Vec::new();
    for &f in &factor_idx {
        match sam.account(f).name.as_str() {
            FACTOR_LABOR => labor_fi = Some(f),
            FACTOR_CAPITAL => capital_fi = Some(f),
            _ => land_fi.push(f),
        }
    }
    let labor_fi = labor_fi.ok_or_else(|| inconsistent(format!("no '{FACTOR_LABOR}' factor")))?;
    let capital_fi =
        capital_fi.ok_or_else(|| inconsistent(format!("no '{FACTOR_CAPITAL}' factor")))?;

    // Land types: each paid by exactly one activity.
    let mut land_types = Vec::with_capacity(land_fi.len());
    let mut land_of_activity = vec![None; activity_idx.len()];
    for &f in &land_fi {
        let name = sam.account(f).name.clone();
        let mut payer = None;
        for (ai, &a) in activity_idx.iter().enumerate() {
            if sam.get(f, a) > 0.0 {
                if payer.is_some() {
                    return Err(inconsistent(format!(
                        "land factor '{name}' is paid by more than one activity"
                    )));
                }
                payer = Some(ai);
            }
        }
        let ai =
            payer.ok_or_else(|| inconsistent(format!("land factor '{name}' is paid by nobody")))?;
        let row = factors
            .by_factor
            .get(&name)
            .ok_or_else(|| inconsistent(format!("no endowment row for land factor '{name}'")))?;
        let base_ur = row.unemployment_rate.ok_or_else(|| {
            inconsistent(format!("land factor '{name}' has no base unemployment rate"))
        })?;
        if !(base_ur > 0.0 && base_ur < 1.0) {
            return Err(inconsistent(format!(
                "land factor '{name}' unemployment rate {base_ur} outside (0,1)"
            )));
        }
        let payment = sam.get(f, activity_idx[ai]);
        let used = (1.0 - base_ur) * row.supply;
        if !(used > 0.0) {
            return Err(inconsistent(format!(
                "land factor '{name}' has no employed hectares"
            )));
        }
        let compliant = match sam.account(f).compliance {
            Compliance::Compliant => true,
            Compliance::NonCompliant => false,
            Compliance::NotApplicable => {
                return Err(inconsistent(format!(
                    "land factor '{name}' has no compliance tag"
                )))
            }
        };
        land_of_activity[ai] = Some(land_types.len());
        land_types.push(LandType {
            name,
            activity: ai,
            compliant,
            base_supply: row.supply,
            base_ur,
            base_rent: payment / used,
            mu: if compliant { 0.0 } else { MU_REFERENCE },
        });
    }

    // Per-commodity trade blocks.
    let sales_tax_row = sam.require_index(TAX_SALES).map_err(|_| {
        inconsistent(format!("no '{TAX_SALES}' account"))
    })?;
    let import_tax_row = sam
        .require_index(TAX_IMPORT)
        .map_err(|_| inconsistent(format!("no '{TAX_IMPORT}' account")))?;
    let activity_tax_row = sam
        .require_index(TAX_ACTIVITY)
        .map_err(|_| inconsistent(format!("no '{TAX_ACTIVITY}' account")))?;
    let direct_tax_row = sam
        .require_index(TAX_DIRECT)
        .map_err(|_| inconsistent(format!("no '{TAX_DIRECT}' account")))?;

    let mut commodities = Vec::with_capacity(commodity_idx.len());
    for (ci, &c) in commodity_idx.iter().enumerate() {
        let name = sam.account(c).name.clone();
        let el = elasticities
            .by_commodity
            .get(&name)
            .ok_or_else(|| CalibrationError::MissingElasticity(name.clone()))?;
        let a = activity_idx[produced_by[ci]];
        let output = sam.get(a, c);
        let exports = [
            sam.get(c, row_by_partner[DEST_EU]),
            sam.get(c, row_by_partner[DEST_REST]),
        ];
        let export_total = exports[0] + exports[1];
        let domestic = output - export_total;
        if !(domestic > 0.0) {
            return Err(inconsistent(format!(
                "commodity '{name}' has no domestic sales"
            )));
        }
        let cif = [
            sam.get(row_by_partner[DEST_EU], c),
            sam.get(row_by_partner[DEST_REST], c),
        ];
        let cif_total = cif[0] + cif[1];
        let tariff_rev = sam.get(import_tax_row, c);
        let tariff = if cif_total > 0.0 {
            tariff_rev / cif_total
        } else {
            0.0
        };
        let base_import = cif_total * (1.0 + tariff);
        let sales_rev = sam.get(sales_tax_row, c);
        let net_absorption = domestic + cif_total + tariff_rev;
        let sales_tax = sales_rev / net_absorption;
        let import_partner_shares = if cif_total > 0.0 {
            [cif[0] / cif_total, cif[1] / cif_total]
        } else {
            [0.0, 0.0]
        };
        let armington = CesNest::calibrate(
            &[domestic, base_import],
            &[1.0, 1.0],
            el.armington,
            domestic + base_import,
        );
        let cet_top = CetNest::calibrate(&[domestic, export_total], &[1.0, 1.0], el.cet, output);
        let cet_dest = if export_total > 0.0 {
            CetNest::calibrate(&exports, &[1.0, 1.0], 2.0 * el.cet, export_total)
        } else {
            CetNest {
                sigma: 2.0 * el.cet,
                shares: vec![0.0, 0.0],
                shift: 1.0,
                active: vec![false, false],
            }
        };
        commodities.push(Commodity {
            name,
            armington,
            cet_top,
            cet_dest,
            sales_tax,
            tariff,
            pwm: 1.0 / (1.0 + tariff),
            pwe: [1.0, 1.0],
            import_partner_shares,
            base_domestic: domestic,
            base_import,
            base_exports: exports,
            base_absorption: domestic + base_import,
        });
    }

    // Per-activity production blocks.
    let mut activities = Vec::with_capacity(activity_idx.len());
    for (ai, &a) in activity_idx.iter().enumerate() {
        let name = sam.account(a).name.clone();
        let ci = activity_commodity[ai];
        let output = sam.get(a, commodity_idx[ci]);
        let output_tax = sam.get(activity_tax_row, a) / output;
        let ica: Vec<f64> = commodity_idx
            .iter()
            .enumerate()
            .map(|(cj, &c)| sam.get(c, a) / (1.0 + commodities[cj].sales_tax) / output)
            .collect();
        let labor = sam.get(labor_fi, a);
        let capital = sam.get(capital_fi, a);
        if !(labor > 0.0 && capital > 0.0) {
            return Err(inconsistent(format!(
                "activity '{name}' must employ both labor and capital"
            )));
        }
        let el = &elasticities.by_commodity[&commodities[ci].name];
        let rental = DEPRECIATION + CAPITAL_NET_RETURN;
        let (mut q, mut p) = (vec![labor, capital / rental], vec![1.0, rental]);
        let mut land_payment = 0.0;
        if let Some(li) = land_of_activity[ai] {
            let lt = &land_types[li];
            land_payment = sam.get(sam.require_index(&lt.name).unwrap(), a);
            q.push((1.0 - lt.base_ur) * lt.base_supply);
            p.push(lt.base_rent);
        }
        let value_added_total = labor + capital + land_payment;
        let value_added = CesNest::calibrate(&q, &p, el.value_added, value_added_total);
        activities.push(Activity {
            name,
            commodity: ci,
            ica,
            iva: value_added_total / output,
            output_tax,
            value_added,
            land_type: land_of_activity[ai],
            base_level: output,
            base_capital: capital / rental,
            base_labor: labor,
        });
    }

    // Households.
    let labor_income = sam.row_sum(labor_fi);
    let capital_income = sam.row_sum(capital_fi);
    let mut households = Vec::with_capacity(household_idx.len());
    let mut consumption_value = vec![0.0; commodity_idx.len()];
    for &h in &household_idx {
        let name = sam.account(h).name.clone();
        let income = sam.row_sum(sam.require_index(&name).unwrap());
        let spend: Vec<f64> = commodity_idx.iter().map(|&c| sam.get(c, h)).collect();
        let spend_total: f64 = spend.iter().sum();
        for (ci, &v) in spend.iter().enumerate() {
            consumption_value[ci] += v;
        }
        let direct_tax = sam.get(direct_tax_row, h);
        let savings = sam.get(savinv_idx, h);
        let land_shares = land_types
            .iter()
            .map(|lt| {
                let f = sam.require_index(&lt.name).unwrap();
                sam.get(h, f) / sam.row_sum(f)
            })
            .collect();
        households.push(Household {
            name,
            budget_shares: spend.iter().map(|&v| v / spend_total).collect(),
            savings_rate: savings / (income - direct_tax),
            direct_tax_rate: direct_tax / income,
            labor_share: sam.get(h, labor_fi) / labor_income,
            capital_share: sam.get(h, capital_fi) / capital_income,
            land_shares,
            transfer_from_gov: sam.get(h, gov_idx),
            transfer_from_row: sam.get(h, row_by_partner[DEST_EU])
                + sam.get(h, row_by_partner[DEST_REST]),
        });
    }

    let government = Government {
        consumption: commodity_idx
            .iter()
            .enumerate()
            .map(|(ci, &c)| sam.get(c, gov_idx) / (1.0 + commodities[ci].sales_tax))
            .collect(),
        transfer_from_row: sam.get(gov_idx, row_by_partner[DEST_EU])
            + sam.get(gov_idx, row_by_partner[DEST_REST]),
    };

    // Labor market: base employment must match endowment × (1 − UR).
    let labor_row = factors
        .by_factor
        .get(FACTOR_LABOR)
        .ok_or_else(|| inconsistent(format!("no endowment row for '{FACTOR_LABOR}'")))?;
    let labor_ur = labor_row.unemployment_rate.ok_or_else(|| {
        inconsistent(format!("'{FACTOR_LABOR}' has no base unemployment rate"))
    })?;
    let implied_employment = (1.0 - labor_ur) * labor_row.supply;
    if (implied_employment - labor_income).abs() > 1e-6 * labor_income {
        return Err(inconsistent(format!(
            "labor endowment × (1 − UR) = {implied_employment:.6} but SAM employment is {labor_income:.6}"
        )));
    }

    let consumption_total: f64 = consumption_value.iter().sum();
    let investment_value: Vec<f64> = commodity_idx.iter().map(|&c| sam.get(c, savinv_idx)).collect();
    let investment_total: f64 = investment_value.iter().sum();
    let capital_total: f64 = activities.iter().map(|a| a.base_capital).sum();
    let forest_stock = factors
        .forest_stock()
        .ok_or_else(|| inconsistent("no 'forest' stock row in the factor table".to_string()))?;

    let dropped_commodity = commodities
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.base_absorption.total_cmp(&b.base_absorption))
        .map(|(i, _)| i)
        .unwrap();

    Ok(ModelParameters {
        base_purchaser_price: commodities.iter().map(|c| 1.0 + c.sales_tax).collect(),
        cpi_weights: consumption_value
            .iter()
            .map(|&v| v / consumption_total)
            .collect(),
        investment_shares: investment_value
            .iter()
            .map(|&v| v / investment_total)
            .collect(),
        capital_allocation: activities
            .iter()
            .map(|a| a.base_capital / capital_total)
            .collect(),
        foreign_savings: [
            sam.get(savinv_idx, row_by_partner[DEST_EU]),
            sam.get(savinv_idx, row_by_partner[DEST_REST]),
        ],
        labor: LaborMarket {
            base_supply: labor_row.supply,
            base_ur: labor_ur,
            base_real_wage: 1.0,
            wage_elasticity: LABOR_WAGE_ELASTICITY,
        },
        land_wage_elasticity: LAND_WAGE_ELASTICITY,
        depreciation: DEPRECIATION,
        capital_rental_rate: DEPRECIATION + CAPITAL_NET_RETURN,
        land_mobility: LAND_MOBILITY,
        forest_stock,
        base_year: sam.base_year,
        dropped_commodity,
        commodities,
        activities,
        land_types,
        households,
        government,
    })
}
