//! Between-period state transitions: deforestation-driven land supply,
//! migration of land between uses, capital accumulation, and labor
//! growth.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::params::ModelParameters;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-positive real land rent {0}")]
    NonPositivePrice(f64),
    #[error("land stock would go negative for use index {0}")]
    NegativeStock(usize),
}

/// Land state of one period, indexed like `ModelParameters::land_types`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandAccount {
    /// Current supply per land type, hectares.
    pub qfs: Vec<f64>,
    /// Pre-migration initial supply per land type, hectares.
    pub qfinit: Vec<f64>,
    /// New deforestation this period (non-compliant types only), ha.
    pub qdefor: Vec<f64>,
    /// Non-productive forest stock, hectares.
    pub forest: f64,
}

impl LandAccount {
    /// Base-year land state.
    pub fn base(params: &ModelParameters) -> LandAccount {
        let qfs: Vec<f64> = params.land_types.iter().map(|l| l.base_supply).collect();
        LandAccount {
            qfinit: qfs.clone(),
            qdefor: vec![0.0; qfs.len()],
            qfs,
            forest: params.forest_stock,
        }
    }

    pub fn total_deforestation(&self) -> f64 {
        self.qdefor.iter().sum()
    }
}

/// New deforested hectares supplied to each non-compliant land type:
/// `QFS⁰⁰·((rr/rr⁰⁰)^μ − 1)`, floored at zero (no reforestation).
/// `real_rent` is the CPI-deflated rent per hectare this period.
pub fn deforestation_supply(
    params: &ModelParameters,
    real_rent: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    params
        .land_types
        .iter()
        .zip(real_rent)
        .map(|(lt, &rr)| {
            if lt.compliant {
                return Ok(0.0);
            }
            if !(rr > 0.0) {
                return Err(DynamicsError::NonPositivePrice(rr));
            }
            let ratio = rr / lt.base_rent;
            Ok((lt.base_supply * (ratio.powf(lt.mu) - 1.0)).max(0.0))
        })
        .collect()
}

/// Advance the land account one period: deforestation adds to the next
/// period's initial non-compliant supply and is removed from the forest
/// stock. Compliant supply carries over unchanged.
pub fn advance_land(
    params: &ModelParameters,
    land: &LandAccount,
    qdefor: &[f64],
) -> LandAccount {
    let mut qdefor = qdefor.to_vec();
    let mut total: f64 = qdefor.iter().sum();
    if total > land.forest {
        warn!(
            "deforestation {:.4} ha exceeds remaining forest {:.4} ha; capping",
            total, land.forest
        );
        let scale = land.forest / total;
        for q in &mut qdefor {
            *q *= scale;
        }
        total = land.forest;
    }
    let qfinit: Vec<f64> = params
        .land_types
        .iter()
        .enumerate()
        .map(|(f, lt)| {
            if lt.compliant {
                land.qfs[f]
            } else {
                land.qfs[f] + qdefor[f]
            }
        })
        .collect();
    LandAccount {
        qfs: qfinit.clone(),
        qfinit,
        qdefor,
        forest: land.forest - total,
    }
}

/// Reallocate hectares between uses within each compliance class by
/// relative profitability. The flow from use i to use j is
/// `mobility·QFINIT[i]·max(0, (r_j − r_i)/r_i)`, capped so no stock
/// goes negative; class totals are conserved exactly.
pub fn migrate_land(
    params: &ModelParameters,
    qfinit: &[f64],
    returns: &[f64],
    mobility: f64,
) -> Result<Vec<f64>, DynamicsError> {
    let n = params.land_types.len();
    let mut qfs = qfinit.to_vec();
    for (i, lti) in params.land_types.iter().enumerate() {
        if !(returns[i] > 0.0) {
            return Err(DynamicsError::NonPositivePrice(returns[i]));
        }
        let mut outflows = vec![0.0; n];
        let mut total_out = 0.0;
        for (j, ltj) in params.land_types.iter().enumerate() {
            if i == j || lti.compliant != ltj.compliant {
                continue;
            }
            let gain = (returns[j] - returns[i]) / returns[i];
            if gain > 0.0 {
                outflows[j] = mobility * qfinit[i] * gain;
                total_out += outflows[j];
            }
        }
        if total_out > qfinit[i] {
            // Proportional rationing keeps the stock at zero, not below.
            let scale = qfinit[i] / total_out;
            for o in &mut outflows {
                *o *= scale;
            }
            total_out = qfinit[i];
        }
        qfs[i] -= total_out;
        for (j, &o) in outflows.iter().enumerate() {
            qfs[j] += o;
        }
    }
    Ok(qfs)
}

/// Next-period capital stocks and labor supply: depreciation plus
/// investment allocated by fixed shares; exogenous population growth.
pub fn advance_capital_labor(
    params: &ModelParameters,
    capital: &[f64],
    real_investment: f64,
    labor_supply: f64,
    pop_growth: f64,
) -> (Vec<f64>, f64) {
    let next_capital = capital
        .iter()
        .zip(&params.capital_allocation)
        .map(|(&k, &s)| (1.0 - params.depreciation) * k + s * real_investment)
        .collect();
    (next_capital, labor_supply * (1.0 + pop_growth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::functions::CesNest;
    use crate::model::params::*;
    use approx::assert_relative_eq;

    /// Minimal parameter set with the given land types; only the fields
    /// dynamics reads are meaningful.
    fn land_params(types: &[(&str, bool, f64, f64, f64)]) -> ModelParameters {
        let land_types = types
            .iter()
            .map(|&(name, compliant, supply, rent, mu)| LandType {
                name: name.to_string(),
                activity: 0,
                compliant,
                base_supply: supply,
                base_ur: 0.1,
                base_rent: rent,
                mu,
            })
            .collect();
        ModelParameters {
            commodities: vec![],
            activities: vec![],
            land_types,
            households: vec![],
            government: Government {
                consumption: vec![],
                transfer_from_row: 0.0,
            },
            labor: LaborMarket {
                base_supply: 1.0,
                base_ur: 0.1,
                base_real_wage: 1.0,
                wage_elasticity: -0.1,
            },
            land_wage_elasticity: -0.4,
            cpi_weights: vec![],
            base_purchaser_price: vec![],
            investment_shares: vec![],
            capital_allocation: vec![0.7, 0.3],
            depreciation: 0.05,
            capital_rental_rate: 0.15,
            land_mobility: 0.25,
            foreign_savings: [0.0, 0.0],
            forest_stock: 1000.0,
            base_year: 2019,
            dropped_commodity: 0,
        }
    }

    #[allow(dead_code)]
    fn unused_nest() -> CesNest {
        CesNest {
            sigma: 1.0,
            shares: vec![1.0],
            shift: 1.0,
        }
    }

    #[test]
    fn no_deforestation_at_base_rent() {
        let p = land_params(&[("n", false, 100.0, 2.0, 0.06)]);
        let q = deforestation_supply(&p, &[2.0]).unwrap();
        assert_eq!(q, vec![0.0]);
    }

    #[test]
    fn deforestation_documented_value() {
        // 100 ha base, real-rent ratio 1.1, mu = 0.06.
        let p = land_params(&[("n", false, 100.0, 1.0, 0.06)]);
        let q = deforestation_supply(&p, &[1.1]).unwrap();
        assert_relative_eq!(q[0], 0.5734993256365284, max_relative = 1e-10);
        assert_relative_eq!(q[0], 100.0 * (1.1f64.powf(0.06) - 1.0), epsilon = 0.0);
    }

    #[test]
    fn deforestation_floored_at_zero() {
        let p = land_params(&[("n", false, 100.0, 1.0, 0.06)]);
        let q = deforestation_supply(&p, &[0.9]).unwrap();
        assert_eq!(q[0], 0.0);
    }

    #[test]
    fn deforestation_compliant_always_zero() {
        let p = land_params(&[("c", true, 100.0, 1.0, 0.0)]);
        let q = deforestation_supply(&p, &[5.0]).unwrap();
        assert_eq!(q[0], 0.0);
    }

    #[test]
    fn deforestation_monotone_in_rent() {
        let p = land_params(&[("n", false, 100.0, 1.0, 0.06)]);
        let mut last = 0.0;
        for r in [1.0, 1.05, 1.1, 1.5, 2.0] {
            let q = deforestation_supply(&p, &[r]).unwrap()[0];
            assert!(q >= last);
            last = q;
        }
    }

    #[test]
    fn advance_adds_deforestation_to_noncompliant_only() {
        let p = land_params(&[("c", true, 100.0, 1.0, 0.0), ("n", false, 100.0, 1.0, 0.06)]);
        let land = LandAccount::base(&p);
        let next = advance_land(&p, &land, &[0.0, 0.5734993256365284]);
        assert_eq!(next.qfinit[0], 100.0);
        assert_relative_eq!(next.qfinit[1], 100.5734993256365284, epsilon = 1e-12);
        assert_relative_eq!(next.forest, 1000.0 - 0.5734993256365284, epsilon = 1e-12);
    }

    #[test]
    fn advance_subtracts_total_from_forest() {
        let p = land_params(&[("n", false, 100.0, 1.0, 0.06)]);
        let mut land = LandAccount::base(&p);
        land.forest = 1000.0;
        let next = advance_land(&p, &land, &[47.0]);
        assert_eq!(next.forest, 953.0);
    }

    #[test]
    fn advance_caps_at_remaining_forest() {
        let p = land_params(&[("n", false, 100.0, 1.0, 0.06)]);
        let mut land = LandAccount::base(&p);
        land.forest = 10.0;
        let next = advance_land(&p, &land, &[25.0]);
        assert_eq!(next.forest, 0.0);
        assert_relative_eq!(next.qfinit[0], 110.0, epsilon = 1e-12);
    }

    #[test]
    fn migration_no_incentive_no_flow() {
        let p = land_params(&[("a", true, 100.0, 1.0, 0.0), ("b", true, 100.0, 1.0, 0.0)]);
        let qfs = migrate_land(&p, &[100.0, 100.0], &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(qfs, vec![100.0, 100.0]);
    }

    #[test]
    fn migration_documented_flow() {
        // Two uses, 100 ha each, returns 1.0 vs 1.2, mobility 0.1:
        // 0.1·100·0.2 = 2 ha migrate toward the higher return.
        let p = land_params(&[("a", true, 100.0, 1.0, 0.0), ("b", true, 100.0, 1.0, 0.0)]);
        let qfs = migrate_land(&p, &[100.0, 100.0], &[1.0, 1.2], 0.1).unwrap();
        assert_relative_eq!(qfs[0], 98.0, epsilon = 1e-12);
        assert_relative_eq!(qfs[1], 102.0, epsilon = 1e-12);
        assert_relative_eq!(qfs[0] + qfs[1], 200.0, epsilon = 0.0);
    }

    #[test]
    fn migration_stays_within_compliance_class() {
        let p = land_params(&[("a-c", true, 100.0, 1.0, 0.0), ("a-n", false, 100.0, 1.0, 0.06)]);
        let qfs = migrate_land(&p, &[100.0, 100.0], &[1.0, 10.0], 0.5).unwrap();
        assert_eq!(qfs, vec![100.0, 100.0]);
    }

    #[test]
    fn migration_conserves_class_totals() {
        let p = land_params(&[
            ("a-c", true, 0.0, 1.0, 0.0),
            ("b-c", true, 0.0, 1.0, 0.0),
            ("a-n", false, 0.0, 1.0, 0.06),
            ("b-n", false, 0.0, 1.0, 0.06),
        ]);
        let qfinit = [120.0, 80.0, 30.0, 70.0];
        let returns = [1.0, 1.4, 2.0, 0.5];
        let qfs = migrate_land(&p, &qfinit, &returns, 0.3).unwrap();
        assert_relative_eq!(qfs[0] + qfs[1], 200.0, max_relative = 1e-13);
        assert_relative_eq!(qfs[2] + qfs[3], 100.0, max_relative = 1e-13);
        assert!(qfs.iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn migration_caps_outflow_at_stock() {
        // Huge return gap would imply an outflow larger than the stock.
        let p = land_params(&[("a", true, 0.0, 1.0, 0.0), ("b", true, 0.0, 1.0, 0.0)]);
        let qfs = migrate_land(&p, &[10.0, 10.0], &[0.01, 10.0], 1.0).unwrap();
        assert_relative_eq!(qfs[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(qfs[1], 20.0, epsilon = 1e-12);
    }

    #[test]
    fn capital_decay_without_investment() {
        let p = land_params(&[]);
        let (k, _) = advance_capital_labor(&p, &[100.0, 100.0], 0.0, 1.0, 0.0);
        assert_eq!(k, vec![95.0, 95.0]);
    }

    #[test]
    fn capital_investment_allocated_by_shares() {
        let p = land_params(&[]);
        let (k, _) = advance_capital_labor(&p, &[100.0, 100.0], 10.0, 1.0, 0.0);
        assert_relative_eq!(k[0], 95.0 + 7.0, epsilon = 1e-12);
        assert_relative_eq!(k[1], 95.0 + 3.0, epsilon = 1e-12);
    }

    #[test]
    fn labor_grows_with_population() {
        let p = land_params(&[]);
        let (_, ls) = advance_capital_labor(&p, &[], 0.0, 100.0, 0.01);
        assert_relative_eq!(ls, 101.0, epsilon = 1e-12);
    }
}
