//! Derived period state and residual assembly for the within-period
//! equilibrium system.
//!
//! Unknowns (see [`PeriodUnknowns`]): domestic prices PD, activity
//! levels QA, sectoral capital rentals WK, unemployment rates for labor
//! and each land type, and the exchange rate EXR. Equations: commodity
//! market clearing (one dropped by Walras' law and monitored), zero
//! profit per activity, capital-market clearing per activity, labor and
//! land clearing through wage curves, balance of payments in foreign
//! currency with fixed foreign savings, and the CPI numéraire.

use serde::{Deserialize, Serialize};

use super::functions::{household_demands, wage_curve, CesNest, FunctionError};
use super::params::{ModelParameters, PeriodInputs, PeriodUnknowns, N_DEST};

/// Everything implied by an unknown vector: prices, quantity flows,
/// incomes, and reporting aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Derived {
    pub pm: Vec<f64>,
    /// Export prices in local currency, net of any wedge.
    pub pe: Vec<[f64; N_DEST]>,
    pub pq: Vec<f64>,
    /// Purchaser price: composite price grossed up by the sales tax.
    pub pp: Vec<f64>,
    pub px: Vec<f64>,
    pub pva: Vec<f64>,
    pub cpi: f64,
    pub wage: f64,
    pub real_wage: f64,
    /// Nominal land rent per hectare, per land type.
    pub land_rent: Vec<f64>,
    /// Real land rent (deflated by CPI), per land type.
    pub real_land_rent: Vec<f64>,
    /// Labor demand per activity.
    pub qld: Vec<f64>,
    /// Capital demand per activity.
    pub qkd: Vec<f64>,
    /// Land demand per land type (hectares).
    pub qfd: Vec<f64>,
    /// Domestic supply per commodity (CET allocation).
    pub qds: Vec<f64>,
    /// Exports per commodity and destination.
    pub qe: Vec<[f64; N_DEST]>,
    /// Composite absorption per commodity.
    pub qq: Vec<f64>,
    /// Domestic demand per commodity (Armington allocation).
    pub qdd: Vec<f64>,
    /// Imports per commodity.
    pub qm: Vec<f64>,
    /// Intermediate use [commodity][activity].
    pub intermediate_use: Vec<Vec<f64>>,
    /// Household consumption [household][commodity].
    pub household_use: Vec<Vec<f64>>,
    /// Government consumption per commodity (fixed real).
    pub government_use: Vec<f64>,
    /// Investment demand per commodity.
    pub qinv: Vec<f64>,
    pub household_income: Vec<f64>,
    pub household_budget: Vec<f64>,
    pub government_income: f64,
    pub government_savings: f64,
    /// Total nominal investment (= total savings).
    pub investment: f64,
    /// Investment deflated by its own price index.
    pub real_investment: f64,
    /// Real value added per activity (base-price quantities).
    pub value_added: Vec<f64>,
    /// Real GDP: total value added at base prices.
    pub real_gdp: f64,
    /// Exports fob per partner, foreign currency.
    pub exports_fcu: [f64; N_DEST],
    /// Imports cif per partner, foreign currency.
    pub imports_fcu: [f64; N_DEST],
}

/// A solved period: the unknowns plus everything derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodEquilibrium {
    pub unknowns: PeriodUnknowns,
    pub derived: Derived,
    /// Max-norm of the residual vector at the solution.
    pub residual_norm: f64,
    /// Relative imbalance of the dropped market-clearing equation.
    pub walras_residual: f64,
}

fn with_tfp(nest: &CesNest, tfp: f64) -> CesNest {
    let mut n = nest.clone();
    n.shift *= tfp;
    n
}

/// Compute the full derived state for an unknown vector.
pub fn evaluate(
    params: &ModelParameters,
    x: &PeriodUnknowns,
    inputs: &PeriodInputs,
) -> Result<Derived, FunctionError> {
    let nc = params.n_commodities();
    let na = params.n_activities();
    let nl = params.n_land();

    // Trade prices and the composite (Armington) price level.
    let mut pm = vec![0.0; nc];
    let mut pe = vec![[0.0; N_DEST]; nc];
    let mut pq = vec![0.0; nc];
    let mut pp = vec![0.0; nc];
    for (c, com) in params.commodities.iter().enumerate() {
        pm[c] = com.pwm * (1.0 + com.tariff) * x.exr;
        for d in 0..N_DEST {
            pe[c][d] = com.pwe[d] * (1.0 - inputs.export_wedges[c][d]) * x.exr;
        }
        pq[c] = com.armington.unit_cost(&[x.pd[c], pm[c]])?;
        pp[c] = pq[c] * (1.0 + com.sales_tax);
    }
    let cpi: f64 = params
        .cpi_weights
        .iter()
        .zip(&pp)
        .zip(&params.base_purchaser_price)
        .map(|((&w, &p), &p0)| w * p / p0)
        .sum();

    // Factor prices from wage curves (real) scaled to nominal by CPI.
    let real_wage = wage_curve(
        x.ur_labor,
        params.labor.base_real_wage,
        params.labor.base_ur,
        params.labor.wage_elasticity,
    )?;
    let wage = real_wage * cpi;
    let mut real_land_rent = vec![0.0; nl];
    let mut land_rent = vec![0.0; nl];
    for (f, lt) in params.land_types.iter().enumerate() {
        real_land_rent[f] = wage_curve(
            x.ur_land[f],
            lt.base_rent,
            lt.base_ur,
            params.land_wage_elasticity,
        )?;
        land_rent[f] = real_land_rent[f] * cpi;
    }

    // Production: value-added costs and factor demands.
    let mut pva = vec![0.0; na];
    let mut qld = vec![0.0; na];
    let mut qkd = vec![0.0; na];
    let mut qfd = vec![0.0; nl];
    let mut value_added = vec![0.0; na];
    for (a, act) in params.activities.iter().enumerate() {
        let nest = with_tfp(&act.value_added, inputs.tfp);
        let mut prices = vec![wage, x.wk[a]];
        if let Some(f) = act.land_type {
            prices.push(land_rent[f]);
        }
        pva[a] = nest.unit_cost(&prices)?;
        value_added[a] = act.iva * x.qa[a];
        let demands = nest.demands(&prices, value_added[a])?;
        qld[a] = demands[0];
        qkd[a] = demands[1];
        if let Some(f) = act.land_type {
            qfd[f] = demands[2];
        }
    }

    // Output allocation: two-level CET.
    let mut px = vec![0.0; nc];
    let mut qds = vec![0.0; nc];
    let mut qe = vec![[0.0; N_DEST]; nc];
    for (c, com) in params.commodities.iter().enumerate() {
        let a = params
            .activities
            .iter()
            .position(|act| act.commodity == c)
            .expect("every commodity has a producing activity");
        if com.has_exports() {
            let peagg = com.cet_dest.unit_revenue(&pe[c])?;
            px[c] = com.cet_top.unit_revenue(&[x.pd[c], peagg])?;
            let top = com.cet_top.supplies(&[x.pd[c], peagg], x.qa[a])?;
            qds[c] = top[0];
            let dest = com.cet_dest.supplies(&pe[c], top[1])?;
            qe[c] = [dest[0], dest[1]];
        } else {
            px[c] = com.cet_top.unit_revenue(&[x.pd[c], 1.0])?;
            qds[c] = com.cet_top.supplies(&[x.pd[c], 1.0], x.qa[a])?[0];
        }
    }

    // Intermediate demand.
    let mut intermediate_use = vec![vec![0.0; na]; nc];
    let mut qint = vec![0.0; nc];
    for (a, act) in params.activities.iter().enumerate() {
        for c in 0..nc {
            let q = act.ica[c] * x.qa[a];
            intermediate_use[c][a] = q;
            qint[c] += q;
        }
    }

    // Institution incomes and household demand.
    let labor_income = wage * qld.iter().sum::<f64>();
    let capital_income: f64 = x.wk.iter().zip(&qkd).map(|(&w, &q)| w * q).sum();
    let land_income: Vec<f64> = land_rent.iter().zip(&qfd).map(|(&r, &q)| r * q).collect();
    let nh = params.households.len();
    let mut household_income = vec![0.0; nh];
    let mut household_budget = vec![0.0; nh];
    let mut household_use = vec![vec![0.0; nc]; nh];
    let mut direct_taxes = 0.0;
    let mut household_savings = 0.0;
    for (h, hh) in params.households.iter().enumerate() {
        let mut y = hh.labor_share * labor_income + hh.capital_share * capital_income;
        for (f, &li) in land_income.iter().enumerate() {
            y += hh.land_shares[f] * li;
        }
        y += hh.transfer_from_gov * cpi + hh.transfer_from_row * x.exr;
        household_income[h] = y;
        let tax = hh.direct_tax_rate * y;
        let sav = hh.savings_rate * (y - tax);
        direct_taxes += tax;
        household_savings += sav;
        household_budget[h] = y - tax - sav;
        household_use[h] = household_demands(household_budget[h], &hh.budget_shares, &pp)?;
    }

    // Government: real consumption and transfers fixed; savings close
    // the budget. Investment is savings-driven; the sales-tax and
    // tariff content of investment demand feeds back into government
    // income, so total investment solves a scalar linear equation.
    let government_use = params.government.consumption.clone();
    let gov_spending: f64 = pp.iter().zip(&government_use).map(|(&p, &q)| p * q).sum();
    let transfers_out: f64 = params
        .households
        .iter()
        .map(|h| h.transfer_from_gov * cpi)
        .sum();
    let output_taxes: f64 = params
        .activities
        .iter()
        .enumerate()
        .map(|(a, act)| act.output_tax * px[act.commodity] * x.qa[a])
        .sum();
    let fixed_income = direct_taxes
        + output_taxes
        + params.government.transfer_from_row * x.exr;
    let mut d0 = vec![0.0; nc];
    let mut tau = vec![0.0; nc];
    let mut dfrac = vec![0.0; nc];
    let mut mfrac = vec![0.0; nc];
    for (c, com) in params.commodities.iter().enumerate() {
        d0[c] = qint[c] + government_use[c];
        for h in 0..nh {
            d0[c] += household_use[h][c];
        }
        let unit = com.armington.demands(&[x.pd[c], pm[c]], 1.0)?;
        dfrac[c] = unit[0];
        mfrac[c] = unit[1];
        tau[c] = com.sales_tax * pq[c] + com.tariff * com.pwm * x.exr * mfrac[c];
    }
    let foreign_savings_lcu = x.exr * (params.foreign_savings[0] + params.foreign_savings[1]);
    let fixed_savings = household_savings + foreign_savings_lcu + fixed_income
        + tau.iter().zip(&d0).map(|(&t, &d)| t * d).sum::<f64>()
        - gov_spending
        - transfers_out;
    let leak: f64 = (0..nc)
        .map(|c| tau[c] * params.investment_shares[c] / pp[c])
        .sum();
    let investment = fixed_savings / (1.0 - leak);
    let mut qinv = vec![0.0; nc];
    let mut qq = vec![0.0; nc];
    for c in 0..nc {
        qinv[c] = params.investment_shares[c] * investment / pp[c];
        qq[c] = d0[c] + qinv[c];
    }
    let government_income =
        fixed_income + tau.iter().zip(&qq).map(|(&t, &q)| t * q).sum::<f64>();
    let government_savings = government_income - gov_spending - transfers_out;
    let inv_deflator: f64 = (0..nc)
        .map(|c| params.investment_shares[c] * pp[c] / params.base_purchaser_price[c])
        .sum();
    let real_investment = investment / inv_deflator;

    // Armington split of absorption.
    let mut qdd = vec![0.0; nc];
    let mut qm = vec![0.0; nc];
    for c in 0..nc {
        qdd[c] = dfrac[c] * qq[c];
        qm[c] = mfrac[c] * qq[c];
    }

    // Partner accounting in foreign currency.
    let mut exports_fcu = [0.0; N_DEST];
    let mut imports_fcu = [0.0; N_DEST];
    for (c, com) in params.commodities.iter().enumerate() {
        for d in 0..N_DEST {
            exports_fcu[d] += com.pwe[d] * (1.0 - inputs.export_wedges[c][d]) * qe[c][d];
            imports_fcu[d] += com.pwm * qm[c] * com.import_partner_shares[d];
        }
    }

    let real_gdp = value_added.iter().sum();
    Ok(Derived {
        pm,
        pe,
        pq,
        pp,
        px,
        pva,
        cpi,
        wage,
        real_wage,
        land_rent,
        real_land_rent,
        qld,
        qkd,
        qfd,
        qds,
        qe,
        qq,
        qdd,
        qm,
        intermediate_use,
        household_use,
        government_use,
        qinv,
        household_income,
        household_budget,
        government_income,
        government_savings,
        investment,
        real_investment,
        value_added,
        real_gdp,
        exports_fcu,
        imports_fcu,
    })
}

/// Residual of one commodity's market clearing, relative to its base
/// domestic sales.
fn clearing_residual(params: &ModelParameters, d: &Derived, c: usize) -> f64 {
    (d.qds[c] - d.qdd[c]) / params.commodities[c].base_domestic
}

/// Assemble the square residual vector. The dropped commodity's
/// clearing residual is returned separately as the Walras check.
pub fn assemble_residuals(
    params: &ModelParameters,
    x: &PeriodUnknowns,
    inputs: &PeriodInputs,
) -> Result<(Vec<f64>, f64), FunctionError> {
    let d = evaluate(params, x, inputs)?;
    Ok(residuals_from_derived(params, x, inputs, &d))
}

/// Residuals given an already-evaluated derived state.
pub fn residuals_from_derived(
    params: &ModelParameters,
    x: &PeriodUnknowns,
    inputs: &PeriodInputs,
    d: &Derived,
) -> (Vec<f64>, f64) {
    let nc = params.n_commodities();
    let mut r = Vec::with_capacity(params.n_unknowns());
    for c in 0..nc {
        if c != params.dropped_commodity {
            r.push(clearing_residual(params, d, c));
        }
    }
    for (a, act) in params.activities.iter().enumerate() {
        let unit_cost: f64 = act
            .ica
            .iter()
            .zip(&d.pp)
            .map(|(&i, &p)| i * p)
            .sum::<f64>()
            + act.iva * d.pva[a];
        r.push((1.0 - act.output_tax) * d.px[act.commodity] - unit_cost);
    }
    for (a, act) in params.activities.iter().enumerate() {
        r.push((d.qkd[a] - inputs.capital[a]) / act.base_capital);
    }
    let employment = (1.0 - x.ur_labor) * inputs.labor_supply;
    r.push((d.qld.iter().sum::<f64>() - employment) / params.labor.base_supply);
    for (f, lt) in params.land_types.iter().enumerate() {
        let used = (1.0 - x.ur_land[f]) * inputs.land_supply[f];
        r.push((d.qfd[f] - used) / lt.base_supply);
    }
    let transfers_in = params.government.transfer_from_row
        + params
            .households
            .iter()
            .map(|h| h.transfer_from_row)
            .sum::<f64>();
    let fsav = params.foreign_savings[0] + params.foreign_savings[1];
    let import_scale = params
        .commodities
        .iter()
        .map(|c| c.pwm * c.base_import)
        .sum::<f64>();
    r.push(
        (d.imports_fcu[0] + d.imports_fcu[1]
            - d.exports_fcu[0]
            - d.exports_fcu[1]
            - transfers_in
            - fsav)
            / import_scale,
    );
    r.push(d.cpi - inputs.numeraire);
    let walras = clearing_residual(params, d, params.dropped_commodity);
    (r, walras)
}

/// Human-readable labels matching the residual vector order.
pub fn equation_labels(params: &ModelParameters) -> Vec<String> {
    let mut labels = Vec::with_capacity(params.n_unknowns());
    for (c, com) in params.commodities.iter().enumerate() {
        if c != params.dropped_commodity {
            labels.push(format!("clearing:{}", com.name));
        }
    }
    for act in &params.activities {
        labels.push(format!("zero-profit:{}", act.name));
    }
    for act in &params.activities {
        labels.push(format!("capital:{}", act.name));
    }
    labels.push("labor".to_string());
    for lt in &params.land_types {
        labels.push(format!("land:{}", lt.name));
    }
    labels.push("balance-of-payments".to_string());
    labels.push("numeraire".to_string());
    labels
}
