//! Calibrated model parameters and the period state they generate.

use serde::{Deserialize, Serialize};

use super::functions::{CesNest, CetNest};

/// Destination index order for export nests and partner accounting.
pub const DEST_EU: usize = 0;
pub const DEST_REST: usize = 1;
pub const N_DEST: usize = 2;

/// Trade-side parameters of one commodity. Quantity units are chosen so
/// every base price (domestic, composite, tariff-inclusive import,
/// export in local currency) equals one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Commodity {
    pub name: String,
    /// CES over [domestic, import].
    pub armington: CesNest,
    /// CET over [domestic supply, export aggregate].
    pub cet_top: CetNest,
    /// CET over destinations [eu, rest].
    pub cet_dest: CetNest,
    pub sales_tax: f64,
    pub tariff: f64,
    /// World import price (cif, foreign currency); 1/(1+tariff) at base
    /// so the tariff-inclusive domestic import price is one.
    pub pwm: f64,
    /// World export prices (fob, foreign currency) per destination.
    pub pwe: [f64; N_DEST],
    /// Base import value split by partner, used only for reporting.
    pub import_partner_shares: [f64; N_DEST],
    pub base_domestic: f64,
    pub base_import: f64,
    pub base_exports: [f64; N_DEST],
    pub base_absorption: f64,
}

impl Commodity {
    pub fn has_exports(&self) -> bool {
        self.cet_top.active[1]
    }
}

/// Production-side parameters of one activity (1:1 with its commodity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Activity {
    pub name: String,
    /// Index of the produced commodity.
    pub commodity: usize,
    /// Intermediate input coefficients per commodity (composite units
    /// per unit of activity).
    pub ica: Vec<f64>,
    /// Value-added aggregate per unit of activity.
    pub iva: f64,
    pub output_tax: f64,
    /// CES over [labor, capital] or [labor, capital, land].
    pub value_added: CesNest,
    /// Index into `land_types` when the activity uses land.
    pub land_type: Option<usize>,
    pub base_level: f64,
    pub base_capital: f64,
    pub base_labor: f64,
}

/// One land type: a distinct factor with its own wage curve, attached
/// to exactly one activity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandType {
    pub name: String,
    pub activity: usize,
    pub compliant: bool,
    /// Base-year supply in physical hectares.
    pub base_supply: f64,
    pub base_ur: f64,
    /// Base rent per hectare (real; base CPI = 1).
    pub base_rent: f64,
    /// Land-supply (deforestation) elasticity; zero for compliant types.
    pub mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Household {
    pub name: String,
    /// Cobb-Douglas budget shares per commodity; sum to one.
    pub budget_shares: Vec<f64>,
    pub savings_rate: f64,
    pub direct_tax_rate: f64,
    /// Share of economy-wide labor income received.
    pub labor_share: f64,
    /// Share of economy-wide capital income received.
    pub capital_share: f64,
    /// Share of each land type's income received.
    pub land_shares: Vec<f64>,
    /// Transfer from government, fixed in real terms (indexed to CPI).
    pub transfer_from_gov: f64,
    /// Transfer from abroad, fixed in foreign currency.
    pub transfer_from_row: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Government {
    /// Real consumption per commodity, fixed by the closure.
    pub consumption: Vec<f64>,
    /// Transfers from abroad, fixed in foreign currency.
    pub transfer_from_row: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaborMarket {
    pub base_supply: f64,
    pub base_ur: f64,
    pub base_real_wage: f64,
    pub wage_elasticity: f64,
}

/// Everything fixed during a run: calibrated shares and shifts, tax
/// rates, behavioral elasticities, closure constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParameters {
    pub commodities: Vec<Commodity>,
    pub activities: Vec<Activity>,
    pub land_types: Vec<LandType>,
    pub households: Vec<Household>,
    pub government: Government,
    pub labor: LaborMarket,
    pub land_wage_elasticity: f64,
    /// CPI weights per commodity (base household consumption values).
    pub cpi_weights: Vec<f64>,
    /// Base purchaser price per commodity, 1 + sales tax.
    pub base_purchaser_price: Vec<f64>,
    /// Investment value shares per commodity.
    pub investment_shares: Vec<f64>,
    /// Allocation of real investment across activities.
    pub capital_allocation: Vec<f64>,
    pub depreciation: f64,
    /// Base gross rental rate per unit of capital stock (net return
    /// plus depreciation); stocks are payments divided by this rate.
    pub capital_rental_rate: f64,
    pub land_mobility: f64,
    /// Foreign savings per partner, fixed in foreign currency.
    pub foreign_savings: [f64; N_DEST],
    /// Non-productive forest stock at base, hectares.
    pub forest_stock: f64,
    pub base_year: i32,
    /// Commodity whose market-clearing equation is dropped (Walras).
    pub dropped_commodity: usize,
}

impl ModelParameters {
    pub fn n_commodities(&self) -> usize {
        self.commodities.len()
    }

    pub fn n_activities(&self) -> usize {
        self.activities.len()
    }

    pub fn n_land(&self) -> usize {
        self.land_types.len()
    }

    /// Unknown-vector length of the within-period system.
    pub fn n_unknowns(&self) -> usize {
        self.n_commodities() + 2 * self.n_activities() + self.n_land() + 2
    }

    pub fn commodity_index(&self, name: &str) -> Option<usize> {
        self.commodities.iter().position(|c| c.name == name)
    }

    pub fn activity_index(&self, name: &str) -> Option<usize> {
        self.activities.iter().position(|a| a.name == name)
    }

    /// Base-point unknown vector (all prices one, base quantities).
    pub fn base_unknowns(&self) -> PeriodUnknowns {
        PeriodUnknowns {
            pd: vec![1.0; self.n_commodities()],
            qa: self.activities.iter().map(|a| a.base_level).collect(),
            wk: vec![self.capital_rental_rate; self.n_activities()],
            ur_labor: self.labor.base_ur,
            ur_land: self.land_types.iter().map(|l| l.base_ur).collect(),
            exr: 1.0,
        }
    }

    /// Period inputs at base-year values.
    pub fn base_inputs(&self) -> PeriodInputs {
        PeriodInputs {
            labor_supply: self.labor.base_supply,
            capital: self.activities.iter().map(|a| a.base_capital).collect(),
            land_supply: self.land_types.iter().map(|l| l.base_supply).collect(),
            tfp: 1.0,
            export_wedges: vec![[0.0; N_DEST]; self.n_commodities()],
            numeraire: 1.0,
        }
    }
}

/// Within-period unknowns: domestic prices, activity levels, sectoral
/// capital rentals, unemployment rates, and the exchange rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodUnknowns {
    pub pd: Vec<f64>,
    pub qa: Vec<f64>,
    pub wk: Vec<f64>,
    pub ur_labor: f64,
    pub ur_land: Vec<f64>,
    pub exr: f64,
}

impl PeriodUnknowns {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.pd.len() + self.qa.len() + self.wk.len() + self.ur_land.len() + 2);
        v.extend_from_slice(&self.pd);
        v.extend_from_slice(&self.qa);
        v.extend_from_slice(&self.wk);
        v.push(self.ur_labor);
        v.extend_from_slice(&self.ur_land);
        v.push(self.exr);
        v
    }

    pub fn from_vec(v: &[f64], params: &ModelParameters) -> PeriodUnknowns {
        let nc = params.n_commodities();
        let na = params.n_activities();
        let nl = params.n_land();
        assert_eq!(v.len(), params.n_unknowns());
        PeriodUnknowns {
            pd: v[..nc].to_vec(),
            qa: v[nc..nc + na].to_vec(),
            wk: v[nc + na..nc + 2 * na].to_vec(),
            ur_labor: v[nc + 2 * na],
            ur_land: v[nc + 2 * na + 1..nc + 2 * na + 1 + nl].to_vec(),
            exr: v[nc + 2 * na + 1 + nl],
        }
    }

    /// Whether component `i` of the flat vector is a rate in (0,1)
    /// rather than a positive level.
    pub fn is_rate(i: usize, params: &ModelParameters) -> bool {
        let nc = params.n_commodities();
        let na = params.n_activities();
        let nl = params.n_land();
        i >= nc + 2 * na && i < nc + 2 * na + 1 + nl
    }
}

/// Exogenous inputs of one period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodInputs {
    pub labor_supply: f64,
    /// Capital stock per activity.
    pub capital: Vec<f64>,
    /// Land supply per land type (hectares).
    pub land_supply: Vec<f64>,
    /// Uniform factor-productivity multiplier.
    pub tfp: f64,
    /// Export price wedges per commodity and destination; the effective
    /// world price is pwe·(1 − wedge).
    pub export_wedges: Vec<[f64; N_DEST]>,
    /// CPI target (1 at base; changing it rescales nominals only).
    pub numeraire: f64,
}
