//! Baseline dynamics: stepping the economy across years and the two
//! nested one-dimensional calibrations — the per-year TFP multiplier
//! that hits the GDP growth target, and the land-supply elasticity that
//! hits the average baseline deforestation rate.

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    advance_capital_labor, advance_land, deforestation_supply, migrate_land, DynamicsError,
    LandAccount,
};
use crate::model::equations::PeriodEquilibrium;
use crate::model::params::{ModelParameters, PeriodInputs};

use super::inputs::ProjectionTable;
use super::{solve_period, SolverConfig, SolverError};

/// Targets of the baseline calibrations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// GDP growth per year (fraction, year over year).
    pub gdp_growth: BTreeMap<i32, f64>,
    /// Population (labor supply) growth per year.
    pub pop_growth: BTreeMap<i32, f64>,
    /// Average annual deforestation rate of the baseline (fraction of
    /// the forest stock).
    pub baseline_deforestation_rate: f64,
}

pub const DEFAULT_DEFORESTATION_RATE: f64 = 0.008;

impl CalibrationTargets {
    pub fn from_projections(table: &ProjectionTable) -> CalibrationTargets {
        CalibrationTargets {
            gdp_growth: table
                .by_year
                .iter()
                .map(|(&y, r)| (y, r.gdp_growth))
                .collect(),
            pop_growth: table
                .by_year
                .iter()
                .map(|(&y, r)| (y, r.pop_growth))
                .collect(),
            baseline_deforestation_rate: DEFAULT_DEFORESTATION_RATE,
        }
    }
}

/// Exogenous state entering one simulated year.
#[derive(Debug, Clone)]
pub struct YearState {
    pub year: i32,
    pub inputs: PeriodInputs,
    pub land: LandAccount,
}

impl YearState {
    pub fn base(params: &ModelParameters) -> YearState {
        YearState {
            year: params.base_year,
            inputs: params.base_inputs(),
            land: LandAccount::base(params),
        }
    }
}

/// Advance exogenous state to the next year from a solved equilibrium:
/// rent-induced deforestation enlarges next year's non-compliant land,
/// hectares migrate between uses by relative returns, capital
/// accumulates, labor grows. The new deforestation is recorded on the
/// *returned* state so its rate refers to the year it was induced in.
pub fn step_dynamics(
    params: &ModelParameters,
    state: &YearState,
    eq: &PeriodEquilibrium,
    pop_growth: f64,
) -> Result<YearState, DynamicsError> {
    let qdefor = deforestation_supply(params, &eq.derived.real_land_rent)?;
    let mut land = advance_land(params, &state.land, &qdefor);
    // Returns enter migration as indices on base rents: land types have
    // structurally different rent levels per hectare, and only changes
    // in relative profitability should move hectares.
    let return_index: Vec<f64> = eq
        .derived
        .real_land_rent
        .iter()
        .zip(&params.land_types)
        .map(|(&rr, lt)| rr / lt.base_rent)
        .collect();
    land.qfs = migrate_land(params, &land.qfinit, &return_index, params.land_mobility)?;
    let (capital, labor_supply) = advance_capital_labor(
        params,
        &state.inputs.capital,
        eq.derived.real_investment,
        state.inputs.labor_supply,
        pop_growth,
    );
    let mut inputs = state.inputs.clone();
    inputs.capital = capital;
    inputs.labor_supply = labor_supply;
    inputs.land_supply = land.qfs.clone();
    Ok(YearState {
        year: state.year + 1,
        inputs,
        land,
    })
}

/// A solved baseline: per-year TFP multipliers, equilibria, and land
/// states over `years`.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub years: Vec<i32>,
    pub tfp: Vec<f64>,
    pub equilibria: Vec<PeriodEquilibrium>,
    pub land: Vec<LandAccount>,
}

impl BaselineRun {
    /// Deforestation per year as a fraction of the year's forest stock.
    pub fn deforestation_rates(&self) -> Vec<f64> {
        // qdefor recorded on land[t] was induced in year t−1 and sits in
        // year t's stocks; attribute it to the inducing year.
        (1..self.land.len())
            .map(|t| {
                let before = self.land[t - 1].forest;
                if before > 0.0 {
                    self.land[t].total_deforestation() / before
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Average deforestation rate over the simulated years.
    pub fn average_deforestation_rate(&self) -> f64 {
        let rates = self.deforestation_rates();
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        }
    }
}

fn growth_target(targets: &CalibrationTargets, year: i32) -> Result<f64, SolverError> {
    targets.gdp_growth.get(&year).copied().ok_or_else(|| {
        SolverError::TargetInfeasible(format!("no GDP growth target for year {year}"))
    })
}

fn pop_growth(targets: &CalibrationTargets, year: i32) -> f64 {
    targets.pop_growth.get(&year).copied().unwrap_or(0.0)
}

/// Solve the baseline over `[params.base_year, end_year]`, calibrating
/// each year's uniform TFP multiplier so real GDP growth matches the
/// target within `GDP_MATCH_TOLERANCE`.
pub fn run_baseline(
    params: &ModelParameters,
    targets: &CalibrationTargets,
    end_year: i32,
    config: &SolverConfig,
) -> Result<BaselineRun, SolverError> {
    let mut state = YearState::base(params);
    let mut run = BaselineRun {
        years: vec![state.year],
        tfp: vec![1.0],
        equilibria: vec![solve_period(params, &state.inputs, config, None)?],
        land: vec![state.land.clone()],
    };
    while state.year < end_year {
        let year = state.year + 1;
        let prev_eq = run.equilibria.last().unwrap().clone();
        state = step_dynamics(params, &state, &prev_eq, pop_growth(targets, year))?;
        let target_gdp = prev_eq.derived.real_gdp * (1.0 + growth_target(targets, year)?);
        let (tfp, eq) = solve_tfp_for_gdp(
            params,
            &state.inputs,
            target_gdp,
            *run.tfp.last().unwrap(),
            &prev_eq,
            config,
        )?;
        state.inputs.tfp = tfp;
        debug!(
            "year {year}: tfp {tfp:.6}, gdp {:.6} (target {target_gdp:.6})",
            eq.derived.real_gdp
        );
        run.years.push(year);
        run.tfp.push(tfp);
        run.equilibria.push(eq);
        run.land.push(state.land.clone());
    }
    Ok(run)
}

/// Relative GDP mismatch at which the TFP root-find stops; well inside
/// the 1e-6 growth-matching requirement.
pub const GDP_MATCH_TOLERANCE: f64 = 1e-9;

/// Find the uniform TFP multiplier for one year such that real GDP hits
/// `target_gdp`, by bracketing and bisection over nested solves.
fn solve_tfp_for_gdp(
    params: &ModelParameters,
    inputs: &PeriodInputs,
    target_gdp: f64,
    tfp_guess: f64,
    warm: &PeriodEquilibrium,
    config: &SolverConfig,
) -> Result<(f64, PeriodEquilibrium), SolverError> {
    let eval = |tfp: f64| -> Result<PeriodEquilibrium, SolverError> {
        let mut inp = inputs.clone();
        inp.tfp = tfp;
        solve_period(params, &inp, config, Some(&warm.unknowns))
    };
    let gap = |eq: &PeriodEquilibrium| eq.derived.real_gdp - target_gdp;

    // Bracket the root around the previous year's multiplier.
    let mut lo = tfp_guess * 0.9;
    let mut hi = tfp_guess * 1.1;
    let mut eq_lo = eval(lo)?;
    let mut eq_hi = eval(hi)?;
    let mut expansions = 0;
    while gap(&eq_lo) > 0.0 {
        hi = lo;
        eq_hi = eq_lo;
        lo *= 0.5;
        if lo < 1e-3 || expansions > 40 {
            return Err(SolverError::TargetInfeasible(format!(
                "GDP target {target_gdp:.6} below reach even at TFP {lo:.2e}"
            )));
        }
        eq_lo = eval(lo)?;
        expansions += 1;
    }
    while gap(&eq_hi) < 0.0 {
        lo = hi;
        eq_lo = eq_hi;
        hi *= 1.5;
        if hi > 1e3 || expansions > 40 {
            return Err(SolverError::TargetInfeasible(format!(
                "GDP target {target_gdp:.6} above reach even at TFP {hi:.2e}"
            )));
        }
        eq_hi = eval(hi)?;
        expansions += 1;
    }

    // Bisection with a secant-accelerated midpoint.
    for _ in 0..100 {
        let (glo, ghi) = (gap(&eq_lo), gap(&eq_hi));
        if glo.abs() <= GDP_MATCH_TOLERANCE * target_gdp {
            return Ok((lo, eq_lo));
        }
        if ghi.abs() <= GDP_MATCH_TOLERANCE * target_gdp {
            return Ok((hi, eq_hi));
        }
        // Secant step, clamped to the interior of the bracket.
        let mut mid = lo - glo * (hi - lo) / (ghi - glo);
        let guard = 0.01 * (hi - lo);
        if !(mid > lo + guard && mid < hi - guard) {
            mid = 0.5 * (lo + hi);
        }
        let eq_mid = eval(mid)?;
        if gap(&eq_mid) < 0.0 {
            lo = mid;
            eq_lo = eq_mid;
        } else {
            hi = mid;
            eq_hi = eq_mid;
        }
    }
    Err(SolverError::TargetInfeasible(format!(
        "TFP bisection stalled for GDP target {target_gdp:.6}"
    )))
}

/// Calibrate the per-year TFP multipliers of the baseline.
pub fn calibrate_tfp_path(
    params: &ModelParameters,
    targets: &CalibrationTargets,
    end_year: i32,
    config: &SolverConfig,
) -> Result<Vec<(i32, f64)>, SolverError> {
    let run = run_baseline(params, targets, end_year, config)?;
    Ok(run.years.into_iter().zip(run.tfp).collect())
}

/// Absolute tolerance on the average deforestation-rate match.
pub const MU_MATCH_TOLERANCE: f64 = 1e-6;

fn with_mu(params: &ModelParameters, mu: f64) -> ModelParameters {
    let mut p = params.clone();
    for lt in &mut p.land_types {
        if !lt.compliant {
            lt.mu = mu;
        }
    }
    p
}

/// Calibrate the land-supply elasticity μ (uniform across non-compliant
/// land types) so the baseline's average deforestation rate equals the
/// target, by bisection over full baseline runs with TFP re-calibrated
/// at every candidate.
pub fn calibrate_land_elasticity(
    params: &ModelParameters,
    targets: &CalibrationTargets,
    end_year: i32,
    config: &SolverConfig,
) -> Result<f64, SolverError> {
    let target = targets.baseline_deforestation_rate;
    if target <= 0.0 {
        return Ok(0.0);
    }
    let rate_at = |mu: f64| -> Result<f64, SolverError> {
        let p = with_mu(params, mu);
        Ok(run_baseline(&p, targets, end_year, config)?.average_deforestation_rate())
    };
    let mut lo = 0.0;
    let mut lo_rate = 0.0;
    let mut hi = 0.05;
    let mut hi_rate = rate_at(hi)?;
    let mut expansions = 0;
    while hi_rate < target {
        lo = hi;
        lo_rate = hi_rate;
        hi *= 2.0;
        expansions += 1;
        if hi > 50.0 || expansions > 20 {
            return Err(SolverError::TargetInfeasible(format!(
                "deforestation-rate target {target} unreachable: rate {hi_rate:.6} at mu {hi:.2}"
            )));
        }
        hi_rate = rate_at(hi)?;
    }
    for _ in 0..80 {
        if (lo_rate - target).abs() <= MU_MATCH_TOLERANCE {
            return Ok(lo);
        }
        if (hi_rate - target).abs() <= MU_MATCH_TOLERANCE {
            return Ok(hi);
        }
        let mid = 0.5 * (lo + hi);
        let mid_rate = rate_at(mid)?;
        debug!("mu {mid:.6} -> average deforestation rate {mid_rate:.8}");
        if mid_rate < target {
            lo = mid;
            lo_rate = mid_rate;
        } else {
            hi = mid;
            hi_rate = mid_rate;
        }
    }
    Err(SolverError::TargetInfeasible(format!(
        "mu bisection stalled; bracket [{lo:.8}, {hi:.8}]"
    )))
}
