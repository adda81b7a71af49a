//! Year-by-year scenario execution and the flattened per-year records
//! that reports and persistence are built from.

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::dynamics::deforestation_supply;
use crate::emissions::{build_drivers, ledger_from_drivers, EmissionCoefficients, EmissionDriver, EmissionsLedger};
use crate::model::equations::PeriodEquilibrium;
use crate::model::params::{ModelParameters, PeriodInputs, N_DEST};
use crate::solver::paths::{run_baseline, step_dynamics, YearState};
use crate::solver::{solve_period, CalibrationTargets, SolverError};

use super::{apply_overrides, ScenarioError, ScenarioMode, ScenarioSpec, WedgeMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommodityRecord {
    pub name: String,
    /// Activity level of the producing activity.
    pub production: f64,
    pub domestic_sales: f64,
    pub exports: [f64; N_DEST],
    pub imports: f64,
    pub domestic_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub name: String,
    /// Value added at base prices.
    pub value_added: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandRecord {
    pub name: String,
    pub qfs: f64,
    pub qfinit: f64,
    /// Deforestation induced this year (enters next year's supply).
    pub qdefor: f64,
    pub unemployment_rate: f64,
    pub real_rent: f64,
}

/// A cap shock's wedge as actually applied in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWedge {
    pub commodity: String,
    pub destination: usize,
    pub wedge: f64,
    /// True when even the maximum wedge could not push exports under
    /// the cap and the wedge was pinned there.
    pub pinned: bool,
}

/// Everything reports need from one solved year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRecord {
    pub year: i32,
    pub tfp: f64,
    pub real_gdp: f64,
    pub exchange_rate: f64,
    pub cpi: f64,
    pub real_wage: f64,
    pub unemployment_rate: f64,
    pub real_investment: f64,
    /// Dropped-account market residual, relative to base absorption.
    pub walras: f64,
    /// Activity output at base prices.
    pub production: f64,
    pub domestic_sales: f64,
    pub exports_fcu: [f64; N_DEST],
    pub imports_fcu: [f64; N_DEST],
    /// Forest stock during this year, hectares.
    pub forest: f64,
    /// Total deforestation induced this year, hectares.
    pub deforestation: f64,
    /// Deforestation as a fraction of this year's forest stock.
    pub deforestation_rate: f64,
    pub commodities: Vec<CommodityRecord>,
    pub activities: Vec<ActivityRecord>,
    pub land: Vec<LandRecord>,
    pub emissions: EmissionsLedger,
}

/// A fully executed scenario: one record per year plus the emission
/// drivers needed for decomposition and the wedges actually applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: String,
    pub years: Vec<YearRecord>,
    pub drivers: Vec<Vec<EmissionDriver>>,
    pub wedges: Vec<Vec<ResolvedWedge>>,
}

impl Trajectory {
    pub fn year(&self, year: i32) -> Option<&YearRecord> {
        self.years.iter().find(|r| r.year == year)
    }

    fn tfp_by_year(&self) -> BTreeMap<i32, f64> {
        self.years.iter().map(|r| (r.year, r.tfp)).collect()
    }
}

fn record_year(
    params: &ModelParameters,
    year: i32,
    tfp: f64,
    eq: &PeriodEquilibrium,
    state: &YearState,
    coeffs: &EmissionCoefficients,
) -> Result<(YearRecord, Vec<EmissionDriver>), ScenarioError> {
    let d = &eq.derived;
    let mut qdefor = deforestation_supply(params, &d.real_land_rent)
        .map_err(|e| ScenarioError::Year { year, source: SolverError::Dynamics(e) })?;
    let mut defor_total: f64 = qdefor.iter().sum();
    if defor_total > state.land.forest {
        let scale = state.land.forest / defor_total;
        for q in &mut qdefor {
            *q *= scale;
        }
        defor_total = state.land.forest;
    }
    let drivers = build_drivers(params, eq, state.land.forest, coeffs)?;
    let emissions = ledger_from_drivers(&drivers);
    let record = YearRecord {
        year,
        tfp,
        real_gdp: d.real_gdp,
        exchange_rate: eq.unknowns.exr,
        cpi: d.cpi,
        real_wage: d.real_wage,
        unemployment_rate: eq.unknowns.ur_labor,
        real_investment: d.real_investment,
        walras: eq.walras_residual,
        production: eq.unknowns.qa.iter().sum(),
        domestic_sales: d.qds.iter().sum(),
        exports_fcu: d.exports_fcu,
        imports_fcu: d.imports_fcu,
        forest: state.land.forest,
        deforestation: defor_total,
        deforestation_rate: if state.land.forest > 0.0 {
            defor_total / state.land.forest
        } else {
            0.0
        },
        commodities: params
            .commodities
            .iter()
            .enumerate()
            .map(|(c, com)| {
                let a = params
                    .activities
                    .iter()
                    .position(|act| act.commodity == c)
                    .expect("every commodity has a producing activity");
                CommodityRecord {
                    name: com.name.clone(),
                    production: eq.unknowns.qa[a],
                    domestic_sales: d.qds[c],
                    exports: d.qe[c],
                    imports: d.qm[c],
                    domestic_price: eq.unknowns.pd[c],
                }
            })
            .collect(),
        activities: params
            .activities
            .iter()
            .enumerate()
            .map(|(a, act)| ActivityRecord {
                name: act.name.clone(),
                value_added: d.value_added[a],
            })
            .collect(),
        land: params
            .land_types
            .iter()
            .enumerate()
            .map(|(f, lt)| LandRecord {
                name: lt.name.clone(),
                qfs: state.inputs.land_supply[f],
                qfinit: state.land.qfinit[f],
                qdefor: qdefor[f],
                unemployment_rate: eq.unknowns.ur_land[f],
                real_rent: d.real_land_rent[f],
            })
            .collect(),
        emissions,
    };
    Ok((record, drivers))
}

/// Execute a scenario. Baseline mode calibrates per-year TFP to the GDP
/// targets; counterfactual mode replays the baseline's TFP path under
/// the scenario's price wedges, so `baseline` is required there (also
/// supplying the per-year export levels that quantity caps refer to).
pub fn run_trajectory(
    spec: &ScenarioSpec,
    params: &ModelParameters,
    targets: &CalibrationTargets,
    coeffs: &EmissionCoefficients,
    baseline: Option<&Trajectory>,
) -> Result<Trajectory, ScenarioError> {
    spec.validate()?;
    let params = apply_overrides(params, &spec.overrides);
    spec.check_against(&params)?;
    if spec.horizon.start != params.base_year {
        return Err(ScenarioError::Invalid(format!(
            "horizon starts at {} but the calibration base year is {}",
            spec.horizon.start, params.base_year
        )));
    }

    match spec.mode {
        ScenarioMode::Baseline => {
            if !spec.shocks.is_empty() {
                return Err(ScenarioError::Invalid(
                    "baseline mode cannot carry shocks".to_string(),
                ));
            }
            let run = run_baseline(&params, targets, spec.horizon.end, &spec.solver)?;
            let mut state = YearState::base(&params);
            let mut years = Vec::with_capacity(run.years.len());
            let mut drivers = Vec::with_capacity(run.years.len());
            for (i, &year) in run.years.iter().enumerate() {
                state.land = run.land[i].clone();
                state.inputs.land_supply = run.land[i].qfs.clone();
                let (record, dr) =
                    record_year(&params, year, run.tfp[i], &run.equilibria[i], &state, coeffs)?;
                years.push(record);
                drivers.push(dr);
            }
            let n = years.len();
            Ok(Trajectory {
                scenario: spec.name.clone(),
                years,
                drivers,
                wedges: vec![Vec::new(); n],
            })
        }
        ScenarioMode::Counterfactual => {
            let baseline = baseline.ok_or(ScenarioError::MissingBaseline)?;
            run_counterfactual(spec, &params, targets, coeffs, baseline)
        }
    }
}

/// Exports under a cap are steered to this fraction of the cap itself,
/// leaving headroom so the wedge solved in one year still satisfies the
/// cap in later years.
const CAP_TARGET_FRACTION: f64 = 0.5;
/// Acceptance band around the steering target, as fractions of the cap.
const CAP_BAND: (f64, f64) = (0.15, 0.95);
/// Largest admissible wedge (wedges live in [0,1)).
const MAX_WEDGE: f64 = 0.999;

struct CapShock {
    commodity: usize,
    destination: usize,
    cap: f64,
    name: String,
}

fn run_counterfactual(
    spec: &ScenarioSpec,
    params: &ModelParameters,
    targets: &CalibrationTargets,
    coeffs: &EmissionCoefficients,
    baseline: &Trajectory,
) -> Result<Trajectory, ScenarioError> {
    let tfp = baseline.tfp_by_year();
    for year in spec.horizon.start..=spec.horizon.end {
        if !tfp.contains_key(&year) {
            return Err(ScenarioError::MismatchedTrajectories(format!(
                "baseline trajectory lacks year {year}"
            )));
        }
    }
    let shock_start = spec.horizon.shock_start();

    // Split shocks into fixed wedges and quantity caps.
    let mut fixed: Vec<(usize, usize, f64)> = Vec::new();
    let mut caps: Vec<CapShock> = Vec::new();
    for s in &spec.shocks {
        let c = params.commodity_index(&s.commodity).expect("checked");
        match s.mode {
            WedgeMode::Fixed(w) => fixed.push((c, s.destination, w)),
            WedgeMode::SolveForQuantityCap(cap) => caps.push(CapShock {
                commodity: c,
                destination: s.destination,
                cap,
                name: s.commodity.clone(),
            }),
        }
    }

    let mut state = YearState::base(params);
    let mut trajectory = Trajectory {
        scenario: spec.name.clone(),
        years: Vec::new(),
        drivers: Vec::new(),
        wedges: Vec::new(),
    };
    let mut warm: Option<PeriodEquilibrium> = None;
    // Cap wedges persist between years and are re-solved only when a
    // year's verification fails.
    let mut cap_wedges: Vec<Option<(f64, bool)>> = vec![None; caps.len()];

    for year in spec.horizon.start..=spec.horizon.end {
        state.inputs.tfp = tfp[&year];
        state.inputs.export_wedges = vec![[0.0; N_DEST]; params.n_commodities()];
        let shocked = year >= shock_start;
        if shocked {
            for &(c, d, w) in &fixed {
                state.inputs.export_wedges[c][d] = w;
            }
        }

        let mut resolved = Vec::new();
        if shocked {
            for s in &spec.shocks {
                if let WedgeMode::Fixed(w) = s.mode {
                    resolved.push(ResolvedWedge {
                        commodity: s.commodity.clone(),
                        destination: s.destination,
                        wedge: w,
                        pinned: false,
                    });
                }
            }
        }
        let eq = if shocked && !caps.is_empty() {
            let base_year = baseline.year(year).ok_or_else(|| {
                ScenarioError::MismatchedTrajectories(format!("baseline lacks year {year}"))
            })?;
            let base_exports: Vec<f64> = caps
                .iter()
                .map(|cs| base_year.commodities[cs.commodity].exports[cs.destination])
                .collect();
            let eq = solve_caps(
                spec,
                params,
                &mut state.inputs,
                &caps,
                &base_exports,
                &mut cap_wedges,
                warm.as_ref(),
                year,
            )?;
            for (cs, w) in caps.iter().zip(&cap_wedges) {
                let (wedge, pinned) = w.expect("resolved above");
                resolved.push(ResolvedWedge {
                    commodity: cs.name.clone(),
                    destination: cs.destination,
                    wedge,
                    pinned,
                });
            }
            eq
        } else {
            solve_period(params, &state.inputs, &spec.solver, warm.as_ref().map(|e| &e.unknowns))
                .map_err(|source| ScenarioError::Year { year, source })?
        };

        let (record, dr) = record_year(params, year, state.inputs.tfp, &eq, &state, coeffs)?;
        trajectory.years.push(record);
        trajectory.drivers.push(dr);
        trajectory.wedges.push(resolved);

        if year < spec.horizon.end {
            let growth = targets.pop_growth.get(&(year + 1)).copied().unwrap_or(0.0);
            state = step_dynamics(params, &state, &eq, growth)
                .map_err(|e| ScenarioError::Year { year, source: SolverError::Dynamics(e) })?;
        }
        warm = Some(eq);
    }
    Ok(trajectory)
}

/// Solve the period with all quantity caps satisfied: reuse previously
/// resolved wedges when they still verify, otherwise bisect each cap's
/// wedge (holding the others) until its exports sit inside the band.
#[allow(clippy::too_many_arguments)]
fn solve_caps(
    spec: &ScenarioSpec,
    params: &ModelParameters,
    inputs: &mut PeriodInputs,
    caps: &[CapShock],
    base_exports: &[f64],
    cap_wedges: &mut [Option<(f64, bool)>],
    warm: Option<&PeriodEquilibrium>,
    year: i32,
) -> Result<PeriodEquilibrium, ScenarioError> {
    let solve = |inputs: &PeriodInputs, warm: Option<&PeriodEquilibrium>| {
        solve_period(params, inputs, &spec.solver, warm.map(|e| &e.unknowns))
            .map_err(|source| ScenarioError::Year { year, source })
    };
    // Start from the carried-over wedges (or the cap target as a first
    // guess mapped through zero — bisection fixes it below).
    for (i, cs) in caps.iter().enumerate() {
        let (w, _) = cap_wedges[i].unwrap_or((0.9, false));
        inputs.export_wedges[cs.commodity][cs.destination] = w;
    }
    let mut eq = solve(inputs, warm)?;

    for _ in 0..8 {
        let mut all_ok = true;
        for (i, cs) in caps.iter().enumerate() {
            let limit = cs.cap * base_exports[i];
            let exports = eq.derived.qe[cs.commodity][cs.destination];
            let pinned = cap_wedges[i].map(|(_, p)| p).unwrap_or(false);
            if (exports <= limit || pinned) && cap_wedges[i].is_some() {
                continue;
            }
            all_ok = false;
            // Bisect this commodity's wedge with the others held fixed.
            let target = CAP_TARGET_FRACTION * limit;
            let (band_lo, band_hi) = (CAP_BAND.0 * limit, CAP_BAND.1 * limit);
            let mut lo = 0.0;
            let mut hi = MAX_WEDGE;
            inputs.export_wedges[cs.commodity][cs.destination] = hi;
            let mut eq_hi = solve(inputs, Some(&eq))?;
            let exp_hi = eq_hi.derived.qe[cs.commodity][cs.destination];
            if exp_hi > limit {
                warn!(
                    "year {year}: cap {limit:.6} unreachable for '{}' (exports {exp_hi:.6} at wedge {MAX_WEDGE}); pinning",
                    cs.name
                );
                cap_wedges[i] = Some((MAX_WEDGE, true));
                eq = eq_hi;
                continue;
            }
            let mut accepted = (MAX_WEDGE, eq_hi.clone());
            for _ in 0..60 {
                let exports = accepted.1.derived.qe[cs.commodity][cs.destination];
                if exports >= band_lo && exports <= band_hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                inputs.export_wedges[cs.commodity][cs.destination] = mid;
                eq_hi = solve(inputs, Some(&accepted.1))?;
                let exp_mid = eq_hi.derived.qe[cs.commodity][cs.destination];
                if exp_mid > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if exp_mid <= band_hi {
                    accepted = (mid, eq_hi.clone());
                }
                if hi - lo < 1e-12 {
                    break;
                }
            }
            debug!(
                "year {year}: '{}' cap wedge {:.6} (exports {:.6} of limit {limit:.6})",
                cs.name, accepted.0, accepted.1.derived.qe[cs.commodity][cs.destination]
            );
            cap_wedges[i] = Some((accepted.0, false));
            inputs.export_wedges[cs.commodity][cs.destination] = accepted.0;
            eq = accepted.1;
        }
        if all_ok {
            return Ok(eq);
        }
    }
    // Final verification after the joint rounds.
    for (i, cs) in caps.iter().enumerate() {
        let limit = cs.cap * base_exports[i];
        let exports = eq.derived.qe[cs.commodity][cs.destination];
        let pinned = cap_wedges[i].map(|(_, p)| p).unwrap_or(false);
        if exports > limit && !pinned {
            return Err(ScenarioError::Invalid(format!(
                "year {year}: exports of '{}' ({exports:.6}) still above cap {limit:.6}",
                cs.name
            )));
        }
    }
    Ok(eq)
}
