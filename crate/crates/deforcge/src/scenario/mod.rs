//! Scenario construction and execution: baseline and export-restriction
//! trajectories, elasticity-sensitivity runs, and deviation reporting.

pub mod report;
pub mod trajectory;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emissions::EmissionsError;
use crate::model::functions::CetNest;
use crate::model::params::{ModelParameters, DEST_EU, DEST_REST};
use crate::solver::{SolverConfig, SolverError};

pub use report::{
    coverage_summary, deviation_report, sensitivity_notes, sensitivity_suite, CoverageSummary,
    DeviationReport, SensitivityOutcome,
};
pub use trajectory::{run_trajectory, ResolvedWedge, Trajectory, YearRecord};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("counterfactual mode requires a solved baseline trajectory")]
    MissingBaseline,
    #[error("trajectories are not comparable: {0}")]
    MismatchedTrajectories(String),
    #[error("year {year}: {source}")]
    Year {
        year: i32,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Emissions(#[from] EmissionsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    Baseline,
    Counterfactual,
}

/// How a destination price wedge is determined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WedgeMode {
    /// A fixed fractional cut of the world price.
    Fixed(f64),
    /// Solve for the wedge that leaves at most this fraction of the
    /// commodity's baseline exports to the destination.
    SolveForQuantityCap(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceWedge {
    pub commodity: String,
    /// Destination index (`DEST_EU` or `DEST_REST`).
    pub destination: usize,
    pub mode: WedgeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub start: i32,
    pub end: i32,
    /// First year the shocks apply; defaults to the horizon start.
    pub shock_start: Option<i32>,
}

impl Horizon {
    pub fn shock_start(&self) -> i32 {
        self.shock_start.unwrap_or(self.start)
    }
}

/// Multiplicative factors on calibrated elasticities, by group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityOverrides {
    /// Land-supply (deforestation) elasticity μ.
    pub mu: f64,
    /// Land wage-curve elasticity.
    pub land_wage: f64,
    /// Top-level domestic/export transformation elasticity.
    pub cet_top: f64,
    /// Destination transformation elasticity.
    pub cet_dest: f64,
}

impl Default for ElasticityOverrides {
    fn default() -> Self {
        ElasticityOverrides {
            mu: 1.0,
            land_wage: 1.0,
            cet_top: 1.0,
            cet_dest: 1.0,
        }
    }
}

impl ElasticityOverrides {
    pub fn is_identity(&self) -> bool {
        self.mu == 1.0 && self.land_wage == 1.0 && self.cet_top == 1.0 && self.cet_dest == 1.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub mode: ScenarioMode,
    pub horizon: Horizon,
    pub shocks: Vec<PriceWedge>,
    pub overrides: ElasticityOverrides,
    pub solver: SolverConfig,
    /// Inclusive reporting window.
    pub report_window: (i32, i32),
}

impl ScenarioSpec {
    pub fn load(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ScenarioSpec::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ScenarioSpec, ScenarioError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        raw.try_into()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.horizon.start >= self.horizon.end {
            return invalid(format!(
                "horizon start {} must precede end {}",
                self.horizon.start, self.horizon.end
            ));
        }
        let shock_start = self.horizon.shock_start();
        if shock_start < self.horizon.start || shock_start > self.horizon.end {
            return invalid(format!("shock start {shock_start} outside the horizon"));
        }
        let (ws, we) = self.report_window;
        if ws > we || ws < self.horizon.start || we > self.horizon.end {
            return invalid(format!("report window {ws}:{we} outside the horizon"));
        }
        for s in &self.shocks {
            match s.mode {
                WedgeMode::Fixed(w) => {
                    if !(0.0..1.0).contains(&w) {
                        return invalid(format!("wedge {w} for '{}' outside [0,1)", s.commodity));
                    }
                }
                WedgeMode::SolveForQuantityCap(c) => {
                    if !(c > 0.0 && c <= 1.0) {
                        return invalid(format!("cap {c} for '{}' outside (0,1]", s.commodity));
                    }
                }
            }
        }
        let o = &self.overrides;
        for (name, v) in [
            ("mu", o.mu),
            ("land_wage", o.land_wage),
            ("cet_top", o.cet_top),
            ("cet_dest", o.cet_dest),
        ] {
            if !(v > 0.0) {
                return invalid(format!("override factor {name} = {v} must be positive"));
            }
        }
        Ok(())
    }

    /// Check the shocks against a calibrated parameter set.
    pub fn check_against(&self, params: &ModelParameters) -> Result<(), ScenarioError> {
        for s in &self.shocks {
            let c = params.commodity_index(&s.commodity).ok_or_else(|| {
                ScenarioError::Invalid(format!("shocked commodity '{}' not in the model", s.commodity))
            })?;
            if !params.commodities[c].has_exports() {
                return Err(ScenarioError::Invalid(format!(
                    "shocked commodity '{}' has no exports",
                    s.commodity
                )));
            }
        }
        Ok(())
    }
}

/// Construct the standard export-restriction shock list: compliant
/// variants of each covered product get a fixed price wedge on the EU
/// destination; non-compliant variants get a wedge solved so at most
/// `noncompliant_cap` of their baseline EU exports survive.
pub fn build_eudr_shock(
    params: &ModelParameters,
    covered: &[&str],
    compliant_wedge: f64,
    noncompliant_cap: f64,
) -> Result<Vec<PriceWedge>, ScenarioError> {
    use crate::sam::{COMPLIANT_SUFFIX, NONCOMPLIANT_SUFFIX};
    let mut shocks = Vec::new();
    for stem in covered {
        for (suffix, mode) in [
            (COMPLIANT_SUFFIX, WedgeMode::Fixed(compliant_wedge)),
            (NONCOMPLIANT_SUFFIX, WedgeMode::SolveForQuantityCap(noncompliant_cap)),
        ] {
            let name = format!("{stem}{suffix}");
            if params.commodity_index(&name).is_none() {
                return Err(ScenarioError::Invalid(format!(
                    "covered product '{stem}' lacks variant '{name}'"
                )));
            }
            shocks.push(PriceWedge {
                commodity: name,
                destination: DEST_EU,
                mode,
            });
        }
    }
    Ok(shocks)
}

/// Apply multiplicative elasticity overrides, recalibrating the CET
/// nests at the base point so the base-year solution is preserved.
pub fn apply_overrides(
    params: &ModelParameters,
    overrides: &ElasticityOverrides,
) -> ModelParameters {
    let mut p = params.clone();
    if overrides.mu != 1.0 {
        for lt in &mut p.land_types {
            if !lt.compliant {
                lt.mu *= overrides.mu;
            }
        }
    }
    if overrides.land_wage != 1.0 {
        p.land_wage_elasticity *= overrides.land_wage;
    }
    for com in &mut p.commodities {
        if overrides.cet_top != 1.0 {
            let sigma = com.cet_top.sigma * overrides.cet_top;
            let export_total = com.base_exports[0] + com.base_exports[1];
            com.cet_top = CetNest::calibrate(
                &[com.base_domestic, export_total],
                &[1.0, 1.0],
                sigma,
                com.base_domestic + export_total,
            );
        }
        if overrides.cet_dest != 1.0 {
            let sigma = com.cet_dest.sigma * overrides.cet_dest;
            if com.has_exports() {
                com.cet_dest = CetNest::calibrate(
                    &com.base_exports,
                    &[1.0, 1.0],
                    sigma,
                    com.base_exports[0] + com.base_exports[1],
                );
            } else {
                com.cet_dest.sigma = sigma;
            }
        }
    }
    p
}

// ---- TOML wire format ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    mode: ScenarioMode,
    horizon: Horizon,
    #[serde(default)]
    shocks: Vec<RawShock>,
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
    #[serde(default)]
    solver: Option<SolverConfig>,
    report_window: RawWindow,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShock {
    commodity: String,
    destination: String,
    wedge: Option<f64>,
    cap: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    start: i32,
    end: i32,
}

impl TryFrom<RawSpec> for ScenarioSpec {
    type Error = ScenarioError;

    fn try_from(raw: RawSpec) -> Result<ScenarioSpec, ScenarioError> {
        let mut shocks = Vec::with_capacity(raw.shocks.len());
        for s in raw.shocks {
            let destination = match s.destination.as_str() {
                "eu" => DEST_EU,
                "rest" => DEST_REST,
                other => {
                    return Err(ScenarioError::Parse(format!(
                        "unknown destination '{other}' (expected 'eu' or 'rest')"
                    )))
                }
            };
            let mode = match (s.wedge, s.cap) {
                (Some(w), None) => WedgeMode::Fixed(w),
                (None, Some(c)) => WedgeMode::SolveForQuantityCap(c),
                _ => {
                    return Err(ScenarioError::Parse(format!(
                        "shock on '{}' must set exactly one of wedge|cap",
                        s.commodity
                    )))
                }
            };
            shocks.push(PriceWedge {
                commodity: s.commodity,
                destination,
                mode,
            });
        }
        let mut overrides = ElasticityOverrides::default();
        for (key, value) in raw.overrides {
            match key.as_str() {
                "mu" => overrides.mu = value,
                "land_wage" => overrides.land_wage = value,
                "cet_top" => overrides.cet_top = value,
                "cet_dest" => overrides.cet_dest = value,
                other => {
                    return Err(ScenarioError::Parse(format!(
                        "unknown override group '{other}'"
                    )))
                }
            }
        }
        let spec = ScenarioSpec {
            name: raw.name,
            mode: raw.mode,
            horizon: raw.horizon,
            shocks,
            overrides,
            solver: raw.solver.unwrap_or_default(),
            report_window: (raw.report_window.start, raw.report_window.end),
        };
        spec.validate()?;
        Ok(spec)
    }
}
