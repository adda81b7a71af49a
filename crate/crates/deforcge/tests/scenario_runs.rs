//! Scenario execution invariants: pre-shock neutrality, null-shock
//! equivalence, persistence round-trips, and report identities.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use deforcge::emissions::EmissionCoefficients;
use deforcge::model::params::ModelParameters;
use deforcge::sam::SocialAccountingMatrix;
use deforcge::scenario::{deviation_report, run_trajectory, ScenarioSpec, Trajectory};
use deforcge::solver::{
    calibrate, load_elasticities, load_factors, load_projections, CalibrationTargets,
};

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

/// Calibrated parameters with a plausible fixed land-supply elasticity;
/// these tests check structural identities, not the elasticity target.
fn setup() -> &'static (ModelParameters, CalibrationTargets, EmissionCoefficients) {
    static CELL: OnceLock<(ModelParameters, CalibrationTargets, EmissionCoefficients)> =
        OnceLock::new();
    CELL.get_or_init(|| {
        let sam = SocialAccountingMatrix::load(&data("sam.csv")).unwrap();
        let elasticities = load_elasticities(&data("elasticities.csv")).unwrap();
        let factors = load_factors(&data("factors.csv")).unwrap();
        let mut params = calibrate(&sam, &elasticities, &factors).unwrap();
        for lt in &mut params.land_types {
            if !lt.compliant {
                lt.mu = 0.7;
            }
        }
        let targets =
            CalibrationTargets::from_projections(&load_projections(&data("projections.csv")).unwrap());
        let coeffs = EmissionCoefficients::load(&data("coefficients.csv")).unwrap();
        (params, targets, coeffs)
    })
}

fn pair() -> &'static (Trajectory, Trajectory) {
    static CELL: OnceLock<(Trajectory, Trajectory)> = OnceLock::new();
    CELL.get_or_init(|| {
        let (params, targets, coeffs) = setup();
        let base_spec = ScenarioSpec::load(&data("scenario_baseline.toml")).unwrap();
        let eudr_spec = ScenarioSpec::load(&data("scenario_eudr.toml")).unwrap();
        let base = run_trajectory(&base_spec, params, targets, coeffs, None).unwrap();
        let scen = run_trajectory(&eudr_spec, params, targets, coeffs, Some(&base)).unwrap();
        (base, scen)
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn pre_shock_years_match_the_baseline() {
    let (base, scen) = pair();
    for r in scen.years.iter().filter(|r| r.year < 2025) {
        let b = base.year(r.year).unwrap();
        assert!(close(r.real_gdp, b.real_gdp, 1e-9), "gdp in {}", r.year);
        assert!(close(r.exchange_rate, b.exchange_rate, 1e-9));
        assert!(close(r.deforestation, b.deforestation, 1e-9));
        assert_eq!(r.tfp, b.tfp, "tfp must be replayed exactly");
    }
}

#[test]
fn null_shock_counterfactual_reproduces_the_baseline() {
    let (base, _) = pair();
    let (params, targets, coeffs) = setup();
    let mut spec = ScenarioSpec::load(&data("scenario_eudr.toml")).unwrap();
    spec.shocks.clear();
    let replay = run_trajectory(&spec, params, targets, coeffs, Some(base)).unwrap();
    for (b, r) in base.years.iter().zip(&replay.years) {
        assert!(close(r.real_gdp, b.real_gdp, 1e-8), "gdp in {}", b.year);
        assert!(close(r.unemployment_rate, b.unemployment_rate, 1e-8));
        assert!(close(r.forest, b.forest, 1e-8));
        assert!(close(r.emissions.total, b.emissions.total, 1e-8));
    }
    let report = deviation_report(base, &replay, (2025, 2030)).unwrap();
    for (name, v) in report.macro_rows.iter().chain(&report.value_added) {
        assert!(v.abs() <= 1e-5, "{name} deviates by {v} under a null shock");
    }
}

#[test]
fn deviation_report_of_a_trajectory_against_itself_is_zero() {
    let (base, _) = pair();
    let report = deviation_report(base, base, (2025, 2030)).unwrap();
    for (name, v) in report
        .macro_rows
        .iter()
        .chain(&report.value_added)
        .chain(&report.land_use)
        .chain(report.emissions.iter())
    {
        assert_eq!(*v, 0.0, "{name}");
    }
    for c in &report.commodities {
        assert_eq!(c.production, 0.0);
        assert_eq!(c.exports_eu, 0.0);
    }
}

#[test]
fn trajectory_persistence_round_trips_exactly() {
    let (_, scen) = pair();
    let dir = tempfile::tempdir().unwrap();
    scen.save(dir.path()).unwrap();
    let loaded = Trajectory::load(dir.path()).unwrap();
    assert_eq!(*scen, loaded);
}

#[test]
fn wedges_apply_only_from_the_shock_start() {
    let (_, scen) = pair();
    for (i, r) in scen.years.iter().enumerate() {
        if r.year < 2025 {
            assert!(scen.wedges[i].is_empty());
        } else {
            assert_eq!(scen.wedges[i].len(), 8, "4 fixed + 4 cap wedges");
        }
    }
}

#[test]
fn counterfactual_without_a_baseline_is_rejected() {
    let (params, targets, coeffs) = setup();
    let spec = ScenarioSpec::load(&data("scenario_eudr.toml")).unwrap();
    let err = run_trajectory(&spec, params, targets, coeffs, None).unwrap_err();
    assert!(matches!(
        err,
        deforcge::scenario::ScenarioError::MissingBaseline
    ));
}
