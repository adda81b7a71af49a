//! Command-line entry point: ingestion → calibration → scenarios →
//! reports. Data goes to files or stdout; diagnostics go to stderr.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use deforcge::emissions::EmissionCoefficients;
use deforcge::landshare::{
    account_shares, activity_share, load_crop_map, load_linkage, load_shares, save_shares,
    CensusAreaTable, LandUseTable, TransitionTable,
};
use deforcge::sam::SocialAccountingMatrix;
use deforcge::scenario::{
    coverage_summary, deviation_report, sensitivity_notes, sensitivity_suite, DeviationReport,
    ScenarioMode, ScenarioSpec, Trajectory,
};
use deforcge::scenario::report::{
    emissions_decomposition_report, write_coverage, write_deviations_commodity,
    write_deviations_macro, write_deviations_sensitivity, write_emissions_decomposition,
};
use deforcge::scenario::run_trajectory;
use deforcge::solver::{
    calibrate, calibrate_land_elasticity, load_elasticities, load_factors, load_projections,
    CalibrationTargets, SolverConfig,
};

#[derive(Parser)]
#[command(name = "deforcge", version, about = "Recursive-dynamic CGE engine \
for export-restriction scenarios on a compliance-split economy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate non-compliant land shares from land records
    Shares(SharesArgs),
    /// SAM manipulation
    Sam(SamArgs),
    /// Calibrate the model and emit a parameters bundle
    Calibrate(CalibrateArgs),
    /// Execute one scenario file and write its trajectory and reports
    Run(RunArgs),
    /// Execute the elasticity sensitivity suite
    Sensitivity(SensitivityArgs),
    /// Re-render reports from stored trajectories without re-solving
    Report(ReportArgs),
    /// Check SAM balance and lint input files
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SharesArgs {
    /// Forest-conversion records: activity,region,year,hectares
    #[arg(long)]
    transitions: PathBuf,
    /// Land currently in use: activity,region,hectares
    #[arg(long)]
    landuse: PathBuf,
    /// Census planted areas: crop,region,area
    #[arg(long)]
    census: PathBuf,
    /// Census crop to activity mapping: crop,activity
    #[arg(long)]
    crops: PathBuf,
    /// Conversion years counted as non-compliant
    #[arg(long, value_delimiter = ',', default_values_t = vec![2021, 2022])]
    cutoff: Vec<i32>,
    /// Output share table: account,share
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamArgs {
    #[command(subcommand)]
    command: SamCommand,
}

#[derive(Subcommand)]
enum SamCommand {
    /// Split accounts into compliant / non-compliant twins
    Split(SamSplitArgs),
}

#[derive(Args)]
struct SamSplitArgs {
    /// Aggregate (unsplit) SAM
    #[arg(long)]
    sam: PathBuf,
    /// Share table from `shares`
    #[arg(long)]
    shares: PathBuf,
    /// Derived-product linkage: derived_product,raw_material
    #[arg(long)]
    linkage: PathBuf,
    /// Output SAM
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Disaggregated SAM
    #[arg(long)]
    sam: PathBuf,
    /// Trade and substitution elasticities
    #[arg(long)]
    elasticities: PathBuf,
    /// Factor endowments: hectares, unemployment rates
    #[arg(long)]
    factors: PathBuf,
    /// GDP and population growth targets per year
    #[arg(long)]
    projections: PathBuf,
    /// Solver residual tolerance
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output parameters bundle (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Parameters bundle from `calibrate`
    #[arg(long)]
    params: PathBuf,
    /// Emission coefficients
    #[arg(long)]
    coefficients: PathBuf,
    /// Stored baseline trajectory dir (counterfactual mode; solved
    /// on the fly when omitted)
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Disaggregated SAM, for the coverage report
    #[arg(long)]
    sam: Option<PathBuf>,
    /// Override the scenario's solver tolerance
    #[arg(long)]
    tolerance: Option<f64>,
    /// Override the scenario's report window, as START:END
    #[arg(long)]
    window: Option<String>,
    /// Omit the generation-timestamp header from reports
    #[arg(long)]
    no_timestamp: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Counterfactual scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Baseline scenario file (TOML)
    #[arg(long)]
    baseline_scenario: PathBuf,
    /// Parameters bundle from `calibrate`
    #[arg(long)]
    params: PathBuf,
    /// Emission coefficients
    #[arg(long)]
    coefficients: PathBuf,
    /// Cap on parallel scenario solves
    #[arg(long)]
    jobs: Option<usize>,
    /// Override both scenarios' solver tolerance
    #[arg(long)]
    tolerance: Option<f64>,
    /// Omit the generation-timestamp header from reports
    #[arg(long)]
    no_timestamp: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Stored baseline trajectory dir
    #[arg(long)]
    baseline: PathBuf,
    /// Stored counterfactual trajectory dir
    #[arg(long)]
    counterfactual: PathBuf,
    /// Disaggregated SAM, for the coverage report
    #[arg(long)]
    sam: Option<PathBuf>,
    /// Report window, as START:END (defaults to the common span)
    #[arg(long)]
    window: Option<String>,
    /// Omit the generation-timestamp header from reports
    #[arg(long)]
    no_timestamp: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// SAM to balance-check
    #[arg(long)]
    sam: PathBuf,
    /// Relative imbalance tolerance
    #[arg(long, default_value_t = 1e-7)]
    tolerance: f64,
    /// Scenario file to lint
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Share table to lint
    #[arg(long)]
    shares: Option<PathBuf>,
    /// Elasticity table to lint
    #[arg(long)]
    elasticities: Option<PathBuf>,
    /// Factor table to lint
    #[arg(long)]
    factors: Option<PathBuf>,
    /// Emission coefficients to lint
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// Projection table to lint
    #[arg(long)]
    projections: Option<PathBuf>,
}

/// Everything `run` and `sensitivity` need besides scenario files:
/// the calibrated parameters (land-supply elasticity already fitted)
/// and the baseline growth targets.
#[derive(Serialize, Deserialize)]
struct ParameterBundle {
    parameters: deforcge::model::params::ModelParameters,
    targets: CalibrationTargets,
    land_elasticity: f64,
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, err: impl std::fmt::Display) -> CliError {
        CliError {
            kind,
            message: err.to_string(),
        }
    }
}

macro_rules! from_err {
    ($ty:ty, $kind:literal) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> CliError {
                CliError::new($kind, e)
            }
        }
    };
}

from_err!(deforcge::landshare::LandShareError, "land-share");
from_err!(deforcge::sam::SamError, "sam");
from_err!(deforcge::solver::CalibrationError, "calibration");
from_err!(deforcge::solver::SolverError, "solver");
from_err!(deforcge::scenario::ScenarioError, "scenario");
from_err!(deforcge::emissions::EmissionsError, "emissions");
from_err!(serde_json::Error, "serialization");

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("DEFORCGE_LOG", "info")
            .write_style("DEFORCGE_LOG_STYLE"),
    )
    .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": e.kind, "message": e.message}})
            );
            if e.kind == "usage" {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Shares(a) => cmd_shares(a),
        Command::Sam(a) => match a.command {
            SamCommand::Split(s) => cmd_sam_split(s),
        },
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Report(a) => cmd_report(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn cmd_shares(args: SharesArgs) -> Result<(), CliError> {
    let transitions = TransitionTable::load(&args.transitions)?;
    let landuse = LandUseTable::load(&args.landuse)?;
    let census = CensusAreaTable::load(&args.census)?;
    let crops = load_crop_map(&args.crops)?;
    let cutoff: BTreeSet<i32> = args.cutoff.into_iter().collect();
    let regional = activity_share(&transitions, &landuse, &cutoff)?;
    let shares = account_shares(&regional, &landuse, &census, &crops)?;
    save_shares(&shares, &args.out)?;
    info!(
        "wrote {} account shares to {}",
        shares.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_sam_split(args: SamSplitArgs) -> Result<(), CliError> {
    let sam = SocialAccountingMatrix::load(&args.sam)?;
    let shares = load_shares(&args.shares)?;
    let linkage = load_linkage(&args.linkage)?;
    let split = sam.disaggregate_accounts(&shares, &linkage)?;
    let report = split.check_balance(1e-7);
    if !report.balanced {
        return Err(CliError::new(
            "sam",
            format!(
                "split SAM is unbalanced: max relative imbalance {:.3e}",
                report.max_relative_imbalance
            ),
        ));
    }
    split.save(&args.out)?;
    info!(
        "split {} accounts into {}; max relative imbalance {:.3e}",
        sam.len(),
        split.len(),
        report.max_relative_imbalance
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let sam = SocialAccountingMatrix::load(&args.sam)?;
    let elasticities = load_elasticities(&args.elasticities)?;
    let factors = load_factors(&args.factors)?;
    let projections = load_projections(&args.projections)?;
    let mut parameters = calibrate(&sam, &elasticities, &factors)?;
    let targets = CalibrationTargets::from_projections(&projections);
    let end_year = *targets
        .gdp_growth
        .keys()
        .max()
        .ok_or_else(|| CliError::new("usage", "projection table is empty"))?;
    let mut config = SolverConfig::default();
    if let Some(tol) = args.tolerance {
        config.tolerance = tol;
    }
    let mu = calibrate_land_elasticity(&parameters, &targets, end_year, &config)?;
    for lt in &mut parameters.land_types {
        if !lt.compliant {
            lt.mu = mu;
        }
    }
    info!(
        "land-supply elasticity calibrated to {mu:.6} for a {:.3}%/yr \
         average deforestation rate over {}..{end_year}",
        100.0 * targets.baseline_deforestation_rate,
        parameters.base_year
    );
    let bundle = ParameterBundle {
        parameters,
        targets,
        land_elasticity: mu,
    };
    let json = serde_json::to_string_pretty(&bundle)?;
    std::fs::write(&args.out, json + "\n").map_err(io_error(&args.out))?;
    info!("wrote parameters bundle to {}", args.out.display());
    Ok(())
}

fn parse_window(text: &str) -> Result<(i32, i32), CliError> {
    let bad = || CliError::new("usage", format!("invalid window '{text}', expected START:END"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let start: i32 = a.trim().parse().map_err(|_| bad())?;
    let end: i32 = b.trim().parse().map_err(|_| bad())?;
    if start > end {
        return Err(bad());
    }
    Ok((start, end))
}

fn load_bundle(path: &Path) -> Result<ParameterBundle, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn timestamp_header(no_timestamp: bool) -> Option<String> {
    if no_timestamp {
        None
    } else {
        Some(utc_now())
    }
}

fn utc_now() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Persist a trajectory atomically: write into a sibling temp dir,
/// then rename over the target.
fn save_trajectory(trajectory: &Trajectory, dir: &Path) -> Result<(), CliError> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(io_error(&tmp))?;
    }
    trajectory.save(&tmp)?;
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_error(dir))?;
    }
    std::fs::rename(&tmp, dir).map_err(io_error(dir))?;
    Ok(())
}

fn write_pair_reports(
    base: &Trajectory,
    scen: &Trajectory,
    window: (i32, i32),
    out: &Path,
    timestamp: Option<&str>,
    sam: Option<&Path>,
) -> Result<DeviationReport, CliError> {
    let report = deviation_report(base, scen, window)?;
    write_deviations_macro(&out.join("deviations_macro.csv"), &report, timestamp)?;
    write_deviations_commodity(&out.join("deviations_commodity.csv"), &report, timestamp)?;
    let decomposition = emissions_decomposition_report(base, scen, window)?;
    write_emissions_decomposition(
        &out.join("emissions_decomposition.csv"),
        &decomposition,
        timestamp,
    )?;
    if let Some(sam_path) = sam {
        let sam = SocialAccountingMatrix::load(sam_path)?;
        let coverage = coverage_summary(&sam)?;
        write_coverage(&out.join("coverage.csv"), &coverage, timestamp)?;
    }
    Ok(report)
}

fn log_sign_summary(report: &DeviationReport) {
    for (name, v) in report.macro_rows.iter().chain(&report.land_use) {
        info!("deviation {name}: {v:+.4}");
    }
    for (name, v) in &report.value_added {
        info!("deviation value-added {name}: {v:+.4}");
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let bundle = load_bundle(&args.params)?;
    let mut spec = ScenarioSpec::load(&args.scenario)?;
    if let Some(tol) = args.tolerance {
        spec.solver.tolerance = tol;
    }
    if let Some(w) = &args.window {
        spec.report_window = parse_window(w)?;
    }
    let coeffs = EmissionCoefficients::load(&args.coefficients)?;
    std::fs::create_dir_all(&args.out).map_err(io_error(&args.out))?;
    let ts = timestamp_header(args.no_timestamp);

    let baseline: Option<Trajectory> = if spec.mode == ScenarioMode::Counterfactual {
        Some(match &args.baseline {
            Some(dir) => Trajectory::load(dir)?,
            None => {
                info!("no stored baseline given; solving one");
                let mut base_spec = spec.clone();
                base_spec.mode = ScenarioMode::Baseline;
                base_spec.shocks.clear();
                base_spec.name = format!("{}-baseline", spec.name);
                let t = run_trajectory(&base_spec, &bundle.parameters, &bundle.targets, &coeffs, None)?;
                save_trajectory(&t, &args.out.join("baseline"))?;
                t
            }
        })
    } else {
        None
    };

    let trajectory = run_trajectory(
        &spec,
        &bundle.parameters,
        &bundle.targets,
        &coeffs,
        baseline.as_ref(),
    )?;
    save_trajectory(&trajectory, &args.out.join("trajectory"))?;
    info!(
        "solved {} ({} years) into {}",
        spec.name,
        trajectory.years.len(),
        args.out.display()
    );

    if let Some(base) = &baseline {
        let report = write_pair_reports(
            base,
            &trajectory,
            spec.report_window,
            &args.out,
            ts.as_deref(),
            args.sam.as_deref(),
        )?;
        log_sign_summary(&report);
    }
    Ok(())
}

fn cmd_sensitivity(args: SensitivityArgs) -> Result<(), CliError> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::new("usage", e))?;
    }
    let bundle = load_bundle(&args.params)?;
    let coeffs = EmissionCoefficients::load(&args.coefficients)?;
    let mut baseline_spec = ScenarioSpec::load(&args.baseline_scenario)?;
    let mut eudr_spec = ScenarioSpec::load(&args.scenario)?;
    if let Some(tol) = args.tolerance {
        baseline_spec.solver.tolerance = tol;
        eudr_spec.solver.tolerance = tol;
    }
    std::fs::create_dir_all(&args.out).map_err(io_error(&args.out))?;
    let ts = timestamp_header(args.no_timestamp);

    let outcomes = sensitivity_suite(
        &bundle.parameters,
        &bundle.targets,
        &coeffs,
        &baseline_spec,
        &eudr_spec,
    );
    write_deviations_sensitivity(
        &args.out.join("deviations_sensitivity.csv"),
        &outcomes,
        ts.as_deref(),
    )?;
    let notes = sensitivity_notes(&outcomes);
    let mut report = String::from("# sensitivity run report\n\n");
    if let Some(t) = &ts {
        report.push_str(&format!("generated {t}\n\n"));
    }
    for note in &notes {
        report.push_str(&format!("- {note}\n"));
        info!("{note}");
    }
    let path = args.out.join("run_report.md");
    std::fs::write(&path, report).map_err(io_error(&path))?;
    let failures = outcomes.iter().filter(|o| o.result.is_err()).count();
    if failures > 0 {
        return Err(CliError::new(
            "scenario",
            format!("{failures} of {} sensitivity scenarios failed", outcomes.len()),
        ));
    }
    info!("sensitivity suite written to {}", args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let base = Trajectory::load(&args.baseline)?;
    let scen = Trajectory::load(&args.counterfactual)?;
    let window = match &args.window {
        Some(w) => parse_window(w)?,
        None => {
            let years: Vec<i32> = scen
                .years
                .iter()
                .map(|r| r.year)
                .filter(|y| base.year(*y).is_some())
                .collect();
            match (years.first(), years.last()) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Err(CliError::new("usage", "trajectories share no years")),
            }
        }
    };
    std::fs::create_dir_all(&args.out).map_err(io_error(&args.out))?;
    let ts = timestamp_header(args.no_timestamp);
    write_pair_reports(
        &base,
        &scen,
        window,
        &args.out,
        ts.as_deref(),
        args.sam.as_deref(),
    )?;
    info!("reports re-rendered into {}", args.out.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let sam = SocialAccountingMatrix::load(&args.sam)?;
    let report = sam.check_balance(args.tolerance);
    if !report.balanced {
        return Err(CliError::new(
            "sam",
            format!(
                "unbalanced: max relative imbalance {:.3e} exceeds {:.3e}",
                report.max_relative_imbalance, report.tolerance
            ),
        ));
    }
    println!(
        "balanced: {} accounts, max relative imbalance {:.3e} (tolerance {:.3e})",
        sam.len(),
        report.max_relative_imbalance,
        report.tolerance
    );
    if let Some(p) = &args.shares {
        let shares = load_shares(p)?;
        for (account, share) in &shares {
            if !(0.0..=1.0).contains(share) {
                return Err(CliError::new(
                    "land-share",
                    format!("share for '{account}' out of [0,1]: {share}"),
                ));
            }
        }
        println!("shares: {} accounts ok", shares.len());
    }
    if let Some(p) = &args.elasticities {
        load_elasticities(p)?;
        println!("elasticities: ok");
    }
    if let Some(p) = &args.factors {
        load_factors(p)?;
        println!("factors: ok");
    }
    if let Some(p) = &args.coefficients {
        EmissionCoefficients::load(p)?;
        println!("coefficients: ok");
    }
    if let Some(p) = &args.projections {
        load_projections(p)?;
        println!("projections: ok");
    }
    if let Some(p) = &args.scenario {
        let spec = ScenarioSpec::load(p)?;
        println!(
            "scenario '{}': {:?} {}..{}, {} shocks ok",
            spec.name,
            spec.mode,
            spec.horizon.start,
            spec.horizon.end,
            spec.shocks.len()
        );
    }
    Ok(())
}
