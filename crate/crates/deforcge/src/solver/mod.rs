//! Square-system solver for the within-period equilibrium plus the
//! one-dimensional calibrations layered on top of it (TFP path,
//! land-supply elasticity).
//!
//! Newton iteration runs in transformed space — logs for positive
//! levels, logits for unemployment rates — with a finite-difference
//! Jacobian and damped line search, so positivity needs no constrained
//! machinery. Every returned equilibrium is re-verified by a fresh
//! residual evaluation.

pub mod calibrate;
pub mod inputs;
pub mod paths;

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::equations::{equation_labels, evaluate, residuals_from_derived, PeriodEquilibrium};
use crate::model::functions::FunctionError;
use crate::model::params::{ModelParameters, PeriodInputs, PeriodUnknowns};

pub use calibrate::{calibrate, CalibrationError};
pub use inputs::{load_elasticities, load_factors, load_projections};
pub use paths::{
    calibrate_land_elasticity, calibrate_tfp_path, run_baseline, BaselineRun, CalibrationTargets,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Residual max-norm at which the system counts as solved.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial step factor of the damped line search, in (0, 1].
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-9,
            max_iterations: 200,
            damping: 1.0,
        }
    }
}

/// One line of the iteration trace carried by convergence failures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub step: f64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "did not converge after {iterations} iterations: best residual {best_residual:.3e}, worst equation '{worst_equation}'"
    )]
    NotConverged {
        best_residual: f64,
        iterations: usize,
        worst_equation: String,
        trace: Vec<IterationRecord>,
    },
    #[error("singular Jacobian; largest residual at equation '{equation}'")]
    SingularJacobian { equation: String },
    #[error("evaluation failed: {0}")]
    Function(#[from] FunctionError),
    #[error("calibration target infeasible: {0}")]
    TargetInfeasible(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn transform(x: &[f64], params: &ModelParameters) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if PeriodUnknowns::is_rate(i, params) {
                logit(v)
            } else {
                v.ln()
            }
        })
        .collect()
}

fn untransform(z: &[f64], params: &ModelParameters) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            if PeriodUnknowns::is_rate(i, params) {
                sigmoid(v)
            } else {
                v.exp()
            }
        })
        .collect()
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

fn norm2(r: &[f64]) -> f64 {
    r.iter().map(|&v| v * v).sum::<f64>().sqrt()
}

fn worst_equation(params: &ModelParameters, r: &[f64]) -> String {
    let labels = equation_labels(params);
    r.iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
        .map(|(i, _)| labels[i].clone())
        .unwrap_or_default()
}

/// Solve one period of the equilibrium system. `warm_start` defaults to
/// the calibrated base point.
pub fn solve_period(
    params: &ModelParameters,
    exogenous: &PeriodInputs,
    config: &SolverConfig,
    warm_start: Option<&PeriodUnknowns>,
) -> Result<PeriodEquilibrium, SolverError> {
    let base = params.base_unknowns();
    let start = warm_start.unwrap_or(&base);
    let n = params.n_unknowns();
    let mut z = transform(&start.to_vec(), params);

    let residual_at = |z: &[f64]| -> Result<Vec<f64>, FunctionError> {
        let x = PeriodUnknowns::from_vec(&untransform(z, params), params);
        let d = evaluate(params, &x, exogenous)?;
        Ok(residuals_from_derived(params, &x, exogenous, &d).0)
    };

    // The initial point must evaluate; later trial points may fail and
    // just shorten the step.
    let mut r = residual_at(&z)?;
    let mut norm = max_norm(&r);
    let mut trace_log: Vec<IterationRecord> = Vec::new();
    let h = 1e-7;

    for iteration in 0..config.max_iterations {
        if norm <= config.tolerance {
            let x = PeriodUnknowns::from_vec(&untransform(&z, params), params);
            // Independent re-check of the returned solution.
            let d = evaluate(params, &x, exogenous)?;
            let (res, walras) = residuals_from_derived(params, &x, exogenous, &d);
            let verified = max_norm(&res);
            debug!("converged in {iteration} iterations, residual {verified:.3e}");
            return Ok(PeriodEquilibrium {
                unknowns: x,
                derived: d,
                residual_norm: verified,
                walras_residual: walras,
            });
        }

        // Forward-difference Jacobian in transformed space.
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut zj = z.clone();
            zj[j] += h;
            let rj = residual_at(&zj)?;
            for i in 0..n {
                jac[(i, j)] = (rj[i] - r[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(n, r.iter().map(|&v| -v));
        let step = jac.lu().solve(&rhs).ok_or_else(|| SolverError::SingularJacobian {
            equation: worst_equation(params, &r),
        })?;

        // Damped line search on the Euclidean merit: the Newton
        // direction always descends it, while the max-norm (kept as the
        // convergence test) can stall on corner equations.
        let merit = norm2(&r);
        let mut lambda = config.damping;
        let mut accepted = false;
        for _ in 0..40 {
            let z_new: Vec<f64> = z.iter().zip(step.iter()).map(|(&a, &s)| a + lambda * s).collect();
            match residual_at(&z_new) {
                Ok(r_new) => {
                    let norm_new = max_norm(&r_new);
                    if norm2(&r_new) < merit || norm_new <= config.tolerance {
                        trace!("iter {iteration}: residual {norm_new:.3e}, step {lambda:.3e}");
                        trace_log.push(IterationRecord {
                            iteration,
                            residual_norm: norm_new,
                            step: lambda,
                        });
                        z = z_new;
                        r = r_new;
                        norm = norm_new;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {} // out of domain: shorten the step
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(SolverError::NotConverged {
                best_residual: norm,
                iterations: iteration + 1,
                worst_equation: worst_equation(params, &r),
                trace: trace_log,
            });
        }
    }
    if norm <= config.tolerance {
        let x = PeriodUnknowns::from_vec(&untransform(&z, params), params);
        let d = evaluate(params, &x, exogenous)?;
        let (res, walras) = residuals_from_derived(params, &x, exogenous, &d);
        return Ok(PeriodEquilibrium {
            unknowns: x,
            derived: d,
            residual_norm: max_norm(&res),
            walras_residual: walras,
        });
    }
    Err(SolverError::NotConverged {
        best_residual: norm,
        iterations: config.max_iterations,
        worst_equation: worst_equation(params, &r),
        trace: trace_log,
    })
}
