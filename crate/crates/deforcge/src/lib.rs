//! Recursive-dynamic small-open-economy CGE engine for analyzing
//! deforestation-linked export restrictions.
//!
//! The crate calibrates a within-period equilibrium system to a Social
//! Accounting Matrix, splits production into compliant/non-compliant
//! variants, solves yearly equilibria under baseline and shock
//! scenarios, endogenizes deforestation through land-supply curves, and
//! reports macro, sectoral, land-use, and emissions deviations.

pub mod dynamics;
pub mod emissions;
pub mod landshare;
pub mod model;
pub mod sam;
pub mod scenario;
pub mod solver;
