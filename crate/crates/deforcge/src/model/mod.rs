//! Within-period equilibrium system: production technology, trade
//! functions, institutional flows, factor-market curves, and macro
//! closures.

pub mod equations;
pub mod functions;
pub mod params;

pub use equations::{
    assemble_residuals, equation_labels, evaluate, Derived, PeriodEquilibrium,
};
pub use functions::{
    household_demands, leontief_intermediates, wage_curve, CesNest, CetNest, FunctionError,
};
pub use params::{
    Activity, Commodity, Government, Household, LaborMarket, LandType, ModelParameters,
    PeriodInputs, PeriodUnknowns, DEST_EU, DEST_REST, N_DEST,
};
