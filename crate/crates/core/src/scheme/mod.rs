//! The approximation scheme: coefficient tables, masks, and the estimator.

mod coefficients;
mod estimate;
mod mask;

pub use coefficients::{coefficients, to_f64, Rational, SchemeCoefficients, SchemeWeights, MAX_ORDER};
pub use estimate::{
    dmuk_set, estimate, estimate_from_correctors, EstimateParams, EstimateReport, CSV_HEADER,
};
pub use mask::{build_mask, Filter};
