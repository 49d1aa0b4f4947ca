//! Global sensitivity analysis toolkit.
//!
//! Seven GSA methods (Morris elementary effects, Sobol' first-order and total
//! indices, VARS-TO, and four regression-based measures), the space-filling
//! designs they need, bundled test simulators, concordance statistics for
//! comparing rankings, and a subprocess adapter for external simulators.

pub mod adapter;
pub mod compare;
pub mod error;
pub mod morris;
pub mod regress;
pub mod sampling;
pub mod sobol;
pub mod space;
pub mod stats;
pub mod testbed;
pub mod vars;

pub use error::{Error, Result};
pub use space::{
    map_unit_to_range, scale_to_unit_sum, DesignKind, DesignMatrix, Matrix, Method, OutputMatrix,
    ParameterDef, ParameterSpace, SensitivityResult, StarPoint,
};
