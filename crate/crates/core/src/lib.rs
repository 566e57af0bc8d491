//! Firm-level market power estimation and its aggregation to economy-wide
//! profit shares.
//!
//! The crate is organised as a pipeline:
//!
//! * [`panel`]: firm panels, macro series, cleaning and weights;
//! * [`pfe`]: control-function production function estimation;
//! * [`mpower`]: markups, returns to scale, profit rates and user costs;
//! * [`agg`]: Domar-weight aggregation, profit-share identities and
//!   decompositions;
//! * [`dynamics`]: markup-change decomposition and concentration measures;
//! * [`oracle`]: synthetic economies with known ground truth;
//! * [`pipeline`]: configuration, end-to-end runs and output verification.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agg;
pub mod dynamics;
pub mod error;
pub mod numeric;
pub mod oracle;
pub mod panel;
pub mod mpower;
pub mod pfe;
pub mod pipeline;

pub use error::{Error, ErrorClass, Result};
