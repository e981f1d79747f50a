//! Modeling, simulation, and one-step forecasting of the extreme upper
//! tail of nonnegative heavy-tailed time series.
//!
//! The toolkit works with transformed-linear arithmetic: ordinary addition
//! and scaling conjugated by the softplus transform, which keeps series
//! nonnegative while preserving regular variation. Tail dependence is
//! summarized by the tail pairwise dependence function (TPDF), the
//! extremes analogue of the autocovariance function. On top of that sit:
//!
//! - [`translinear`]: the arithmetic itself;
//! - [`simulate`]: seeded generators for Frechet noise, transformed-linear
//!   MA(q), GARCH(1,1) absolute values, and a logistic Markov chain;
//! - [`tail`]: Hill/scale estimation, marginal transforms, and TPDF
//!   estimation from radial exceedances;
//! - [`innovations`]: the innovations recursion on a TPDF, MA fitting,
//!   and one-step prediction;
//! - [`uncertainty`]: completely positive decompositions of the prediction
//!   TPDM, angular measures, and conditional prediction intervals;
//! - [`diagnostics`] and [`pipeline`]: tail summaries and end-to-end
//!   experiment orchestration.

// `!(x > 0.0)` is the NaN-rejecting form of input validation used
// throughout; the suggested rewrite would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod innovations;
pub mod io;
pub mod pipeline;
pub mod series;
pub mod simulate;
pub mod tail;
pub mod translinear;
pub mod uncertainty;
pub mod util;

pub use error::{Error, Result};
pub use innovations::{InnovationsState, MaModel, PredictorWeights};
pub use series::{ScaleTag, Series};
pub use tail::{MarginalFit, Tpdf};
pub use uncertainty::{AngularMeasure, IntervalSet, PredictionTpdm};
