//! Simulation and post-processing of multi-branch optical fiber
//! frequency-transfer links.
//!
//! The crate is organised around [`series::FreqSeries`], a uniformly sampled
//! fractional-frequency record with a validity mask. On top of it sit:
//!
//! * [`noise`]: seeded synthesis of power-law noise, thermal daily cycles,
//!   cycle slips and unlock gaps;
//! * [`stability`]: overlapping Allan and modified Allan deviations, plus
//!   analytic references computed from one-sided PSDs;
//! * [`link`]: topology description, two-way correction of the short
//!   interconnect, delay-limited residual floors, loss budgets and frequency
//!   planning;
//! * [`postproc`]: coarse filtering, the three-observable data selection,
//!   uptime accounting and uncertainty budgets;
//! * [`cli`]: the `fiberlink` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constants;
pub mod error;
pub mod io;
pub mod link;
pub mod noise;
pub mod postproc;
pub mod scenario;
pub mod series;
pub mod stability;

pub use error::{Error, Result};
pub use series::{FreqSeries, Histogram, Summary, ValidityMask};
pub use stability::StabilityCurve;
