//! Estimators for staggered treatment adoption.
//!
//! * [`drdid`]: doubly-robust group-time ATT(g,t) with influence functions
//! * [`iwes`]: interaction-weighted event study (saturated cohort x event-time regression)
//! * [`nb_event`]: negative-binomial two-way fixed-effects event study with an exposure offset
//! * [`ascm`]: partially pooled synthetic control with ridge penalty
//! * [`aggregate`]: event-time aggregation with multiplier-bootstrap bands
//! * [`sim`] and [`benchmark`]: ground-truth panel simulator and Monte Carlo harness

pub mod aggregate;
pub mod ascm;
pub mod benchmark;
pub mod bootstrap;
pub mod drdid;
pub mod error;
pub mod glm;
pub mod iwes;
pub mod nb_event;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod sim;
pub mod simplex;
mod twfe;

pub use error::{Error, Result};
pub use panel::{Cohort, PanelDataset, PanelSchema};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
