//! Simulation and data-assimilation toolkit for risk-tailored epidemic control
//! on time-dependent contact networks.
//!
//! The crate is organized around the daily loop of a twin experiment:
//!
//! * [`network`] builds the static three-group contact graph and samples the
//!   diurnal edge activations for each simulated day.
//! * [`kmc`] runs the stochastic SEIHRD process on that network. Its output is
//!   the surrogate truth.
//! * [`observations`] turns the truth into noisy test, sensor and status data.
//! * [`riskmodel`] integrates the reduced master equations for an ensemble of
//!   per-node probability vectors.
//! * [`da`] assimilates observations into the ensemble with a localized
//!   ensemble adjustment Kalman filter.
//! * [`scenarios`] ties everything together: user bases, classification,
//!   baselines, intervention policies and the scenario runner.

pub mod age;
pub mod da;
pub mod error;
pub mod kmc;
pub mod network;
pub mod observations;
pub mod riskmodel;
pub mod rng;
pub mod scenarios;

pub use age::AgeBand;
pub use error::{Error, Result};
pub use kmc::{Health, WorldState};
pub use network::{ContactBounds, ContactNetwork, EdgeSchedule, Group, NodeMeta};
pub use riskmodel::Ensemble;
