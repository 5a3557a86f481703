//! Many-server queues whose idle servers may leave on vacation.
//!
//! The crate simulates the n-th pre-limit queueing system (renewal arrivals,
//! exponential services, idle-triggered exponential or phase-type vacations)
//! and the three heavy-traffic limits of the customer/server population pair:
//!
//! * Halfin-Whitt (`alpha = 1`): a coupled SDE/ODE,
//! * near Halfin-Whitt (`1/2 < alpha < 1`): a reflected SDE coupled to an ODE
//!   through the boundary term,
//! * nondegenerate slowdown (`alpha = 1/2`): a reflected SDE coupled to a
//!   birth-death process whose upward jumps are driven by the boundary term.
//!
//! Alongside the simulators it provides the closed-form probability-of-wait
//! and slowdown approximations, steady-state estimators and the experiment
//! presets used to compare the two.

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod heuristics;
pub mod limit;
pub mod prelimit;
pub mod skorokhod;
pub mod stochastic;

pub use error::{Error, Result};
