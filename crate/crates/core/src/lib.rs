//! Dynamic versus static pricing of reusable resources in Erlang loss
//! systems: exact solvers, guarantee certificates and a simulator.

pub mod certifier;
pub mod config;
pub mod demand;
pub mod dynamic_solver;
pub mod error;
pub mod experiments;
pub mod loss_core;
pub mod model;
pub mod scalar;
pub mod simulator;
pub mod static_solver;

pub use error::{Error, Result};
pub use scalar::{Field, Real};

/// Double-precision demand curve.
pub type Demand = demand::DemandCurve<f64>;
/// Double-precision occupancy distribution.
pub type Occupancy = loss_core::OccupancyDistribution<f64>;
/// Exact rational scalar.
pub type Rational = num_rational::BigRational;
