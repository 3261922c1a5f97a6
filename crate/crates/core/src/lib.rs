//! Multi-energy hub planning toolkit.
//!
//! The crate models an energy hub (buses, grid connections, converters,
//! storage), reduces a year of hourly data to representative days, and sizes
//! the hub's equipment under several emission-policy regimes: a direct
//! emission cap, a carbon tax found by bisection, a builder/operator split
//! solved through strong duality, and a social-cost-of-carbon search layered
//! on top of the split. All optimization runs on the crate's own LP/MILP
//! engine so dual values and certificates are available everywhere.

pub mod duality;
pub mod frameworks;
pub mod hub;
pub mod operation;
pub mod scenarios;
pub mod search;
pub mod solver;

pub mod cli;
pub mod fixtures;
