//! Joint user association, resource-block allocation and power control for
//! proportional-fairness maximization in OFDM small-cell clusters whose base
//! stations sit behind capacity-limited backhaul links.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: configuration, unit conversions and seeded instance generation.
//! - [`radio`]: rates, throughputs, proportional-fairness utility and feasibility.
//! - [`duality`]: the Lagrangian dual of the association problem and its KKT diagnostics.
//! - [`ua_ra`]: cyclic coordinate descent over the association with ζ/ν pricing.
//! - [`power`]: per-RB power exchange with backhaul-capped steps.
//! - [`solver`]: alternation between association and power control.
//! - [`baselines`]: exhaustive search, max-rate greedy and a genetic algorithm.
//! - [`experiment`]: seeded backhaul sweeps that emit CSV/JSON.
//!
//! Rates are carried in Mbit/s and bandwidths in MHz internally, so that the
//! pricing variables stay close to unit scale.

pub mod baselines;
pub mod duality;
pub mod error;
pub mod experiment;
pub mod power;
pub mod radio;
pub mod scenario;
pub mod solver;
pub mod ua_ra;

pub use error::{Error, Result};
pub use radio::{Assignment, Dims, PowerMatrix, RateTensor, UtilityReport};
pub use scenario::{ChannelTensor, Cluster, ScenarioConfig};
