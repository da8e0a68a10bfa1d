//! Information propagation in V2V-enabled transportation networks.
//!
//! Vehicles move between clusters (directional road segments) and pass a
//! message to each other at rates that scale as `beta / N`. The resulting
//! density-dependent Markov chain is simulated exactly in [`ctmc`], and its
//! deterministic fluid limit is integrated in [`ode`]. The remaining modules
//! build road networks ([`topology`]), evaluate mobility rate laws
//! ([`rates`]), turn trajectory data into rates and replay it
//! ([`trajectory`]), compute the comparison metrics ([`analysis`]) and bind
//! everything into configuration-driven scenarios ([`scenario`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ctmc;
pub mod error;
pub mod ode;
pub mod rates;
pub mod rng;
pub mod scenario;
pub mod series;
pub mod topology;
pub mod trajectory;

pub use error::{Error, Result};
pub use rates::{MobilityModel, RateLaw};
pub use series::PropagationSeries;
pub use topology::{ClusterGraph, Region, RoutingTable};
