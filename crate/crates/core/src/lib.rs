//! Channel selection for cognitive access points in TV white space.
//!
//! Users (cognitive access points) learn a channel from the set a geo-location
//! database allows them, while each user is only active in a slot with some
//! probability. The crate provides:
//!
//! - [`network`]: topology, database answers, activity statistics and random
//!   topology generation.
//! - [`game`]: SINR/throughput, the state-based and robust spectrum access
//!   games and their aggregate weighted interference potentials.
//! - [`equilibrium`]: pure Nash equilibrium checks, best-response dynamics and
//!   the exhaustive centralized optimum.
//! - [`learning`]: the distributed stochastic learning automata.
//! - [`harness`]: experiment configs, sweeps, OPG verification and output.

pub mod equilibrium;
pub mod error;
pub mod game;
pub mod harness;
pub mod learning;
pub mod network;
pub mod numerics;
pub mod seeds;

pub use error::{Error, Result};
pub use game::{ChannelProfile, Expectation};
pub use network::{AccessPoint, ActiveSet, Network};
