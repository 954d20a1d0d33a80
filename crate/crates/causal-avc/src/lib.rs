//! Capacity bounds and desk-scale simulations for a power-constrained channel
//! facing a causal, power-constrained jammer.
//!
//! The crate has two halves. The analytical half ([`model`], [`waterfill`],
//! [`bounds`]) evaluates lower and upper bounds on the achievable rate by a
//! minimax search over two-level power profiles, with a water-filling inner
//! solver for the jammer's best response. The constructive half ([`codec`],
//! [`attack`], [`sim`]) builds finite chunked stochastic codes, runs the
//! scaled babble-and-push jamming strategy against them, and estimates error
//! probabilities by Monte-Carlo simulation.

pub mod attack;
pub mod bounds;
pub mod cli;
pub mod codec;
pub mod model;
pub mod sim;
pub mod waterfill;
