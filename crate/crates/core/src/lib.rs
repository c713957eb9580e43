//! Competitive market-making model of market impact.
//!
//! A meta-order size law ([`dist::TailDistribution`]) determines the latent
//! order book a zero-profit market maker must post ([`book`]). The crate
//! simulates the resulting price process ([`sim`]), models impact decay
//! after completion ([`decay`]), estimates renormalized and aggregate impact
//! ([`impact`]) and evaluates execution costs ([`execution`]).
//!
//! Impact exponents are always derived as `δ = γ − 1` from the tail
//! exponent `γ`.

pub mod book;
pub mod csv;
pub mod decay;
pub mod dist;
pub mod error;
pub mod execution;
pub mod impact;
pub mod montecarlo;
pub mod numerics;
pub mod rng;
pub mod sim;

pub use book::{LatentBook, Level, OracleReport};
pub use dist::{DistKind, TailDistribution};
pub use error::{Error, Result};
pub use rng::RandomSource;
