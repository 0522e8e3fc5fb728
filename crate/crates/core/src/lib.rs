//! Coalition formation for joint spectrum sensing and access in cognitive
//! radio networks.
//!
//! Secondary users (SUs) sense primary-user channels sequentially, transmit on
//! the first idle one, and may form coalitions that pool channel statistics,
//! jointly rank channels to avoid same-rank collisions, and share power across
//! simultaneously found channels. Coalition payoffs depend on the whole
//! network partition through external interference, so the engine plays a
//! coalitional game in partition form driven by an individual switch rule.
//!
//! The numeric kernels ([`noncoop`], [`outcomes`], [`power`]) are generic over
//! the scalar type. Probability arithmetic only needs ring operations and so
//! also runs over exact rationals ([`ExactProb`]); capacity and power code needs
//! [`num_traits::Float`]. The game engine itself works in [`Real`].

pub mod coopsort;
pub mod dynamics;
pub mod error;
pub mod formation;
pub mod harness;
pub mod noncoop;
pub mod oracle;
pub mod outcomes;
pub mod partition;
pub mod power;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod valuation;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Floating-point type used by the scenario, valuation and formation layers.
pub type Real = f64;

/// Exact probability type for rational evaluation of the sensing and outcome
/// models.
pub type ExactProb = num_rational::Ratio<i128>;

pub type OutcomeDistribution = outcomes::OutcomeDistribution<Real>;
pub type ExactOutcomeDistribution = outcomes::OutcomeDistribution<ExactProb>;
pub type PowerAllocation = power::PowerAllocation<Real>;
pub type RateContext = power::RateContext<Real>;

pub use coopsort::CoalitionPlan;
pub use partition::{Coalition, Partition};
pub use scenario::{PhysParams, Scenario};
