//! Intercept-resend attack bounds for BB84 with weak coherent pulses.
//!
//! Alice's source emits the four BB84 polarization states as phase-randomized
//! weak coherent pulses, i.e. Poissonian mixtures of photon-number states with
//! small mean photon number `mu`. An eavesdropper who knows the photon number
//! of every pulse can filter multi-photon signals to make the four
//! polarization states more distinguishable, measure them with the
//! square-root measurement, and resend a fresh state to Bob, hiding discarded
//! signals inside the channel loss. This crate computes the error-rate /
//! channel-loss envelope of that attack:
//!
//! * [`symstates`] — symmetric-state coefficients of the n-photon BB84 set
//!   and Poisson source statistics,
//! * [`detector`] — Bob's threshold-detector model and click probabilities,
//! * [`attack`] — filter operation, square-root measurement statistics,
//!   loss-matching constraint and the closed-form low-loss error rates,
//! * [`optimizer`] — the truncated high-loss optimization, its error-rate
//!   upper bound, and the unambiguous-discrimination limits,
//! * [`jointdist`] — the joint probability distribution P(A,B) seen by Alice
//!   and Bob, with its symmetry diagnostics,
//! * [`mcsim`] — a seeded Monte Carlo simulation of the attack used as an
//!   independent oracle for every analytic probability.
//!
//! All numerical code is generic over the scalar type through the [`Real`]
//! trait; `f64` instantiations are what the CLI and the test suite use.

pub mod attack;
pub mod detector;
pub mod error;
pub mod jointdist;
pub mod mcsim;
pub mod optimizer;
pub mod scalar;
pub mod symstates;

pub use error::Error;
pub use scalar::Real;

/// Convenient `f64` instantiations of the main types.
pub type PhotonCoefficients64 = symstates::PhotonCoefficients<f64>;
pub type PoissonSource64 = symstates::PoissonSource<f64>;
pub type ClickParameters64 = detector::ClickParameters<f64>;
pub type ChannelScenario64 = attack::ChannelScenario<f64>;
pub type FilterGains64 = attack::FilterGains<f64>;
pub type GainSchedule64 = attack::GainSchedule<f64>;
pub type AttackSolution64 = optimizer::AttackSolution<f64>;
pub type JointDistribution64 = jointdist::JointDistribution<f64>;

/// Crate result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
