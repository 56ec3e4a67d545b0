//! Simulation and verification toolkit for distributed inference under local
//! information constraints.
//!
//! `n` users each hold one i.i.d. sample from an unknown distribution over an
//! even domain `[2k]`. Each user pushes their sample through a constrained
//! channel (bounded communication, local differential privacy, erasure,
//! leaky-query) and sends the single message to a server, which must either
//! test uniformity or estimate the distribution. The crate provides:
//!
//! - distributions over `[2k]`, the sign-perturbation family around uniform,
//!   and divergence primitives ([`dist`]);
//! - channels as explicit stochastic matrices, the channel information matrix
//!   and its spectral norms ([`channel`], [`info`]);
//! - a sequentially interactive protocol runtime and concrete uniformity
//!   testers, including the three-stage leaky-query tester that separates
//!   interactive from noninteractive protocols ([`protocol`], [`testers`]);
//! - exact transcript-distribution and mutual-information computation on
//!   small instances by full enumeration, used to verify the information
//!   inequalities behind the lower bounds ([`oracle`], [`verify`]);
//! - a lower-bound calculator and Monte Carlo experiment harness
//!   ([`bounds`], [`experiment`]).
//!
//! Entropies and mutual informations are in bits throughout. Divergence
//! comparisons against bit-valued information quantities carry explicit
//! `ln 2` factors; see [`verify`] for the conventions.

use thiserror::Error;

pub mod bounds;
pub mod channel;
pub mod dist;
pub mod experiment;
pub mod info;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod testers;
pub mod verify;

pub use channel::{Channel, ChannelKind, ChannelSpec, Label};
pub use dist::{binary_entropy, chi2, kl, tv, Distribution, DistributionSpec, PerturbationSign};
pub use info::{info_matrix, leaky_query_info_closed_form, norms, FamilyNorms, InfoMatrix};
pub use oracle::{EnumerableStrategy, OracleCaps, RademacherJoint, TranscriptDist};
pub use protocol::{run_transcript, Decision, Mode, Outcome, Strategy, Transcript, Verdict};
pub use testers::{ProtocolSpec, Stage1Trigger, TesterConstants};
pub use verify::VerificationReport;

/// Errors across the toolkit. Construction-time validation is strict:
/// nothing renormalizes or clamps silently.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probability vector sums to {sum}, expected 1 within 1e-12")]
    NotNormalized { sum: f64 },
    #[error("invalid probability mass {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("domain mismatch: {left} vs {right}")]
    DomainMismatch { left: usize, right: usize },
    #[error("absolute continuity violated at index {index}: q = 0 but p = {p}")]
    AbsoluteContinuity { index: usize, p: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("channel row {row} sums to {sum}, expected 1 within 1e-12")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("duplicate message label {0}")]
    DuplicateLabel(String),
    #[error("message alphabet has {size} labels, cap is 65536")]
    AlphabetTooLarge { size: usize },
    #[error("matrix not symmetric: max asymmetry {delta}")]
    NotSymmetric { delta: f64 },
    #[error("matrix not positive semidefinite: min eigenvalue {min_eigenvalue}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("numeric sanity check failed: {0}")]
    NumericSanity(String),
    #[error("instance exceeds enumeration cap: {0}")]
    SizeCapExceeded(String),
    #[error("malformed joint distribution: {0}")]
    MalformedJoint(String),
    #[error("need at least {need} samples/users, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("search failed: {0}")]
    SearchFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
