//! Derivation caching under premise erasure.
//!
//! The library models ground Datalog derivation over an unary base
//! `B = {A(1), ..., A(m)}` for two rule architectures (a linear chain and a
//! balanced merge tree), and studies what must be cached so that a query
//! survives random erasure of base facts:
//!
//! * [`datalog`] — facts, knowledge bases, bottom-up (seminaive) closure,
//!   derivation depth, canonical derivation DAGs, prefix-free trace codes,
//!   atomic cores, layer-prefix caches.
//! * [`erasure`] — erasure channels (uniform and per-fact), pollution,
//!   log-cost accounting, resilience thresholds, reconstruction depth.
//! * [`caching`] — derivation-constrained caches (layer-prefix and
//!   water-filling placements), systematic Reed-Solomon parity caches over
//!   a prime field, exact error laws, rigidity restriction, joint plans.
//! * [`analysis`] — closed-form and asymptotic analysis: KL divergence,
//!   Bahadur-Rao tails, dispersion/second-order cache sizes, penalty
//!   ratios, phase-regime classification, exponent landscapes, depth-space
//!   reports, multi-query gains, noisy-base statistics.
//! * [`montecarlo`] — deterministic counter-based Monte Carlo validation
//!   with Clopper-Pearson intervals.
//! * [`experiments`] — the six numerical experiments as CSV writers.
//! * [`numerics`] — exact log-space binomial tails and normal CDF/quantile
//!   kernels shared by the modules above.

// Approximation coefficients and frozen reference values are kept at their
// full published precision even where it exceeds f64 resolution.
#![allow(clippy::excessive_precision)]

pub mod analysis;
pub mod caching;
pub mod datalog;
pub mod erasure;
pub mod experiments;
pub mod montecarlo;
pub mod numerics;

use thiserror::Error;

/// Unified error type for invalid parameters, range violations, and decode
/// failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// A quantity does not fit the requested representation (e.g. merge
    /// arity overflowing u64, or a field too small for a code length).
    #[error("out of range: {0}")]
    Range(String),
    /// A bit string is not a valid trace codeword.
    #[error("malformed trace: {0}")]
    Malformed(String),
    /// An erasure pattern is not correctable by the given cache.
    #[error("decode failure: {0}")]
    Decode(String),
    /// Serialization round-trip failure.
    #[error("serialization: {0}")]
    Serde(String),
    /// I/O failure while writing experiment output.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Bit-accounting convention for cache storage.
///
/// `Ideal` charges `log2(m)` real bits per base-alphabet coordinate (the
/// convention used in all capacity statements); `Integer` charges whole
/// bits per symbol (`ceil(log2 m)` per coordinate, `ceil(log2 q)` per
/// field symbol).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Accounting {
    #[default]
    Ideal,
    Integer,
}
