//! A counting stand-in for conditional Kolmogorov complexity.
//!
//! Strings live in an explicit finite relation. `K̂(x | c)` is `log2` of the
//! number of values of `x` consistent with the condition `c`, which turns
//! every complexity inequality about the fork network into an exact counting
//! statement.

mod audit;
mod compress;
mod construct;
mod fingerprint;
mod relation;
mod surrogate;

pub use audit::{
    decode_codewords, necessity_audit, pigeonhole_failure_count, remark_audits, verify_star,
    ChainStep, JointDecode, NecessityReport, NecessityVerdict, PigeonholeCount, RemarkReport,
    RemarkRow, StarReport,
};
pub use compress::{lz78_bits, CompressionEstimator};
pub use construct::{
    fork_code_construct, recheck_trace, replay_trace, CaseLabel, ForkCode, KlTerms, SubsetCheck,
    TraceRecord, LEMMA_LOSS, MAX_RETRIES,
};
pub use fingerprint::{
    fingerprint_decode, muchnik_fingerprint, Derivation, Extractor, FingerprintSpec,
};
pub use relation::{CandidateRelation, RelationFile, MAX_TUPLES};
pub use surrogate::{ComplexityEstimator, ComplexitySurrogate, FiberStats, Query, Term};

use thiserror::Error;

use crate::binning_codec::CodecError;
use crate::source_model::SourceSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("relation has no tuples")]
    EmptyRelation,
    #[error("relation has {0} tuples, more than the limit of {MAX_TUPLES}")]
    TooLarge(usize),
    #[error("tuple {tuple} has {got} coordinates, expected {expected}")]
    Arity {
        tuple: usize,
        expected: usize,
        got: usize,
    },
    #[error("coordinate {coordinate} holds strings of {expected} bits, got {got}")]
    WidthMismatch {
        coordinate: usize,
        expected: usize,
        got: usize,
    },
    #[error("coordinate {0} does not exist")]
    NoSuchCoordinate(usize),
    #[error("conditioning values do not occur in the relation")]
    UnknownConditioning,
    #[error("fingerprint length {r} exceeds input length {len}")]
    LengthError { r: usize, len: usize },
    #[error("no candidate has the given fingerprint")]
    ZeroMatches,
    #[error("{count} candidates share the given fingerprint")]
    Collision { count: usize },
    #[error("{required} candidates exceed the budget of {budget}")]
    BudgetExceeded { required: usize, budget: usize },
    #[error("rates miss the bound for W = {subset} by {deficit:.3} bits")]
    PreconditionViolated { subset: SourceSet, deficit: f64 },
    #[error("no fingerprint at level {level} survived {retries} seeds")]
    ConstructionFailed { level: usize, retries: u32 },
    #[error("expected {expected} rates, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Length of the Elias gamma code of `m ≥ 1`.
pub fn gamma_bits(m: u64) -> u64 {
    debug_assert!(m >= 1);
    2 * (63 - m.leading_zeros() as u64) + 1
}

/// The default slack `2·⌈log2 n⌉ + 16` for total input length `n`.
pub fn default_slack(n: usize) -> f64 {
    let log = if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    };
    (2 * log + 16) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_lengths() {
        assert_eq!(gamma_bits(1), 1);
        assert_eq!(gamma_bits(2), 3);
        assert_eq!(gamma_bits(3), 3);
        assert_eq!(gamma_bits(4), 5);
        assert_eq!(gamma_bits(255), 15);
    }

    #[test]
    fn default_slack_values() {
        assert_eq!(default_slack(96), 30.0);
        assert_eq!(default_slack(128), 30.0);
        assert_eq!(default_slack(129), 32.0);
        assert_eq!(default_slack(144), 32.0);
        assert_eq!(default_slack(1), 16.0);
    }
}
