//! Random-binning codes for the fork network.
//!
//! Each sender hashes its binarized block with a seeded GF(2)-linear map;
//! the receiver searches the product of the preimage cosets for the most
//! likely source tuple.

mod coset;
mod decode;
mod experiment;
mod hash;

pub use coset::{enumerate_coset, Coset};
pub use decode::{certify_ml_error, decode_joint, DecodedBlock, ErrorCertificate, Scorer};
pub use experiment::{
    run_achievability, trial_seeds, write_achievability_csv, AchievabilityRow, ExperimentPlan,
    RowOutcome, DEFAULT_BUDGET, DEFAULT_DELTA,
};
pub use hash::{matrix_row, LinearHashCode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::rate_region::{Rate, RegionError};
use crate::source_model::SourceError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("expected {expected} sources, got {got}")]
    SourceCount { expected: usize, got: usize },
    #[error("decoder would examine {required} candidates, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("no candidate tuple is consistent with the messages")]
    NoCandidate,
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// The output of encoder `f_j` for one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedMessage {
    pub source_index: usize,
    pub bits: Bits,
}

/// Writes each symbol in `width` bits, most significant first.
pub fn binarize(symbols: &[u32], width: usize) -> Bits {
    let mut out = Bits::zeros(symbols.len() * width);
    for (i, &s) in symbols.iter().enumerate() {
        out.write_uint(i * width, width, s as u64);
    }
    out
}

pub fn unbinarize(bits: &Bits, width: usize, n: usize) -> Vec<u32> {
    (0..n)
        .map(|i| bits.read_uint(i * width, width) as u32)
        .collect()
}

pub fn encode_block(
    source_index: usize,
    block: &Bits,
    code: &LinearHashCode,
) -> Result<EncodedMessage, CodecError> {
    Ok(EncodedMessage {
        source_index,
        bits: code.hash(block)?,
    })
}

/// `l_j(n) = ⌊(r_j + δ)·n⌋`, the longest code with `l_j(n) ≤ (r_j + δ)·n`,
/// capped at the raw length `n·width`.
pub fn code_length(rate: Rate, delta: f64, n: usize, width: usize) -> usize {
    let raw = n * width;
    match rate {
        Rate::Unbounded => raw,
        Rate::Finite(r) => {
            // Guard against (r + δ)·n landing a hair below an integer.
            let bits = ((r + delta) * n as f64 + 1e-9).floor().max(0.0);
            if bits >= raw as f64 {
                raw
            } else {
                bits as usize
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn code_lengths() {
        assert_eq!(code_length(Rate::Finite(0.95), 0.0, 32, 1), 30);
        assert_eq!(code_length(Rate::Finite(0.9), 0.0, 10, 1), 9);
        assert_eq!(code_length(Rate::Finite(0.6), 0.0, 96, 1), 57);
        assert_eq!(code_length(Rate::Finite(0.25), 0.0, 96, 1), 24);
        assert_eq!(code_length(Rate::Finite(1.0), 0.05, 20, 1), 20);
        assert_eq!(code_length(Rate::Unbounded, 0.0, 10, 2), 20);
        assert_eq!(code_length(Rate::Finite(0.0), 0.0, 10, 1), 0);
    }

    #[test]
    fn binarization_round_trip() {
        let s = [0, 2, 1, 3, 2];
        let b = binarize(&s, 2);
        assert_eq!(b.to_string(), "0010011110");
        assert_eq!(unbinarize(&b, 2, 5), s);
    }

    #[test]
    fn all_zero_block_hashes_to_zero() {
        let code = LinearHashCode::new(40, 9, 1).unwrap();
        assert!(encode_block(0, &Bits::zeros(40), &code)
            .unwrap()
            .bits
            .is_zero());
    }

    #[test]
    fn golden_seed_42() {
        let code = LinearHashCode::new(8, 3, 42).unwrap();
        let m = encode_block(0, &"10110010".parse().unwrap(), &code).unwrap();
        assert_eq!(m.bits.len(), 3);
        assert_eq!(m.bits.to_string(), GOLDEN_SEED_42);
    }

    // Cross-checked against an independent re-derivation of the seed expansion.
    const GOLDEN_SEED_42: &str = "110";

    proptest! {
        #[test]
        fn encoding_is_linear(seed in any::<u64>(), xs in any::<[u64; 2]>(), ys in any::<[u64; 2]>(), l in 0usize..=100) {
            let code = LinearHashCode::new(100, l, seed).unwrap();
            let x = Bits::from_words(100, xs.to_vec());
            let y = Bits::from_words(100, ys.to_vec());
            let lhs = encode_block(0, &x.xor(&y), &code).unwrap().bits;
            let rhs = encode_block(0, &x, &code).unwrap().bits.xor(&encode_block(0, &y, &code).unwrap().bits);
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(encode_block(0, &x, &code).unwrap(), encode_block(0, &x, &LinearHashCode::new(100, l, seed).unwrap()).unwrap());
        }
    }
}
