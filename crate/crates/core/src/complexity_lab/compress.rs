//! A compressor-based estimate, for demos on real data only. Its additive
//! error is unbounded, so no check in this crate relies on it.

use std::collections::HashMap;

use super::surrogate::ComplexityEstimator;
use super::LabError;
use crate::bits::Bits;
use crate::source_model::SourceSet;

fn phrase_cost(i: u64) -> u64 {
    (64 - (i - 1).leading_zeros()) as u64 + 1
}

/// LZ78 code length of `x` in bits: phrase `i` (1-based) costs
/// `⌈log2 i⌉` bits for its prefix index plus one literal bit.
pub fn lz78_bits(x: &Bits) -> u64 {
    let mut dict: HashMap<(u32, bool), u32> = HashMap::new();
    let mut cur = 0u32;
    let mut phrases = 0u64;
    let mut bits = 0u64;
    for b in x.iter() {
        match dict.get(&(cur, b)) {
            Some(&next) => cur = next,
            None => {
                dict.insert((cur, b), dict.len() as u32 + 1);
                phrases += 1;
                bits += phrase_cost(phrases);
                cur = 0;
            }
        }
    }
    if cur != 0 {
        phrases += 1;
        bits += phrase_cost(phrases);
    }
    bits
}

/// `C(y | x) ≈ C(x ‖ y) − C(x)` with the LZ78 length as `C`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompressionEstimator;

impl ComplexityEstimator for CompressionEstimator {
    fn conditional(&self, point: &[Bits], w: SourceSet) -> Result<f64, LabError> {
        if let Some(c) = w.indices().find(|&c| c >= point.len()) {
            return Err(LabError::NoSuchCoordinate(c));
        }
        let cond: Vec<&Bits> = (0..point.len())
            .filter(|&c| !w.contains(c))
            .map(|c| &point[c])
            .collect();
        let mut all = cond.clone();
        all.extend(w.indices().map(|c| &point[c]));
        let joint = lz78_bits(&Bits::concat(&all));
        let base = lz78_bits(&Bits::concat(&cond));
        Ok(joint.saturating_sub(base) as f64)
    }
}
