use serde::{Deserialize, Serialize};

use super::CodecError;
use crate::bits::Bits;
use crate::seed::{mix, tag};

/// Row `i` of the seed-`seed` matrix acting on `n_bits`-bit inputs.
///
/// Word `w` of the row is `mix(mix(seed, MATRIX, (n_bits << 32) | i), ROW, w)`
/// and column `c` is bit `c % 64` of word `c / 64`. Rows do not depend on the
/// output length, so for `l + 1 < n_bits` the code with `l + 1` rows refines
/// the code with `l`.
pub fn matrix_row(seed: u64, n_bits: usize, i: usize) -> Bits {
    let key = mix(seed, tag::MATRIX, ((n_bits as u64) << 32) | i as u64);
    let words = (0..n_bits.div_ceil(64))
        .map(|w| mix(key, tag::ROW, w as u64))
        .collect();
    Bits::from_words(n_bits, words)
}

/// A GF(2)-linear hash `x ↦ M·x` with an `l × n_bits` matrix expanded from a seed.
///
/// A code with `l = n_bits` is raw transmission: its matrix is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CodeParams", into = "CodeParams")]
pub struct LinearHashCode {
    n_bits: usize,
    l: usize,
    seed: u64,
    rows: Vec<Bits>,
}

#[derive(Serialize, Deserialize)]
struct CodeParams {
    n_bits: usize,
    l: usize,
    seed: u64,
}

impl TryFrom<CodeParams> for LinearHashCode {
    type Error = CodecError;
    fn try_from(p: CodeParams) -> Result<Self, CodecError> {
        LinearHashCode::new(p.n_bits, p.l, p.seed)
    }
}

impl From<LinearHashCode> for CodeParams {
    fn from(c: LinearHashCode) -> Self {
        CodeParams {
            n_bits: c.n_bits,
            l: c.l,
            seed: c.seed,
        }
    }
}

impl LinearHashCode {
    pub fn new(n_bits: usize, l: usize, seed: u64) -> Result<Self, CodecError> {
        if l > n_bits {
            return Err(CodecError::LengthMismatch {
                expected: n_bits,
                got: l,
            });
        }
        let rows = if l == n_bits {
            (0..l)
                .map(|i| Bits::from_bools((0..n_bits).map(|c| c == i)))
                .collect()
        } else {
            (0..l).map(|i| matrix_row(seed, n_bits, i)).collect()
        };
        Ok(LinearHashCode {
            n_bits,
            l,
            seed,
            rows,
        })
    }

    #[cfg(test)]
    pub(crate) fn with_rows(mut self, rows: Vec<Bits>) -> Self {
        self.l = rows.len();
        self.rows = rows;
        self
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> &[Bits] {
        &self.rows
    }

    pub fn hash(&self, x: &Bits) -> Result<Bits, CodecError> {
        if x.len() != self.n_bits {
            return Err(CodecError::LengthMismatch {
                expected: self.n_bits,
                got: x.len(),
            });
        }
        Ok(Bits::from_bools(self.rows.iter().map(|row| row.dot(x))))
    }

    pub fn rank(&self) -> usize {
        super::coset::rank(&self.rows, self.n_bits)
    }
}
