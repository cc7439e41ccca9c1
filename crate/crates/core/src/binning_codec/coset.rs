//! Preimages of a linear hash: the affine subspace `{x : M·x = t}`.

use std::ops::ControlFlow;

use super::{CodecError, LinearHashCode};
use crate::bits::Bits;

/// Reduced row echelon form of `rows` with an augmented right-hand side.
struct Echelon {
    rows: Vec<Bits>,
    rhs: Vec<bool>,
    pivots: Vec<usize>,
}

fn echelon(rows: &[Bits], rhs: &[bool], n_bits: usize) -> Echelon {
    let mut rows = rows.to_vec();
    let mut rhs = rhs.to_vec();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..n_bits {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
            continue;
        };
        rows.swap(rank, p);
        rhs.swap(rank, p);
        let (pivot_row, pivot_rhs) = (rows[rank].clone(), rhs[rank]);
        for r in 0..rows.len() {
            if r != rank && rows[r].get(col) {
                rows[r].xor_assign(&pivot_row);
                rhs[r] ^= pivot_rhs;
            }
        }
        pivots.push(col);
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    Echelon { rows, rhs, pivots }
}

pub(crate) fn rank(rows: &[Bits], n_bits: usize) -> usize {
    echelon(rows, &vec![false; rows.len()], n_bits).pivots.len()
}

/// An affine subspace `offset + span(basis)` of GF(2)^n, or the empty set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coset {
    n_bits: usize,
    offset: Option<Bits>,
    basis: Vec<Bits>,
}

impl Coset {
    /// Solves `M·x = target`.
    pub fn solve(code: &LinearHashCode, target: &Bits) -> Result<Coset, CodecError> {
        if target.len() != code.l() {
            return Err(CodecError::LengthMismatch {
                expected: code.l(),
                got: target.len(),
            });
        }
        let n = code.n_bits();
        let rhs: Vec<bool> = target.iter().collect();
        let e = echelon(code.rows(), &rhs, n);
        let rank = e.pivots.len();
        if e.rhs[rank..].iter().any(|&b| b) {
            return Ok(Coset {
                n_bits: n,
                offset: None,
                basis: Vec::new(),
            });
        }
        let mut offset = Bits::zeros(n);
        for (i, &col) in e.pivots.iter().enumerate() {
            offset.set(col, e.rhs[i]);
        }
        let mut is_pivot = vec![false; n];
        for &c in &e.pivots {
            is_pivot[c] = true;
        }
        let basis = (0..n)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = Bits::zeros(n);
                v.set(f, true);
                for (i, &col) in e.pivots.iter().enumerate() {
                    if e.rows[i].get(f) {
                        v.set(col, true);
                    }
                }
                v
            })
            .collect();
        Ok(Coset {
            n_bits: n,
            offset: Some(offset),
            basis,
        })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_none()
    }

    /// Dimension of the direction space (0 for an empty coset).
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Number of elements, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        match self.offset {
            None => 0,
            Some(_) => 1u128
                .checked_shl(self.basis.len() as u32)
                .unwrap_or(u128::MAX),
        }
    }

    pub fn offset(&self) -> Option<&Bits> {
        self.offset.as_ref()
    }

    pub fn basis(&self) -> &[Bits] {
        &self.basis
    }

    /// Re-expresses the coset with `origin` (which must be a member) as the
    /// offset, and a basis in reduced echelon form whose pivots follow
    /// `column_order` (highest priority first). Basis vector `i` is the one
    /// pivoting on the `i`-th eligible column.
    pub fn rebased(&self, origin: Bits, column_order: &[usize]) -> Coset {
        let mut rest = self.basis.clone();
        let mut reduced: Vec<Bits> = Vec::with_capacity(rest.len());
        for &col in column_order {
            if rest.is_empty() {
                break;
            }
            let Some(p) = rest.iter().position(|v| v.get(col)) else {
                continue;
            };
            let pivot = rest.swap_remove(p);
            for v in rest.iter_mut().chain(reduced.iter_mut()) {
                if v.get(col) {
                    v.xor_assign(&pivot);
                }
            }
            reduced.push(pivot);
        }
        debug_assert!(rest.is_empty(), "column order must cover every coordinate");
        Coset {
            n_bits: self.n_bits,
            offset: Some(origin),
            basis: reduced,
        }
    }

    /// All members, in Gray-code order starting from the offset.
    pub fn iter(&self) -> impl Iterator<Item = Bits> + '_ {
        let mut state = self.offset.clone();
        let total = if self.offset.is_some() {
            self.size()
        } else {
            0
        };
        let mut i: u128 = 0;
        std::iter::from_fn(move || {
            if i >= total {
                return None;
            }
            let s = state.as_mut().unwrap();
            if i > 0 {
                s.xor_assign(&self.basis[i.trailing_zeros() as usize]);
            }
            i += 1;
            Some(s.clone())
        })
    }
}

/// All preimages of `target`, refusing cosets larger than `budget`.
pub fn enumerate_coset(
    code: &LinearHashCode,
    target: &Bits,
    budget: u64,
) -> Result<Coset, CodecError> {
    let coset = Coset::solve(code, target)?;
    if coset.size() > budget as u128 {
        return Err(CodecError::BudgetExceeded {
            required: coset.size(),
            budget,
        });
    }
    Ok(coset)
}

/// The product of per-source cosets, walked as one affine space in
/// Gray-code order. Each visited state differs from the previous one in a
/// single basis vector of a single source.
pub(crate) struct ProductSpace {
    pub offsets: Vec<Bits>,
    /// `(source, direction)` pairs; Gray-code bit `i` toggles `basis[i]`.
    pub basis: Vec<(usize, Bits)>,
}

impl ProductSpace {
    pub fn from_cosets(cosets: &[Coset]) -> Option<Self> {
        let offsets = cosets
            .iter()
            .map(|c| c.offset().cloned())
            .collect::<Option<Vec<_>>>()?;
        let basis = cosets
            .iter()
            .enumerate()
            .flat_map(|(j, c)| c.basis().iter().map(move |v| (j, v.clone())))
            .collect();
        Some(ProductSpace { offsets, basis })
    }

    pub fn size(&self) -> u128 {
        1u128
            .checked_shl(self.basis.len() as u32)
            .unwrap_or(u128::MAX)
    }

    /// Visits up to `limit` states, stopping early on `Break`. Returns the
    /// number of states visited and the break value, if any.
    pub fn visit<B>(
        &self,
        limit: u128,
        mut f: impl FnMut(&[Bits]) -> ControlFlow<B>,
    ) -> (u128, Option<B>) {
        let total = self.size().min(limit);
        let mut state = self.offsets.clone();
        let mut i: u128 = 0;
        while i < total {
            if i > 0 {
                let (j, v) = &self.basis[i.trailing_zeros() as usize];
                state[*j].xor_assign(v);
            }
            i += 1;
            if let ControlFlow::Break(b) = f(&state) {
                return (i, Some(b));
            }
        }
        (i, None)
    }
}
