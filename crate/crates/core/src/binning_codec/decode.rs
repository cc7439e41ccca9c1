//! Joint maximum-likelihood decoding over the product of the k cosets.

use std::cmp::Ordering;
use std::ops::ControlFlow;

use super::coset::{Coset, ProductSpace};
use super::{unbinarize, CodecError, EncodedMessage, LinearHashCode};
use crate::bits::Bits;
use crate::source_model::{symbol_width, JointSourceSpec, SourceBlock};

/// Block log-likelihood under the i.i.d. law of a joint source.
///
/// The score of a candidate is `Σ_g c_g · ln p_g`, where `g` runs over the
/// distinct positive probability values of the pmf in decreasing order and
/// `c_g` counts the positions whose tuple has probability `p_g`. Candidates
/// with the same per-value counts therefore get bit-identical scores, and
/// exact likelihood ties reach the lexicographic tie-break.
#[derive(Debug, Clone)]
pub struct Scorer {
    widths: Vec<usize>,
    sizes: Vec<usize>,
    /// Group of each tuple index, `u32::MAX` for probability zero.
    group: Vec<u32>,
    group_ln: Vec<f64>,
}

const NO_GROUP: u32 = u32::MAX;

impl Scorer {
    pub fn new(spec: &JointSourceSpec) -> Self {
        let mut values: Vec<f64> = spec.pmf().iter().copied().filter(|&p| p > 0.0).collect();
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        values.dedup();
        let group = spec
            .pmf()
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    values.iter().position(|&v| v == p).unwrap() as u32
                } else {
                    NO_GROUP
                }
            })
            .collect();
        Scorer {
            widths: spec
                .alphabet_sizes()
                .iter()
                .map(|&s| symbol_width(s))
                .collect(),
            sizes: spec.alphabet_sizes().to_vec(),
            group,
            group_ln: values.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Tuple index at position `i`, or `None` if some symbol is outside its alphabet.
    #[inline]
    fn tuple_at(&self, blocks: &[Bits], i: usize) -> Option<usize> {
        let mut idx = 0usize;
        for (j, b) in blocks.iter().enumerate() {
            let w = self.widths[j];
            let s = if w == 1 {
                b.get(i) as usize
            } else {
                b.read_uint(i * w, w) as usize
            };
            if s >= self.sizes[j] {
                return None;
            }
            idx = idx * self.sizes[j] + s;
        }
        Some(idx)
    }

    /// Probability group of position `i`, `NO_GROUP` if the tuple there is impossible.
    #[inline]
    fn group_at(&self, blocks: &[Bits], i: usize) -> u32 {
        self.tuple_at(blocks, i).map_or(NO_GROUP, |t| self.group[t])
    }

    #[inline]
    fn total(&self, counts: &[u32]) -> f64 {
        counts
            .iter()
            .zip(&self.group_ln)
            .map(|(&c, &l)| c as f64 * l)
            .sum()
    }

    /// The log-likelihood of binarized blocks of `n` symbols; `-inf` for impossible blocks.
    pub fn score(&self, blocks: &[Bits], n: usize, counts: &mut Vec<u32>) -> f64 {
        counts.clear();
        counts.resize(self.group_ln.len(), 0);
        for i in 0..n {
            match self.group_at(blocks, i) {
                NO_GROUP => return f64::NEG_INFINITY,
                g => counts[g as usize] += 1,
            }
        }
        self.total(counts)
    }

    /// Score change from flipping each bit of `blocks` alone, per source.
    pub(crate) fn flip_gains(&self, blocks: &[Bits], n: usize) -> Vec<Vec<f64>> {
        let ln_of = |t: Option<usize>| match t.map(|t| self.group[t]) {
            Some(g) if g != NO_GROUP => self.group_ln[g as usize],
            _ => f64::NEG_INFINITY,
        };
        let mut scratch = blocks.to_vec();
        (0..blocks.len())
            .map(|j| {
                let w = self.widths[j];
                (0..n * w)
                    .map(|p| {
                        let i = p / w;
                        let before = ln_of(self.tuple_at(&scratch, i));
                        scratch[j].flip(p);
                        let after = ln_of(self.tuple_at(&scratch, i));
                        scratch[j].flip(p);
                        after - before
                    })
                    .collect()
            })
            .collect()
    }
}

/// Lexicographic order of the concatenation `x_1 ‖ … ‖ x_k`.
pub(crate) fn lex_cmp(a: &[Bits], b: &[Bits]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Whether `cand` would be preferred to `incumbent` by the decoder.
#[inline]
pub(crate) fn beats(cand_score: f64, cand: &[Bits], inc_score: f64, incumbent: &[Bits]) -> bool {
    cand_score > inc_score
        || (cand_score == inc_score && lex_cmp(cand, incumbent) == Ordering::Less)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedBlock {
    pub block: SourceBlock,
    pub bits: Vec<Bits>,
    pub log_likelihood: f64,
    /// Candidate tuples examined.
    pub candidates: u64,
}

fn cosets_for(
    messages: &[EncodedMessage],
    codes: &[LinearHashCode],
) -> Result<Vec<Coset>, CodecError> {
    if messages.len() != codes.len() {
        return Err(CodecError::SourceCount {
            expected: codes.len(),
            got: messages.len(),
        });
    }
    messages
        .iter()
        .zip(codes)
        .map(|(m, c)| Coset::solve(c, &m.bits))
        .collect()
}

fn check_codes(
    spec: &JointSourceSpec,
    n: usize,
    codes: &[LinearHashCode],
) -> Result<(), CodecError> {
    if codes.len() != spec.k() {
        return Err(CodecError::SourceCount {
            expected: spec.k(),
            got: codes.len(),
        });
    }
    for (c, &size) in codes.iter().zip(spec.alphabet_sizes()) {
        let expected = n * symbol_width(size);
        if c.n_bits() != expected {
            return Err(CodecError::LengthMismatch {
                expected,
                got: c.n_bits(),
            });
        }
    }
    Ok(())
}

/// Returns the most likely source tuple consistent with every message.
///
/// Ties go to the lexicographically smallest concatenation of candidate bits.
pub fn decode_joint(
    messages: &[EncodedMessage],
    spec: &JointSourceSpec,
    n: usize,
    codes: &[LinearHashCode],
    budget: u64,
) -> Result<DecodedBlock, CodecError> {
    check_codes(spec, n, codes)?;
    let cosets = cosets_for(messages, codes)?;
    let space = ProductSpace::from_cosets(&cosets).ok_or(CodecError::NoCandidate)?;
    if space.size() > budget as u128 {
        return Err(CodecError::BudgetExceeded {
            required: space.size(),
            budget,
        });
    }
    let scorer = Scorer::new(spec);
    let mut counts = Vec::new();
    let mut best: Option<(f64, Vec<Bits>)> = None;
    let (visited, _) = space.visit::<()>(u128::MAX, |cand| {
        let s = scorer.score(cand, n, &mut counts);
        let better = match &best {
            None => true,
            Some((bs, bb)) => beats(s, cand, *bs, bb),
        };
        if better {
            best = Some((s, cand.to_vec()));
        }
        ControlFlow::Continue(())
    });
    let (log_likelihood, bits) = best.expect("nonempty product space");
    if log_likelihood == f64::NEG_INFINITY {
        return Err(CodecError::NoCandidate);
    }
    let symbols = bits
        .iter()
        .zip(scorer.widths())
        .map(|(b, &w)| unbinarize(b, w, n))
        .collect();
    let block = SourceBlock::new(symbols, spec.alphabet_sizes())
        .expect("finite score implies valid symbols");
    Ok(DecodedBlock {
        block,
        bits,
        log_likelihood,
        candidates: visited as u64,
    })
}

/// Outcome of deciding whether the ML decoder would return the true tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorCertificate {
    pub error: bool,
    pub examined: u64,
}

/// Decides the event `decode_joint(...) ≠ truth` without computing the argmax.
///
/// The decoder errs exactly when some other tuple in the product of cosets
/// beats the truth under (score, lexicographic) order. The product space is
/// re-based at the truth with directions pivoting on the bits whose
/// individual flips cost the least likelihood, and walked until a beater is
/// found or the space is exhausted. Fails with `BudgetExceeded` if neither
/// happens within `budget` candidates.
pub fn certify_ml_error(
    truth: &[Bits],
    messages: &[EncodedMessage],
    spec: &JointSourceSpec,
    n: usize,
    codes: &[LinearHashCode],
    budget: u64,
) -> Result<ErrorCertificate, CodecError> {
    check_codes(spec, n, codes)?;
    let cosets = cosets_for(messages, codes)?;
    let scorer = Scorer::new(spec);
    let gains = scorer.flip_gains(truth, n);
    let mut rebased = Vec::with_capacity(cosets.len());
    for (j, c) in cosets.iter().enumerate() {
        if c.is_empty() {
            return Err(CodecError::NoCandidate);
        }
        let mut order: Vec<usize> = (0..c.n_bits()).collect();
        order.sort_by(|&a, &b| {
            gains[j][b]
                .partial_cmp(&gains[j][a])
                .unwrap()
                .then(a.cmp(&b))
        });
        rebased.push(c.rebased(truth[j].clone(), &order));
    }
    // Interleave directions across sources by the gain of their pivot bit.
    let mut basis: Vec<(f64, usize, Bits)> = Vec::new();
    for (j, c) in rebased.iter().enumerate() {
        for v in c.basis() {
            let pivot = (0..v.len()).filter(|&p| v.get(p)).max_by(|&a, &b| {
                gains[j][a]
                    .partial_cmp(&gains[j][b])
                    .unwrap()
                    .then(b.cmp(&a))
            });
            basis.push((gains[j][pivot.expect("nonzero direction")], j, v.clone()));
        }
    }
    basis.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let space = ProductSpace {
        offsets: truth.to_vec(),
        basis: basis.into_iter().map(|(_, j, v)| (j, v)).collect(),
    };

    let mut counts = Vec::new();
    let truth_score = scorer.score(truth, n, &mut counts);
    let limit = (budget as u128).min(space.size());
    let (visited, error) = walk_for_beater(&scorer, &space, n, truth, truth_score, limit);
    match error {
        true => Ok(ErrorCertificate {
            error: true,
            examined: visited as u64,
        }),
        false if visited == space.size() => Ok(ErrorCertificate {
            error: false,
            examined: visited as u64,
        }),
        false => Err(CodecError::BudgetExceeded {
            required: space.size(),
            budget,
        }),
    }
}

/// Symbol bit `b` of every position of one source, 64 positions per word.
type Plane = Vec<u64>;

/// Splits a binarized block into `width` planes, plane 0 holding the most
/// significant symbol bit.
fn slice(block: &Bits, width: usize, n: usize) -> Vec<Plane> {
    let words = n.div_ceil(64);
    let mut planes = vec![vec![0u64; words]; width];
    for i in 0..n {
        for (b, plane) in planes.iter_mut().enumerate() {
            if block.get(i * width + b) {
                plane[i / 64] |= 1 << (i % 64);
            }
        }
    }
    planes
}

/// Per-group position counts computed with word-wide bit operations.
struct SlicedCounter<'a> {
    scorer: &'a Scorer,
    n: usize,
    tail: u64,
    /// `ind[j][s]`: positions where source `j` holds symbol `s`.
    ind: Vec<Vec<Plane>>,
    acc: Vec<Plane>,
}

impl<'a> SlicedCounter<'a> {
    fn new(scorer: &'a Scorer, n: usize) -> Self {
        let words = n.div_ceil(64);
        let tail = if n % 64 == 0 {
            u64::MAX
        } else {
            (1u64 << (n % 64)) - 1
        };
        SlicedCounter {
            scorer,
            n,
            tail,
            ind: scorer
                .sizes
                .iter()
                .map(|&a| vec![vec![0; words]; a])
                .collect(),
            acc: vec![vec![0; words]; scorer.sizes.len() + 1],
        }
    }

    /// Fills `counts` and returns the number of positions with an impossible tuple.
    fn count(&mut self, planes: &[Vec<Plane>], counts: &mut [u32]) -> usize {
        let words = self.acc[0].len();
        for (j, src) in planes.iter().enumerate() {
            let width = src.len();
            for (s, ind) in self.ind[j].iter_mut().enumerate() {
                for (w, slot) in ind.iter_mut().enumerate() {
                    let mut m = if w + 1 == words { self.tail } else { u64::MAX };
                    for (b, plane) in src.iter().enumerate() {
                        m &= if (s >> (width - 1 - b)) & 1 == 1 {
                            plane[w]
                        } else {
                            !plane[w]
                        };
                    }
                    *slot = m;
                }
            }
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for (w, a) in self.acc[0].iter_mut().enumerate() {
            *a = if w + 1 == words { self.tail } else { u64::MAX };
        }
        let possible = self.descend(0, 0, counts);
        self.n - possible
    }

    fn descend(&mut self, j: usize, idx: usize, counts: &mut [u32]) -> usize {
        if j == self.ind.len() {
            let g = self.scorer.group[idx];
            if g == NO_GROUP {
                return 0;
            }
            let c: u32 = self.acc[j].iter().map(|w| w.count_ones()).sum();
            counts[g as usize] += c;
            return c as usize;
        }
        let mut total = 0;
        for s in 0..self.ind[j].len() {
            let (lo, hi) = self.acc.split_at_mut(j + 1);
            let mut any = 0;
            for ((out, &a), &m) in hi[0].iter_mut().zip(&lo[j]).zip(&self.ind[j][s]) {
                *out = a & m;
                any |= *out;
            }
            if any != 0 {
                total += self.descend(j + 1, idx * self.scorer.sizes[j] + s, counts);
            }
        }
        total
    }
}

/// Gray-code walk from the truth in bit-sliced form: each step XORs one
/// sliced direction into the state and recounts the probability groups with
/// popcounts. The score is rebuilt from the counts exactly as `Scorer::score`
/// does, so equal counts give bit-identical scores.
fn walk_for_beater(
    scorer: &Scorer,
    space: &ProductSpace,
    n: usize,
    truth: &[Bits],
    truth_score: f64,
    limit: u128,
) -> (u128, bool) {
    let dirs: Vec<Vec<Plane>> = space
        .basis
        .iter()
        .map(|(j, v)| slice(v, scorer.widths[*j], n))
        .collect();
    let mut planes: Vec<Vec<Plane>> = space
        .offsets
        .iter()
        .enumerate()
        .map(|(j, b)| slice(b, scorer.widths[j], n))
        .collect();
    let mut state = space.offsets.clone();
    let mut counter = SlicedCounter::new(scorer, n);
    let mut counts = vec![0u32; scorer.group_ln.len()];
    let mut i: u128 = 0;
    while i < limit {
        if i > 0 {
            let b = i.trailing_zeros() as usize;
            let (j, v) = &space.basis[b];
            state[*j].xor_assign(v);
            for (plane, d) in planes[*j].iter_mut().zip(&dirs[b]) {
                for (w, dw) in plane.iter_mut().zip(d) {
                    *w ^= dw;
                }
            }
        }
        i += 1;
        let impossible = counter.count(&planes, &mut counts);
        let s = if impossible > 0 {
            f64::NEG_INFINITY
        } else {
            scorer.total(&counts)
        };
        if beats(s, &state, truth_score, truth) {
            return (i, true);
        }
    }
    (i, false)
}
