//! Joint distributions of the k correlated sources, their conditional
//! entropies, and i.i.d. block sampling.
//!
//! Entropies are in bits. Source indices are 0-based in code and 1-based in
//! every human-facing rendering (`{1,2}`).

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{child_rng, tag};

pub const MAX_SOURCES: usize = 8;
pub const MAX_TENSOR_LEN: usize = 1 << 24;
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("probability entry {index} is negative or not a number ({value})")]
    NegativeProbability { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pmf sums to {sum}, which is not within {NORMALIZATION_TOL} of 1")]
    NotNormalized { sum: f64 },
    #[error("source index {index} out of range for k = {k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("subset must be nonempty")]
    EmptySubset,
    #[error("source too large: {0}")]
    TooLarge(String),
    #[error("invalid block request: {0}")]
    InvalidRequest(String),
}

/// A set of source indices, stored as a bitmask (bit `j` is source `j`).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SourceSet(pub u32);

impl SourceSet {
    pub const EMPTY: SourceSet = SourceSet(0);

    pub fn full(k: usize) -> Self {
        SourceSet(((1u64 << k) - 1) as u32)
    }

    pub fn singleton(j: usize) -> Self {
        SourceSet(1 << j)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> Self {
        SourceSet(it.into_iter().fold(0, |m, j| m | (1 << j)))
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 >> j & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn with(self, j: usize) -> Self {
        SourceSet(self.0 | 1 << j)
    }

    pub fn union(self, o: Self) -> Self {
        SourceSet(self.0 | o.0)
    }

    pub fn intersection(self, o: Self) -> Self {
        SourceSet(self.0 & o.0)
    }

    /// Complement within `{0, …, k-1}`.
    pub fn complement(self, k: usize) -> Self {
        SourceSet(!self.0 & Self::full(k).0)
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&j| self.contains(j))
    }

    /// All nonempty subsets of `{0, …, k-1}` in increasing bitmask order.
    pub fn nonempty_subsets(k: usize) -> impl Iterator<Item = SourceSet> {
        (1..(1u32 << k)).map(SourceSet)
    }

    /// All nonempty subsets of `self`.
    pub fn nonempty_subsets_of(self) -> impl Iterator<Item = SourceSet> {
        let full = self.0;
        let mut sub = full;
        let mut done = full == 0;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let cur = sub;
            sub = (sub.wrapping_sub(1)) & full;
            if cur == 0 {
                done = true;
                return None;
            }
            Some(SourceSet(cur))
        })
    }
}

impl fmt::Display for SourceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.indices().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        f.write_str("}")
    }
}

/// Joint pmf of `(α_1, …, α_k)` as a dense row-major tensor, last index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJointSource")]
pub struct JointSourceSpec {
    k: usize,
    alphabet_sizes: Vec<usize>,
    pmf: Vec<f64>,
}

#[derive(Deserialize)]
struct RawJointSource {
    k: usize,
    alphabet_sizes: Vec<usize>,
    pmf: Vec<f64>,
}

impl TryFrom<RawJointSource> for JointSourceSpec {
    type Error = SourceError;
    fn try_from(raw: RawJointSource) -> Result<Self, Self::Error> {
        build_joint(raw.k, &raw.alphabet_sizes, &raw.pmf)
    }
}

/// Validates and normalizes a joint pmf.
pub fn build_joint(
    k: usize,
    alphabet_sizes: &[usize],
    pmf_values: &[f64],
) -> Result<JointSourceSpec, SourceError> {
    if k == 0 || k != alphabet_sizes.len() {
        return Err(SourceError::ShapeMismatch(format!(
            "k = {k} but {} alphabet sizes given",
            alphabet_sizes.len()
        )));
    }
    if k > MAX_SOURCES {
        return Err(SourceError::TooLarge(format!(
            "k = {k} exceeds {MAX_SOURCES}"
        )));
    }
    if let Some(j) = alphabet_sizes.iter().position(|&s| s == 0) {
        return Err(SourceError::ShapeMismatch(format!(
            "alphabet of source {} is empty",
            j + 1
        )));
    }
    let mut len: usize = 1;
    for &s in alphabet_sizes {
        len = len
            .checked_mul(s)
            .filter(|&l| l <= MAX_TENSOR_LEN)
            .ok_or_else(|| {
                SourceError::TooLarge(format!("tensor exceeds {MAX_TENSOR_LEN} entries"))
            })?;
    }
    if pmf_values.len() != len {
        return Err(SourceError::ShapeMismatch(format!(
            "pmf has {} entries, alphabet sizes require {len}",
            pmf_values.len()
        )));
    }
    if let Some((index, &value)) = pmf_values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(SourceError::NegativeProbability { index, value });
    }
    let sum: f64 = pmf_values.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(SourceError::NotNormalized { sum });
    }
    let pmf = pmf_values.iter().map(|p| p / sum).collect();
    Ok(JointSourceSpec {
        k,
        alphabet_sizes: alphabet_sizes.to_vec(),
        pmf,
    })
}

/// Bits used to write one symbol of an alphabet of size `size`.
pub fn symbol_width(size: usize) -> usize {
    if size <= 1 {
        0
    } else {
        (usize::BITS - (size - 1).leading_zeros()) as usize
    }
}

/// Shannon entropy in bits, with `0 · log 0 = 0`.
pub fn entropy_bits<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

impl JointSourceSpec {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alphabet_sizes(&self) -> &[usize] {
        &self.alphabet_sizes
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Row-major strides, last index fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.k];
        for j in (0..self.k.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * self.alphabet_sizes[j + 1];
        }
        strides
    }

    pub fn tuple_symbols(&self, mut index: usize) -> Vec<u32> {
        let mut out = vec![0; self.k];
        for j in (0..self.k).rev() {
            out[j] = (index % self.alphabet_sizes[j]) as u32;
            index /= self.alphabet_sizes[j];
        }
        out
    }

    pub fn tuple_index(&self, symbols: &[u32]) -> usize {
        symbols
            .iter()
            .zip(&self.alphabet_sizes)
            .fold(0, |acc, (&s, &size)| acc * size + s as usize)
    }

    fn check_set(&self, w: SourceSet) -> Result<(), SourceError> {
        match w.indices().find(|&j| j >= self.k) {
            Some(index) => Err(SourceError::IndexOutOfRange {
                index: index + 1,
                k: self.k,
            }),
            None => Ok(()),
        }
    }

    /// Marginal pmf of the coordinates in `w` (in index order); the empty set gives `[1.0]`.
    fn marginal_pmf(&self, w: SourceSet) -> (Vec<usize>, Vec<f64>) {
        let kept: Vec<usize> = w.indices().collect();
        let sizes: Vec<usize> = kept.iter().map(|&j| self.alphabet_sizes[j]).collect();
        let mut out = vec![0.0; sizes.iter().product()];
        let strides = self.strides();
        for (idx, &p) in self.pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut m = 0;
            for &j in &kept {
                m = m * self.alphabet_sizes[j] + (idx / strides[j]) % self.alphabet_sizes[j];
            }
            out[m] += p;
        }
        (sizes, out)
    }

    pub fn marginal_entropy(&self, w: SourceSet) -> Result<f64, SourceError> {
        self.check_set(w)?;
        if w.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_bits(self.marginal_pmf(w).1))
    }

    /// `H(α_W | α_¬W)` in bits.
    pub fn conditional_entropy(&self, w: SourceSet) -> Result<f64, SourceError> {
        self.check_set(w)?;
        if w.is_empty() {
            return Ok(0.0);
        }
        let joint = self.marginal_entropy(SourceSet::full(self.k))?;
        let rest = self.marginal_entropy(w.complement(self.k))?;
        Ok((joint - rest).max(0.0))
    }

    pub fn marginalize(&self, w: SourceSet) -> Result<JointSourceSpec, SourceError> {
        self.check_set(w)?;
        if w.is_empty() {
            return Err(SourceError::EmptySubset);
        }
        if w == SourceSet::full(self.k) {
            return Ok(self.clone());
        }
        let (sizes, pmf) = self.marginal_pmf(w);
        build_joint(sizes.len(), &sizes, &pmf)
    }

    /// Entropies of every marginal, indexed by subset bitmask.
    pub fn entropy_table(&self) -> EntropyTable {
        EntropyTable::new(self)
    }

    pub fn sample_blocks(
        &self,
        n: usize,
        seed: u64,
        count: usize,
    ) -> Result<Vec<SourceBlock>, SourceError> {
        if n == 0 || count == 0 {
            return Err(SourceError::InvalidRequest(format!(
                "n = {n}, count = {count}; both must be positive"
            )));
        }
        let dist = WeightedIndex::new(&self.pmf).expect("validated pmf has positive mass");
        Ok((0..count)
            .map(|c| {
                let mut rng = child_rng(seed, tag::SAMPLE, c as u64);
                let mut symbols = vec![Vec::with_capacity(n); self.k];
                for _ in 0..n {
                    let tuple = self.tuple_symbols(dist.sample(&mut rng));
                    for (seq, s) in symbols.iter_mut().zip(tuple) {
                        seq.push(s);
                    }
                }
                SourceBlock { n, symbols }
            })
            .collect())
    }
}

/// Marginal entropies `H(α_S)` for every subset `S`, computed by summing out
/// one coordinate at a time from the smallest already-known superset.
#[derive(Debug, Clone)]
pub struct EntropyTable {
    k: usize,
    h: Vec<f64>,
}

impl EntropyTable {
    fn new(spec: &JointSourceSpec) -> Self {
        let k = spec.k;
        let full = (1usize << k) - 1;
        let mut marg: Vec<Option<Vec<f64>>> = vec![None; 1 << k];
        let mut h = vec![0.0; 1 << k];
        marg[full] = Some(spec.pmf.clone());
        let mut order: Vec<usize> = (0..=full).collect();
        order.sort_by_key(|&s| std::cmp::Reverse(s.count_ones()));
        for &s in &order {
            if s != full {
                let j = (!s & full).trailing_zeros() as usize;
                let parent = s | 1 << j;
                let pm = marg[parent]
                    .as_ref()
                    .expect("supersets are processed first");
                marg[s] = Some(sum_out(pm, &spec.alphabet_sizes, parent, j));
            }
            h[s] = if s == 0 {
                0.0
            } else {
                entropy_bits(marg[s].as_ref().unwrap().iter().copied())
            };
        }
        EntropyTable { k, h }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn joint(&self, s: SourceSet) -> f64 {
        self.h[s.0 as usize]
    }

    /// `H(α_W | α_¬W)`, clamped at zero.
    pub fn conditional(&self, w: SourceSet) -> f64 {
        if w.is_empty() {
            return 0.0;
        }
        let full = SourceSet::full(self.k);
        (self.joint(full) - self.joint(w.complement(self.k))).max(0.0)
    }
}

/// Removes coordinate `j` from a tensor over the coordinates in `set`.
fn sum_out(pmf: &[f64], all_sizes: &[usize], set: usize, j: usize) -> Vec<f64> {
    let kept: Vec<usize> = (0..all_sizes.len())
        .filter(|&i| set >> i & 1 == 1)
        .collect();
    let pos = kept.iter().position(|&i| i == j).unwrap();
    let inner: usize = kept[pos + 1..].iter().map(|&i| all_sizes[i]).product();
    let size = all_sizes[j];
    let outer = pmf.len() / (inner * size);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for s in 0..size {
            let base = (o * size + s) * inner;
            for i in 0..inner {
                out[o * inner + i] += pmf[base + i];
            }
        }
    }
    out
}

/// One block of `n` i.i.d. source tuples, stored per source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBlock {
    n: usize,
    symbols: Vec<Vec<u32>>,
}

impl SourceBlock {
    pub fn new(symbols: Vec<Vec<u32>>, alphabet_sizes: &[usize]) -> Result<Self, SourceError> {
        if symbols.len() != alphabet_sizes.len() {
            return Err(SourceError::ShapeMismatch(format!(
                "{} sequences for {} sources",
                symbols.len(),
                alphabet_sizes.len()
            )));
        }
        let n = symbols.first().map_or(0, Vec::len);
        for (j, (seq, &size)) in symbols.iter().zip(alphabet_sizes).enumerate() {
            if seq.len() != n {
                return Err(SourceError::ShapeMismatch(format!(
                    "source {} has {} symbols, expected {n}",
                    j + 1,
                    seq.len()
                )));
            }
            if seq.iter().any(|&s| s as usize >= size) {
                return Err(SourceError::ShapeMismatch(format!(
                    "source {} has a symbol outside its alphabet",
                    j + 1
                )));
            }
        }
        Ok(SourceBlock { n, symbols })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn source(&self, j: usize) -> &[u32] {
        &self.symbols[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dsbs(p: f64) -> JointSourceSpec {
        build_joint(
            2,
            &[2, 2],
            &[(1.0 - p) / 2.0, p / 2.0, p / 2.0, (1.0 - p) / 2.0],
        )
        .unwrap()
    }

    #[test]
    fn build_accepts_uniform_and_dsbs() {
        let u = build_joint(2, &[2, 2], &[0.25; 4]).unwrap();
        assert_eq!(u.pmf(), &[0.25; 4]);
        let d = build_joint(2, &[2, 2], &[0.375, 0.125, 0.125, 0.375]).unwrap();
        assert_eq!(d.pmf().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(
            build_joint(2, &[2, 2], &[0.5, 0.6, -0.1, 0.0]),
            Err(SourceError::NegativeProbability { index: 2, .. })
        ));
        assert!(matches!(
            build_joint(2, &[2, 2], &[0.5, 0.5]),
            Err(SourceError::ShapeMismatch(_))
        ));
        assert!(matches!(
            build_joint(2, &[2, 2], &[0.3; 4]),
            Err(SourceError::NotNormalized { .. })
        ));
        assert!(matches!(
            build_joint(2, &[2, 2], &[f64::NAN, 0.5, 0.25, 0.25]),
            Err(SourceError::NegativeProbability { .. })
        ));
        assert!(matches!(
            build_joint(9, &[1; 9], &[1.0]),
            Err(SourceError::TooLarge(_))
        ));
    }

    #[test]
    fn build_renormalizes_within_tolerance() {
        let eps = 4e-10;
        let s = build_joint(1, &[2], &[0.5 + eps, 0.5]).unwrap();
        assert!((s.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dsbs_conditional_entropies() {
        let d = dsbs(0.25);
        let h1 = d.conditional_entropy(SourceSet::singleton(0)).unwrap();
        let h12 = d.conditional_entropy(SourceSet::full(2)).unwrap();
        assert!((h1 - 0.811278).abs() < 1e-6);
        assert!((h12 - 1.811278).abs() < 1e-6);
        assert_eq!(d.conditional_entropy(SourceSet::EMPTY).unwrap(), 0.0);
    }

    #[test]
    fn independent_fair_bits() {
        let u = build_joint(2, &[2, 2], &[0.25; 4]).unwrap();
        assert!((u.conditional_entropy(SourceSet::singleton(0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_index() {
        let d = dsbs(0.25);
        assert_eq!(
            d.conditional_entropy(SourceSet::singleton(2)),
            Err(SourceError::IndexOutOfRange { index: 3, k: 2 })
        );
        assert_eq!(
            d.marginalize(SourceSet::singleton(2)),
            Err(SourceError::IndexOutOfRange { index: 3, k: 2 })
        );
        assert_eq!(
            d.marginalize(SourceSet::EMPTY),
            Err(SourceError::EmptySubset)
        );
    }

    #[test]
    fn marginalize_dsbs() {
        let d = dsbs(0.25);
        let m = d.marginalize(SourceSet::singleton(0)).unwrap();
        assert_eq!(m.alphabet_sizes(), &[2]);
        assert_eq!(m.pmf(), &[0.5, 0.5]);
        assert_eq!(d.marginalize(SourceSet::full(2)).unwrap(), d);
    }

    #[test]
    fn marginalize_three_way_keeps_order() {
        // p(x, y, z) with sizes 2, 3, 2; marginal over {1, 3}.
        let pmf: Vec<f64> = (1..=12).map(|v| v as f64 / 78.0).collect();
        let s = build_joint(3, &[2, 3, 2], &pmf).unwrap();
        let m = s.marginalize(SourceSet::from_indices([0, 2])).unwrap();
        let mut expect = [0.0; 4];
        for x in 0..2 {
            for y in 0..3 {
                for z in 0..2 {
                    expect[x * 2 + z] += pmf[x * 6 + y * 2 + z];
                }
            }
        }
        for (a, b) in m.pmf().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn entropy_table_matches_direct_marginals() {
        let pmf: Vec<f64> = (1..=24).map(|v| v as f64 / 300.0).collect();
        let s = build_joint(3, &[2, 3, 4], &pmf).unwrap();
        let table = s.entropy_table();
        for m in 0..8 {
            let set = SourceSet(m);
            assert!((table.joint(set) - s.marginal_entropy(set).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_source_samples_its_support() {
        let s = build_joint(2, &[2, 3], &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        for b in s.sample_blocks(17, 3, 4).unwrap() {
            assert!(b.source(0).iter().all(|&x| x == 1));
            assert!(b.source(1).iter().all(|&x| x == 1));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = dsbs(0.25);
        assert_eq!(
            d.sample_blocks(50, 9, 3).unwrap(),
            d.sample_blocks(50, 9, 3).unwrap()
        );
        assert_ne!(
            d.sample_blocks(50, 9, 1).unwrap(),
            d.sample_blocks(50, 10, 1).unwrap()
        );
        assert!(d.sample_blocks(0, 9, 1).is_err());
    }

    #[test]
    fn dsbs_empirical_frequencies() {
        let d = dsbs(0.25);
        let block = &d.sample_blocks(10_000, 2024, 1).unwrap()[0];
        let mut counts = [0usize; 4];
        for i in 0..10_000 {
            counts[(block.source(0)[i] * 2 + block.source(1)[i]) as usize] += 1;
        }
        for (c, p) in counts.iter().zip(d.pmf()) {
            assert!((*c as f64 / 10_000.0 - p).abs() <= 0.02, "{counts:?}");
        }
        // Recorded from the first run; pins the sampling stream.
        assert_eq!(counts, GOLDEN_DSBS_COUNTS);
    }

    const GOLDEN_DSBS_COUNTS: [usize; 4] = [3718, 1206, 1281, 3795];

    #[test]
    fn subset_helpers() {
        let s = SourceSet::from_indices([0, 2]);
        assert_eq!(s.to_string(), "{1,3}");
        assert_eq!(s.complement(3), SourceSet::singleton(1));
        let subs: Vec<_> = s.nonempty_subsets_of().collect();
        assert_eq!(subs.len(), 3);
        assert_eq!(symbol_width(1), 0);
        assert_eq!(symbol_width(2), 1);
        assert_eq!(symbol_width(3), 2);
        assert_eq!(symbol_width(4), 2);
        assert_eq!(symbol_width(5), 3);
    }
}
