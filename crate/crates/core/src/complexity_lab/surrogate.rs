use std::collections::{HashMap, HashSet};

use super::fingerprint::{Extractor, Prepared};
use super::relation::CandidateRelation;
use super::LabError;
use crate::bits::Bits;
use crate::source_model::SourceSet;

/// Something a query can project onto: a coordinate, or a fingerprint of one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Coord(usize),
    Fp(usize, Extractor),
}

/// Count the distinct values of `target` over tuples with the `fixed`
/// coordinates and whose fingerprints equal the given `matches`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Query {
    pub target: Vec<Term>,
    pub fixed: Vec<(usize, Bits)>,
    pub matches: Vec<(usize, Extractor, Bits)>,
}

impl Query {
    pub fn of(target: Vec<Term>) -> Self {
        Query {
            target,
            ..Default::default()
        }
    }

    pub fn coords<I: IntoIterator<Item = usize>>(cs: I) -> Self {
        Self::of(cs.into_iter().map(Term::Coord).collect())
    }

    pub fn given(mut self, c: usize, v: Bits) -> Self {
        self.fixed.push((c, v));
        self
    }

    pub fn given_fp(mut self, c: usize, e: Extractor, v: Bits) -> Self {
        self.matches.push((c, e, v));
        self
    }

    pub fn is_unconditional(&self) -> bool {
        self.fixed.is_empty() && self.matches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiberStats {
    /// Distinct outer values.
    pub groups: usize,
    /// Fewest and most distinct inner values under one outer value.
    pub min: usize,
    pub max: usize,
    /// Distinct (outer, inner) pairs.
    pub total: usize,
}

/// Any estimate of `K(a_W | everything outside W)` at a point.
pub trait ComplexityEstimator {
    fn conditional(&self, point: &[Bits], w: SourceSet) -> Result<f64, LabError>;
}

/// `K̂(x | c) = log2 |{x : (x, c) in the relation}|`.
#[derive(Debug, Clone)]
pub struct ComplexitySurrogate {
    relation: CandidateRelation,
}

/// Per-value-id cache of an extractor's output on one coordinate.
struct FpCache {
    coord: usize,
    prepared: Prepared,
    out: Vec<Option<Bits>>,
}

impl FpCache {
    fn new(rel: &CandidateRelation, coord: usize, e: &Extractor) -> Result<Self, LabError> {
        Ok(FpCache {
            coord,
            prepared: e.prepare(rel.width(coord))?,
            out: vec![None; rel.distinct_values(coord)],
        })
    }

    fn get(&mut self, rel: &CandidateRelation, id: u32) -> &Bits {
        let slot = &mut self.out[id as usize];
        if slot.is_none() {
            *slot = Some(self.prepared.apply(rel.value(self.coord, id)));
        }
        slot.as_ref().unwrap()
    }
}

impl ComplexitySurrogate {
    pub fn new(relation: CandidateRelation) -> Self {
        ComplexitySurrogate { relation }
    }

    pub fn relation(&self) -> &CandidateRelation {
        &self.relation
    }

    fn check_coord(&self, c: usize) -> Result<(), LabError> {
        if c < self.relation.arity() {
            Ok(())
        } else {
            Err(LabError::NoSuchCoordinate(c))
        }
    }

    /// Tuples satisfying the conditioning of `q`.
    pub fn matching(&self, q: &Query) -> Result<Vec<u32>, LabError> {
        let rel = &self.relation;
        let mut fixed = Vec::with_capacity(q.fixed.len());
        for (c, v) in &q.fixed {
            self.check_coord(*c)?;
            fixed.push((*c, rel.id_of(*c, v).ok_or(LabError::UnknownConditioning)?));
        }
        let mut fps = Vec::with_capacity(q.matches.len());
        for (c, e, v) in &q.matches {
            self.check_coord(*c)?;
            if v.len() != e.output_len() {
                return Err(LabError::LengthError {
                    r: v.len(),
                    len: e.output_len(),
                });
            }
            fps.push((FpCache::new(rel, *c, e)?, v));
        }
        let start: Box<dyn Iterator<Item = u32>> = match fixed
            .iter()
            .min_by_key(|&&(c, id)| rel.postings(c, id).len())
        {
            Some(&(c, id)) => Box::new(rel.postings(c, id).iter().copied()),
            None => Box::new(0..rel.len() as u32),
        };
        let mut out = Vec::new();
        'tuples: for t in start {
            let row = rel.tuple(t as usize);
            if fixed.iter().any(|&(c, id)| row[c] != id) {
                continue;
            }
            for (cache, v) in fps.iter_mut() {
                if cache.get(rel, row[cache.coord]) != *v {
                    continue 'tuples;
                }
            }
            out.push(t);
        }
        if out.is_empty() {
            return Err(LabError::UnknownConditioning);
        }
        Ok(out)
    }

    fn keyer(&self, terms: &[Term]) -> Result<impl FnMut(&[u32], &mut Vec<u64>) + '_, LabError> {
        let rel = &self.relation;
        let mut caches: Vec<Option<FpCache>> = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Term::Coord(c) => {
                    self.check_coord(*c)?;
                    caches.push(None);
                }
                Term::Fp(c, e) => {
                    self.check_coord(*c)?;
                    caches.push(Some(FpCache::new(rel, *c, e)?));
                }
            }
        }
        let coords: Vec<usize> = terms
            .iter()
            .map(|t| match t {
                Term::Coord(c) | Term::Fp(c, _) => *c,
            })
            .collect();
        Ok(move |row: &[u32], key: &mut Vec<u64>| {
            key.clear();
            for (cache, &c) in caches.iter_mut().zip(&coords) {
                match cache {
                    None => key.push(row[c] as u64),
                    Some(cache) => key.extend_from_slice(cache.get(rel, row[c]).words()),
                }
            }
        })
    }

    fn distinct_set(&self, q: &Query) -> Result<HashSet<Vec<u64>>, LabError> {
        let tuples = self.matching(q)?;
        let mut key_of = self.keyer(&q.target)?;
        let mut seen = HashSet::new();
        let mut key = Vec::new();
        for t in tuples {
            key_of(self.relation.tuple(t as usize), &mut key);
            if !seen.contains(&key) {
                seen.insert(key.clone());
            }
        }
        Ok(seen)
    }

    /// Distinct projections of the matching tuples onto the target terms,
    /// in sorted order. A coordinate term contributes its value id.
    pub fn distinct(&self, q: &Query) -> Result<Vec<Vec<u64>>, LabError> {
        let mut out: Vec<Vec<u64>> = self.distinct_set(q)?.into_iter().collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn count(&self, q: &Query) -> Result<usize, LabError> {
        Ok(self.distinct_set(q)?.len())
    }

    pub fn k_hat(&self, q: &Query) -> Result<f64, LabError> {
        Ok((self.count(q)? as f64).log2())
    }

    /// `K̂(a_W | a_¬W[, b])` at `point`: every coordinate outside `W`,
    /// including `b` when the relation has one, is fixed.
    pub fn conditional(&self, point: &[Bits], w: SourceSet) -> Result<f64, LabError> {
        let rest = (0..self.relation.arity()).filter(|&c| !w.contains(c));
        self.conditional_given(point, w, rest)
    }

    /// `K̂(a_W | the coordinates in given)` at `point`.
    pub fn conditional_given<I: IntoIterator<Item = usize>>(
        &self,
        point: &[Bits],
        w: SourceSet,
        given: I,
    ) -> Result<f64, LabError> {
        let mut q = Query::coords(w.indices());
        for c in given {
            self.check_coord(c)?;
            q = q.given(
                c,
                point.get(c).ok_or(LabError::NoSuchCoordinate(c))?.clone(),
            );
        }
        self.k_hat(&q)
    }

    /// `K̂(a_W | conditioning)` for an explicit assignment of coordinates.
    pub fn surrogate_complexity(
        &self,
        w: SourceSet,
        conditioning: &[(usize, Bits)],
    ) -> Result<f64, LabError> {
        let mut q = Query::coords(w.indices());
        q.fixed = conditioning.to_vec();
        self.k_hat(&q)
    }

    /// For the tuples matching `cond`, the number of distinct `inner` values
    /// under each distinct `outer` value, in no particular order.
    pub fn group_sizes(
        &self,
        cond: &Query,
        outer: &[Term],
        inner: &[Term],
    ) -> Result<Vec<usize>, LabError> {
        let tuples = self.matching(cond)?;
        let mut outer_key = self.keyer(outer)?;
        let mut inner_key = self.keyer(inner)?;
        let mut groups: HashMap<Vec<u64>, HashSet<Vec<u64>>> = HashMap::new();
        let (mut ko, mut ki) = (Vec::new(), Vec::new());
        for t in tuples {
            let row = self.relation.tuple(t as usize);
            outer_key(row, &mut ko);
            inner_key(row, &mut ki);
            groups.entry(ko.clone()).or_default().insert(ki.clone());
        }
        Ok(groups.values().map(HashSet::len).collect())
    }

    pub fn fibers(
        &self,
        cond: &Query,
        outer: &[Term],
        inner: &[Term],
    ) -> Result<FiberStats, LabError> {
        let sizes = self.group_sizes(cond, outer, inner)?;
        Ok(FiberStats {
            groups: sizes.len(),
            min: *sizes.iter().min().unwrap(),
            max: *sizes.iter().max().unwrap(),
            total: sizes.iter().sum(),
        })
    }
}

impl ComplexityEstimator for ComplexitySurrogate {
    fn conditional(&self, point: &[Bits], w: SourceSet) -> Result<f64, LabError> {
        ComplexitySurrogate::conditional(self, point, w)
    }
}
