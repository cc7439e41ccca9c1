use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::bits::Bits;

pub const MAX_TUPLES: usize = 1 << 20;

/// The on-disk form: `{"k":2,"has_b":false,"tuples":[["0101","0011"],...]}`,
/// with `b` last when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFile {
    pub k: usize,
    #[serde(default)]
    pub has_b: bool,
    pub tuples: Vec<Vec<Bits>>,
}

/// A finite set of tuples `(a_1, …, a_k[, b])` of bit strings.
///
/// Each coordinate holds strings of one fixed length. Values are interned per
/// coordinate and every coordinate keeps a posting list from value to tuples.
#[derive(Debug, Clone)]
pub struct CandidateRelation {
    k: usize,
    has_b: bool,
    widths: Vec<usize>,
    values: Vec<Vec<Bits>>,
    ids: Vec<HashMap<Bits, u32>>,
    tuples: Vec<u32>,
    postings: Vec<Vec<Vec<u32>>>,
}

impl CandidateRelation {
    /// Builds the relation, dropping duplicate tuples.
    pub fn new(k: usize, has_b: bool, tuples: Vec<Vec<Bits>>) -> Result<Self, LabError> {
        let arity = k + has_b as usize;
        if tuples.is_empty() || arity == 0 {
            return Err(LabError::EmptyRelation);
        }
        if tuples.len() > MAX_TUPLES {
            return Err(LabError::TooLarge(tuples.len()));
        }
        let widths: Vec<usize> = tuples[0].iter().map(Bits::len).collect();
        let mut values = vec![Vec::new(); arity];
        let mut ids: Vec<HashMap<Bits, u32>> = vec![HashMap::new(); arity];
        let mut flat = Vec::with_capacity(tuples.len() * arity);
        let mut seen = HashSet::with_capacity(tuples.len());
        for (t, tuple) in tuples.into_iter().enumerate() {
            if tuple.len() != arity {
                return Err(LabError::Arity {
                    tuple: t,
                    expected: arity,
                    got: tuple.len(),
                });
            }
            let mut row = Vec::with_capacity(arity);
            for (c, v) in tuple.into_iter().enumerate() {
                if v.len() != widths[c] {
                    return Err(LabError::WidthMismatch {
                        coordinate: c,
                        expected: widths[c],
                        got: v.len(),
                    });
                }
                let next = values[c].len() as u32;
                let id = *ids[c].entry(v.clone()).or_insert_with(|| {
                    values[c].push(v);
                    next
                });
                row.push(id);
            }
            if seen.insert(row.clone()) {
                flat.extend(row);
            }
        }
        let mut postings: Vec<Vec<Vec<u32>>> =
            values.iter().map(|v| vec![Vec::new(); v.len()]).collect();
        for (t, row) in flat.chunks(arity).enumerate() {
            for (c, &id) in row.iter().enumerate() {
                postings[c][id as usize].push(t as u32);
            }
        }
        Ok(CandidateRelation {
            k,
            has_b,
            widths,
            values,
            ids,
            tuples: flat,
            postings,
        })
    }

    pub fn from_file(file: RelationFile) -> Result<Self, LabError> {
        Self::new(file.k, file.has_b, file.tuples)
    }

    pub fn to_file(&self) -> RelationFile {
        RelationFile {
            k: self.k,
            has_b: self.has_b,
            tuples: (0..self.len()).map(|t| self.tuple_bits(t)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_b(&self) -> bool {
        self.has_b
    }

    /// Coordinates per tuple: `k`, plus one for `b`.
    pub fn arity(&self) -> usize {
        self.k + self.has_b as usize
    }

    /// Index of the side-information coordinate.
    pub fn b_index(&self) -> Option<usize> {
        self.has_b.then_some(self.k)
    }

    pub fn len(&self) -> usize {
        self.tuples.len() / self.arity()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn width(&self, c: usize) -> usize {
        self.widths[c]
    }

    /// `n = |a_1| + … + |a_k| + |b|`.
    pub fn total_width(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn distinct_values(&self, c: usize) -> usize {
        self.values[c].len()
    }

    pub fn value(&self, c: usize, id: u32) -> &Bits {
        &self.values[c][id as usize]
    }

    pub fn id_of(&self, c: usize, v: &Bits) -> Option<u32> {
        self.ids.get(c)?.get(v).copied()
    }

    pub fn tuple(&self, t: usize) -> &[u32] {
        let a = self.arity();
        &self.tuples[t * a..(t + 1) * a]
    }

    pub fn tuple_bits(&self, t: usize) -> Vec<Bits> {
        self.tuple(t)
            .iter()
            .enumerate()
            .map(|(c, &id)| self.value(c, id).clone())
            .collect()
    }

    /// Tuples whose coordinate `c` has value id `id`.
    pub fn postings(&self, c: usize, id: u32) -> &[u32] {
        &self.postings[c][id as usize]
    }

    /// Index of `point` in the relation, if present.
    pub fn position(&self, point: &[Bits]) -> Option<usize> {
        if point.len() != self.arity() {
            return None;
        }
        let ids: Vec<u32> = point
            .iter()
            .enumerate()
            .map(|(c, v)| self.id_of(c, v))
            .collect::<Option<_>>()?;
        let (c, id) = ids
            .iter()
            .enumerate()
            .min_by_key(|&(c, &id)| self.postings(c, id).len())?;
        self.postings(c, *id)
            .iter()
            .map(|&t| t as usize)
            .find(|&t| self.tuple(t) == ids.as_slice())
    }

    pub fn contains(&self, point: &[Bits]) -> bool {
        self.position(point).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn interning_and_lookup() {
        let r = CandidateRelation::new(
            2,
            false,
            vec![
                vec![b("00"), b("01")],
                vec![b("00"), b("11")],
                vec![b("10"), b("01")],
                vec![b("00"), b("01")],
            ],
        )
        .unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.distinct_values(0), 2);
        assert_eq!(r.postings(1, r.id_of(1, &b("01")).unwrap()).len(), 2);
        assert!(r.contains(&[b("10"), b("01")]));
        assert!(!r.contains(&[b("10"), b("11")]));
        assert_eq!(r.total_width(), 4);
    }

    #[test]
    fn malformed_relations_are_rejected() {
        assert_eq!(
            CandidateRelation::new(2, false, vec![]).unwrap_err(),
            LabError::EmptyRelation
        );
        assert!(matches!(
            CandidateRelation::new(2, false, vec![vec![b("0")]]),
            Err(LabError::Arity { .. })
        ));
        assert!(matches!(
            CandidateRelation::new(1, false, vec![vec![b("0")], vec![b("01")]]),
            Err(LabError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"k":1,"has_b":true,"tuples":[["01","1"],["10","0"]]}"#;
        let file: RelationFile = serde_json::from_str(text).unwrap();
        let r = CandidateRelation::from_file(file.clone()).unwrap();
        assert_eq!(r.b_index(), Some(1));
        assert_eq!(r.to_file(), file);
        assert_eq!(serde_json::to_string(&file).unwrap(), text);
    }
}
