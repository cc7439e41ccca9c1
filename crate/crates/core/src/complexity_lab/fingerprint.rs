use serde::{Deserialize, Serialize};

use super::surrogate::{ComplexitySurrogate, Query, Term};
use super::{gamma_bits, LabError};
use crate::binning_codec::LinearHashCode;
use crate::bits::Bits;

/// Where a fork-code fingerprint seed came from: the shared master seed,
/// the induction level and the retry counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Derivation {
    pub level: usize,
    pub retry: u32,
}

/// A linear fingerprint `x ↦ M·x` of an `n_bits`-bit string down to `r` bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FingerprintSpec {
    pub r: usize,
    pub n_bits: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<Derivation>,
}

impl FingerprintSpec {
    pub fn new(r: usize, n_bits: usize, seed: u64) -> Result<Self, LabError> {
        if r > n_bits {
            return Err(LabError::LengthError { r, len: n_bits });
        }
        Ok(FingerprintSpec {
            r,
            n_bits,
            seed,
            derivation: None,
        })
    }

    pub fn code(&self) -> LinearHashCode {
        LinearHashCode::new(self.n_bits, self.r, self.seed)
            .expect("r <= n_bits checked at construction")
    }

    /// Bits needed to describe the procedure to someone who holds the input.
    ///
    /// A standalone fingerprint spells out its 64-bit seed, `r` and the input
    /// length. A derived one names only `r`, the level and the retry; the
    /// master seed is shared once by all parties and is counted separately.
    pub fn description_bits(&self) -> u64 {
        let r = gamma_bits(self.r as u64 + 1);
        match self.derivation {
            None => 64 + r + gamma_bits(self.n_bits as u64 + 1),
            Some(d) => r + gamma_bits(d.level as u64) + gamma_bits(d.retry as u64 + 1),
        }
    }
}

/// A map from a coordinate's strings to short codewords.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extractor {
    Hash(FingerprintSpec),
    /// The first `r` bits.
    Prefix {
        r: usize,
    },
}

/// An extractor ready to apply to strings of a fixed width.
pub(crate) enum Prepared {
    Code(LinearHashCode),
    Prefix(usize),
}

impl Prepared {
    pub fn apply(&self, x: &Bits) -> Bits {
        match self {
            Prepared::Code(c) => c.hash(x).expect("width checked in prepare"),
            Prepared::Prefix(r) => x.prefix(*r),
        }
    }
}

impl Extractor {
    pub fn output_len(&self) -> usize {
        match self {
            Extractor::Hash(s) => s.r,
            Extractor::Prefix { r } => *r,
        }
    }

    pub fn description_bits(&self) -> u64 {
        match self {
            Extractor::Hash(s) => s.description_bits(),
            Extractor::Prefix { r } => gamma_bits(*r as u64 + 1),
        }
    }

    pub(crate) fn prepare(&self, width: usize) -> Result<Prepared, LabError> {
        match self {
            Extractor::Hash(s) if s.n_bits != width => Err(LabError::LengthError {
                r: s.n_bits,
                len: width,
            }),
            Extractor::Hash(s) => Ok(Prepared::Code(s.code())),
            Extractor::Prefix { r } if *r > width => {
                Err(LabError::LengthError { r: *r, len: width })
            }
            Extractor::Prefix { r } => Ok(Prepared::Prefix(*r)),
        }
    }

    pub fn apply(&self, x: &Bits) -> Result<Bits, LabError> {
        Ok(self.prepare(x.len())?.apply(x))
    }
}

/// An `r`-bit linear fingerprint of `x0` under the seed-`seed` matrix.
pub fn muchnik_fingerprint(x0: &Bits, r: usize, seed: u64) -> Result<Bits, LabError> {
    let spec = FingerprintSpec::new(r, x0.len(), seed)?;
    Ok(spec.code().hash(x0)?)
}

/// Recovers coordinate `target` from its fingerprint `y` and the fixed
/// coordinates in `condition`, by checking every consistent candidate.
pub fn fingerprint_decode(
    sur: &ComplexitySurrogate,
    target: usize,
    extractor: &Extractor,
    y: &Bits,
    condition: &[(usize, Bits)],
    budget: usize,
) -> Result<Bits, LabError> {
    if y.len() != extractor.output_len() {
        return Err(LabError::LengthError {
            r: y.len(),
            len: extractor.output_len(),
        });
    }
    let rel = sur.relation();
    let prepared = extractor.prepare(rel.width(target))?;
    let mut query = Query::of(vec![Term::Coord(target)]);
    query.fixed = condition.to_vec();
    let candidates = sur.distinct(&query)?;
    if candidates.len() > budget {
        return Err(LabError::BudgetExceeded {
            required: candidates.len(),
            budget,
        });
    }
    let mut hits = candidates
        .into_iter()
        .map(|key| rel.value(target, key[0] as u32))
        .filter(|x| prepared.apply(x) == *y);
    match (hits.next(), hits.count()) {
        (None, _) => Err(LabError::ZeroMatches),
        (Some(x), 0) => Ok(x.clone()),
        (Some(_), more) => Err(LabError::Collision { count: more + 1 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_examples() {
        let x: Bits = "1010101010101010".parse().unwrap();
        assert_eq!(muchnik_fingerprint(&x, 0, 3).unwrap().len(), 0);
        assert!(muchnik_fingerprint(&Bits::zeros(40), 9, 3)
            .unwrap()
            .is_zero());
        assert_eq!(
            muchnik_fingerprint(&x, 17, 3),
            Err(LabError::LengthError { r: 17, len: 16 })
        );
        assert_eq!(muchnik_fingerprint(&x, 16, 3).unwrap(), x);
    }

    #[test]
    fn description_costs() {
        let mut s = FingerprintSpec::new(5, 16, 7).unwrap();
        // 64 seed bits, gamma(6) = 5, gamma(17) = 9.
        assert_eq!(s.description_bits(), 78);
        s.derivation = Some(Derivation { level: 2, retry: 0 });
        // gamma(6) + gamma(2) + gamma(1).
        assert_eq!(s.description_bits(), 9);
        assert_eq!(Extractor::Prefix { r: 7 }.description_bits(), 7);
    }

    #[test]
    fn extractor_json() {
        let e = Extractor::Hash(FingerprintSpec::new(5, 16, 7).unwrap());
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"kind":"hash","r":5,"n_bits":16,"seed":7}"#);
        assert_eq!(serde_json::from_str::<Extractor>(&s).unwrap(), e);
        let p: Extractor = serde_json::from_str(r#"{"kind":"prefix","r":3}"#).unwrap();
        assert_eq!(
            p.apply(&"10110".parse().unwrap()).unwrap().to_string(),
            "101"
        );
    }
}
