//! The admissible-rate region of the fork network: the contra-polymatroid
//! `{ r : Σ_{j∈W} r_j ≥ H(α_W | α_¬W) for every nonempty W }`.

use std::fmt;
use std::io;

use itertools::Itertools;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::source_model::{JointSourceSpec, SourceError, SourceSet, MAX_SOURCES};

/// Tolerance for closed membership and vertex deduplication.
pub const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("rate point has {got} coordinates, region has k = {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid rate {0}: rates must be finite and nonnegative, or unbounded")]
    InvalidRate(f64),
    #[error("region has a non-finite bound")]
    UnboundedRegion,
}

/// A per-source rate in bits per source symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Finite(f64),
    Unbounded,
}

impl Rate {
    pub fn value(self) -> f64 {
        match self {
            Rate::Finite(r) => r,
            Rate::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Rate::Unbounded)
    }
}

impl From<f64> for Rate {
    fn from(r: f64) -> Self {
        if r.is_infinite() && r > 0.0 {
            Rate::Unbounded
        } else {
            Rate::Finite(r)
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Finite(r) => write!(f, "{r}"),
            Rate::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Rate::Finite(r) => s.serialize_f64(*r),
            Rate::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RateVisitor;
        impl Visitor<'_> for RateVisitor {
            type Value = Rate;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rate, E> {
                Ok(Rate::from(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rate, E> {
                Ok(Rate::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rate, E> {
                Ok(Rate::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Rate, E> {
                match v {
                    "inf" | "infinity" | "unbounded" => Ok(Rate::Unbounded),
                    other => Err(E::custom(format!("unknown rate {other:?}"))),
                }
            }
        }
        d.deserialize_any(RateVisitor)
    }
}

/// A candidate rate tuple `(r_1, …, r_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rate>", into = "Vec<Rate>")]
pub struct RatePoint(Vec<Rate>);

impl TryFrom<Vec<Rate>> for RatePoint {
    type Error = RegionError;
    fn try_from(rates: Vec<Rate>) -> Result<Self, RegionError> {
        for r in &rates {
            if let Rate::Finite(v) = r {
                if !v.is_finite() || *v < 0.0 {
                    return Err(RegionError::InvalidRate(*v));
                }
            }
        }
        Ok(RatePoint(rates))
    }
}

impl From<RatePoint> for Vec<Rate> {
    fn from(p: RatePoint) -> Self {
        p.0
    }
}

impl RatePoint {
    pub fn new(rates: Vec<Rate>) -> Result<Self, RegionError> {
        Self::try_from(rates)
    }

    pub fn finite(rates: &[f64]) -> Result<Self, RegionError> {
        Self::try_from(rates.iter().map(|&r| Rate::Finite(r)).collect::<Vec<_>>())
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn rates(&self) -> &[Rate] {
        &self.0
    }

    pub fn get(&self, j: usize) -> Rate {
        self.0[j]
    }

    /// `Σ_{j∈W} r_j`; infinite if any member is unbounded.
    pub fn sum_over(&self, w: SourceSet) -> f64 {
        w.indices().map(|j| self.0[j].value()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstraint {
    pub subset: SourceSet,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegion {
    k: usize,
    constraints: Vec<RateConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipMode {
    /// `Σ r_j ≥ bound` for every W (the necessary condition).
    Closed,
    /// `Σ r_j > bound` for every W (the sufficient condition).
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    pub inside: bool,
    /// `(W, Σ_{j∈W} r_j − bound)` for every constraint, in constraint order.
    pub slacks: Vec<(SourceSet, f64)>,
    pub violated: Vec<(SourceSet, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerPoint {
    /// Every ordering (0-based source indices) that produced this vertex.
    pub permutations: Vec<Vec<usize>>,
    pub point: Vec<f64>,
}

pub fn build_region(spec: &JointSourceSpec) -> Result<RateRegion, RegionError> {
    let k = spec.k();
    if k > MAX_SOURCES {
        return Err(SourceError::TooLarge(format!("k = {k}")).into());
    }
    let table = spec.entropy_table();
    let constraints = SourceSet::nonempty_subsets(k)
        .map(|w| RateConstraint {
            subset: w,
            bound: table.conditional(w),
        })
        .collect();
    Ok(RateRegion { k, constraints })
}

impl RateRegion {
    /// Builds a region from explicit bounds indexed by `mask - 1`.
    pub fn from_bounds(k: usize, bounds: &[f64]) -> Result<Self, RegionError> {
        if bounds.len() != (1 << k) - 1 {
            return Err(RegionError::DimensionMismatch {
                expected: (1 << k) - 1,
                got: bounds.len(),
            });
        }
        let constraints = SourceSet::nonempty_subsets(k)
            .zip(bounds)
            .map(|(subset, &bound)| RateConstraint { subset, bound })
            .collect();
        Ok(RateRegion { k, constraints })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn constraints(&self) -> &[RateConstraint] {
        &self.constraints
    }

    /// The bound for `W`, with `g(∅) = 0`.
    pub fn bound(&self, w: SourceSet) -> f64 {
        if w.is_empty() {
            0.0
        } else {
            self.constraints[w.0 as usize - 1].bound
        }
    }

    pub fn membership(
        &self,
        p: &RatePoint,
        mode: MembershipMode,
    ) -> Result<Membership, RegionError> {
        if p.k() != self.k {
            return Err(RegionError::DimensionMismatch {
                expected: self.k,
                got: p.k(),
            });
        }
        let slacks: Vec<(SourceSet, f64)> = self
            .constraints
            .iter()
            .map(|c| (c.subset, p.sum_over(c.subset) - c.bound))
            .collect();
        let violated: Vec<(SourceSet, f64)> = slacks
            .iter()
            .copied()
            .filter(|&(_, s)| match mode {
                MembershipMode::Closed => s < -RATE_TOL,
                MembershipMode::Open => s <= 0.0,
            })
            .collect();
        Ok(Membership {
            inside: violated.is_empty(),
            slacks,
            violated,
        })
    }

    /// Vertices of the region via the chain rule along every ordering:
    /// `r_{π(i)} = g({π(1..i)}) − g({π(1..i−1)})`.
    pub fn corner_points(&self) -> Result<Vec<CornerPoint>, RegionError> {
        if self.constraints.iter().any(|c| !c.bound.is_finite()) {
            return Err(RegionError::UnboundedRegion);
        }
        let mut out: Vec<CornerPoint> = Vec::new();
        for perm in (0..self.k).permutations(self.k) {
            let mut point = vec![0.0; self.k];
            let mut prefix = SourceSet::EMPTY;
            for &j in &perm {
                let next = prefix.with(j);
                point[j] = self.bound(next) - self.bound(prefix);
                prefix = next;
            }
            match out.iter_mut().find(|c| {
                c.point
                    .iter()
                    .zip(&point)
                    .all(|(a, b)| (a - b).abs() <= RATE_TOL)
            }) {
                Some(existing) => existing.permutations.push(perm),
                None => out.push(CornerPoint {
                    permutations: vec![perm],
                    point,
                }),
            }
        }
        Ok(out)
    }

    /// `H(α_1, …, α_k)`, the full-set bound.
    pub fn min_sum_rate(&self) -> f64 {
        self.bound(SourceSet::full(self.k))
    }

    /// CSV with columns `subset_bitmask, subset_pretty, bound_bits`.
    pub fn write_constraints_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["subset_bitmask", "subset_pretty", "bound_bits"])?;
        for c in &self.constraints {
            wr.write_record([
                c.subset.0.to_string(),
                c.subset.to_string(),
                c.bound.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
