//! The inductive fork-code construction.
//!
//! Codewords are built from the last source down. At level `m` the string
//! `a_m` gets a fingerprint `a'_m`, which then joins the side information
//! `b` for the levels below. A fingerprint is kept only when `a_m` is
//! determined by `a_1 … a_{m-1}`, the side information and `a'_m`, and when
//! the rates of the remaining levels still clear their bounds given the new
//! side information.

use serde::{Deserialize, Serialize};

use super::fingerprint::{Derivation, Extractor, FingerprintSpec};
use super::surrogate::{ComplexitySurrogate, Query, Term};
use super::LabError;
use crate::bits::Bits;
use crate::seed::{mix, tag};
use crate::source_model::SourceSet;

/// Seeds tried per level before giving up.
pub const MAX_RETRIES: u32 = 8;

/// Bits of slack given up at each level to fingerprint imperfection.
pub const LEMMA_LOSS: f64 = 2.0;

const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    /// `r_m ≥ K̂(a_m | a_¬V, b)`: the fingerprint pins `a_m` down.
    #[serde(rename = "case_1")]
    Case1,
    /// `r_m < K̂(a_m | a_¬V, b)`: the fingerprint is nearly incompressible.
    #[serde(rename = "case_2")]
    Case2,
    /// Level 1 has no lower levels to check.
    Base,
}

/// The counting terms behind the Kolmogorov–Levin rewriting of one check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlTerms {
    /// `K̂(a'_m | a_¬V, b)`
    pub fingerprint: f64,
    /// `K̂(a_m | a'_m, a_¬V, b)`
    pub residual: f64,
    /// `K̂(a_V | a_m, a_¬V, b)`
    pub tail: f64,
    /// `K̂(a_m, a_V | a_¬V, b)`
    pub joint: f64,
}

/// One instance of the lemma at level `m` for a subset `V` of the lower levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCheck {
    pub subset: SourceSet,
    pub case_label: CaseLabel,
    /// `r_m` and `K̂(a_m | a_¬V, b)`, which decide the case.
    pub level_rate: usize,
    pub level_complexity: f64,
    /// `Σ_{j∈V} r_j`
    pub rate_sum: usize,
    /// `K̂(a_V | a_¬V, b')` with `b' = (a'_m, b)`.
    pub complexity_after: f64,
    pub required_slack: f64,
    pub passed: bool,
    pub kl: KlTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub level: usize,
    pub case_label: CaseLabel,
    pub subset_checks: Vec<SubsetCheck>,
    pub seed: u64,
    pub retries: u32,
    pub fingerprint_len: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkCode {
    pub codewords: Vec<Bits>,
    pub extractors: Vec<Extractor>,
    /// Levels in construction order, `k` first.
    pub trace: Vec<TraceRecord>,
    pub slack: f64,
    pub master_seed: u64,
}

/// The side information seen at level `m`: `b` and the codewords above `m`.
#[derive(Clone)]
struct Side {
    b: Option<(usize, Bits)>,
    fps: Vec<(usize, Extractor, Bits)>,
}

impl Side {
    fn apply(&self, mut q: Query) -> Query {
        if let Some((c, v)) = &self.b {
            q = q.given(*c, v.clone());
        }
        q.matches.extend(self.fps.iter().cloned());
        q
    }
}

fn check_inputs(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    rates: &[usize],
) -> Result<(), LabError> {
    let rel = sur.relation();
    if rates.len() != rel.k() {
        return Err(LabError::RateCount {
            expected: rel.k(),
            got: rates.len(),
        });
    }
    if !rel.contains(point) {
        return Err(LabError::UnknownConditioning);
    }
    Ok(())
}

/// The subset with the largest deficit `K̂(a_W | a_¬W, b) + slack − Σ_W r_j`.
fn worst_subset(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    rates: &[usize],
    slack: f64,
) -> Result<(SourceSet, f64), LabError> {
    let mut worst = (SourceSet::EMPTY, f64::NEG_INFINITY);
    for w in SourceSet::nonempty_subsets(sur.relation().k()) {
        let sum: usize = w.indices().map(|j| rates[j]).sum();
        let deficit = sur.conditional(point, w)? + slack - sum as f64;
        if deficit > worst.1 {
            worst = (w, deficit);
        }
    }
    Ok(worst)
}

fn level_seed(master: u64, level: usize, retry: u32) -> u64 {
    mix(master, tag::FORK, ((level as u64) << 8) | retry as u64)
}

/// Evaluates the lemma for every nonempty `V ⊆ {1..m-1}` given a candidate
/// fingerprint `fp` of `a_m` (coordinate `m - 1`).
fn subset_checks(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    rates: &[usize],
    m: usize,
    side: &Side,
    fp: &(Extractor, Bits),
    next_slack: f64,
) -> Result<Vec<SubsetCheck>, LabError> {
    let cm = m - 1;
    let lower = SourceSet::full(cm);
    let mut out = Vec::new();
    for v in lower.nonempty_subsets_of() {
        let not_v: Vec<usize> = (0..cm).filter(|&c| !v.contains(c)).collect();
        let given = |q: Query| -> Query {
            let mut q = side.apply(q);
            for &c in &not_v {
                q = q.given(c, point[c].clone());
            }
            q
        };
        let with_fp = |q: Query| given(q).given_fp(cm, fp.0.clone(), fp.1.clone());
        let level_complexity = sur.k_hat(&given(Query::coords([cm])))?;
        let complexity_after = sur.k_hat(&with_fp(Query::coords(v.indices())))?;
        let kl = KlTerms {
            fingerprint: sur.k_hat(&given(Query::of(vec![Term::Fp(cm, fp.0.clone())])))?,
            residual: sur.k_hat(&with_fp(Query::coords([cm])))?,
            tail: sur.k_hat(&given(Query::coords(v.indices())).given(cm, point[cm].clone()))?,
            joint: sur.k_hat(&given(Query::coords(v.indices().chain([cm]))))?,
        };
        let rate_sum: usize = v.indices().map(|j| rates[j]).sum();
        let level_rate = rates[cm];
        out.push(SubsetCheck {
            subset: v,
            case_label: if level_rate as f64 >= level_complexity - CHECK_TOL {
                CaseLabel::Case1
            } else {
                CaseLabel::Case2
            },
            level_rate,
            level_complexity,
            rate_sum,
            complexity_after,
            required_slack: next_slack,
            passed: rate_sum as f64 >= complexity_after + next_slack - CHECK_TOL,
            kl,
        });
    }
    Ok(out)
}

/// Builds codewords `a'_1 … a'_k` with `|a'_j| ≤ r_j` from which the
/// receiver, holding `b`, recovers `(a_1, …, a_k)` exactly.
///
/// `point` is `(a_1, …, a_k[, b])` and must belong to the relation. The rates
/// must clear every bound `Σ_{j∈W} r_j ≥ K̂(a_W | a_¬W, b) + slack`.
pub fn fork_code_construct(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    rates: &[usize],
    master_seed: u64,
    slack: f64,
) -> Result<ForkCode, LabError> {
    check_inputs(sur, point, rates)?;
    let (subset, deficit) = worst_subset(sur, point, rates, slack)?;
    if deficit > CHECK_TOL {
        return Err(LabError::PreconditionViolated { subset, deficit });
    }
    let rel = sur.relation();
    let k = rel.k();
    let mut side = Side {
        b: rel.b_index().map(|c| (c, point[c].clone())),
        fps: Vec::new(),
    };
    let mut codewords = vec![Bits::zeros(0); k];
    let mut extractors: Vec<Option<Extractor>> = vec![None; k];
    let mut trace = Vec::with_capacity(k);
    let mut level_slack = slack;
    for m in (1..=k).rev() {
        let cm = m - 1;
        let len = rates[cm].min(rel.width(cm));
        let next_slack = level_slack - LEMMA_LOSS;
        let mut accepted = None;
        for retry in 0..MAX_RETRIES {
            let seed = level_seed(master_seed, m, retry);
            let spec = FingerprintSpec {
                r: len,
                n_bits: rel.width(cm),
                seed,
                derivation: Some(Derivation { level: m, retry }),
            };
            let ext = Extractor::Hash(spec);
            let fp = ext.apply(&point[cm])?;
            // a_m must be determined by the lower strings, the side information and a'_m.
            let mut q = side
                .apply(Query::coords([cm]))
                .given_fp(cm, ext.clone(), fp.clone());
            for c in 0..cm {
                q = q.given(c, point[c].clone());
            }
            if sur.count(&q)? != 1 {
                continue;
            }
            let checks = subset_checks(
                sur,
                point,
                rates,
                m,
                &side,
                &(ext.clone(), fp.clone()),
                next_slack,
            )?;
            if checks.iter().all(|c| c.passed) {
                accepted = Some((retry, seed, ext, fp, checks));
                break;
            }
        }
        let Some((retries, seed, ext, fp, checks)) = accepted else {
            return Err(LabError::ConstructionFailed {
                level: m,
                retries: MAX_RETRIES,
            });
        };
        let case_label = if m == 1 {
            CaseLabel::Base
        } else {
            checks
                .iter()
                .find(|c| c.subset == SourceSet::full(cm))
                .expect("full lower set is checked")
                .case_label
        };
        trace.push(TraceRecord {
            level: m,
            case_label,
            subset_checks: checks,
            seed,
            retries,
            fingerprint_len: len,
            slack: level_slack,
        });
        side.fps.push((cm, ext.clone(), fp.clone()));
        codewords[cm] = fp;
        extractors[cm] = Some(ext);
        level_slack = next_slack;
    }
    Ok(ForkCode {
        codewords,
        extractors: extractors
            .into_iter()
            .map(|e| e.expect("every level assigned"))
            .collect(),
        trace,
        slack,
        master_seed,
    })
}

/// Recomputes the codewords from the seeds and lengths in `trace`.
pub fn replay_trace(point: &[Bits], trace: &[TraceRecord]) -> Result<Vec<Bits>, LabError> {
    let mut out = vec![Bits::zeros(0); trace.len()];
    for rec in trace {
        let x = point
            .get(rec.level - 1)
            .ok_or(LabError::NoSuchCoordinate(rec.level - 1))?;
        let spec = FingerprintSpec {
            r: rec.fingerprint_len,
            n_bits: x.len(),
            seed: rec.seed,
            derivation: Some(Derivation {
                level: rec.level,
                retry: rec.retries,
            }),
        };
        out[rec.level - 1] = Extractor::Hash(spec).apply(x)?;
    }
    Ok(out)
}

/// Re-derives every logged check from the relation and compares it with the
/// trace, including the case labels. Returns the first mismatch, if any.
pub fn recheck_trace(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    rates: &[usize],
    code: &ForkCode,
) -> Result<Option<String>, LabError> {
    check_inputs(sur, point, rates)?;
    let rel = sur.relation();
    let mut side = Side {
        b: rel.b_index().map(|c| (c, point[c].clone())),
        fps: Vec::new(),
    };
    for rec in &code.trace {
        let cm = rec.level - 1;
        let ext = code.extractors[cm].clone();
        let fp = code.codewords[cm].clone();
        if ext.apply(&point[cm])? != fp {
            return Ok(Some(format!(
                "level {}: codeword does not match its extractor",
                rec.level
            )));
        }
        let fresh = subset_checks(
            sur,
            point,
            rates,
            rec.level,
            &side,
            &(ext.clone(), fp.clone()),
            rec.slack - LEMMA_LOSS,
        )?;
        if fresh != rec.subset_checks {
            return Ok(Some(format!(
                "level {}: subset checks differ from the relation",
                rec.level
            )));
        }
        for c in &rec.subset_checks {
            let holds = match c.case_label {
                CaseLabel::Case1 => c.level_rate as f64 >= c.level_complexity - CHECK_TOL,
                CaseLabel::Case2 => (c.level_rate as f64) < c.level_complexity - CHECK_TOL,
                CaseLabel::Base => false,
            };
            if !holds || !c.passed {
                return Ok(Some(format!(
                    "level {}, V = {}: logged inequality fails",
                    rec.level, c.subset
                )));
            }
        }
        side.fps.push((cm, ext, fp));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity_lab::CandidateRelation;

    fn byte(v: u64) -> Bits {
        Bits::from_uint(v, 8)
    }

    /// a_1 = a_2 ⊕ e for e in a fixed 8-element set: K̂(a_1|a_2) = K̂(a_2|a_1) = 3, K̂(a_1,a_2) = 11.
    fn offsets_relation() -> ComplexitySurrogate {
        let errs = [0u64, 1, 6, 24, 96, 129, 66, 255];
        let tuples = (0..256u64)
            .flat_map(|y| errs.iter().map(move |e| vec![byte(y ^ e), byte(y)]))
            .collect();
        ComplexitySurrogate::new(CandidateRelation::new(2, false, tuples).unwrap())
    }

    #[test]
    fn offsets_relation_complexities() {
        let s = offsets_relation();
        let p = vec![byte(0x5a ^ 6), byte(0x5a)];
        assert_eq!(s.conditional(&p, SourceSet::singleton(0)).unwrap(), 3.0);
        assert_eq!(s.conditional(&p, SourceSet::singleton(1)).unwrap(), 3.0);
        assert_eq!(s.conditional(&p, SourceSet::full(2)).unwrap(), 11.0);
    }

    #[test]
    fn spec_rates_succeed_with_exact_lengths() {
        let s = offsets_relation();
        let p = vec![byte(0x5a ^ 6), byte(0x5a)];
        let code = fork_code_construct(&s, &p, &[4, 8], 3, 1.0).unwrap();
        assert_eq!(code.codewords[0].len(), 4);
        assert_eq!(code.codewords[1].len(), 8);
        assert_eq!(code.trace[0].case_label, CaseLabel::Case1);
        assert_eq!(code.trace[1].case_label, CaseLabel::Base);
        assert_eq!(replay_trace(&p, &code.trace).unwrap(), code.codewords);
        assert_eq!(recheck_trace(&s, &p, &[4, 8], &code).unwrap(), None);
    }

    #[test]
    fn case_two_is_reached() {
        let s = offsets_relation();
        let p = vec![byte(0x33 ^ 24), byte(0x33)];
        let code = fork_code_construct(&s, &p, &[8, 4], 9, 1.0).unwrap();
        assert_eq!(code.trace[0].case_label, CaseLabel::Case2);
        assert_eq!(recheck_trace(&s, &p, &[8, 4], &code).unwrap(), None);
    }

    #[test]
    fn precondition_names_the_subset() {
        let s = offsets_relation();
        let p = vec![byte(6), byte(0)];
        match fork_code_construct(&s, &p, &[4, 4], 3, 1.0) {
            Err(LabError::PreconditionViolated { subset, deficit }) => {
                assert_eq!(subset, SourceSet::full(2));
                assert!((deficit - 4.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            fork_code_construct(&s, &p, &[4], 3, 1.0),
            Err(LabError::RateCount { .. })
        ));
        assert_eq!(
            fork_code_construct(&s, &[byte(2), byte(0)], &[8, 8], 3, 1.0).unwrap_err(),
            LabError::UnknownConditioning
        );
    }

    #[test]
    fn single_source_is_a_plain_fingerprint() {
        let tuples = (0..64u64)
            .map(|v| vec![Bits::from_uint(v * 3, 12)])
            .collect();
        let s = ComplexitySurrogate::new(CandidateRelation::new(1, false, tuples).unwrap());
        let p = vec![Bits::from_uint(45, 12)];
        let code = fork_code_construct(&s, &p, &[10], 5, 4.0).unwrap();
        let y = crate::complexity_lab::muchnik_fingerprint(&p[0], 10, code.trace[0].seed).unwrap();
        assert_eq!(code.codewords[0], y);
        let back =
            crate::complexity_lab::fingerprint_decode(&s, 0, &code.extractors[0], &y, &[], 1 << 10)
                .unwrap();
        assert_eq!(back, p[0]);
    }
}
