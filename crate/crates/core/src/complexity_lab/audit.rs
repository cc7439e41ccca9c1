use serde::{Deserialize, Serialize};

use super::fingerprint::Extractor;
use super::surrogate::{ComplexitySurrogate, Query, Term};
use super::LabError;
use crate::bits::Bits;
use crate::source_model::SourceSet;

const TOL: f64 = 1e-9;

/// Bits of the master seed, paid once for all derived fingerprints.
pub const SHARED_SEED_BITS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDecode {
    pub success: bool,
    /// Distinct source tuples consistent with the codewords and `b`.
    pub candidates: usize,
    pub recovered: Option<Vec<Bits>>,
}

/// Outcome of checking the three clauses of property (*) at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarReport {
    /// `(a_1, …, a_k[, b])`
    pub point: Vec<Bits>,
    pub n: usize,
    pub rates: Vec<usize>,
    pub codewords: Vec<Bits>,
    pub extractors: Vec<Extractor>,
    /// Clause 1: `|a'_j| ≤ r_j`.
    pub lengths_ok: Vec<bool>,
    /// Clause 2: bits to describe each extractor, compared against the slack.
    pub extractor_descriptions: Vec<u64>,
    pub shared_seed_bits: u64,
    pub descriptions_ok: Vec<bool>,
    /// Clause 3: the receiver recovers `(a_1, …, a_k)` from the codewords and `b`.
    pub joint_decode: JointDecode,
    pub slack_used: f64,
    pub passed: bool,
}

/// Every tuple `(a_1, …, a_k)` of the relation, with side information `b`,
/// whose codewords equal `codewords`. This is all the receiver can compute.
pub fn decode_codewords(
    sur: &ComplexitySurrogate,
    b: Option<&Bits>,
    codewords: &[Bits],
    extractors: &[Extractor],
) -> Result<Vec<Vec<Bits>>, LabError> {
    let rel = sur.relation();
    let k = rel.k();
    if codewords.len() != k || extractors.len() != k {
        return Err(LabError::RateCount {
            expected: k,
            got: codewords.len().min(extractors.len()),
        });
    }
    let mut q = Query::coords(0..k);
    if let (Some(c), Some(b)) = (rel.b_index(), b) {
        q = q.given(c, b.clone());
    }
    for j in 0..k {
        if codewords[j].len() != extractors[j].output_len() {
            return Ok(Vec::new());
        }
        q = q.given_fp(j, extractors[j].clone(), codewords[j].clone());
    }
    let found = match sur.distinct(&q) {
        Ok(found) => found,
        Err(LabError::UnknownConditioning) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(found
        .into_iter()
        .map(|key| {
            key.iter()
                .enumerate()
                .map(|(c, &id)| rel.value(c, id as u32).clone())
                .collect()
        })
        .collect())
}

fn joint_decode(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    codewords: &[Bits],
    extractors: &[Extractor],
) -> Result<JointDecode, LabError> {
    let k = sur.relation().k();
    let b = sur.relation().b_index().map(|c| &point[c]);
    let mut found = decode_codewords(sur, b, codewords, extractors)?;
    let candidates = found.len();
    let recovered = if candidates == 1 { found.pop() } else { None };
    Ok(JointDecode {
        success: recovered.as_deref() == Some(&point[..k]),
        candidates,
        recovered,
    })
}

fn check_shapes(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    codewords: &[Bits],
    extractors: &[Extractor],
    rates: &[usize],
) -> Result<(), LabError> {
    let rel = sur.relation();
    let k = rel.k();
    for got in [codewords.len(), extractors.len(), rates.len()] {
        if got != k {
            return Err(LabError::RateCount { expected: k, got });
        }
    }
    if point.len() != rel.arity() {
        return Err(LabError::Arity {
            tuple: 0,
            expected: rel.arity(),
            got: point.len(),
        });
    }
    Ok(())
}

/// Checks property (*) for `codewords` at `point`.
pub fn verify_star(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    codewords: &[Bits],
    extractors: &[Extractor],
    rates: &[usize],
    slack: f64,
) -> Result<StarReport, LabError> {
    check_shapes(sur, point, codewords, extractors, rates)?;
    let lengths_ok: Vec<bool> = codewords
        .iter()
        .zip(rates)
        .map(|(c, &r)| c.len() <= r)
        .collect();
    let extractor_descriptions: Vec<u64> =
        extractors.iter().map(Extractor::description_bits).collect();
    let descriptions_ok: Vec<bool> = extractor_descriptions
        .iter()
        .map(|&d| d as f64 <= slack)
        .collect();
    let derived = extractors
        .iter()
        .any(|e| matches!(e, Extractor::Hash(s) if s.derivation.is_some()));
    let joint_decode = joint_decode(sur, point, codewords, extractors)?;
    // Each codeword must also be what its extractor makes of a_j.
    let honest = extractors
        .iter()
        .zip(point)
        .zip(codewords)
        .all(|((e, a), c)| e.apply(a).ok().as_ref() == Some(c));
    let passed = honest
        && lengths_ok.iter().all(|&b| b)
        && descriptions_ok.iter().all(|&b| b)
        && joint_decode.success;
    Ok(StarReport {
        point: point.to_vec(),
        n: sur.relation().total_width(),
        rates: rates.to_vec(),
        codewords: codewords.to_vec(),
        extractors: extractors.to_vec(),
        lengths_ok,
        extractor_descriptions,
        shared_seed_bits: if derived { SHARED_SEED_BITS } else { 0 },
        descriptions_ok,
        joint_decode,
        slack_used: slack,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ChainStep {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        ChainStep {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs + TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityVerdict {
    pub subset: SourceSet,
    pub rate_sum: usize,
    /// `K̂(a_W | a_¬W, b)`
    pub complexity: f64,
    /// `Σ_{j∈W} r_j ≥ K̂(a_W | a_¬W, b) − slack`
    pub bound_ok: bool,
    pub steps: Vec<ChainStep>,
    pub chain_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityReport {
    pub slack: f64,
    pub verdicts: Vec<NecessityVerdict>,
    pub claimed_success: bool,
    /// Whether decoding from the report's codewords succeeds when redone.
    pub decode_reverified: bool,
    pub passed: bool,
    /// The report claims success, yet some bound or chain step fails.
    pub inconsistent: bool,
}

fn k_or_inf(sur: &ComplexitySurrogate, q: &Query) -> Result<f64, LabError> {
    match sur.k_hat(q) {
        Err(LabError::UnknownConditioning) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Checks the rate bounds that property (*) forces, and the counting chain
///
/// `K̂(a_W|a_¬W) ≤ K̂(a'_W|a_¬W) + K̂(a_W|a'_W,a_¬W)`,
/// `K̂(a_W|a'_W,a_¬W) ≤ K̂(a_W|a'_1..a'_k) = 0`,
/// `K̂(a'_W|a_¬W) ≤ Σ_{j∈W} |a'_j| ≤ Σ_{j∈W} r_j`,
///
/// for every nonempty `W`, all conditioned on `b` as well. Only the first
/// step needs the slack; the others are exact.
pub fn necessity_audit(
    sur: &ComplexitySurrogate,
    report: &StarReport,
    slack: f64,
) -> Result<NecessityReport, LabError> {
    let point = &report.point;
    check_shapes(
        sur,
        point,
        &report.codewords,
        &report.extractors,
        &report.rates,
    )?;
    let rel = sur.relation();
    let k = rel.k();
    let with_b = |mut q: Query| {
        if let Some(b) = rel.b_index() {
            q = q.given(b, point[b].clone());
        }
        q
    };
    let mut all_codes = with_b(Query::default());
    for j in 0..k {
        all_codes =
            all_codes.given_fp(j, report.extractors[j].clone(), report.codewords[j].clone());
    }
    let mut verdicts = Vec::new();
    for w in SourceSet::nonempty_subsets(k) {
        let not_w: Vec<usize> = (0..k).filter(|&c| !w.contains(c)).collect();
        let given_rest = |q: Query| {
            not_w
                .iter()
                .fold(with_b(q), |q, &c| q.given(c, point[c].clone()))
        };
        let rate_sum: usize = w.indices().map(|j| report.rates[j]).sum();
        let codeword_bits: usize = w.indices().map(|j| report.codewords[j].len()).sum();
        let complexity = sur.conditional(point, w)?;
        let fp_terms = w
            .indices()
            .map(|j| Term::Fp(j, report.extractors[j].clone()))
            .collect();
        let code_count = sur.k_hat(&given_rest(Query::of(fp_terms)))?;
        let with_own_codes = w
            .indices()
            .fold(given_rest(Query::coords(w.indices())), |q, j| {
                q.given_fp(j, report.extractors[j].clone(), report.codewords[j].clone())
            });
        let residual = k_or_inf(sur, &with_own_codes)?;
        let residual_coded = k_or_inf(
            sur,
            &Query {
                target: w.indices().map(Term::Coord).collect(),
                ..all_codes.clone()
            },
        )?;
        let steps = vec![
            ChainStep::le(
                "complexity <= code_count + residual + slack",
                complexity,
                code_count + residual + slack,
            ),
            ChainStep::le("residual <= residual_coded", residual, residual_coded),
            ChainStep::le("residual_coded <= 0", residual_coded, 0.0),
            ChainStep::le(
                "code_count <= codeword_bits",
                code_count,
                codeword_bits as f64,
            ),
            ChainStep::le(
                "codeword_bits <= rate_sum",
                codeword_bits as f64,
                rate_sum as f64,
            ),
        ];
        let chain_ok = steps.iter().all(|s| s.holds);
        verdicts.push(NecessityVerdict {
            subset: w,
            rate_sum,
            complexity,
            bound_ok: rate_sum as f64 >= complexity - slack - TOL,
            steps,
            chain_ok,
        });
    }
    let decode_reverified =
        joint_decode(sur, point, &report.codewords, &report.extractors)?.success;
    let passed = verdicts.iter().all(|v| v.bound_ok && v.chain_ok);
    let claimed_success = report.joint_decode.success;
    Ok(NecessityReport {
        slack,
        verdicts,
        claimed_success,
        decode_reverified,
        passed,
        inconsistent: claimed_success && (!passed || !decode_reverified),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemarkRow {
    pub condition: usize,
    /// `K̂(x0 | x_j)`
    pub k_x0: f64,
    /// `K̂(y | x_j)`
    pub k_y: f64,
    /// `K̂(y | x_j) ≤ min(K̂(x0 | x_j), |y|)`, exact.
    pub upper_ok: bool,
    /// `min(K̂(x0 | x_j), |y|) − K̂(y | x_j)`
    pub lower_gap: f64,
    /// `K̂(x0 | y, x_j)`
    pub k_x0_given_y: f64,
    /// `K̂(x0, y | x_j)`
    pub k_joint: f64,
    /// `log2` of the smallest and largest fingerprint preimage among the candidates.
    pub fiber_min_bits: f64,
    pub fiber_max_bits: f64,
    /// `K̂(y|x_j) + fiber_min_bits ≤ K̂(x0,y|x_j) ≤ K̂(y|x_j) + fiber_max_bits`, exact.
    pub sandwich_ok: bool,
    /// `K̂(x0,y|x_j) − K̂(y|x_j) − K̂(x0|y,x_j)`
    pub kl_discrepancy: f64,
    pub kl_within_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemarkReport {
    pub x0: usize,
    pub y: Bits,
    pub r: usize,
    pub rows: Vec<RemarkRow>,
}

/// Counting versions of the fingerprint remarks for `y = extractor(x0)`,
/// with each coordinate in `conditions` taken in turn as `x_j`.
pub fn remark_audits(
    sur: &ComplexitySurrogate,
    point: &[Bits],
    x0: usize,
    conditions: &[usize],
    extractor: &Extractor,
) -> Result<RemarkReport, LabError> {
    let y = extractor.apply(point.get(x0).ok_or(LabError::NoSuchCoordinate(x0))?)?;
    let r = y.len();
    let fp = Term::Fp(x0, extractor.clone());
    let mut rows = Vec::with_capacity(conditions.len());
    for &j in conditions {
        let xj = point.get(j).ok_or(LabError::NoSuchCoordinate(j))?.clone();
        let cond = Query::default().given(j, xj.clone());
        let k_x0 = sur.k_hat(&Query {
            target: vec![Term::Coord(x0)],
            ..cond.clone()
        })?;
        let k_y = sur.k_hat(&Query {
            target: vec![fp.clone()],
            ..cond.clone()
        })?;
        let k_x0_given_y = sur.k_hat(&Query::coords([x0]).given(j, xj.clone()).given_fp(
            x0,
            extractor.clone(),
            y.clone(),
        ))?;
        let k_joint = sur.k_hat(&Query {
            target: vec![Term::Coord(x0), fp.clone()],
            ..cond.clone()
        })?;
        let fibers = sur.fibers(&cond, &[fp.clone()], &[Term::Coord(x0)])?;
        let (fmin, fmax) = ((fibers.min as f64).log2(), (fibers.max as f64).log2());
        let bound = k_x0.min(r as f64);
        let kl_discrepancy = k_joint - k_y - k_x0_given_y;
        rows.push(RemarkRow {
            condition: j,
            k_x0,
            k_y,
            upper_ok: k_y <= bound + TOL,
            lower_gap: bound - k_y,
            k_x0_given_y,
            k_joint,
            fiber_min_bits: fmin,
            fiber_max_bits: fmax,
            sandwich_ok: k_y + fmin <= k_joint + TOL && k_joint <= k_y + fmax + TOL,
            kl_discrepancy,
            kl_within_one: kl_discrepancy.abs() <= 1.0 + TOL,
        });
    }
    Ok(RemarkReport { x0, y, r, rows })
}

/// Exhaustive decoding of `a_W` from `(a_¬W, b)` and fingerprints of `a_W`
/// over every tuple of the relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PigeonholeCount {
    pub tuples: usize,
    /// Distinct (conditioning, fingerprints) messages.
    pub messages: usize,
    /// Tuples that share their message with another tuple.
    pub ambiguous: usize,
    /// Tuples that any single decoder must get wrong: `tuples − messages`.
    pub forced_failures: usize,
    pub codeword_bits: usize,
}

impl PigeonholeCount {
    pub fn forced_failure_fraction(&self) -> f64 {
        self.forced_failures as f64 / self.tuples as f64
    }
}

/// Counts decoding failures when each `j ∈ W` sends `extractors[i]`
/// (the `i`-th element of `W`) and everything outside `W` is known.
pub fn pigeonhole_failure_count(
    sur: &ComplexitySurrogate,
    w: SourceSet,
    extractors: &[Extractor],
) -> Result<PigeonholeCount, LabError> {
    let rel = sur.relation();
    let members: Vec<usize> = w.indices().collect();
    if members.len() != extractors.len() {
        return Err(LabError::RateCount {
            expected: members.len(),
            got: extractors.len(),
        });
    }
    if let Some(&c) = members.iter().find(|&&c| c >= rel.k()) {
        return Err(LabError::NoSuchCoordinate(c));
    }
    let mut message: Vec<Term> = (0..rel.arity())
        .filter(|c| !w.contains(*c))
        .map(Term::Coord)
        .collect();
    message.extend(
        members
            .iter()
            .zip(extractors)
            .map(|(&c, e)| Term::Fp(c, e.clone())),
    );
    let inner: Vec<Term> = members.iter().map(|&c| Term::Coord(c)).collect();
    let sizes = sur.group_sizes(&Query::default(), &message, &inner)?;
    let tuples: usize = sizes.iter().sum();
    Ok(PigeonholeCount {
        tuples,
        messages: sizes.len(),
        ambiguous: sizes.iter().filter(|&&n| n > 1).sum(),
        forced_failures: tuples - sizes.len(),
        codeword_bits: extractors.iter().map(Extractor::output_len).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity_lab::{fork_code_construct, CandidateRelation};

    fn cube() -> ComplexitySurrogate {
        let v: Vec<Bits> = (0..16u64).map(|x| Bits::from_uint(x, 4)).collect();
        let tuples = v
            .iter()
            .flat_map(|x| v.iter().map(move |y| vec![x.clone(), y.clone()]))
            .collect();
        ComplexitySurrogate::new(CandidateRelation::new(2, false, tuples).unwrap())
    }

    #[test]
    fn identity_code_passes_everything_with_zero_slack() {
        let tuples = (0..256u64).map(|x| vec![Bits::from_uint(x, 8)]).collect();
        let s = ComplexitySurrogate::new(CandidateRelation::new(1, false, tuples).unwrap());
        let p = vec![Bits::from_uint(200, 8)];
        let e = vec![Extractor::Prefix { r: 8 }];
        let rep = verify_star(&s, &p, &p, &e, &[8], 8.0).unwrap();
        assert!(rep.passed);
        let audit = necessity_audit(&s, &rep, 0.0).unwrap();
        assert!(audit.passed && !audit.inconsistent);
    }

    #[test]
    fn truncation_below_the_bound_collides() {
        let s = cube();
        let p = vec![Bits::from_uint(5, 4), Bits::from_uint(9, 4)];
        let e = vec![Extractor::Prefix { r: 2 }, Extractor::Prefix { r: 4 }];
        let cw: Vec<Bits> = p.iter().zip(&e).map(|(x, e)| e.apply(x).unwrap()).collect();
        let rep = verify_star(&s, &p, &cw, &e, &[2, 4], 16.0).unwrap();
        assert!(!rep.joint_decode.success);
        assert_eq!(rep.joint_decode.candidates, 4);
        // A forged claim of success is rejected and flagged.
        let mut forged = rep.clone();
        forged.joint_decode.success = true;
        let audit = necessity_audit(&s, &forged, 1.0).unwrap();
        assert!(!audit.passed && audit.inconsistent && !audit.decode_reverified);
        assert!(!audit.verdicts[0].bound_ok);
    }

    #[test]
    fn constructed_codes_pass_star_and_necessity() {
        let s = cube();
        let p = vec![Bits::from_uint(3, 4), Bits::from_uint(12, 4)];
        let code = fork_code_construct(&s, &p, &[4, 4], 1, 0.0).unwrap();
        let rep = verify_star(&s, &p, &code.codewords, &code.extractors, &[4, 4], 16.0).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.shared_seed_bits, 64);
        assert!(necessity_audit(&s, &rep, 0.0).unwrap().passed);
    }

    #[test]
    fn remarks_on_a_singleton_are_zero() {
        let s = ComplexitySurrogate::new(
            CandidateRelation::new(
                2,
                false,
                vec![vec![Bits::from_uint(1, 4), Bits::from_uint(2, 4)]],
            )
            .unwrap(),
        );
        let p = s.relation().tuple_bits(0);
        let rep = remark_audits(&s, &p, 0, &[1], &Extractor::Prefix { r: 2 }).unwrap();
        let row = &rep.rows[0];
        assert_eq!(
            (row.k_x0, row.k_y, row.k_x0_given_y, row.k_joint),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!(row.upper_ok && row.sandwich_ok && row.kl_within_one);
    }

    #[test]
    fn pigeonhole_on_the_cube() {
        let s = cube();
        // 4 free bits sent in 2: at most a quarter of tuples decodable.
        let c =
            pigeonhole_failure_count(&s, SourceSet::singleton(0), &[Extractor::Prefix { r: 2 }])
                .unwrap();
        assert_eq!(c.tuples, 256);
        assert_eq!(c.messages, 64);
        assert_eq!(c.forced_failures, 192);
        assert_eq!(c.ambiguous, 256);
        assert!(c.forced_failure_fraction() >= 1.0 - 0.25);
    }
}
