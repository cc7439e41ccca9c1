#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use forkcode_core::bits::Bits;
use forkcode_core::complexity_lab::{CandidateRelation, ComplexitySurrogate};
use forkcode_core::seed::{mix, tag};
use forkcode_core::source_model::{build_joint, JointSourceSpec, SourceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

pub fn dsbs(p: f64) -> JointSourceSpec {
    build_joint(
        2,
        &[2, 2],
        &[(1.0 - p) / 2.0, p / 2.0, p / 2.0, (1.0 - p) / 2.0],
    )
    .unwrap()
}

/// A random pmf with `k` sources of 2 or 3 symbols; some cells may be zero.
pub fn random_spec(rng: &mut ChaCha8Rng, k: usize) -> JointSourceSpec {
    let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(2..=3)).collect();
    let cells: usize = sizes.iter().product();
    let mut pmf: Vec<f64> = (0..cells)
        .map(|_| {
            if rng.random_bool(0.15) {
                0.0
            } else {
                -rng.random::<f64>().max(1e-12).ln()
            }
        })
        .collect();
    if pmf.iter().all(|&p| p == 0.0) {
        pmf[0] = 1.0;
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    build_joint(k, &sizes, &pmf).unwrap()
}

/// Entropy in bits of the marginal on `w`, summed straight from the pmf.
pub fn oracle_marginal_entropy(spec: &JointSourceSpec, w: SourceSet) -> f64 {
    let sizes = spec.alphabet_sizes();
    let total: f64 = spec.pmf().iter().sum();
    let mut marg: HashMap<Vec<usize>, f64> = HashMap::new();
    for (idx, &p) in spec.pmf().iter().enumerate() {
        // Row-major, last source fastest.
        let mut rem = idx;
        let mut sym = vec![0; sizes.len()];
        for j in (0..sizes.len()).rev() {
            sym[j] = rem % sizes[j];
            rem /= sizes[j];
        }
        let key: Vec<usize> = (0..sizes.len())
            .filter(|&j| w.contains(j))
            .map(|j| sym[j])
            .collect();
        *marg.entry(key).or_default() += p / total;
    }
    marg.values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// `H(α_W | α_¬W)` by the chain rule on marginals.
pub fn oracle_conditional_entropy(spec: &JointSourceSpec, w: SourceSet) -> f64 {
    let k = spec.k();
    oracle_marginal_entropy(spec, SourceSet::full(k))
        - oracle_marginal_entropy(spec, w.complement(k))
}

fn distinct_strings(rng: &mut ChaCha8Rng, count: usize, width: usize) -> Vec<Bits> {
    let mask = if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = rng.random::<u64>() & mask;
        if seen.insert(v) {
            out.push(Bits::from_uint(v, width));
        }
    }
    out
}

/// 64 × 64 independent 48-bit strings: every pair occurs, 2^12 tuples.
pub fn independent_relation() -> ComplexitySurrogate {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let xs = distinct_strings(&mut rng, 64, 48);
    let ys = distinct_strings(&mut rng, 64, 48);
    let tuples = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| vec![x.clone(), y.clone()]))
        .collect();
    ComplexitySurrogate::new(CandidateRelation::new(2, false, tuples).unwrap())
}

/// 256 random 48-bit centres `x`, each paired with every `y` at Hamming
/// distance at most 1.
pub fn hamming_ball_relation() -> ComplexitySurrogate {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let xs = distinct_strings(&mut rng, 256, 48);
    let mut tuples = Vec::new();
    for x in &xs {
        tuples.push(vec![x.clone(), x.clone()]);
        for i in 0..48 {
            let mut y = x.clone();
            y.flip(i);
            tuples.push(vec![x.clone(), y]);
        }
    }
    ComplexitySurrogate::new(CandidateRelation::new(2, false, tuples).unwrap())
}

/// Three sources `a_j = s ‖ u_j` sharing a 24-bit part `s` (16 values),
/// with independent 24-bit parts `u_j` (8 values each).
pub fn shared_part_relation() -> ComplexitySurrogate {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ss = distinct_strings(&mut rng, 16, 24);
    let us: Vec<Vec<Bits>> = (0..3).map(|_| distinct_strings(&mut rng, 8, 24)).collect();
    let mut tuples = Vec::new();
    for s in &ss {
        for u1 in &us[0] {
            for u2 in &us[1] {
                for u3 in &us[2] {
                    tuples.push([u1, u2, u3].iter().map(|u| Bits::concat(&[s, u])).collect());
                }
            }
        }
    }
    ComplexitySurrogate::new(CandidateRelation::new(3, false, tuples).unwrap())
}

/// The tuple a seed selects, as the simulator and CLI do.
pub fn tuple_for_seed(sur: &ComplexitySurrogate, seed: u64) -> Vec<Bits> {
    let rel = sur.relation();
    rel.tuple_bits((mix(seed, tag::LOOKUP, 0) % rel.len() as u64) as usize)
}

/// `log2` of the number of tuples agreeing with `point` outside `w`, counted
/// by a linear scan.
pub fn oracle_k_hat(sur: &ComplexitySurrogate, point: &[Bits], w: SourceSet) -> f64 {
    let rel = sur.relation();
    let mut seen = HashSet::new();
    for t in 0..rel.len() {
        let tup = rel.tuple_bits(t);
        if (0..rel.arity()).all(|c| w.contains(c) || tup[c] == point[c]) {
            seen.insert(w.indices().map(|c| tup[c].clone()).collect::<Vec<_>>());
        }
    }
    (seen.len() as f64).log2()
}
