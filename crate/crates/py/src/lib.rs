//! Python bindings. Small values cross as Python objects; reports cross as
//! JSON strings so they keep the same shape as the CLI output.

use forkcode_core::binning_codec::{run_achievability, ExperimentPlan, LinearHashCode};
use forkcode_core::bits::Bits;
use forkcode_core::complexity_lab::{
    default_slack, fork_code_construct, necessity_audit, verify_star, CandidateRelation,
    ComplexitySurrogate, RelationFile,
};
use forkcode_core::fork_sim::{run_session, NetworkConfig};
use forkcode_core::rate_region::{build_region, MembershipMode, Rate, RatePoint, RateRegion};
use forkcode_core::source_model::{build_joint, JointSourceSpec, SourceSet};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn subset(indices: Vec<usize>, k: usize) -> PyResult<SourceSet> {
    match indices.iter().find(|&&j| j >= k) {
        Some(j) => Err(PyValueError::new_err(format!(
            "source index {j} out of range for k = {k}"
        ))),
        None => Ok(SourceSet::from_indices(indices)),
    }
}

/// A joint pmf over `k` finite alphabets, row-major with the last source fastest.
#[pyclass(name = "JointSource", frozen)]
struct PyJointSource(JointSourceSpec);

#[pymethods]
impl PyJointSource {
    #[new]
    fn new(alphabet_sizes: Vec<usize>, pmf: Vec<f64>) -> PyResult<Self> {
        build_joint(alphabet_sizes.len(), &alphabet_sizes, &pmf)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(value_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn alphabet_sizes(&self) -> Vec<usize> {
        self.0.alphabet_sizes().to_vec()
    }

    /// `H(α_W)` in bits.
    fn entropy(&self, w: Vec<usize>) -> PyResult<f64> {
        self.0
            .marginal_entropy(subset(w, self.0.k())?)
            .map_err(value_err)
    }

    /// `H(α_W | α_¬W)` in bits.
    fn conditional_entropy(&self, w: Vec<usize>) -> PyResult<f64> {
        self.0
            .conditional_entropy(subset(w, self.0.k())?)
            .map_err(value_err)
    }

    /// `count` blocks of `n` symbols, each as one list of symbols per source.
    fn sample(&self, n: usize, seed: u64, count: usize) -> PyResult<Vec<Vec<Vec<u32>>>> {
        let blocks = self.0.sample_blocks(n, seed, count).map_err(value_err)?;
        Ok(blocks
            .iter()
            .map(|b| (0..b.k()).map(|j| b.source(j).to_vec()).collect())
            .collect())
    }

    fn region(&self) -> PyResult<PyRateRegion> {
        build_region(&self.0).map(PyRateRegion).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }
}

/// The achievable rate region of a joint source.
#[pyclass(name = "RateRegion", frozen)]
struct PyRateRegion(RateRegion);

#[pymethods]
impl PyRateRegion {
    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    /// `(W, bound)` pairs with `W` as a sorted list of source indices.
    fn constraints(&self) -> Vec<(Vec<usize>, f64)> {
        self.0
            .constraints()
            .iter()
            .map(|c| (c.subset.indices().collect(), c.bound))
            .collect()
    }

    fn bound(&self, w: Vec<usize>) -> PyResult<f64> {
        let w = subset(w, self.0.k())?;
        if w.is_empty() {
            return Err(PyValueError::new_err("the empty set has no constraint"));
        }
        Ok(self.0.bound(w))
    }

    /// Whether `rates` satisfies every constraint; `float("inf")` means unbounded.
    #[pyo3(signature = (rates, closed = true))]
    fn contains(&self, rates: Vec<f64>, closed: bool) -> PyResult<bool> {
        let point = RatePoint::new(
            rates
                .into_iter()
                .map(|r| {
                    if r == f64::INFINITY {
                        Rate::Unbounded
                    } else {
                        Rate::Finite(r)
                    }
                })
                .collect(),
        )
        .map_err(value_err)?;
        let mode = if closed {
            MembershipMode::Closed
        } else {
            MembershipMode::Open
        };
        Ok(self.0.membership(&point, mode).map_err(value_err)?.inside)
    }

    fn corner_points(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(self
            .0
            .corner_points()
            .map_err(value_err)?
            .into_iter()
            .map(|c| c.point)
            .collect())
    }

    fn min_sum_rate(&self) -> f64 {
        self.0.min_sum_rate()
    }
}

/// The seeded GF(2)-linear hash of `bits` (a string of '0' and '1') to `l` bits.
#[pyfunction]
fn hash_bits(bits: &str, l: usize, seed: u64) -> PyResult<String> {
    let x: Bits = bits.parse().map_err(value_err)?;
    let code = LinearHashCode::new(x.len(), l, seed).map_err(value_err)?;
    Ok(code.hash(&x).map_err(value_err)?.to_string())
}

/// Runs an achievability plan (JSON) and returns its rows as JSON.
#[pyfunction]
fn achievability(py: Python<'_>, plan: &str) -> PyResult<String> {
    let plan: ExperimentPlan = serde_json::from_str(plan).map_err(value_err)?;
    let rows = py.detach(|| run_achievability(&plan)).map_err(value_err)?;
    to_json(&rows)
}

/// Builds fork codewords for one tuple of a relation (JSON) and audits them.
#[pyfunction]
#[pyo3(signature = (relation, rates, seed, slack = None, tuple_index = 0))]
fn fingerprint(
    relation: &str,
    rates: Vec<usize>,
    seed: u64,
    slack: Option<f64>,
    tuple_index: usize,
) -> PyResult<String> {
    let file: RelationFile = serde_json::from_str(relation).map_err(value_err)?;
    let sur = ComplexitySurrogate::new(CandidateRelation::from_file(file).map_err(value_err)?);
    let rel = sur.relation();
    if tuple_index >= rel.len() {
        return Err(PyValueError::new_err(format!(
            "tuple {tuple_index} but the relation has {} tuples",
            rel.len()
        )));
    }
    let point = rel.tuple_bits(tuple_index);
    let slack = slack.unwrap_or_else(|| default_slack(rel.total_width()));
    let code = fork_code_construct(&sur, &point, &rates, seed, slack).map_err(value_err)?;
    let star = verify_star(
        &sur,
        &point,
        &code.codewords,
        &code.extractors,
        &rates,
        slack,
    )
    .map_err(value_err)?;
    let necessity = necessity_audit(&sur, &star, slack).map_err(value_err)?;
    to_json(&serde_json::json!({
        "codewords": code.codewords,
        "trace": code.trace,
        "star": star,
        "necessity": necessity,
    }))
}

/// Runs one network session from a config (JSON) and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn simulate(py: Python<'_>, config: &str, seed: Option<u64>) -> PyResult<String> {
    let mut config: NetworkConfig = serde_json::from_str(config).map_err(value_err)?;
    if let Some(s) = seed {
        config.set_seed(s);
    }
    let report = py.detach(|| run_session(&config)).map_err(value_err)?;
    to_json(&report)
}

#[pymodule]
fn forkcode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyJointSource>()?;
    m.add_class::<PyRateRegion>()?;
    m.add_function(wrap_pyfunction!(hash_bits, m)?)?;
    m.add_function(wrap_pyfunction!(achievability, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
