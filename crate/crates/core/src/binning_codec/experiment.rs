use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decode::certify_ml_error;
use super::{binarize, code_length, encode_block, CodecError, LinearHashCode};
use crate::bits::Bits;
use crate::rate_region::RatePoint;
use crate::seed::{mix, tag};
use crate::source_model::{symbol_width, JointSourceSpec};
use crate::stats::{wilson_interval, Z95};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_BUDGET: u64 = 1 << 20;

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub spec: JointSourceSpec,
    pub rates: RatePoint,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.rates.k() != self.spec.k() {
            return Err(CodecError::SourceCount {
                expected: self.spec.k(),
                got: self.rates.k(),
            });
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(CodecError::InvalidPlan(format!(
                "delta must be finite and non-negative, got {}",
                self.delta
            )));
        }
        if self.n_list.contains(&0) {
            return Err(CodecError::InvalidPlan(
                "block lengths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Bits per source at block length `n`.
    pub fn code_lengths(&self, n: usize) -> Vec<usize> {
        self.spec
            .alphabet_sizes()
            .iter()
            .zip(self.rates.rates())
            .map(|(&size, &r)| code_length(r, self.delta, n, symbol_width(size)))
            .collect()
    }

    /// `log2` of the product of coset sizes: `Σ_j (n·w_j − l_j)`.
    pub fn search_dimension(&self, n: usize) -> usize {
        self.spec
            .alphabet_sizes()
            .iter()
            .zip(self.code_lengths(n))
            .map(|(&size, l)| n * symbol_width(size) - l)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowOutcome {
    /// `errors` counts trials certified as decoding errors and `error_rate`
    /// is `errors / trials`. Trials that exhaust the budget without a verdict
    /// are `undecided`; when there are any, the true rate lies between
    /// `error_rate` and `(errors + undecided) / trials`.
    Completed {
        errors: u64,
        undecided: u64,
        error_rate: f64,
        ci_low: f64,
        ci_high: f64,
        mean_candidates: f64,
    },
    /// No trial reached a verdict within the budget.
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityRow {
    pub n: usize,
    pub rates: RatePoint,
    pub code_lengths: Vec<usize>,
    pub delta: f64,
    pub trials: usize,
    pub outcome: RowOutcome,
    pub master_seed: u64,
}

impl AchievabilityRow {
    pub fn error_rate(&self) -> Option<f64> {
        match self.outcome {
            RowOutcome::Completed { error_rate, .. } => Some(error_rate),
            RowOutcome::BudgetExceeded => None,
        }
    }

    pub fn interval(&self) -> Option<(f64, f64)> {
        match self.outcome {
            RowOutcome::Completed {
                ci_low, ci_high, ..
            } => Some((ci_low, ci_high)),
            RowOutcome::BudgetExceeded => None,
        }
    }
}

/// Seeds of one trial: the sampling seed and one code seed per source.
pub fn trial_seeds(master_seed: u64, n: usize, trial: usize, k: usize) -> (u64, Vec<u64>) {
    let t = mix(
        mix(master_seed, tag::TRIAL, n as u64),
        tag::TRIAL,
        trial as u64,
    );
    (t, (0..k).map(|j| mix(t, tag::CODE, j as u64)).collect())
}

enum TrialResult {
    Done { error: bool, examined: u64 },
    Undecided { examined: u64 },
}

fn run_trial(
    plan: &ExperimentPlan,
    n: usize,
    lengths: &[usize],
    trial: usize,
) -> Result<TrialResult, CodecError> {
    let k = plan.spec.k();
    let (sample_seed, code_seeds) = trial_seeds(plan.master_seed, n, trial, k);
    let block = plan.spec.sample_blocks(n, sample_seed, 1)?.remove(0);
    let widths: Vec<usize> = plan
        .spec
        .alphabet_sizes()
        .iter()
        .map(|&s| symbol_width(s))
        .collect();
    let truth: Vec<Bits> = (0..k)
        .map(|j| binarize(block.source(j), widths[j]))
        .collect();
    let codes = (0..k)
        .map(|j| LinearHashCode::new(n * widths[j], lengths[j], code_seeds[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let messages = (0..k)
        .map(|j| encode_block(j, &truth[j], &codes[j]))
        .collect::<Result<Vec<_>, _>>()?;
    match certify_ml_error(&truth, &messages, &plan.spec, n, &codes, plan.budget) {
        Ok(c) => Ok(TrialResult::Done {
            error: c.error,
            examined: c.examined,
        }),
        Err(CodecError::BudgetExceeded { .. }) => Ok(TrialResult::Undecided {
            examined: plan.budget,
        }),
        Err(e) => Err(e),
    }
}

/// Empirical block error rate of coset-ML decoding for each block length.
///
/// A trial counts as an error when the decoder's output differs from the
/// sampled tuple. The budget caps the candidates examined per trial: an
/// error is certified as soon as a candidate beats the truth, while a
/// correct decode needs the whole product of cosets. Trials that hit the cap
/// stay undecided, and a row with no decided trial is `BudgetExceeded`.
pub fn run_achievability(plan: &ExperimentPlan) -> Result<Vec<AchievabilityRow>, CodecError> {
    plan.validate()?;
    if plan.trials == 0 {
        return Ok(Vec::new());
    }
    let mut rows = Vec::with_capacity(plan.n_list.len());
    for &n in &plan.n_list {
        let lengths = plan.code_lengths(n);
        let row = |outcome| AchievabilityRow {
            n,
            rates: plan.rates.clone(),
            code_lengths: lengths.clone(),
            delta: plan.delta,
            trials: plan.trials,
            outcome,
            master_seed: plan.master_seed,
        };
        let results = (0..plan.trials)
            .into_par_iter()
            .map(|t| run_trial(plan, n, &lengths, t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut errors = 0u64;
        let mut examined = 0u64;
        let mut undecided = 0u64;
        for r in results {
            match r {
                TrialResult::Done { error, examined: e } => {
                    errors += error as u64;
                    examined += e;
                }
                TrialResult::Undecided { examined: e } => {
                    undecided += 1;
                    examined += e;
                }
            }
        }
        if undecided == plan.trials as u64 {
            rows.push(row(RowOutcome::BudgetExceeded));
            continue;
        }
        let (ci_low, ci_high) = wilson_interval(errors, plan.trials as u64, Z95);
        rows.push(row(RowOutcome::Completed {
            errors,
            undecided,
            error_rate: errors as f64 / plan.trials as f64,
            ci_low,
            ci_high,
            mean_candidates: examined as f64 / plan.trials as f64,
        }));
    }
    Ok(rows)
}

/// Writes the table with one `r_j` column per source. Result cells of
/// `BudgetExceeded` rows are left empty.
pub fn write_achievability_csv<W: io::Write>(
    rows: &[AchievabilityRow],
    k: usize,
    w: W,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["n".to_string()];
    header.extend((1..=k).map(|j| format!("r_{j}")));
    header.extend(
        [
            "delta",
            "trials",
            "errors",
            "error_rate",
            "ci_low",
            "ci_high",
            "mean_candidates",
            "master_seed",
            "undecided",
        ]
        .map(String::from),
    );
    out.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.n.to_string()];
        rec.extend(row.rates.rates().iter().map(|r| r.to_string()));
        rec.push(row.delta.to_string());
        rec.push(row.trials.to_string());
        let undecided = match &row.outcome {
            RowOutcome::Completed {
                errors,
                undecided,
                error_rate,
                ci_low,
                ci_high,
                mean_candidates,
            } => {
                rec.push(errors.to_string());
                rec.push(format!("{error_rate:.6}"));
                rec.push(format!("{ci_low:.6}"));
                rec.push(format!("{ci_high:.6}"));
                rec.push(format!("{mean_candidates:.3}"));
                undecided.to_string()
            }
            RowOutcome::BudgetExceeded => {
                rec.extend(std::iter::repeat_n(String::new(), 5));
                row.trials.to_string()
            }
        };
        rec.push(row.master_seed.to_string());
        rec.push(undecided);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
