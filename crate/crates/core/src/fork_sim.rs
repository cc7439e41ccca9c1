//! One session of the fork network: k senders, each seeing only its own
//! source, send over lossless links to a single receiver that decodes all
//! k sources jointly.

use std::io;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning_codec::{
    binarize, code_length, decode_joint, encode_block, trial_seeds, CodecError, EncodedMessage,
    LinearHashCode,
};
use crate::bits::Bits;
use crate::complexity_lab::{
    decode_codewords, default_slack, fork_code_construct, CandidateRelation, ComplexitySurrogate,
    Extractor, LabError, RelationFile,
};
use crate::rate_region::RatePoint;
use crate::seed::{mix, tag};
use crate::source_model::{symbol_width, JointSourceSpec};

fn default_delta() -> f64 {
    crate::binning_codec::DEFAULT_DELTA
}

fn default_budget() -> u64 {
    crate::binning_codec::DEFAULT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    /// i.i.d. blocks from a joint pmf, random-binning codes, ML decoding.
    Statistical {
        spec: JointSourceSpec,
        rates: RatePoint,
        #[serde(default = "default_delta")]
        delta: f64,
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_budget")]
        budget: u64,
    },
    /// One tuple of an explicit relation, fork-code fingerprints, decoding by
    /// exhaustive lookup.
    Combinatorial {
        relation: RelationFile,
        /// Tuple to send; chosen from the seed when absent.
        #[serde(default)]
        tuple_index: Option<usize>,
        rates: Vec<usize>,
        /// Defaults to `2·⌈log2 n⌉ + 16`.
        #[serde(default)]
        slack: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl NetworkConfig {
    pub fn seed(&self) -> u64 {
        match self {
            NetworkConfig::Statistical { seed, .. } | NetworkConfig::Combinatorial { seed, .. } => {
                *seed
            }
        }
    }

    pub fn set_seed(&mut self, s: u64) {
        match self {
            NetworkConfig::Statistical { seed, .. } | NetworkConfig::Combinatorial { seed, .. } => {
                *seed = s
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Records in the session log, in the order they happen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SourceEmit {
        source: usize,
        symbols: usize,
        bits: usize,
        block: Bits,
    },
    Encode {
        source: usize,
        input_bits: usize,
        output_bits: usize,
        code: String,
    },
    Transmit {
        link: usize,
        bits: usize,
        payload: Bits,
    },
    DecodeAttempt {
        messages: usize,
        search_bits: usize,
    },
    DecodeResult {
        success: bool,
        candidates: u64,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    /// Links are numbered `1..=k`; link `j` carries sender `j`'s message.
    pub link: usize,
    pub bits: usize,
    /// Bits per source symbol; in combinatorial mode, per bit of `a_j`.
    pub bits_per_symbol: f64,
    /// `r_j + δ` in statistical mode, `r_j` in combinatorial mode.
    pub rate_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub mode: String,
    pub k: usize,
    /// Block length in statistical mode, `Σ|a_j| + |b|` in combinatorial mode.
    pub n: usize,
    pub seed: u64,
    pub links: Vec<LinkReport>,
    pub total_bits: usize,
    pub success: bool,
    pub detail: String,
    #[serde(skip)]
    pub events: Vec<Event>,
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
}

/// What a sender holds: its index and its encoding map, nothing else.
pub enum Sender {
    Binning { source: usize, code: LinearHashCode },
    Fingerprint { source: usize, extractor: Extractor },
}

impl Sender {
    pub fn source(&self) -> usize {
        match self {
            Sender::Binning { source, .. } | Sender::Fingerprint { source, .. } => *source,
        }
    }

    /// Encodes this sender's own block. No other source is reachable here.
    pub fn encode(&self, block: &Bits) -> Result<EncodedMessage, SimError> {
        match self {
            Sender::Binning { source, code } => Ok(encode_block(*source, block, code)?),
            Sender::Fingerprint { source, extractor } => Ok(EncodedMessage {
                source_index: *source,
                bits: extractor.apply(block)?,
            }),
        }
    }

    fn describe(&self) -> String {
        match self {
            Sender::Binning { code, .. } => format!(
                "linear n_bits={} l={} seed={}",
                code.n_bits(),
                code.l(),
                code.seed()
            ),
            Sender::Fingerprint { extractor, .. } => {
                serde_json::to_string(extractor).expect("extractor serializes")
            }
        }
    }
}

struct Clock {
    start: Instant,
    phases: Vec<(String, Duration)>,
}

impl Clock {
    fn new() -> Self {
        Clock {
            start: Instant::now(),
            phases: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push((name.to_string(), now - self.start));
        self.start = now;
    }
}

/// Sends each block through its sender and onto its link.
fn transmit(
    senders: &[Sender],
    blocks: &[Bits],
    events: &mut Vec<Event>,
) -> Result<Vec<EncodedMessage>, SimError> {
    let mut delivered = Vec::with_capacity(senders.len());
    for (s, block) in senders.iter().zip(blocks) {
        let msg = s.encode(block)?;
        events.push(Event::Encode {
            source: s.source() + 1,
            input_bits: block.len(),
            output_bits: msg.bits.len(),
            code: s.describe(),
        });
        delivered.push(msg);
    }
    for msg in &delivered {
        events.push(Event::Transmit {
            link: msg.source_index + 1,
            bits: msg.bits.len(),
            payload: msg.bits.clone(),
        });
    }
    Ok(delivered)
}

fn statistical(
    spec: &JointSourceSpec,
    rates: &RatePoint,
    delta: f64,
    n: usize,
    seed: u64,
    budget: u64,
) -> Result<SessionReport, SimError> {
    let k = spec.k();
    if rates.k() != k {
        return Err(SimError::InvalidConfig(format!(
            "{} rates for {k} sources",
            rates.k()
        )));
    }
    if n == 0 || !(delta >= 0.0 && delta.is_finite()) {
        return Err(SimError::InvalidConfig(
            "n must be positive and delta finite and non-negative".into(),
        ));
    }
    let mut clock = Clock::new();
    let mut events = Vec::new();
    let (sample_seed, code_seeds) = trial_seeds(seed, n, 0, k);
    let block = spec
        .sample_blocks(n, sample_seed, 1)
        .map_err(CodecError::from)?
        .remove(0);
    let widths: Vec<usize> = spec
        .alphabet_sizes()
        .iter()
        .map(|&s| symbol_width(s))
        .collect();
    let blocks: Vec<Bits> = (0..k)
        .map(|j| binarize(block.source(j), widths[j]))
        .collect();
    for j in 0..k {
        events.push(Event::SourceEmit {
            source: j + 1,
            symbols: n,
            bits: blocks[j].len(),
            block: blocks[j].clone(),
        });
    }
    clock.lap("sample");
    let lengths: Vec<usize> = (0..k)
        .map(|j| code_length(rates.get(j), delta, n, widths[j]))
        .collect();
    let search_bits: usize = (0..k).map(|j| n * widths[j] - lengths[j]).sum();
    if search_bits >= 64 || (1u64 << search_bits) > budget {
        return Err(CodecError::BudgetExceeded {
            required: 1u128 << search_bits.min(127),
            budget,
        }
        .into());
    }
    let senders = (0..k)
        .map(|j| {
            Ok(Sender::Binning {
                source: j,
                code: LinearHashCode::new(n * widths[j], lengths[j], code_seeds[j])?,
            })
        })
        .collect::<Result<Vec<_>, CodecError>>()?;
    let messages = transmit(&senders, &blocks, &mut events)?;
    clock.lap("encode");
    events.push(Event::DecodeAttempt {
        messages: k,
        search_bits,
    });
    let codes: Vec<LinearHashCode> = senders
        .into_iter()
        .map(|s| match s {
            Sender::Binning { code, .. } => code,
            Sender::Fingerprint { .. } => unreachable!("statistical senders use binning codes"),
        })
        .collect();
    let (success, candidates, detail) = match decode_joint(&messages, spec, n, &codes, budget) {
        Ok(d) if d.block == block => (
            true,
            d.candidates,
            "decoded tuple equals the source tuple".to_string(),
        ),
        Ok(d) => (
            false,
            d.candidates,
            "decoded tuple differs from the source tuple".to_string(),
        ),
        Err(CodecError::NoCandidate) => (false, 0, "no candidate".to_string()),
        Err(e) => return Err(e.into()),
    };
    events.push(Event::DecodeResult {
        success,
        candidates,
        detail: detail.clone(),
    });
    clock.lap("decode");
    let links = messages
        .iter()
        .enumerate()
        .map(|(j, m)| LinkReport {
            link: j + 1,
            bits: m.bits.len(),
            bits_per_symbol: m.bits.len() as f64 / n as f64,
            rate_limit: match rates.get(j) {
                crate::rate_region::Rate::Finite(r) => Some(r + delta),
                crate::rate_region::Rate::Unbounded => None,
            },
        })
        .collect::<Vec<_>>();
    Ok(SessionReport {
        mode: "statistical".into(),
        k,
        n,
        seed,
        total_bits: links.iter().map(|l| l.bits).sum(),
        links,
        success,
        detail,
        events,
        timings: clock.phases,
    })
}

fn combinatorial(
    relation: &RelationFile,
    tuple_index: Option<usize>,
    rates: &[usize],
    slack: Option<f64>,
    seed: u64,
) -> Result<SessionReport, SimError> {
    let mut clock = Clock::new();
    let mut events = Vec::new();
    let sur = ComplexitySurrogate::new(CandidateRelation::from_file(relation.clone())?);
    let rel = sur.relation();
    let k = rel.k();
    let index = match tuple_index {
        Some(i) if i < rel.len() => i,
        Some(i) => {
            return Err(SimError::InvalidConfig(format!(
                "tuple_index {i} but the relation has {} tuples",
                rel.len()
            )))
        }
        None => (mix(seed, tag::LOOKUP, 0) % rel.len() as u64) as usize,
    };
    let point = rel.tuple_bits(index);
    for (j, a) in point.iter().take(k).enumerate() {
        events.push(Event::SourceEmit {
            source: j + 1,
            symbols: a.len(),
            bits: a.len(),
            block: a.clone(),
        });
    }
    clock.lap("lookup");
    let n = rel.total_width();
    let slack = slack.unwrap_or_else(|| default_slack(n));
    let code = fork_code_construct(&sur, &point, rates, seed, slack)?;
    let senders: Vec<Sender> = code
        .extractors
        .iter()
        .enumerate()
        .map(|(j, e)| Sender::Fingerprint {
            source: j,
            extractor: e.clone(),
        })
        .collect();
    let messages = transmit(&senders, &point[..k], &mut events)?;
    clock.lap("encode");
    events.push(Event::DecodeAttempt {
        messages: k,
        search_bits: 0,
    });
    let codewords: Vec<Bits> = messages.iter().map(|m| m.bits.clone()).collect();
    let b = rel.b_index().map(|c| &point[c]);
    let found = decode_codewords(&sur, b, &codewords, &code.extractors)?;
    let success = found.len() == 1 && found[0] == point[..k];
    let detail = match found.len() {
        0 => "no tuple matches the codewords".to_string(),
        1 if success => "decoded tuple equals the source tuple".to_string(),
        1 => "decoded tuple differs from the source tuple".to_string(),
        c => format!("{c} tuples match the codewords"),
    };
    events.push(Event::DecodeResult {
        success,
        candidates: found.len() as u64,
        detail: detail.clone(),
    });
    clock.lap("decode");
    let links = messages
        .iter()
        .enumerate()
        .map(|(j, m)| LinkReport {
            link: j + 1,
            bits: m.bits.len(),
            bits_per_symbol: m.bits.len() as f64 / rel.width(j).max(1) as f64,
            rate_limit: Some(rates[j] as f64),
        })
        .collect::<Vec<_>>();
    Ok(SessionReport {
        mode: "combinatorial".into(),
        k,
        n,
        seed,
        total_bits: links.iter().map(|l| l.bits).sum(),
        links,
        success,
        detail,
        events,
        timings: clock.phases,
    })
}

pub fn run_session(config: &NetworkConfig) -> Result<SessionReport, SimError> {
    match config {
        NetworkConfig::Statistical {
            spec,
            rates,
            delta,
            n,
            seed,
            budget,
        } => statistical(spec, rates, *delta, *n, *seed, *budget),
        NetworkConfig::Combinatorial {
            relation,
            tuple_index,
            rates,
            slack,
            seed,
        } => combinatorial(relation, *tuple_index, rates, *slack, *seed),
    }
}

/// Writes the session log as JSON lines.
pub fn export_events<W: io::Write>(report: &SessionReport, mut w: W) -> io::Result<()> {
    for e in &report.events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_region::Rate;
    use crate::source_model::build_joint;

    fn dsbs() -> JointSourceSpec {
        build_joint(2, &[2, 2], &[0.375, 0.125, 0.125, 0.375]).unwrap()
    }

    #[test]
    fn raw_session_succeeds_at_one_bit_per_symbol() {
        let cfg = NetworkConfig::Statistical {
            spec: dsbs(),
            rates: RatePoint::new(vec![Rate::Unbounded, Rate::Unbounded]).unwrap(),
            delta: 0.0,
            n: 40,
            seed: 1,
            budget: 1,
        };
        let r = run_session(&cfg).unwrap();
        assert!(r.success);
        assert!(r.links.iter().all(|l| l.bits_per_symbol == 1.0));
    }

    #[test]
    fn log_accounts_for_every_bit() {
        let spec =
            build_joint(3, &[2, 2, 2], &[0.2, 0.05, 0.05, 0.1, 0.1, 0.05, 0.05, 0.4]).unwrap();
        let cfg = NetworkConfig::Statistical {
            spec,
            rates: RatePoint::finite(&[0.9, 0.9, 0.9]).unwrap(),
            delta: 0.05,
            n: 24,
            seed: 8,
            budget: 1 << 16,
        };
        let r = run_session(&cfg).unwrap();
        let transmits: Vec<(usize, usize)> = r
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Transmit { link, bits, .. } => Some((*link, *bits)),
                _ => None,
            })
            .collect();
        assert_eq!(
            transmits.iter().map(|t| t.0).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(transmits.iter().map(|t| t.1).sum::<usize>(), r.total_bits);
        for l in &r.links {
            assert!(l.bits_per_symbol <= l.rate_limit.unwrap() + 1e-12);
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        export_events(&r, &mut a).unwrap();
        export_events(&run_session(&cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn over_budget_is_an_error() {
        let cfg = NetworkConfig::Statistical {
            spec: dsbs(),
            rates: RatePoint::finite(&[0.5, 0.5]).unwrap(),
            delta: 0.0,
            n: 64,
            seed: 1,
            budget: 1 << 10,
        };
        assert!(matches!(
            run_session(&cfg),
            Err(SimError::Codec(CodecError::BudgetExceeded { .. }))
        ));
    }

    #[test]
    fn mode_fields_are_exclusive() {
        let bad = r#"{"mode":"statistical","relation":{"k":1,"tuples":[["0"]]},"rates":[1],"n":4}"#;
        assert!(serde_json::from_str::<NetworkConfig>(bad).is_err());
        let good = r#"{"mode":"combinatorial","relation":{"k":1,"tuples":[["0"],["1"]]},"rates":[1],"slack":0}"#;
        let cfg: NetworkConfig = serde_json::from_str(good).unwrap();
        let r = run_session(&cfg).unwrap();
        assert!(r.success);
        assert_eq!(r.total_bits, 1);
    }
}
