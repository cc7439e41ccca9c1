//! The `forkcode` command line.
//!
//! Exit codes: 0 success, 2 bad input, 3 decoder budget exceeded, 4 fork-code
//! construction failed. Output files are written only on exit 0, each one
//! through a temporary file and an atomic rename.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::binning_codec::{
    run_achievability, write_achievability_csv, CodecError, ExperimentPlan, RowOutcome,
};
use crate::complexity_lab::{
    default_slack, fork_code_construct, necessity_audit, verify_star, CandidateRelation,
    ComplexitySurrogate, LabError, NecessityReport, RelationFile, StarReport, TraceRecord,
};
use crate::fork_sim::{export_events, run_session, NetworkConfig, SimError};
use crate::rate_region::{build_region, CornerPoint, RateConstraint};
use crate::seed::{mix, tag};
use crate::source_model::JointSourceSpec;

#[derive(Debug, Parser)]
#[command(
    name = "forkcode",
    version,
    about = "Source coding experiments for the fork network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Print a summary and phase timings to standard error.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate region of a joint source: constraints and corner points.
    Region(RegionArgs),
    /// Monte Carlo error rates of random-binning codes.
    Achievability(AchievabilityArgs),
    /// Build and audit a fork code on one tuple of a relation.
    Fingerprint(FingerprintArgs),
    /// One end-to-end session with an event log.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Output {
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the format inferred from the extension of `--out`.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    /// Joint source spec (JSON).
    pub spec: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct AchievabilityArgs {
    /// Experiment plan (JSON).
    pub plan: PathBuf,
    /// Master seed; replaces the plan's.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Block lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    /// Relation file (JSON).
    pub relation: PathBuf,
    /// Codeword lengths in bits, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rates: Vec<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Defaults to `2·⌈log2 n⌉ + 16` for total input length `n`.
    #[arg(long)]
    pub slack: Option<f64>,
    /// Tuple to encode; drawn from the seed when absent.
    #[arg(long)]
    pub tuple: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Network config (JSON).
    pub config: PathBuf,
    /// Replaces the config's seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub slack: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        let code = if matches!(e, CodecError::BudgetExceeded { .. }) {
            3
        } else {
            2
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        let code = match e {
            LabError::BudgetExceeded { .. }
            | LabError::Codec(CodecError::BudgetExceeded { .. }) => 3,
            LabError::PreconditionViolated { .. } | LabError::ConstructionFailed { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Codec(e) => e.into(),
            SimError::Lab(e) => e.into(),
            other => Failure::input(other.to_string()),
        }
    }
}

type Files = Vec<(PathBuf, Vec<u8>)>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

fn format_of(output: &Output) -> Result<Format, Failure> {
    if let Some(f) = output.format {
        return Ok(f);
    }
    match output.out.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => Ok(Format::Csv),
        Some(e) if e.eq_ignore_ascii_case("json") => Ok(Format::Json),
        _ => Err(Failure::input(format!(
            "cannot infer a format from {}; pass --format",
            output.out.display()
        ))),
    }
}

/// `out.csv` → `out.<suffix>`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn write_all_atomic(files: &Files) -> Result<(), Failure> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let io = |e: std::io::Error| Failure::input(format!("{}: {e}", path.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .map_err(|e| Failure::input(format!("{}: {}", path.display(), e.error)))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RegionJson<'a> {
    k: usize,
    constraints: &'a [RateConstraint],
    corner_points: &'a [CornerPoint],
    min_sum_rate: f64,
}

fn cmd_region(args: &RegionArgs, verbose: u8) -> Result<Files, Failure> {
    let format = format_of(&args.output)?;
    let spec: JointSourceSpec = read_json(&args.spec)?;
    let region = build_region(&spec).map_err(|e| Failure::input(e.to_string()))?;
    let corners = region
        .corner_points()
        .map_err(|e| Failure::input(e.to_string()))?;
    let summary = RegionJson {
        k: region.k(),
        constraints: region.constraints(),
        corner_points: &corners,
        min_sum_rate: region.min_sum_rate(),
    };
    if verbose > 0 {
        eprintln!(
            "{} constraints, {} corner points",
            region.constraints().len(),
            corners.len()
        );
    }
    let out = &args.output.out;
    Ok(match format {
        Format::Json => vec![(out.clone(), to_json(&summary))],
        Format::Csv => {
            let mut csv = Vec::new();
            region
                .write_constraints_csv(&mut csv)
                .map_err(|e| Failure::input(e.to_string()))?;
            vec![
                (out.clone(), csv),
                (sidecar(out, "corners.json"), to_json(&summary)),
            ]
        }
    })
}

fn cmd_achievability(args: &AchievabilityArgs, verbose: u8) -> Result<Files, Failure> {
    let format = format_of(&args.output)?;
    let mut plan: ExperimentPlan = read_json(&args.plan)?;
    plan.master_seed = args.seed;
    if let Some(t) = args.trials {
        plan.trials = t;
    }
    if let Some(n) = &args.n {
        plan.n_list = n.clone();
    }
    if let Some(d) = args.delta {
        plan.delta = d;
    }
    if let Some(b) = args.budget {
        plan.budget = b;
    }
    let rows = run_achievability(&plan)?;
    if verbose > 0 {
        for r in &rows {
            match r.error_rate() {
                Some(e) => eprintln!("n = {}: error rate {e:.4}", r.n),
                None => eprintln!("n = {}: over budget", r.n),
            }
        }
    }
    if !rows.is_empty()
        && rows
            .iter()
            .all(|r| matches!(r.outcome, RowOutcome::BudgetExceeded))
    {
        return Err(Failure {
            code: 3,
            message: format!("every row exceeds the budget of {}", plan.budget),
        });
    }
    let bytes = match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut csv = Vec::new();
            write_achievability_csv(&rows, plan.spec.k(), &mut csv)
                .map_err(|e| Failure::input(e.to_string()))?;
            csv
        }
    };
    Ok(vec![(args.output.out.clone(), bytes)])
}

#[derive(Serialize)]
struct FingerprintJson {
    tuple_index: usize,
    master_seed: u64,
    slack: f64,
    star: StarReport,
    necessity: NecessityReport,
}

fn cmd_fingerprint(args: &FingerprintArgs, verbose: u8) -> Result<Files, Failure> {
    if format_of(&args.output)? != Format::Json {
        return Err(Failure::input("fingerprint writes JSON only"));
    }
    let file: RelationFile = read_json(&args.relation)?;
    let sur = ComplexitySurrogate::new(CandidateRelation::from_file(file)?);
    let rel = sur.relation();
    let tuple_index = match args.tuple {
        Some(i) if i < rel.len() => i,
        Some(i) => {
            return Err(Failure::input(format!(
                "--tuple {i} but the relation has {} tuples",
                rel.len()
            )))
        }
        None => (mix(args.seed, tag::LOOKUP, 0) % rel.len() as u64) as usize,
    };
    let point = rel.tuple_bits(tuple_index);
    let slack = args
        .slack
        .unwrap_or_else(|| default_slack(rel.total_width()));
    let code = fork_code_construct(&sur, &point, &args.rates, args.seed, slack)?;
    let star = verify_star(
        &sur,
        &point,
        &code.codewords,
        &code.extractors,
        &args.rates,
        slack,
    )?;
    let necessity = necessity_audit(&sur, &star, slack)?;
    if verbose > 0 {
        for t in &code.trace {
            eprintln!(
                "level {}: {} bits after {} retries",
                t.level, t.fingerprint_len, t.retries
            );
        }
    }
    if !star.passed || !necessity.passed {
        return Err(Failure {
            code: 4,
            message: format!(
                "audit failed: star clauses {}, necessity {}",
                star.passed, necessity.passed
            ),
        });
    }
    let mut trace = Vec::new();
    for t in &code.trace {
        serde_json::to_writer(&mut trace, t as &TraceRecord).expect("trace serializes");
        trace.push(b'\n');
    }
    let out = &args.output.out;
    let report = FingerprintJson {
        tuple_index,
        master_seed: args.seed,
        slack,
        star,
        necessity,
    };
    Ok(vec![
        (out.clone(), to_json(&report)),
        (sidecar(out, "trace.jsonl"), trace),
    ])
}

fn cmd_simulate(args: &SimulateArgs, verbose: u8) -> Result<Files, Failure> {
    let format = format_of(&args.output)?;
    let mut config: NetworkConfig = read_json(&args.config)?;
    config.set_seed(args.seed);
    match &mut config {
        NetworkConfig::Statistical {
            n, delta, budget, ..
        } => {
            if args.slack.is_some() {
                return Err(Failure::input("--slack applies to combinatorial configs"));
            }
            if let Some(v) = args.n {
                *n = v;
            }
            if let Some(v) = args.delta {
                *delta = v;
            }
            if let Some(v) = args.budget {
                *budget = v;
            }
        }
        NetworkConfig::Combinatorial { slack, .. } => {
            if args.n.is_some() || args.delta.is_some() || args.budget.is_some() {
                return Err(Failure::input(
                    "--n, --delta and --budget apply to statistical configs",
                ));
            }
            if let Some(v) = args.slack {
                *slack = Some(v);
            }
        }
    }
    let report = run_session(&config)?;
    if verbose > 0 {
        eprintln!(
            "{} bits sent, success = {}",
            report.total_bits, report.success
        );
        for (phase, t) in &report.timings {
            eprintln!("{phase}: {:.3} ms", t.as_secs_f64() * 1e3);
        }
    }
    let bytes = match format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Failure::input(e.to_string());
            w.write_record(["link", "bits", "bits_per_symbol", "rate_limit"])
                .map_err(io)?;
            for l in &report.links {
                let limit = l.rate_limit.map(|r| format!("{r:.6}")).unwrap_or_default();
                w.write_record([
                    l.link.to_string(),
                    l.bits.to_string(),
                    format!("{:.6}", l.bits_per_symbol),
                    limit,
                ])
                .map_err(io)?;
            }
            w.into_inner().map_err(|e| Failure::input(e.to_string()))?
        }
    };
    let mut events = Vec::new();
    export_events(&report, &mut events).map_err(|e| Failure::input(e.to_string()))?;
    let out = &args.output.out;
    Ok(vec![
        (out.clone(), bytes),
        (sidecar(out, "events.jsonl"), events),
    ])
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let files = match &cli.command {
        Command::Region(a) => cmd_region(a, cli.verbose),
        Command::Achievability(a) => cmd_achievability(a, cli.verbose),
        Command::Fingerprint(a) => cmd_fingerprint(a, cli.verbose),
        Command::Simulate(a) => cmd_simulate(a, cli.verbose),
    };
    match files.and_then(|f| write_all_atomic(&f)) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Parses `args` (program name first) and runs them.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
