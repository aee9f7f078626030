//! Command-line entry point: trace validation and statistics, configuration
//! selection, leave-one-out evaluation, price-ratio sweeps, misclassification
//! robustness studies, and synthetic trace generation.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage or
//! unreadable input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use flora_core::evaluation::{
    evaluate, log_grid, misclassification_study, price_ratio_sweep, EvaluationError,
    SamplingParams,
};
use flora_core::pricing::{ingest_price_snapshot, model_from_ratio, PriceModel, PricingError};
use flora_core::report::{
    emit_aggregate_csv, emit_job_csv, emit_markdown, emit_robustness, emit_robustness_csv,
    emit_stats_csv, emit_stats_text, emit_sweep, emit_sweep_csv, EmitFormat,
};
use flora_core::selector::{
    filter_test_jobs, ingest_replay_map, rank_configurations, SelectionPolicy, SelectorError,
};
use flora_core::stats::{trace_statistics, StatsError};
use flora_core::synth::{generate_trace, ingest_scenario, NoiseParams, SynthError};
use flora_core::trace::{
    ingest_configs, ingest_trace, CloudConfig, ConfigId, JobClass, JobId, ProfilingTrace,
    Strictness, TraceError,
};

#[derive(Parser)]
#[command(
    name = "flora",
    version,
    about = "Cost-optimized cloud cluster configuration selection from shared profiling traces"
)]
struct Cli {
    /// Drop incomplete jobs with a warning instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    /// Bound the worker threads used for sweeps and robustness studies.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=512))]
    jobs: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a trace for completeness and consistency.
    Validate(ValidateArgs),
    /// Summarize the runtime and cost distributions over all trace cells.
    Stats(StatsArgs),
    /// Rank configurations for a job class and print the selection.
    Select(SelectArgs),
    /// Evaluate selection policies leave-one-algorithm-out.
    Evaluate(EvaluateArgs),
    /// Mean normalized cost across a grid of memory:core price ratios.
    Sweep(SweepArgs),
    /// Cost degradation when given jobs are deliberately misclassified.
    Robustness(RobustnessArgs),
    /// Generate a synthetic trace from a scenario file.
    Synth(SynthArgs),
}

fn default_data_path(name: &str) -> PathBuf {
    std::env::var_os("FLORA_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
        .join(name)
}

#[derive(Args)]
struct InputArgs {
    /// Profiling trace CSV
    /// (algorithm,dataset_gib,class,config_id,runtime_seconds,run_index).
    #[arg(long, default_value_os_t = default_data_path("trace.csv"))]
    trace: PathBuf,
    /// Configuration catalog CSV
    /// (config_id,instance_type,node_count,cores_per_node,mem_gib_per_node).
    #[arg(long, default_value_os_t = default_data_path("configs.csv"))]
    configs: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("price_source").required(true).args(["prices", "price_ratio"])))]
struct PriceArgs {
    /// Price snapshot JSON (linear rates or a per-instance-type catalog).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Build a linear price model from a memory:core hourly rate ratio.
    #[arg(long)]
    price_ratio: Option<f64>,
    /// Core-hour anchor rate used with --price-ratio.
    #[arg(long, default_value_t = 1.0)]
    anchor: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: InputArgs,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    price: PriceArgs,
    /// Directory for stats.csv, stats.txt, and the run manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    price: PriceArgs,
    /// Job class of the given job (A or B); omit to rank with all classes.
    #[arg(long)]
    class: Option<String>,
    /// Algorithm to exclude from the test jobs (the given job's own).
    #[arg(long)]
    algorithm: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    price: PriceArgs,
    /// Replay policy fixture, NAME=PATH with job_id,config_id rows; repeatable.
    #[arg(long, value_name = "NAME=PATH")]
    replay: Vec<String>,
    /// Policies to evaluate, comma-separated; defaults to all built-ins plus
    /// any replays.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Directory for report files and the run manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output format for --out-dir files: csv or markdown.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
#[command(group(ArgGroup::new("ratio_source").required(true).args(["ratios", "grid"])))]
struct SweepArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Explicit comma-separated ratio list.
    #[arg(long)]
    ratios: Option<String>,
    /// Log-spaced grid MIN:MAX:POINTS.
    #[arg(long)]
    grid: Option<String>,
    /// Core-hour anchor rate for the swept linear models.
    #[arg(long, default_value_t = 1.0)]
    anchor: f64,
    /// Replay policy fixture, NAME=PATH; repeatable.
    #[arg(long, value_name = "NAME=PATH")]
    replay: Vec<String>,
    /// Policies to sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Directory for the sweep table and the run manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output format for --out-dir files: csv, markdown, or plotdata.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct RobustnessArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    price: PriceArgs,
    /// Misclassification counts: comma-separated values and inclusive
    /// ranges, e.g. "0,1,2" or "0-18" or "0-3,6,9".
    #[arg(long, default_value = "0-18")]
    k_values: String,
    /// Seed for Monte Carlo subset sampling (always explicit).
    #[arg(long)]
    seed: u64,
    /// Evaluate all C(n,k) subsets when at most this many.
    #[arg(long, default_value_t = 20_000)]
    exhaustive_threshold: usize,
    /// Subsets drawn per k in Monte Carlo mode.
    #[arg(long, default_value_t = 2_000)]
    samples: usize,
    /// Directory for the robustness table and the run manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output format for --out-dir files: csv, markdown, or plotdata.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON with a `jobs` array of synthetic job parameters.
    #[arg(long)]
    scenario: PathBuf,
    /// Configuration catalog CSV.
    #[arg(long, default_value_os_t = default_data_path("configs.csv"))]
    configs: PathBuf,
    /// Relative sigma of multiplicative log-normal noise; 0 = exact model.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Noise seed; required when --sigma > 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output trace CSV path; the run manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
}

/// Everything needed to reproduce a run byte-for-byte.
#[derive(Serialize)]
struct RunManifest {
    subcommand: &'static str,
    version: &'static str,
    strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    configs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prices: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    price_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    anchor: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    replay: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policies: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exhaustive_threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
}

impl RunManifest {
    fn new(subcommand: &'static str, strict: bool) -> Self {
        RunManifest {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            strict,
            trace: None,
            configs: None,
            prices: None,
            price_ratio: None,
            anchor: None,
            replay: BTreeMap::new(),
            policies: None,
            ratios: None,
            k_values: None,
            seed: None,
            exhaustive_threshold: None,
            samples: None,
            sigma: None,
            scenario: None,
            format: None,
            out: None,
        }
    }

    fn with_inputs(mut self, inputs: &InputArgs) -> Self {
        self.trace = Some(display(&inputs.trace));
        self.configs = Some(display(&inputs.configs));
        self
    }

    fn with_prices(mut self, price: &PriceArgs) -> Self {
        self.prices = price.prices.as_deref().map(display);
        self.price_ratio = price.price_ratio;
        if price.price_ratio.is_some() {
            self.anchor = Some(price.anchor);
        }
        self
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

struct CliError {
    code: i32,
    error: anyhow::Error,
}

type CliResult<T> = Result<T, CliError>;

fn domain(error: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: 1,
        error: error.into(),
    }
}

fn usage(error: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: 2,
        error: error.into(),
    }
}

/// CSV/IO problems mean the input could not be read (exit 2); everything
/// else is a validation failure in readable data (exit 1).
fn trace_err(e: TraceError, path: &Path) -> CliError {
    let code = match &e {
        TraceError::Csv(_) | TraceError::Io(_) => 2,
        _ => 1,
    };
    CliError {
        code,
        error: anyhow::Error::new(e).context(format!("in {}", path.display())),
    }
}

fn pricing_err(e: PricingError, path: Option<&Path>) -> CliError {
    let code = match &e {
        PricingError::SnapshotParse(_) => 2,
        _ => 1,
    };
    let error = match path {
        Some(p) => anyhow::Error::new(e).context(format!("in {}", p.display())),
        None => anyhow::Error::new(e),
    };
    CliError { code, error }
}

fn selector_err(e: SelectorError) -> CliError {
    domain(e)
}

fn eval_err(e: EvaluationError) -> CliError {
    domain(e)
}

fn stats_err(e: StatsError) -> CliError {
    domain(e)
}

fn synth_err(e: SynthError, path: &Path) -> CliError {
    let code = match &e {
        SynthError::Json(_) => 2,
        SynthError::Trace(TraceError::Csv(_) | TraceError::Io(_)) => 2,
        _ => 1,
    };
    CliError {
        code,
        error: anyhow::Error::new(e).context(format!("in {}", path.display())),
    }
}

fn open(path: &Path) -> CliResult<fs::File> {
    fs::File::open(path).map_err(|e| usage(anyhow!("cannot read {}: {e}", path.display())))
}

fn load_configs(path: &Path) -> CliResult<BTreeMap<ConfigId, CloudConfig>> {
    ingest_configs(open(path)?).map_err(|e| trace_err(e, path))
}

impl InputArgs {
    fn load(&self) -> CliResult<ProfilingTrace> {
        let catalog = load_configs(&self.configs)?;
        ingest_trace(open(&self.trace)?, &catalog).map_err(|e| trace_err(e, &self.trace))
    }
}

impl PriceArgs {
    fn resolve(&self) -> CliResult<PriceModel> {
        match (&self.prices, self.price_ratio) {
            (Some(path), _) => {
                ingest_price_snapshot(open(path)?).map_err(|e| pricing_err(e, Some(path)))
            }
            (None, Some(ratio)) => {
                model_from_ratio(ratio, self.anchor).map_err(|e| pricing_err(e, None))
            }
            (None, None) => unreachable!("clap group requires a price source"),
        }
    }
}

fn parse_format(s: &str) -> CliResult<EmitFormat> {
    s.parse::<EmitFormat>().map_err(usage)
}

const BUILTIN_ORDER: [&str; 7] = [
    "flora", "fw1c", "max-mem", "max-cpu", "min-mem", "random", "min-cpu",
];

fn builtin_policy(name: &str) -> Option<SelectionPolicy> {
    match name {
        "flora" => Some(SelectionPolicy::Flora),
        "fw1c" => Some(SelectionPolicy::Fw1C),
        "min-cpu" => Some(SelectionPolicy::MinCpu),
        "max-cpu" => Some(SelectionPolicy::MaxCpu),
        "min-mem" => Some(SelectionPolicy::MinMem),
        "max-mem" => Some(SelectionPolicy::MaxMem),
        "random" => Some(SelectionPolicy::RandomExpectation),
        _ => None,
    }
}

fn parse_replays(
    specs: &[String],
) -> CliResult<BTreeMap<String, BTreeMap<JobId, ConfigId>>> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(anyhow!("--replay expects NAME=PATH, got {spec:?}")))?;
        if builtin_policy(name).is_some() {
            return Err(usage(anyhow!("replay name {name:?} shadows a built-in policy")));
        }
        let path = Path::new(path);
        let map = ingest_replay_map(open(path)?).map_err(|e| trace_err(e, path))?;
        if out.insert(name.to_owned(), map).is_some() {
            return Err(usage(anyhow!("duplicate replay name {name:?}")));
        }
    }
    Ok(out)
}

fn build_policies(
    requested: Option<&Vec<String>>,
    defaults: &[&str],
    replays: &BTreeMap<String, BTreeMap<JobId, ConfigId>>,
) -> CliResult<Vec<SelectionPolicy>> {
    let names: Vec<String> = match requested {
        Some(list) => list.clone(),
        None => defaults
            .iter()
            .map(|s| (*s).to_owned())
            .chain(replays.keys().cloned())
            .collect(),
    };
    names
        .iter()
        .map(|name| {
            builtin_policy(name)
                .or_else(|| {
                    replays.get(name).map(|selections| SelectionPolicy::Replay {
                        name: name.clone(),
                        selections: selections.clone(),
                    })
                })
                .ok_or_else(|| {
                    usage(anyhow!(
                        "unknown policy {name:?}; built-ins: {}",
                        BUILTIN_ORDER.join(", ")
                    ))
                })
        })
        .collect()
}

fn parse_ratio_list(spec: &str) -> CliResult<Vec<f64>> {
    spec.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| usage(anyhow!("invalid ratio {part:?}: {e}")))
        })
        .collect()
}

fn parse_grid_spec(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [min, max, points] = parts.as_slice() else {
        return Err(usage(anyhow!("--grid expects MIN:MAX:POINTS, got {spec:?}")));
    };
    let min: f64 = min
        .parse()
        .map_err(|e| usage(anyhow!("invalid grid minimum {min:?}: {e}")))?;
    let max: f64 = max
        .parse()
        .map_err(|e| usage(anyhow!("invalid grid maximum {max:?}: {e}")))?;
    let points: usize = points
        .parse()
        .map_err(|e| usage(anyhow!("invalid grid point count {points:?}: {e}")))?;
    log_grid(min, max, points).map_err(eval_err)
}

fn parse_k_values(spec: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a
                .trim()
                .parse()
                .map_err(|e| usage(anyhow!("invalid k range start {a:?}: {e}")))?;
            let b: usize = b
                .trim()
                .parse()
                .map_err(|e| usage(anyhow!("invalid k range end {b:?}: {e}")))?;
            if b < a {
                return Err(usage(anyhow!("empty k range {part:?}")));
            }
            out.extend(a..=b);
        } else {
            out.push(
                part.parse()
                    .map_err(|e| usage(anyhow!("invalid k value {part:?}: {e}")))?,
            );
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Writes result files plus manifest.json into the output directory.
fn write_run(dir: &Path, files: &[(&str, &str)], manifest: &RunManifest) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| domain(anyhow!("cannot create {}: {e}", dir.display())))?;
    for (name, content) in files {
        fs::write(dir.join(name), content)
            .map_err(|e| domain(anyhow!("cannot write {}: {e}", dir.join(name).display())))?;
    }
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    fs::write(dir.join("manifest.json"), json).map_err(|e| {
        domain(anyhow!("cannot write {}: {e}", dir.join("manifest.json").display()))
    })?;
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    let trace = args.inputs.load()?;
    if trace.jobs().is_empty() {
        return Err(domain(anyhow!("trace contains no jobs")));
    }
    let missing = trace.missing_cells();
    if !missing.is_empty() {
        for (job, config) in missing.iter().take(20) {
            eprintln!("missing cell: job {job}, config #{config}");
        }
        if missing.len() > 20 {
            eprintln!("... and {} more", missing.len() - 20);
        }
        return Err(domain(anyhow!(
            "trace is incomplete: {} missing cell(s)",
            missing.len()
        )));
    }
    println!(
        "{} jobs, {} configs, {} cells",
        trace.jobs().len(),
        trace.configs().len(),
        trace.aggregated_runtime().len()
    );
    Ok(())
}

fn cmd_stats(args: &StatsArgs, strict: bool) -> CliResult<()> {
    let trace = args.inputs.load()?;
    let prices = args.price.resolve()?;
    let stats = trace_statistics(&trace, &prices).map_err(stats_err)?;
    print!("{}", emit_stats_text(&stats));
    if let Some(dir) = &args.out_dir {
        let manifest = RunManifest::new("stats", strict)
            .with_inputs(&args.inputs)
            .with_prices(&args.price);
        let csv = emit_stats_csv(&stats);
        let text = emit_stats_text(&stats);
        write_run(dir, &[("stats.csv", &csv), ("stats.txt", &text)], &manifest)?;
    }
    Ok(())
}

fn cmd_select(args: &SelectArgs, strictness: Strictness) -> CliResult<()> {
    let trace = args.inputs.load()?;
    let prices = args.price.resolve()?;
    let class: Option<JobClass> = args
        .class
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(|e: String| usage(anyhow!(e)))?;
    let filtered =
        filter_test_jobs(&trace, class, args.algorithm.as_deref()).map_err(selector_err)?;
    let ranking = rank_configurations(&filtered, &prices, strictness).map_err(selector_err)?;
    println!("selected: #{}", ranking.selected());
    println!("test jobs: {}", ranking.test_jobs);
    println!("rank  config  score");
    for (i, entry) in ranking.entries.iter().enumerate() {
        println!(
            "{:>4}  #{}  {} ({:.3})",
            i + 1,
            entry.config_id,
            entry.score,
            entry.score
        );
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, strictness: Strictness, strict: bool) -> CliResult<()> {
    let format = parse_format(&args.format)?;
    if format == EmitFormat::Plotdata {
        return Err(usage(anyhow!(
            "format plotdata is not defined for per-job evaluation reports; use csv or markdown"
        )));
    }
    let trace = args.inputs.load()?;
    let prices = args.price.resolve()?;
    let replays = parse_replays(&args.replay)?;
    let policies = build_policies(args.policies.as_ref(), &BUILTIN_ORDER, &replays)?;
    let report = evaluate(&trace, &prices, &policies, strictness).map_err(eval_err)?;
    for notice in &report.notices {
        eprintln!("note: {notice}");
    }
    print!("{}", emit_aggregate_csv(&report));
    if let Some(dir) = &args.out_dir {
        let mut manifest = RunManifest::new("evaluate", strict)
            .with_inputs(&args.inputs)
            .with_prices(&args.price);
        manifest.replay = replay_manifest(&args.replay);
        manifest.policies = Some(policies.iter().map(SelectionPolicy::name).collect());
        manifest.format = Some(args.format.clone());
        let files: Vec<(&str, String)> = match format {
            EmitFormat::Csv => vec![
                ("report.csv", emit_job_csv(&report)),
                ("aggregate.csv", emit_aggregate_csv(&report)),
            ],
            EmitFormat::Markdown => vec![("report.md", emit_markdown(&report))],
            EmitFormat::Plotdata => unreachable!("rejected above"),
        };
        let refs: Vec<(&str, &str)> = files.iter().map(|(n, c)| (*n, c.as_str())).collect();
        write_run(dir, &refs, &manifest)?;
    }
    Ok(())
}

fn replay_manifest(specs: &[String]) -> BTreeMap<String, String> {
    specs
        .iter()
        .filter_map(|s| s.split_once('='))
        .map(|(n, p)| (n.to_owned(), p.to_owned()))
        .collect()
}

fn cmd_sweep(args: &SweepArgs, strictness: Strictness, strict: bool) -> CliResult<()> {
    let format = parse_format(&args.format)?;
    let trace = args.inputs.load()?;
    let ratios = match (&args.ratios, &args.grid) {
        (Some(list), _) => parse_ratio_list(list)?,
        (None, Some(grid)) => parse_grid_spec(grid)?,
        (None, None) => unreachable!("clap group requires a ratio source"),
    };
    let replays = parse_replays(&args.replay)?;
    let policies = build_policies(
        args.policies.as_ref(),
        &["flora", "fw1c", "random"],
        &replays,
    )?;
    let table =
        price_ratio_sweep(&trace, &ratios, args.anchor, &policies, strictness).map_err(eval_err)?;
    print!("{}", emit_sweep_csv(&table));
    if let Some(dir) = &args.out_dir {
        let mut manifest = RunManifest::new("sweep", strict).with_inputs(&args.inputs);
        manifest.ratios = Some(ratios.clone());
        manifest.anchor = Some(args.anchor);
        manifest.replay = replay_manifest(&args.replay);
        manifest.policies = Some(table.policies.clone());
        manifest.format = Some(args.format.clone());
        let name = match format {
            EmitFormat::Csv => "sweep.csv",
            EmitFormat::Markdown => "sweep.md",
            EmitFormat::Plotdata => "sweep_plotdata.csv",
        };
        let content = emit_sweep(&table, format);
        write_run(dir, &[(name, &content)], &manifest)?;
    }
    Ok(())
}

fn cmd_robustness(args: &RobustnessArgs, strictness: Strictness, strict: bool) -> CliResult<()> {
    let format = parse_format(&args.format)?;
    let trace = args.inputs.load()?;
    let prices = args.price.resolve()?;
    let k_values = parse_k_values(&args.k_values)?;
    let sampling = SamplingParams {
        exhaustive_threshold: args.exhaustive_threshold,
        samples: args.samples,
        seed: args.seed,
    };
    let table = misclassification_study(&trace, &prices, &k_values, sampling, strictness)
        .map_err(eval_err)?;
    // Flat reference lines: these policies ignore the class label, so
    // misclassification cannot move them.
    let reference_report = evaluate(
        &trace,
        &prices,
        &[SelectionPolicy::Fw1C, SelectionPolicy::RandomExpectation],
        strictness,
    )
    .map_err(eval_err)?;
    let references: BTreeMap<String, f64> = reference_report
        .aggregate
        .iter()
        .map(|a| (a.policy.clone(), a.mean_cost))
        .collect();
    print!("{}", emit_robustness_csv(&table));
    if let Some(dir) = &args.out_dir {
        let mut manifest = RunManifest::new("robustness", strict)
            .with_inputs(&args.inputs)
            .with_prices(&args.price);
        manifest.k_values = Some(k_values.clone());
        manifest.seed = Some(args.seed);
        manifest.exhaustive_threshold = Some(args.exhaustive_threshold);
        manifest.samples = Some(args.samples);
        manifest.format = Some(args.format.clone());
        let name = match format {
            EmitFormat::Csv => "robustness.csv",
            EmitFormat::Markdown => "robustness.md",
            EmitFormat::Plotdata => "robustness_plotdata.csv",
        };
        let content = emit_robustness(&table, &references, format);
        write_run(dir, &[(name, &content)], &manifest)?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, strict: bool) -> CliResult<()> {
    if args.sigma > 0.0 && args.seed.is_none() {
        return Err(usage(anyhow!("--seed is required when --sigma > 0")));
    }
    let params =
        ingest_scenario(open(&args.scenario)?).map_err(|e| synth_err(e, &args.scenario))?;
    let catalog = load_configs(&args.configs)?;
    let noise = NoiseParams {
        relative_sigma: args.sigma,
        seed: args.seed.unwrap_or(0),
    };
    let trace =
        generate_trace(&params, &catalog, noise).map_err(|e| synth_err(e, &args.scenario))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| domain(anyhow!("cannot create {}: {e}", parent.display())))?;
    }
    let mut buf = Vec::new();
    trace
        .write_csv(&mut buf)
        .map_err(|e| trace_err(e, &args.out))?;
    fs::write(&args.out, &buf)
        .map_err(|e| domain(anyhow!("cannot write {}: {e}", args.out.display())))?;

    let mut manifest = RunManifest::new("synth", strict);
    manifest.scenario = Some(display(&args.scenario));
    manifest.configs = Some(display(&args.configs));
    manifest.sigma = Some(args.sigma);
    manifest.seed = args.seed;
    manifest.out = Some(display(&args.out));
    let dir = args.out.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(dir.join("manifest.json"), json).map_err(|e| {
        domain(anyhow!("cannot write {}: {e}", dir.join("manifest.json").display()))
    })?;

    println!(
        "wrote {} jobs x {} configs to {}",
        trace.jobs().len(),
        trace.configs().len(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let strictness = if cli.lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    let strict = !cli.lenient;
    match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Stats(args) => cmd_stats(args, strict),
        Command::Select(args) => cmd_select(args, strictness),
        Command::Evaluate(args) => cmd_evaluate(args, strictness, strict),
        Command::Sweep(args) => cmd_sweep(args, strictness, strict),
        Command::Robustness(args) => cmd_robustness(args, strictness, strict),
        Command::Synth(args) => cmd_synth(args, strict),
    }
}

fn main() {
    // Die silently on a closed pipe (e.g. `flora select | head`) like other
    // line-oriented tools, instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        // Ignore failure: the global pool can only be configured once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global();
    }
    if let Err(e) = run(&cli) {
        eprintln!("error: {:#}", e.error);
        std::process::exit(e.code);
    }
}
