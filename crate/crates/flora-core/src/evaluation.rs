//! Leave-one-out evaluation of selection policies with normalized metrics,
//! plus the price-ratio sweep and the misclassification robustness study.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::pricing::{execution_cost, model_from_ratio, PriceModel, PricingError};
use crate::selector::{
    filter_test_jobs, rank_configurations, select, SelectionPolicy, SelectorError,
};
use crate::trace::{ConfigId, JobClass, JobId, ProfilingTrace, Strictness, TraceError};

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("misclassification count k={k} out of range 0..={n_jobs}")]
    KOutOfRange { k: usize, n_jobs: usize },
    #[error("ratio grid must be non-empty and strictly positive")]
    InvalidRatios,
    #[error("invalid sampling parameters: {reason}")]
    InvalidSampling { reason: String },
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// One policy's outcome for one given job. Metrics are normalized to the
/// job's own best option over the full configuration row, so 1.0 is optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub policy: String,
    pub job_id: JobId,
    /// None for the analytic random expectation, which picks no single config.
    pub selected_config_id: Option<ConfigId>,
    pub normalized_cost: f64,
    pub normalized_runtime: f64,
}

/// Unweighted means over the jobs a policy was evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAggregate {
    pub policy: String,
    pub mean_cost: f64,
    pub mean_runtime: f64,
    /// Number of jobs behind the means; replay policies may cover fewer jobs
    /// than the trace holds.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_job: Vec<JobResult>,
    pub aggregate: Vec<PolicyAggregate>,
    /// Jobs in the evaluated trace; policies may cover fewer (replay gaps).
    pub jobs_evaluated: usize,
    pub price_model_as_of: Option<String>,
    pub notices: Vec<String>,
}

impl EvaluationReport {
    pub fn aggregate_for(&self, policy: &str) -> Option<&PolicyAggregate> {
        self.aggregate.iter().find(|a| a.policy == policy)
    }
}

/// Sequential left-to-right mean; the shared summation path that keeps the
/// robustness study's k=0 row bit-identical to the evaluation report.
fn mean(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    sum / values.len() as f64
}

/// Per-config normalized (cost, runtime) for one job's full trace row.
struct RowNorm {
    norm: BTreeMap<ConfigId, (f64, f64)>,
}

fn row_norms(
    trace: &ProfilingTrace,
    prices: &PriceModel,
) -> Result<BTreeMap<JobId, RowNorm>, EvaluationError> {
    let mut rows = BTreeMap::new();
    for job_id in trace.jobs().keys() {
        let mut costs: BTreeMap<ConfigId, (f64, f64)> = BTreeMap::new();
        for (config_id, config) in trace.configs() {
            let runtime = trace
                .runtime(job_id, *config_id)
                .expect("normalization requires complete rows");
            let cost = execution_cost(runtime, config, prices)?;
            costs.insert(*config_id, (cost, runtime));
        }
        let min_cost = costs.values().map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
        let min_runtime = costs.values().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
        if min_cost <= 0.0 {
            return Err(SelectorError::DegeneratePrices.into());
        }
        let norm = costs
            .into_iter()
            .map(|(id, (c, r))| (id, (c / min_cost, r / min_runtime)))
            .collect();
        rows.insert(job_id.clone(), RowNorm { norm });
    }
    Ok(rows)
}

/// Flora's selection and normalized metrics for one job, with the class used
/// for test-job filtering passed explicitly so the robustness study can flip
/// it while the trace keeps true labels.
fn flora_point(
    trace: &ProfilingTrace,
    prices: &PriceModel,
    norms: &BTreeMap<JobId, RowNorm>,
    job_id: &JobId,
    effective_class: JobClass,
    strictness: Strictness,
) -> Result<(ConfigId, f64, f64), EvaluationError> {
    let spec = &trace.jobs()[job_id];
    let test_jobs = filter_test_jobs(trace, Some(effective_class), Some(&spec.algorithm))?;
    let selected = rank_configurations(&test_jobs, prices, strictness)?.selected();
    let (nc, nr) = norms[job_id].norm[&selected];
    Ok((selected, nc, nr))
}

/// Strict mode demands a complete trace; lenient mode evaluates the complete
/// subset and reports what was dropped.
fn effective_trace(
    trace: &ProfilingTrace,
    strictness: Strictness,
    notices: &mut Vec<String>,
) -> Result<ProfilingTrace, EvaluationError> {
    match strictness {
        Strictness::Strict => {
            trace.require_complete()?;
            Ok(trace.clone())
        }
        Strictness::Lenient => {
            let (complete, dropped) = trace.drop_incomplete_jobs();
            if !dropped.is_empty() {
                let names = dropped.iter().map(ToString::to_string).join(", ");
                log::warn!("dropping incomplete jobs from evaluation: {names}");
                notices.push(format!("dropped incomplete jobs: {names}"));
            }
            if complete.jobs().is_empty() {
                return Err(SelectorError::NoApplicableTestJobs.into());
            }
            Ok(complete)
        }
    }
}

/// Evaluates each policy on every job of the trace under a leave-one-
/// algorithm-out protocol and reports normalized cost/runtime per job plus
/// unweighted means. Replay policies skip uncovered jobs with a notice.
pub fn evaluate(
    trace: &ProfilingTrace,
    prices: &PriceModel,
    policies: &[SelectionPolicy],
    strictness: Strictness,
) -> Result<EvaluationReport, EvaluationError> {
    let mut notices = Vec::new();
    let trace = effective_trace(trace, strictness, &mut notices)?;
    let norms = row_norms(&trace, prices)?;

    let mut per_job = Vec::new();
    let mut aggregate = Vec::new();

    for policy in policies {
        let name = policy.name();
        let mut costs = Vec::new();
        let mut runtimes = Vec::new();
        let mut skipped: Vec<&JobId> = Vec::new();

        for (job_id, spec) in trace.jobs() {
            let (selected, nc, nr) = match policy {
                SelectionPolicy::Flora => {
                    let (sel, nc, nr) =
                        flora_point(&trace, prices, &norms, job_id, spec.job_class, strictness)?;
                    (Some(sel), nc, nr)
                }
                SelectionPolicy::RandomExpectation => {
                    let row = &norms[job_id].norm;
                    let ncs: Vec<f64> = row.values().map(|(c, _)| *c).collect();
                    let nrs: Vec<f64> = row.values().map(|(_, r)| *r).collect();
                    (None, mean(&ncs), mean(&nrs))
                }
                SelectionPolicy::Replay { selections, .. } => {
                    if !selections.contains_key(job_id) {
                        skipped.push(job_id);
                        continue;
                    }
                    let sel =
                        select(policy, spec, &trace, prices, trace.configs(), strictness)?;
                    let (nc, nr) = norms[job_id].norm[&sel];
                    (Some(sel), nc, nr)
                }
                _ => {
                    let sel =
                        select(policy, spec, &trace, prices, trace.configs(), strictness)?;
                    let (nc, nr) = norms[job_id].norm[&sel];
                    (Some(sel), nc, nr)
                }
            };
            costs.push(nc);
            runtimes.push(nr);
            per_job.push(JobResult {
                policy: name.clone(),
                job_id: job_id.clone(),
                selected_config_id: selected,
                normalized_cost: nc,
                normalized_runtime: nr,
            });
        }

        if !skipped.is_empty() {
            notices.push(format!(
                "{name}: skipped {} of {} jobs with no recorded selection: {}",
                skipped.len(),
                trace.jobs().len(),
                skipped.iter().map(ToString::to_string).join(", ")
            ));
        }
        if costs.is_empty() {
            notices.push(format!("{name}: no jobs evaluated"));
            continue;
        }
        aggregate.push(PolicyAggregate {
            policy: name,
            mean_cost: mean(&costs),
            mean_runtime: mean(&runtimes),
            jobs: costs.len(),
        });
    }

    Ok(EvaluationReport {
        per_job,
        aggregate,
        jobs_evaluated: trace.jobs().len(),
        price_model_as_of: prices.as_of().map(ToOwned::to_owned),
        notices,
    })
}

/// Mean normalized cost per policy at one memory:core price ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub mean_cost: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Policy names in evaluation order (column order for emission).
    pub policies: Vec<String>,
    /// Rows sorted ascending by ratio.
    pub rows: Vec<SweepRow>,
}

/// Runs one evaluation per price ratio, holding the trace fixed and varying
/// only the linear price model's memory:core rate ratio. Normalized costs
/// depend on the ratio alone, not the anchor scale.
pub fn price_ratio_sweep(
    trace: &ProfilingTrace,
    ratios: &[f64],
    anchor: f64,
    policies: &[SelectionPolicy],
    strictness: Strictness,
) -> Result<SweepTable, EvaluationError> {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(EvaluationError::InvalidRatios);
    }
    // Ratios evaluate independently; parallel assembly stays deterministic
    // because results collect in input order before the sort.
    let results: Vec<Result<SweepRow, EvaluationError>> = ratios
        .par_iter()
        .map(|&ratio| {
            let prices = model_from_ratio(ratio, anchor)?;
            let report = evaluate(trace, &prices, policies, strictness)?;
            let mean_cost = report
                .aggregate
                .iter()
                .map(|a| (a.policy.clone(), a.mean_cost))
                .collect();
            Ok(SweepRow { ratio, mean_cost })
        })
        .collect();
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    Ok(SweepTable {
        policies: policies.iter().map(SelectionPolicy::name).collect(),
        rows,
    })
}

/// Geometric grid from `min` to `max` inclusive with `points` entries.
/// Endpoints are exact; interior points are log-spaced.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>, EvaluationError> {
    if !(min.is_finite() && max.is_finite()) || min <= 0.0 || max <= min || points < 2 {
        return Err(EvaluationError::InvalidRatios);
    }
    let (ln_min, ln_max) = (min.ln(), max.ln());
    let step = (ln_max - ln_min) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points)
        .map(|i| (ln_min + step * i as f64).exp())
        .collect();
    grid[0] = min;
    grid[points - 1] = max;
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMethod {
    Exhaustive,
    Sampled,
}

impl std::fmt::Display for SubsetMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubsetMethod::Exhaustive => write!(f, "exhaustive"),
            SubsetMethod::Sampled => write!(f, "sampled"),
        }
    }
}

/// Mean Flora normalized cost when k given jobs are misclassified at
/// selection time.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub k: usize,
    pub mean_cost: f64,
    pub method: SubsetMethod,
    /// Subsets averaged: C(n,k) when exhaustive, the sample count otherwise.
    pub subsets: usize,
    /// Standard error of the subset-mean estimate; only for sampled rows.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
    pub n_jobs: usize,
}

/// Exhaustive/Monte-Carlo switch and determinism parameters for the
/// misclassification study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingParams {
    pub exhaustive_threshold: usize,
    pub samples: usize,
    pub seed: u64,
}

impl SamplingParams {
    /// Defaults: exhaustive up to 20,000 subsets, 2,000 samples otherwise.
    /// The seed is always explicit.
    pub fn new(seed: u64) -> Self {
        SamplingParams {
            exhaustive_threshold: 20_000,
            samples: 2_000,
            seed,
        }
    }
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result.checked_mul((n - k + i) as u128)? / i as u128;
    }
    Some(result)
}

/// Distinct deterministic stream per k so adding or reordering k values
/// never shifts another row's draws.
fn subset_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mixed = seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Measures how Flora's mean normalized cost degrades as k given jobs have
/// their class flipped at selection time. Test-job labels stay correct, so
/// each job's outcome depends only on its own flip; subsets are still
/// averaged explicitly, exhaustively when C(n,k) fits the threshold and by
/// seeded Monte Carlo otherwise.
pub fn misclassification_study(
    trace: &ProfilingTrace,
    prices: &PriceModel,
    k_values: &[usize],
    sampling: SamplingParams,
    strictness: Strictness,
) -> Result<RobustnessTable, EvaluationError> {
    if sampling.samples == 0 {
        return Err(EvaluationError::InvalidSampling {
            reason: "samples must be at least 1".to_owned(),
        });
    }
    let mut notices = Vec::new();
    let trace = effective_trace(trace, strictness, &mut notices)?;
    let n = trace.jobs().len();
    if let Some(&k) = k_values.iter().find(|&&k| k > n) {
        return Err(EvaluationError::KOutOfRange { k, n_jobs: n });
    }

    // Flipped-class selections are only computed when some k >= 1 needs
    // them; a flip into a class with no test jobs is a hard error.
    let needs_flips = k_values.iter().any(|&k| k > 0);
    let norms = row_norms(&trace, prices)?;
    let mut cost_true = Vec::with_capacity(n);
    let mut cost_flipped = Vec::with_capacity(n);
    for (job_id, spec) in trace.jobs() {
        let (_, nc, _) =
            flora_point(&trace, prices, &norms, job_id, spec.job_class, strictness)?;
        cost_true.push(nc);
        if needs_flips {
            let (_, nc_flip, _) = flora_point(
                &trace,
                prices,
                &norms,
                job_id,
                spec.job_class.flipped(),
                strictness,
            )?;
            cost_flipped.push(nc_flip);
        }
    }

    let subset_mean = |flipped: &[bool]| -> f64 {
        let values: Vec<f64> = (0..n)
            .map(|i| if flipped[i] { cost_flipped[i] } else { cost_true[i] })
            .collect();
        mean(&values)
    };

    // Each k is independent: per-k seeds are derived from (seed, k), so
    // parallel execution cannot change any row's draws.
    let results: Vec<RobustnessRow> = k_values
        .par_iter()
        .map(|&k| {
            let count = binomial(n, k);
            let exhaustive =
                matches!(count, Some(c) if c <= sampling.exhaustive_threshold as u128);
            if exhaustive {
                let mut means = Vec::new();
                for subset in (0..n).combinations(k) {
                    let mut flipped = vec![false; n];
                    for i in subset {
                        flipped[i] = true;
                    }
                    means.push(subset_mean(&flipped));
                }
                RobustnessRow {
                    k,
                    mean_cost: mean(&means),
                    method: SubsetMethod::Exhaustive,
                    subsets: means.len(),
                    std_error: None,
                }
            } else {
                let mut rng = subset_rng(sampling.seed, k);
                let mut means = Vec::with_capacity(sampling.samples);
                for _ in 0..sampling.samples {
                    let mut flipped = vec![false; n];
                    for i in rand::seq::index::sample(&mut rng, n, k) {
                        flipped[i] = true;
                    }
                    means.push(subset_mean(&flipped));
                }
                let m = mean(&means);
                let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                    / (means.len().saturating_sub(1)).max(1) as f64;
                RobustnessRow {
                    k,
                    mean_cost: m,
                    method: SubsetMethod::Sampled,
                    subsets: means.len(),
                    std_error: Some((var / means.len() as f64).sqrt()),
                }
            }
        })
        .collect();
    let mut rows = results;
    rows.sort_by_key(|row| row.k);
    Ok(RobustnessTable { rows, n_jobs: n })
}
