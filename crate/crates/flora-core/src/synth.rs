//! Deterministic synthetic-trace generation from a parametric runtime model,
//! for tests where the true optimum is known by construction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::trace::{
    CloudConfig, ConfigId, JobClass, JobId, JobSpec, ProfilingTrace, TraceError, TraceRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid parameters for job {job}: {reason}")]
    InvalidParams { job: String, reason: String },
    #[error("duplicate synthetic job {0}")]
    DuplicateJob(JobId),
    #[error("{0} must be non-empty")]
    Empty(&'static str),
    #[error("relative_sigma must be finite and >= 0")]
    InvalidSigma,
    #[error("scenario parse error")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn default_penalty() -> f64 {
    1.0
}

/// Parametric description of one synthetic job's scaling behavior:
/// Amdahl-style core scaling plus a linear cache-shortfall penalty on
/// memory-demanding (class A) jobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthJobParams {
    pub algorithm: String,
    pub dataset_gib: f64,
    pub job_class: JobClass,
    pub base_work_core_hours: f64,
    /// Fraction of the work that scales with total cores, in [0, 1].
    pub parallel_fraction: f64,
    /// Total memory needed to cache the working set; 0 for class B.
    #[serde(default)]
    pub cache_need_gib: f64,
    /// Runtime multiplier when nothing is cached; 1 means no penalty.
    #[serde(default = "default_penalty")]
    pub cache_miss_penalty: f64,
    #[serde(default)]
    pub per_node_overhead_seconds: f64,
}

impl SynthJobParams {
    pub fn job_spec(&self) -> JobSpec {
        JobSpec {
            algorithm: self.algorithm.clone(),
            dataset_gib: self.dataset_gib,
            job_class: self.job_class,
        }
    }

    // Negated comparisons here are deliberate: they reject NaN, which the
    // non-negated forms would wave through.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| {
            Err(SynthError::InvalidParams {
                job: format!("{}/{}", self.algorithm, self.dataset_gib),
                reason,
            })
        };
        if self.algorithm.is_empty() {
            return fail("algorithm label is empty".into());
        }
        if !(self.dataset_gib > 0.0) {
            return fail("dataset_gib must be positive".into());
        }
        if !(self.base_work_core_hours > 0.0) {
            return fail("base_work_core_hours must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.parallel_fraction) {
            return fail(format!(
                "parallel_fraction {} outside [0, 1]",
                self.parallel_fraction
            ));
        }
        if !(self.cache_need_gib >= 0.0) {
            return fail("cache_need_gib must be non-negative".into());
        }
        if self.job_class == JobClass::B && self.cache_need_gib != 0.0 {
            return fail("class B jobs must have cache_need_gib = 0".into());
        }
        if !(self.cache_miss_penalty >= 1.0) {
            return fail(format!(
                "cache_miss_penalty {} must be >= 1",
                self.cache_miss_penalty
            ));
        }
        if !(self.per_node_overhead_seconds >= 0.0) {
            return fail("per_node_overhead_seconds must be non-negative".into());
        }
        Ok(())
    }
}

/// Model runtime of a synthetic job on a configuration, in seconds:
/// serial plus parallel work over total cores, a cache-shortfall penalty
/// that falls linearly from `cache_miss_penalty` (nothing cached) to 1
/// (fully cached), and per-node startup overhead. Class B jobs take no
/// penalty regardless of memory.
pub fn synth_runtime(params: &SynthJobParams, config: &CloudConfig) -> f64 {
    let cores = f64::from(config.total_cores());
    let amdahl = (1.0 - params.parallel_fraction) + params.parallel_fraction / cores;
    let penalty = match params.job_class {
        JobClass::B => 1.0,
        JobClass::A => {
            let cached = if params.cache_need_gib <= 0.0 {
                1.0
            } else {
                (config.total_mem_gib() / params.cache_need_gib).min(1.0)
            };
            if cached >= 1.0 {
                1.0
            } else {
                params.cache_miss_penalty - (params.cache_miss_penalty - 1.0) * cached
            }
        }
    };
    3600.0 * params.base_work_core_hours * amdahl * penalty
        + f64::from(config.node_count) * params.per_node_overhead_seconds
}

/// Multiplicative log-normal noise: each cell's runtime is scaled by
/// exp(sigma * z) with z standard normal. Sigma 0 reproduces the model
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub relative_sigma: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn none() -> Self {
        NoiseParams {
            relative_sigma: 0.0,
            seed: 0,
        }
    }
}

fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Per-cell seed from (run seed, job, config) so generation order never
/// affects the values.
fn cell_seed(seed: u64, job_id: &JobId, config_id: ConfigId) -> u64 {
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(job_id.0.bytes())
        .chain([0xFF])
        .chain(config_id.0.to_le_bytes());
    fnv1a64(bytes)
}

/// Builds a complete single-run trace: one record per (job, config) cell
/// with model runtimes under the given noise. Deterministic for a fixed
/// seed regardless of input order.
pub fn generate_trace(
    param_sets: &[SynthJobParams],
    catalog: &BTreeMap<ConfigId, CloudConfig>,
    noise: NoiseParams,
) -> Result<ProfilingTrace, SynthError> {
    if param_sets.is_empty() {
        return Err(SynthError::Empty("param_sets"));
    }
    if catalog.is_empty() {
        return Err(SynthError::Empty("catalog"));
    }
    if !(noise.relative_sigma.is_finite() && noise.relative_sigma >= 0.0) {
        return Err(SynthError::InvalidSigma);
    }

    let mut jobs: BTreeMap<JobId, JobSpec> = BTreeMap::new();
    for params in param_sets {
        params.validate()?;
        let spec = params.job_spec();
        let id = spec.id();
        if jobs.insert(id.clone(), spec).is_some() {
            return Err(SynthError::DuplicateJob(id));
        }
    }

    let mut records = Vec::with_capacity(param_sets.len() * catalog.len());
    for params in param_sets {
        let job_id = params.job_spec().id();
        for (config_id, config) in catalog {
            let mut runtime = synth_runtime(params, config);
            if noise.relative_sigma > 0.0 {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(cell_seed(noise.seed, &job_id, *config_id));
                let z: f64 = rng.sample(StandardNormal);
                runtime *= (noise.relative_sigma * z).exp();
            }
            records.push(TraceRecord {
                job_id: job_id.clone(),
                config_id: *config_id,
                runtime_seconds: runtime,
                run_index: 0,
            });
        }
    }

    Ok(ProfilingTrace::from_parts(catalog.clone(), jobs, records)?)
}

#[derive(Debug, Deserialize)]
struct Scenario {
    jobs: Vec<SynthJobParams>,
}

/// Reads a scenario file: a JSON object with a `jobs` array of job
/// parameter sets.
pub fn ingest_scenario<R: std::io::Read>(reader: R) -> Result<Vec<SynthJobParams>, SynthError> {
    let scenario: Scenario = serde_json::from_reader(reader)?;
    if scenario.jobs.is_empty() {
        return Err(SynthError::Empty("scenario jobs"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for params in &scenario.jobs {
        params.validate()?;
        let id = params.job_spec().id();
        if !seen.insert(id.clone()) {
            return Err(SynthError::DuplicateJob(id));
        }
    }
    Ok(scenario.jobs)
}
