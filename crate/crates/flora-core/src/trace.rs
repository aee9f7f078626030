//! Domain types for cluster configurations, jobs, and profiling records,
//! plus CSV ingestion, validation, and median aggregation.
//!
//! A [`ProfilingTrace`] is immutable once constructed and safe to share
//! across threads; ingestion itself is single-threaded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

/// Catalog key of a purchasable cluster configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigId(pub u32);

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unique job identifier, derived as `<algorithm>/<dataset_gib>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub String);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for JobId {
    fn from(s: &str) -> Self {
        JobId(s.to_owned())
    }
}

/// Data-access-pattern class of a job.
///
/// `A` = repeated specific data loading (memory-demanding),
/// `B` = single parallelisable data loading (memory-yielding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobClass {
    A,
    B,
}

impl JobClass {
    /// The other class; used by the misclassification study.
    pub fn flipped(self) -> JobClass {
        match self {
            JobClass::A => JobClass::B,
            JobClass::B => JobClass::A,
        }
    }
}

impl fmt::Display for JobClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobClass::A => write!(f, "A"),
            JobClass::B => write!(f, "B"),
        }
    }
}

impl std::str::FromStr for JobClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(JobClass::A),
            "B" => Ok(JobClass::B),
            other => Err(format!("unknown job class {other:?}, expected \"A\" or \"B\"")),
        }
    }
}

/// One purchasable cluster shape: instance type, node count, and per-node
/// cores and memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudConfig {
    pub config_id: ConfigId,
    pub instance_type: String,
    pub node_count: u32,
    pub cores_per_node: u32,
    pub mem_gib_per_node: f64,
}

impl CloudConfig {
    pub fn total_cores(&self) -> u32 {
        self.node_count * self.cores_per_node
    }

    pub fn total_mem_gib(&self) -> f64 {
        f64::from(self.node_count) * self.mem_gib_per_node
    }
}

/// A test job: algorithm, input dataset size, and class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub algorithm: String,
    pub dataset_gib: f64,
    pub job_class: JobClass,
}

impl JobSpec {
    /// Derived unique identifier, `<algorithm>/<dataset_gib>`.
    pub fn id(&self) -> JobId {
        JobId(format!("{}/{}", self.algorithm, self.dataset_gib))
    }
}

/// A single recorded execution of a job on a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub job_id: JobId,
    pub config_id: ConfigId,
    pub runtime_seconds: f64,
    pub run_index: u32,
}

/// Whether validation problems abort the run or downgrade to warnings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    // Source chains carry the detail; repeating {0} here would print it twice.
    #[error("CSV parse error")]
    Csv(#[from] csv::Error),
    #[error("I/O error")]
    Io(#[from] io::Error),
    #[error("duplicate config_id {0}")]
    DuplicateConfig(ConfigId),
    #[error("line {line}: non-positive {field}")]
    NonPositive { line: u64, field: &'static str },
    #[error("line {line}: unknown config_id {config_id}")]
    UnknownConfig { line: u64, config_id: ConfigId },
    #[error("inconsistent class for job {job_id}: {first} vs {second}")]
    InconsistentClass {
        job_id: JobId,
        first: JobClass,
        second: JobClass,
    },
    #[error("duplicate record for job {job_id}, config {config_id}, run_index {run_index}")]
    DuplicateRecord {
        job_id: JobId,
        config_id: ConfigId,
        run_index: u32,
    },
    #[error("record references unknown job {0}")]
    UnknownJob(JobId),
    #[error("trace is incomplete: {} missing cell(s), first {}", missing.len(), format_cells(missing))]
    Incomplete { missing: Vec<(JobId, ConfigId)> },
}

fn format_cells(missing: &[(JobId, ConfigId)]) -> String {
    let mut shown: Vec<String> = missing
        .iter()
        .take(5)
        .map(|(j, c)| format!("({j}, #{c})"))
        .collect();
    if missing.len() > 5 {
        shown.push("...".to_owned());
    }
    shown.join(", ")
}

/// A set of test-job execution records over a configuration catalog, with
/// per-cell median-aggregated runtimes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilingTrace {
    configs: BTreeMap<ConfigId, CloudConfig>,
    jobs: BTreeMap<JobId, JobSpec>,
    records: Vec<TraceRecord>,
    aggregated: BTreeMap<(JobId, ConfigId), f64>,
}

impl ProfilingTrace {
    /// Builds a trace from parts, enforcing referential integrity and
    /// uniqueness, and aggregating repeated runs by median.
    pub fn from_parts(
        configs: BTreeMap<ConfigId, CloudConfig>,
        jobs: BTreeMap<JobId, JobSpec>,
        mut records: Vec<TraceRecord>,
    ) -> Result<Self, TraceError> {
        let mut seen: BTreeSet<(JobId, ConfigId, u32)> = BTreeSet::new();
        for rec in &records {
            if !jobs.contains_key(&rec.job_id) {
                return Err(TraceError::UnknownJob(rec.job_id.clone()));
            }
            if !configs.contains_key(&rec.config_id) {
                return Err(TraceError::UnknownConfig {
                    line: 0,
                    config_id: rec.config_id,
                });
            }
            if rec.runtime_seconds <= 0.0 || !rec.runtime_seconds.is_finite() {
                return Err(TraceError::NonPositive {
                    line: 0,
                    field: "runtime_seconds",
                });
            }
            if !seen.insert((rec.job_id.clone(), rec.config_id, rec.run_index)) {
                return Err(TraceError::DuplicateRecord {
                    job_id: rec.job_id.clone(),
                    config_id: rec.config_id,
                    run_index: rec.run_index,
                });
            }
        }
        records.sort_by(|a, b| {
            (&a.job_id, a.config_id, a.run_index).cmp(&(&b.job_id, b.config_id, b.run_index))
        });

        let mut cells: BTreeMap<(JobId, ConfigId), Vec<f64>> = BTreeMap::new();
        for rec in &records {
            cells
                .entry((rec.job_id.clone(), rec.config_id))
                .or_default()
                .push(rec.runtime_seconds);
        }
        let aggregated = cells
            .into_iter()
            .map(|(key, mut runs)| (key, median(&mut runs)))
            .collect();

        Ok(ProfilingTrace {
            configs,
            jobs,
            records,
            aggregated,
        })
    }

    pub fn configs(&self) -> &BTreeMap<ConfigId, CloudConfig> {
        &self.configs
    }

    pub fn jobs(&self) -> &BTreeMap<JobId, JobSpec> {
        &self.jobs
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Median runtime per (job, config) cell.
    pub fn aggregated_runtime(&self) -> &BTreeMap<(JobId, ConfigId), f64> {
        &self.aggregated
    }

    pub fn runtime(&self, job_id: &JobId, config_id: ConfigId) -> Option<f64> {
        self.aggregated.get(&(job_id.clone(), config_id)).copied()
    }

    /// Every (job, config) cell lacking a record.
    pub fn missing_cells(&self) -> Vec<(JobId, ConfigId)> {
        let mut missing = Vec::new();
        for job_id in self.jobs.keys() {
            for config_id in self.configs.keys() {
                if !self.aggregated.contains_key(&(job_id.clone(), *config_id)) {
                    missing.push((job_id.clone(), *config_id));
                }
            }
        }
        missing
    }

    /// A trace is complete iff every (job, config) cell has at least one record.
    pub fn is_complete(&self) -> bool {
        self.aggregated.len() == self.jobs.len() * self.configs.len()
    }

    /// Errors with the missing cells unless the trace is complete.
    pub fn require_complete(&self) -> Result<(), TraceError> {
        let missing = self.missing_cells();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(TraceError::Incomplete { missing })
        }
    }

    /// Jobs that miss at least one cell on the catalog.
    pub fn incomplete_jobs(&self) -> Vec<JobId> {
        let n_configs = self.configs.len();
        self.jobs
            .keys()
            .filter(|job_id| {
                let have = self
                    .configs
                    .keys()
                    .filter(|c| self.aggregated.contains_key(&((*job_id).clone(), **c)))
                    .count();
                have < n_configs
            })
            .cloned()
            .collect()
    }

    /// Returns a trace retaining only jobs accepted by `keep`, along with
    /// their records. The config catalog is kept as-is.
    pub fn retain_jobs<F: Fn(&JobSpec) -> bool>(&self, keep: F) -> ProfilingTrace {
        let jobs: BTreeMap<JobId, JobSpec> = self
            .jobs
            .iter()
            .filter(|(_, spec)| keep(spec))
            .map(|(id, spec)| (id.clone(), spec.clone()))
            .collect();
        let records = self
            .records
            .iter()
            .filter(|rec| jobs.contains_key(&rec.job_id))
            .cloned()
            .collect();
        // Re-validation cannot fail: inputs come from a valid trace.
        ProfilingTrace::from_parts(self.configs.clone(), jobs, records)
            .expect("subset of a valid trace is valid")
    }

    /// Drops jobs with missing cells, returning the reduced trace and the
    /// dropped job ids. Used by lenient-mode pipelines.
    pub fn drop_incomplete_jobs(&self) -> (ProfilingTrace, Vec<JobId>) {
        let dropped = self.incomplete_jobs();
        if dropped.is_empty() {
            return (self.clone(), dropped);
        }
        let dropped_set: BTreeSet<&JobId> = dropped.iter().collect();
        let trace = self.retain_jobs(|spec| !dropped_set.contains(&spec.id()));
        (trace, dropped)
    }

    /// Serializes the trace back to trace-CSV format, records sorted by
    /// (job, config, run_index).
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "algorithm",
            "dataset_gib",
            "class",
            "config_id",
            "runtime_seconds",
            "run_index",
        ])?;
        for rec in &self.records {
            let spec = &self.jobs[&rec.job_id];
            wtr.write_record([
                spec.algorithm.clone(),
                format!("{}", spec.dataset_gib),
                spec.job_class.to_string(),
                rec.config_id.to_string(),
                format!("{}", rec.runtime_seconds),
                rec.run_index.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Median with the usual convention: mean of the two central values for
/// even counts.
pub fn median(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Debug, Deserialize)]
struct ConfigRow {
    config_id: u32,
    instance_type: String,
    node_count: u32,
    cores_per_node: u32,
    mem_gib_per_node: f64,
}

/// Parses a configuration catalog from config-CSV format
/// (`config_id,instance_type,node_count,cores_per_node,mem_gib_per_node`).
pub fn ingest_configs<R: io::Read>(reader: R) -> Result<BTreeMap<ConfigId, CloudConfig>, TraceError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut catalog = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let pos_line = record.position().map_or(0, csv::Position::line);
        let row: ConfigRow = record.deserialize(Some(&headers))?;
        let check = |ok: bool, field: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(TraceError::NonPositive {
                    line: pos_line,
                    field,
                })
            }
        };
        check(row.config_id > 0, "config_id")?;
        check(row.node_count > 0, "node_count")?;
        check(row.cores_per_node > 0, "cores_per_node")?;
        check(
            row.mem_gib_per_node > 0.0 && row.mem_gib_per_node.is_finite(),
            "mem_gib_per_node",
        )?;
        let config = CloudConfig {
            config_id: ConfigId(row.config_id),
            instance_type: row.instance_type,
            node_count: row.node_count,
            cores_per_node: row.cores_per_node,
            mem_gib_per_node: row.mem_gib_per_node,
        };
        if catalog.insert(config.config_id, config).is_some() {
            return Err(TraceError::DuplicateConfig(ConfigId(row.config_id)));
        }
    }
    Ok(catalog)
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    algorithm: String,
    dataset_gib: f64,
    class: JobClass,
    config_id: u32,
    runtime_seconds: f64,
    run_index: u32,
}

/// Parses a profiling trace from trace-CSV format
/// (`algorithm,dataset_gib,class,config_id,runtime_seconds,run_index`),
/// deduplicating jobs by (algorithm, dataset_gib) and aggregating repeated
/// runs by median.
pub fn ingest_trace<R: io::Read>(
    reader: R,
    catalog: &BTreeMap<ConfigId, CloudConfig>,
) -> Result<ProfilingTrace, TraceError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut jobs: BTreeMap<JobId, JobSpec> = BTreeMap::new();
    let mut records = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, csv::Position::line);
        let row: TraceRow = record.deserialize(Some(&headers))?;
        if row.dataset_gib <= 0.0 || !row.dataset_gib.is_finite() {
            return Err(TraceError::NonPositive {
                line,
                field: "dataset_gib",
            });
        }
        if row.runtime_seconds <= 0.0 || !row.runtime_seconds.is_finite() {
            return Err(TraceError::NonPositive {
                line,
                field: "runtime_seconds",
            });
        }
        let config_id = ConfigId(row.config_id);
        if !catalog.contains_key(&config_id) {
            return Err(TraceError::UnknownConfig { line, config_id });
        }
        let spec = JobSpec {
            algorithm: row.algorithm,
            dataset_gib: row.dataset_gib,
            job_class: row.class,
        };
        let job_id = spec.id();
        match jobs.get(&job_id) {
            None => {
                jobs.insert(job_id.clone(), spec);
            }
            Some(existing) if existing.job_class != row.class => {
                return Err(TraceError::InconsistentClass {
                    job_id,
                    first: existing.job_class,
                    second: row.class,
                });
            }
            Some(_) => {}
        }
        records.push(TraceRecord {
            job_id,
            config_id,
            runtime_seconds: row.runtime_seconds,
            run_index: row.run_index,
        });
    }
    ProfilingTrace::from_parts(catalog.clone(), jobs, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG_CSV: &str = "\
config_id,instance_type,node_count,cores_per_node,mem_gib_per_node
2,n2-standard-8,8,8,32
1,n2-highcpu-8,8,8,8
";

    #[test]
    fn ingest_configs_derives_totals() {
        let catalog = ingest_configs(CONFIG_CSV.as_bytes()).unwrap();
        let c2 = &catalog[&ConfigId(2)];
        assert_eq!(c2.total_cores(), 64);
        assert_eq!(c2.total_mem_gib(), 256.0);
        let c1 = &catalog[&ConfigId(1)];
        assert_eq!(c1.total_mem_gib(), 64.0);
    }

    #[test]
    fn ingest_configs_rejects_duplicate_id() {
        let csv = "config_id,instance_type,node_count,cores_per_node,mem_gib_per_node\n\
                   1,a,1,1,1\n1,b,1,1,1\n";
        let err = ingest_configs(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::DuplicateConfig(ConfigId(1))), "{err}");
    }

    #[test]
    fn ingest_configs_rejects_non_positive_node_count() {
        let csv = "config_id,instance_type,node_count,cores_per_node,mem_gib_per_node\n\
                   1,a,0,1,1\n";
        let err = ingest_configs(csv.as_bytes()).unwrap_err();
        match err {
            TraceError::NonPositive { field, .. } => assert_eq!(field, "node_count"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ingest_configs_accepts_crlf() {
        let csv = CONFIG_CSV.replace('\n', "\r\n");
        let catalog = ingest_configs(csv.as_bytes()).unwrap();
        assert_eq!(catalog.len(), 2);
    }

    fn small_catalog() -> BTreeMap<ConfigId, CloudConfig> {
        ingest_configs(CONFIG_CSV.as_bytes()).unwrap()
    }

    #[test]
    fn ingest_trace_aggregates_by_median() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,100,0\n\
                   Sort,188,A,1,300,1\n\
                   Sort,188,A,1,200,2\n";
        let trace = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap();
        assert_eq!(trace.runtime(&JobId::from("Sort/188"), ConfigId(1)), Some(200.0));
    }

    #[test]
    fn even_run_count_median_averages_middle_values() {
        let mut runs = vec![400.0, 100.0, 200.0, 300.0];
        assert_eq!(median(&mut runs), 250.0);
    }

    #[test]
    fn ingest_trace_rejects_unknown_config() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,99,100,0\n";
        let err = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap_err();
        assert!(matches!(err, TraceError::UnknownConfig { config_id: ConfigId(99), .. }), "{err}");
    }

    #[test]
    fn ingest_trace_rejects_inconsistent_class() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,100,0\n\
                   Sort,188,B,2,100,0\n";
        let err = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap_err();
        match err {
            TraceError::InconsistentClass { job_id, .. } => {
                assert_eq!(job_id, JobId::from("Sort/188"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ingest_trace_rejects_non_positive_runtime() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,0,0\n";
        let err = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap_err();
        assert!(matches!(err, TraceError::NonPositive { field: "runtime_seconds", .. }), "{err}");
    }

    #[test]
    fn ingest_trace_rejects_duplicate_run() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,100,0\n\
                   Sort,188,A,1,120,0\n";
        let err = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap_err();
        assert!(matches!(err, TraceError::DuplicateRecord { .. }), "{err}");
    }

    #[test]
    fn missing_cells_are_reported() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,100,0\n";
        let trace = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap();
        assert!(!trace.is_complete());
        assert_eq!(trace.missing_cells(), vec![(JobId::from("Sort/188"), ConfigId(2))]);
        assert!(trace.require_complete().is_err());
    }

    #[test]
    fn drop_incomplete_jobs_keeps_complete_ones() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,100,0\n\
                   Sort,188,A,2,110,0\n\
                   Grep,10,B,1,50,0\n";
        let trace = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap();
        let (reduced, dropped) = trace.drop_incomplete_jobs();
        assert_eq!(dropped, vec![JobId::from("Grep/10")]);
        assert!(reduced.is_complete());
        assert_eq!(reduced.jobs().len(), 1);
    }

    #[test]
    fn job_id_formats_integral_sizes_without_fraction() {
        let spec = JobSpec {
            algorithm: "Word Count".to_owned(),
            dataset_gib: 39.0,
            job_class: JobClass::B,
        };
        assert_eq!(spec.id(), JobId::from("Word Count/39"));
        let spec = JobSpec {
            algorithm: "Scan".to_owned(),
            dataset_gib: 1.5,
            job_class: JobClass::B,
        };
        assert_eq!(spec.id(), JobId::from("Scan/1.5"));
    }

    #[test]
    fn csv_round_trip_preserves_aggregates() {
        let csv = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n\
                   Sort,188,A,1,100.25,0\n\
                   Sort,188,A,1,99.75,1\n\
                   Sort,188,A,2,80.5,0\n\
                   Grep,10,B,1,50.125,0\n\
                   Grep,10,B,2,60,0\n";
        let trace = ingest_trace(csv.as_bytes(), &small_catalog()).unwrap();
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let reread = ingest_trace(out.as_slice(), &small_catalog()).unwrap();
        assert_eq!(trace.aggregated_runtime(), reread.aggregated_runtime());
    }
}
