//! Configuration ranking by summed normalized historical cost, the baseline
//! selection policies, and the leave-one-algorithm-out test-job filter.

use std::collections::BTreeMap;
use std::fmt;

use crate::pricing::{execution_cost, PriceModel, PricingError};
use crate::trace::{
    CloudConfig, ConfigId, JobClass, JobId, JobSpec, ProfilingTrace, Strictness, TraceError,
};

#[derive(Debug, thiserror::Error)]
pub enum SelectorError {
    #[error("no applicable test jobs")]
    NoApplicableTestJobs,
    #[error("degenerate prices: normalization undefined")]
    DegeneratePrices,
    #[error("replay policy {policy:?} has no selection for job {job_id}")]
    ReplayMissing { policy: String, job_id: JobId },
    #[error("expectation policy has no point selection")]
    NoPointSelection,
    #[error("empty configuration catalog")]
    EmptyCatalog,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// One ranked configuration with its summed normalized-cost score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub config_id: ConfigId,
    /// Sum over test jobs of cost normalized to that job's cheapest option;
    /// each term is >= 1.0, so the score is >= the number of test jobs.
    pub score: f64,
}

/// Configurations ordered ascending by score, ties broken by ascending
/// config_id.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigRanking {
    pub entries: Vec<RankEntry>,
    /// Number of test jobs that contributed to each score.
    pub test_jobs: usize,
}

impl ConfigRanking {
    /// The top-ranked (approximately cost-optimal) configuration.
    pub fn selected(&self) -> ConfigId {
        self.entries[0].config_id
    }
}

/// A configuration selection approach under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionPolicy {
    /// Rank by summed normalized cost over test jobs of the given job's class.
    Flora,
    /// Flora without the classification step: learns from every test job.
    Fw1C,
    MinCpu,
    MaxCpu,
    MinMem,
    MaxMem,
    /// Analytic expectation of a uniformly random choice; has no point
    /// selection.
    RandomExpectation,
    /// Fixed recorded selections, e.g. replayed results of other systems.
    Replay {
        name: String,
        selections: BTreeMap<JobId, ConfigId>,
    },
}

impl SelectionPolicy {
    /// Stable machine-readable name used in report rows.
    pub fn name(&self) -> String {
        match self {
            SelectionPolicy::Flora => "flora".to_owned(),
            SelectionPolicy::Fw1C => "fw1c".to_owned(),
            SelectionPolicy::MinCpu => "min-cpu".to_owned(),
            SelectionPolicy::MaxCpu => "max-cpu".to_owned(),
            SelectionPolicy::MinMem => "min-mem".to_owned(),
            SelectionPolicy::MaxMem => "max-mem".to_owned(),
            SelectionPolicy::RandomExpectation => "random".to_owned(),
            SelectionPolicy::Replay { name, .. } => name.clone(),
        }
    }

    /// Human-readable label for table output.
    pub fn label(&self) -> String {
        match self {
            SelectionPolicy::Flora => "Flora".to_owned(),
            SelectionPolicy::Fw1C => "Flora with one class".to_owned(),
            SelectionPolicy::MinCpu => "minimize CPU".to_owned(),
            SelectionPolicy::MaxCpu => "maximize CPU".to_owned(),
            SelectionPolicy::MinMem => "minimize memory".to_owned(),
            SelectionPolicy::MaxMem => "maximize memory".to_owned(),
            SelectionPolicy::RandomExpectation => "random selection".to_owned(),
            SelectionPolicy::Replay { name, .. } => name.clone(),
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Reads a replay selection map from CSV (`job_id,config_id`).
pub fn ingest_replay_map<R: std::io::Read>(
    reader: R,
) -> Result<BTreeMap<JobId, ConfigId>, TraceError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut map = BTreeMap::new();
    for result in rdr.records() {
        let record = result?;
        let job_id = JobId(record.get(0).unwrap_or_default().to_owned());
        let config_id: u32 = record
            .get(1)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("invalid config_id for job {job_id}"),
            )))?;
        map.insert(job_id, ConfigId(config_id));
    }
    Ok(map)
}

/// Restricts a trace to the test jobs applicable for a selection: jobs of
/// `target_class` (all classes when `None`) whose algorithm differs from
/// `excluded_algorithm`. Excluding an algorithm removes it at every dataset
/// size.
pub fn filter_test_jobs(
    trace: &ProfilingTrace,
    target_class: Option<JobClass>,
    excluded_algorithm: Option<&str>,
) -> Result<ProfilingTrace, SelectorError> {
    let filtered = trace.retain_jobs(|spec| {
        target_class.is_none_or(|class| spec.job_class == class)
            && excluded_algorithm.is_none_or(|alg| spec.algorithm != alg)
    });
    if filtered.jobs().is_empty() {
        return Err(SelectorError::NoApplicableTestJobs);
    }
    Ok(filtered)
}

/// Ranks every configuration in the trace's catalog by the sum over test
/// jobs of execution cost normalized to that job's cheapest option (1.0 =
/// optimal for the job). Ascending score; ties broken by ascending
/// config_id.
///
/// In strict mode a test job missing any cell is an error; in lenient mode
/// it is dropped from the sum with a warning.
pub fn rank_configurations(
    test_jobs: &ProfilingTrace,
    prices: &PriceModel,
    strictness: Strictness,
) -> Result<ConfigRanking, SelectorError> {
    if test_jobs.configs().is_empty() {
        return Err(SelectorError::EmptyCatalog);
    }
    let mut scores: BTreeMap<ConfigId, f64> = test_jobs
        .configs()
        .keys()
        .map(|id| (*id, 0.0))
        .collect();
    let mut contributing = 0usize;

    for job_id in test_jobs.jobs().keys() {
        let mut row: Vec<(ConfigId, f64)> = Vec::with_capacity(test_jobs.configs().len());
        let mut missing: Vec<(JobId, ConfigId)> = Vec::new();
        for (config_id, config) in test_jobs.configs() {
            match test_jobs.runtime(job_id, *config_id) {
                Some(runtime) => {
                    row.push((*config_id, execution_cost(runtime, config, prices)?));
                }
                None => missing.push((job_id.clone(), *config_id)),
            }
        }
        if !missing.is_empty() {
            match strictness {
                Strictness::Strict => return Err(TraceError::Incomplete { missing }.into()),
                Strictness::Lenient => {
                    log::warn!("dropping incomplete test job {job_id} from ranking");
                    continue;
                }
            }
        }
        let row_min = row.iter().map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
        if row_min <= 0.0 {
            return Err(SelectorError::DegeneratePrices);
        }
        for (config_id, cost) in row {
            *scores.get_mut(&config_id).unwrap() += cost / row_min;
        }
        contributing += 1;
    }

    if contributing == 0 {
        return Err(SelectorError::NoApplicableTestJobs);
    }

    let mut entries: Vec<RankEntry> = scores
        .into_iter()
        .map(|(config_id, score)| RankEntry { config_id, score })
        .collect();
    entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.config_id.cmp(&b.config_id)));
    Ok(ConfigRanking {
        entries,
        test_jobs: contributing,
    })
}

/// Selects a configuration for `job` under `policy`.
///
/// Flora filters the trace to the job's class and excludes its algorithm;
/// Fw1C only excludes the algorithm. Static policies pick the extreme of
/// total cores or total memory from the catalog with ascending-config_id
/// tie-breaks. `RandomExpectation` has no point selection and errors here.
pub fn select(
    policy: &SelectionPolicy,
    job: &JobSpec,
    trace: &ProfilingTrace,
    prices: &PriceModel,
    catalog: &BTreeMap<ConfigId, CloudConfig>,
    strictness: Strictness,
) -> Result<ConfigId, SelectorError> {
    match policy {
        SelectionPolicy::Flora => {
            let test_jobs =
                filter_test_jobs(trace, Some(job.job_class), Some(&job.algorithm))?;
            Ok(rank_configurations(&test_jobs, prices, strictness)?.selected())
        }
        SelectionPolicy::Fw1C => {
            let test_jobs = filter_test_jobs(trace, None, Some(&job.algorithm))?;
            Ok(rank_configurations(&test_jobs, prices, strictness)?.selected())
        }
        SelectionPolicy::MinCpu => extreme_by(catalog, |c| f64::from(c.total_cores()), false),
        SelectionPolicy::MaxCpu => extreme_by(catalog, |c| f64::from(c.total_cores()), true),
        SelectionPolicy::MinMem => extreme_by(catalog, CloudConfig::total_mem_gib, false),
        SelectionPolicy::MaxMem => extreme_by(catalog, CloudConfig::total_mem_gib, true),
        SelectionPolicy::RandomExpectation => Err(SelectorError::NoPointSelection),
        SelectionPolicy::Replay { name, selections } => selections
            .get(&job.id())
            .copied()
            .ok_or_else(|| SelectorError::ReplayMissing {
                policy: name.clone(),
                job_id: job.id(),
            }),
    }
}

fn extreme_by<F: Fn(&CloudConfig) -> f64>(
    catalog: &BTreeMap<ConfigId, CloudConfig>,
    key: F,
    maximize: bool,
) -> Result<ConfigId, SelectorError> {
    // Ascending id iteration makes the first extremum win ties.
    let mut best: Option<(ConfigId, f64)> = None;
    for (id, config) in catalog {
        let value = key(config);
        let better = match best {
            None => true,
            Some((_, best_value)) => {
                if maximize {
                    value > best_value
                } else {
                    value < best_value
                }
            }
        };
        if better {
            best = Some((*id, value));
        }
    }
    best.map(|(id, _)| id).ok_or(SelectorError::EmptyCatalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::PriceModel;
    use crate::trace::{ingest_configs, ingest_trace};

    // The ten-option catalog shipped with the repository.
    const CATALOG_CSV: &str = include_str!("../../../data/configs.csv");

    fn catalog() -> BTreeMap<ConfigId, CloudConfig> {
        ingest_configs(CATALOG_CSV.as_bytes()).unwrap()
    }

    // Two interchangeable single-node shapes: equal hourly cost under any
    // linear model.
    const TWIN_CONFIGS: &str = "\
config_id,instance_type,node_count,cores_per_node,mem_gib_per_node
1,shape-a,1,4,16
2,shape-a,1,4,16
";

    fn twin_trace(rows: &str) -> ProfilingTrace {
        let catalog = ingest_configs(TWIN_CONFIGS.as_bytes()).unwrap();
        let header = "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n";
        ingest_trace(format!("{header}{rows}").as_bytes(), &catalog).unwrap()
    }

    #[test]
    fn ranking_sums_normalized_costs_and_breaks_ties_by_id() {
        // j1: 1h vs 2h, j2: 4h vs 2h; equal hourly costs.
        // Scores: c1 = 1 + 2 = 3, c2 = 2 + 1 = 3; tie -> c1.
        let trace = twin_trace(
            "j1,1,A,1,3600,0\nj1,1,A,2,7200,0\nj2,1,A,1,14400,0\nj2,1,A,2,7200,0\n",
        );
        let prices = PriceModel::linear(0.03, 0.004, 0.0);
        let ranking = rank_configurations(&trace, &prices, Strictness::Strict).unwrap();
        assert_eq!(ranking.selected(), ConfigId(1));
        assert_eq!(ranking.test_jobs, 2);
        assert_eq!(ranking.entries[0].config_id, ConfigId(1));
        assert!((ranking.entries[0].score - 3.0).abs() < 1e-12);
        assert!((ranking.entries[1].score - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_test_job_ranking_is_the_cost_ordering() {
        let trace = twin_trace("j1,1,A,1,7200,0\nj1,1,A,2,3600,0\n");
        let prices = PriceModel::linear(1.0, 0.0, 0.0);
        let ranking = rank_configurations(&trace, &prices, Strictness::Strict).unwrap();
        assert_eq!(ranking.selected(), ConfigId(2));
        assert!((ranking.entries[0].score - 1.0).abs() < 1e-12);
        assert!((ranking.entries[1].score - 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_prices_are_degenerate() {
        let trace = twin_trace("j1,1,A,1,3600,0\nj1,1,A,2,3600,0\n");
        let prices = PriceModel::linear(0.0, 0.0, 0.0);
        let err = rank_configurations(&trace, &prices, Strictness::Strict).unwrap_err();
        assert_eq!(err.to_string(), "degenerate prices: normalization undefined");
    }

    #[test]
    fn strict_ranking_rejects_incomplete_rows_lenient_drops_them() {
        let trace = twin_trace("j1,1,A,1,3600,0\nj1,1,A,2,7200,0\nj2,1,A,1,100,0\n");
        let prices = PriceModel::linear(1.0, 0.0, 0.0);
        assert!(matches!(
            rank_configurations(&trace, &prices, Strictness::Strict),
            Err(SelectorError::Trace(TraceError::Incomplete { .. }))
        ));
        let ranking = rank_configurations(&trace, &prices, Strictness::Lenient).unwrap();
        assert_eq!(ranking.test_jobs, 1);
        assert_eq!(ranking.selected(), ConfigId(1));
    }

    /// 18 jobs shaped like the published job list: 9 algorithms x 2 sizes.
    fn table_shaped_trace() -> ProfilingTrace {
        let jobs: [(&str, [u32; 2], JobClass); 9] = [
            ("Grep", [3010, 6020], JobClass::B),
            ("Sort", [94, 188], JobClass::A),
            ("Word Count", [39, 77], JobClass::B),
            ("K-Means", [102, 204], JobClass::A),
            ("Linear Regression", [229, 459], JobClass::A),
            ("Logistic Regression", [210, 420], JobClass::A),
            ("Join", [85, 172], JobClass::A),
            ("GroupByCount", [280, 560], JobClass::B),
            ("SelectWhereOrderBy", [92, 185], JobClass::B),
        ];
        let mut csv = String::from("algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\n");
        let mut runtime = 100.0;
        for (alg, sizes, class) in jobs {
            for size in sizes {
                for config_id in 1..=10 {
                    runtime += 7.0;
                    csv.push_str(&format!("{alg},{size},{class},{config_id},{runtime},0\n"));
                }
            }
        }
        ingest_trace(csv.as_bytes(), &catalog()).unwrap()
    }

    #[test]
    fn leave_one_algorithm_out_removes_both_dataset_sizes() {
        let trace = table_shaped_trace();
        let class_a = filter_test_jobs(&trace, Some(JobClass::A), Some("Sort")).unwrap();
        assert_eq!(class_a.jobs().len(), 8);
        let algorithms: std::collections::BTreeSet<&str> = class_a
            .jobs()
            .values()
            .map(|spec| spec.algorithm.as_str())
            .collect();
        assert_eq!(
            algorithms.into_iter().collect::<Vec<_>>(),
            ["Join", "K-Means", "Linear Regression", "Logistic Regression"]
        );

        let all_classes = filter_test_jobs(&trace, None, Some("Grep")).unwrap();
        assert_eq!(all_classes.jobs().len(), 16);
    }

    #[test]
    fn empty_filter_result_is_an_error() {
        let trace = table_shaped_trace();
        let only_sort = trace.retain_jobs(|spec| spec.algorithm == "Sort");
        assert!(matches!(
            filter_test_jobs(&only_sort, Some(JobClass::A), Some("Sort")),
            Err(SelectorError::NoApplicableTestJobs)
        ));
    }

    #[test]
    fn static_policies_pick_extremes_with_id_tie_break() {
        let trace = table_shaped_trace();
        let prices = PriceModel::linear(1.0, 0.1, 0.0);
        let job = trace.jobs().values().next().unwrap().clone();
        let check = |policy: SelectionPolicy, expected: u32| {
            let got = select(&policy, &job, &trace, &prices, trace.configs(), Strictness::Strict)
                .unwrap();
            assert_eq!(got, ConfigId(expected), "{}", policy.name());
        };
        // Max memory: #3 (512 GiB). Min memory: #1 (64 GiB).
        check(SelectionPolicy::MaxMem, 3);
        check(SelectionPolicy::MinMem, 1);
        // Min CPU: #4 and #7 both have 16 cores; ascending id wins.
        check(SelectionPolicy::MinCpu, 4);
        // Max CPU: #6 and #10 both have 128 cores; ascending id wins.
        check(SelectionPolicy::MaxCpu, 6);
    }

    #[test]
    fn replay_lookup_and_gap_handling() {
        let trace = table_shaped_trace();
        let prices = PriceModel::linear(1.0, 0.1, 0.0);
        let job = trace.jobs()[&JobId::from("Sort/94")].clone();
        let policy = SelectionPolicy::Replay {
            name: "recorded".to_owned(),
            selections: BTreeMap::from([(JobId::from("Sort/94"), ConfigId(2))]),
        };
        let got = select(&policy, &job, &trace, &prices, trace.configs(), Strictness::Strict)
            .unwrap();
        assert_eq!(got, ConfigId(2));

        let other = trace.jobs()[&JobId::from("Grep/3010")].clone();
        assert!(matches!(
            select(&policy, &other, &trace, &prices, trace.configs(), Strictness::Strict),
            Err(SelectorError::ReplayMissing { .. })
        ));
    }

    #[test]
    fn random_expectation_has_no_point_selection() {
        let trace = table_shaped_trace();
        let prices = PriceModel::linear(1.0, 0.1, 0.0);
        let job = trace.jobs().values().next().unwrap().clone();
        assert!(matches!(
            select(
                &SelectionPolicy::RandomExpectation,
                &job,
                &trace,
                &prices,
                trace.configs(),
                Strictness::Strict
            ),
            Err(SelectorError::NoPointSelection)
        ));
    }

    #[test]
    fn ingest_replay_map_parses_fixture_format() {
        let csv = "job_id,config_id\nSort/94,2\nGrep/3010,7\n";
        let map = ingest_replay_map(csv.as_bytes()).unwrap();
        assert_eq!(map[&JobId::from("Sort/94")], ConfigId(2));
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn flat_cost_job_adds_one_to_every_score() {
        // Appended job sorts last and has identical cost everywhere, so each
        // score grows by exactly 1.0.
        let base = twin_trace("j1,1,A,1,3600,0\nj1,1,A,2,7200,0\n");
        let extended = twin_trace(
            "j1,1,A,1,3600,0\nj1,1,A,2,7200,0\nzz-flat,1,A,1,600,0\nzz-flat,1,A,2,600,0\n",
        );
        let prices = PriceModel::linear(0.5, 0.01, 0.0);
        let before = rank_configurations(&base, &prices, Strictness::Strict).unwrap();
        let after = rank_configurations(&extended, &prices, Strictness::Strict).unwrap();
        for (b, a) in before.entries.iter().zip(&after.entries) {
            assert_eq!(a.config_id, b.config_id);
            assert_eq!(a.score, b.score + 1.0);
        }
    }
}
