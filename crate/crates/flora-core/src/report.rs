//! Emission of evaluation results as machine-readable CSV, human-readable
//! markdown tables, and long-form plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::evaluation::{EvaluationReport, RobustnessTable, SweepTable};
use crate::stats::{SummaryStats, TraceStatistics};

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("unknown output format {0:?}, expected csv, markdown, or plotdata")]
    UnknownFormat(String),
    #[error("format {format} is not defined for {what}")]
    Unsupported { format: &'static str, what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Markdown,
    Plotdata,
}

impl std::str::FromStr for EmitFormat {
    type Err = EmitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "markdown" => Ok(EmitFormat::Markdown),
            "plotdata" => Ok(EmitFormat::Plotdata),
            other => Err(EmitError::UnknownFormat(other.to_owned())),
        }
    }
}

/// Table values are rounded to 3 decimals at emission only; plot data keeps
/// full precision.
fn f3(x: f64) -> String {
    format!("{x:.3}")
}

/// Per-job results: `policy,job_id,selected_config,normalized_cost,normalized_runtime`.
/// The selected_config cell is empty for the analytic random expectation.
pub fn emit_job_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("policy,job_id,selected_config,normalized_cost,normalized_runtime\n");
    for row in &report.per_job {
        let selected = row
            .selected_config_id
            .map(|id| id.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.policy,
            row.job_id,
            selected,
            f3(row.normalized_cost),
            f3(row.normalized_runtime)
        );
    }
    out
}

/// Aggregate means: `policy,mean_cost,mean_runtime,jobs`.
pub fn emit_aggregate_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("policy,mean_cost,mean_runtime,jobs\n");
    for agg in &report.aggregate {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            agg.policy,
            f3(agg.mean_cost),
            f3(agg.mean_runtime),
            agg.jobs
        );
    }
    out
}

/// Aggregate table plus a per-job detail table. Policies covering fewer jobs
/// than the trace holds are annotated with their job count.
pub fn emit_markdown(report: &EvaluationReport) -> String {
    let mut out = String::from("## Normalized results (1.0 = optimal)\n\n");
    if let Some(as_of) = &report.price_model_as_of {
        let _ = writeln!(out, "Prices as of {as_of}.\n");
    }
    out.push_str("| Approach | Cost | Runtime |\n|---|---:|---:|\n");
    for agg in &report.aggregate {
        let label = if agg.jobs < report.jobs_evaluated {
            format!("{} ({} jobs)", agg.policy, agg.jobs)
        } else {
            agg.policy.clone()
        };
        let _ = writeln!(out, "| {label} | {} | {} |", f3(agg.mean_cost), f3(agg.mean_runtime));
    }

    // Per-job detail: one column per policy, cells "#selected cost".
    let policies: Vec<&str> = {
        let mut seen = Vec::new();
        for row in &report.per_job {
            if !seen.contains(&row.policy.as_str()) {
                seen.push(row.policy.as_str());
            }
        }
        seen
    };
    if !policies.is_empty() {
        let mut cells: BTreeMap<(&str, &str), String> = BTreeMap::new();
        let mut jobs: Vec<&str> = Vec::new();
        for row in &report.per_job {
            if !jobs.contains(&row.job_id.0.as_str()) {
                jobs.push(&row.job_id.0);
            }
            let cell = match row.selected_config_id {
                Some(id) => format!("#{id} {}", f3(row.normalized_cost)),
                None => f3(row.normalized_cost),
            };
            cells.insert((row.job_id.0.as_str(), row.policy.as_str()), cell);
        }
        out.push_str("\n## Per-job selections and normalized cost\n\n| Job |");
        for p in &policies {
            let _ = write!(out, " {p} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(policies.len()));
        out.push('\n');
        for job in jobs {
            let _ = write!(out, "| {job} |");
            for p in &policies {
                let cell = cells.get(&(job, *p)).map(String::as_str).unwrap_or("");
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
    }

    if !report.notices.is_empty() {
        out.push_str("\nNotes:\n");
        for notice in &report.notices {
            let _ = writeln!(out, "- {notice}");
        }
    }
    out
}

/// Dispatching emitter for an evaluation report. CSV yields the per-job
/// rows; the aggregate table has its own emitter.
pub fn emit_report(report: &EvaluationReport, format: EmitFormat) -> Result<String, EmitError> {
    match format {
        EmitFormat::Csv => Ok(emit_job_csv(report)),
        EmitFormat::Markdown => Ok(emit_markdown(report)),
        EmitFormat::Plotdata => Err(EmitError::Unsupported {
            format: "plotdata",
            what: "per-job evaluation reports",
        }),
    }
}

/// Wide table: `ratio,<policy>,...` with one row per swept ratio.
pub fn emit_sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("ratio");
    for p in &table.policies {
        let _ = write!(out, ",{p}");
    }
    out.push('\n');
    for row in &table.rows {
        let _ = write!(out, "{}", row.ratio);
        for p in &table.policies {
            let _ = write!(out, ",{}", f3(row.mean_cost[p]));
        }
        out.push('\n');
    }
    out
}

pub fn emit_sweep_markdown(table: &SweepTable) -> String {
    let mut out = String::from("## Mean normalized cost by memory:core price ratio\n\n| Ratio |");
    for p in &table.policies {
        let _ = write!(out, " {p} |");
    }
    out.push_str("\n|---:|");
    out.push_str(&"---:|".repeat(table.policies.len()));
    out.push('\n');
    for row in &table.rows {
        let _ = write!(out, "| {} |", row.ratio);
        for p in &table.policies {
            let _ = write!(out, " {} |", f3(row.mean_cost[p]));
        }
        out.push('\n');
    }
    out
}

/// Long-form plot data (`series,x,y`), full precision: one row per
/// (policy, ratio).
pub fn emit_sweep_plotdata(table: &SweepTable) -> String {
    let mut out = String::from("series,x,y\n");
    for p in &table.policies {
        for row in &table.rows {
            let _ = writeln!(out, "{p},{},{}", row.ratio, row.mean_cost[p]);
        }
    }
    out
}

pub fn emit_sweep(table: &SweepTable, format: EmitFormat) -> String {
    match format {
        EmitFormat::Csv => emit_sweep_csv(table),
        EmitFormat::Markdown => emit_sweep_markdown(table),
        EmitFormat::Plotdata => emit_sweep_plotdata(table),
    }
}

/// `k,mean_cost,method,subsets,std_error`; std_error is empty for
/// exhaustive rows.
pub fn emit_robustness_csv(table: &RobustnessTable) -> String {
    let mut out = String::from("k,mean_cost,method,subsets,std_error\n");
    for row in &table.rows {
        let se = row.std_error.map(|s| format!("{s:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{se}",
            row.k,
            f3(row.mean_cost),
            row.method,
            row.subsets
        );
    }
    out
}

pub fn emit_robustness_markdown(table: &RobustnessTable) -> String {
    let mut out = format!(
        "## Mean normalized cost under k of {} misclassified given jobs\n\n\
         | k | Mean cost | Method | Subsets |\n|---:|---:|---|---:|\n",
        table.n_jobs
    );
    for row in &table.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            row.k,
            f3(row.mean_cost),
            row.method,
            row.subsets
        );
    }
    out
}

/// Plot data for the robustness curve plus flat reference series (policies
/// unaffected by class flips), full precision.
pub fn emit_robustness_plotdata(
    table: &RobustnessTable,
    references: &BTreeMap<String, f64>,
) -> String {
    let mut out = String::from("series,x,y\n");
    for row in &table.rows {
        let _ = writeln!(out, "flora,{},{}", row.k, row.mean_cost);
    }
    for (name, value) in references {
        for row in &table.rows {
            let _ = writeln!(out, "{name},{},{value}", row.k);
        }
    }
    out
}

pub fn emit_robustness(
    table: &RobustnessTable,
    references: &BTreeMap<String, f64>,
    format: EmitFormat,
) -> String {
    match format {
        EmitFormat::Csv => emit_robustness_csv(table),
        EmitFormat::Markdown => emit_robustness_markdown(table),
        EmitFormat::Plotdata => emit_robustness_plotdata(table, references),
    }
}

/// Two-column `metric,value` rows covering both distributions.
pub fn emit_stats_csv(stats: &TraceStatistics) -> String {
    let mut out = String::from("metric,value\n");
    let mut push = |prefix: &str, s: &SummaryStats| {
        let fields = [
            ("mean", s.mean),
            ("std", s.std),
            ("min", s.min),
            ("q25", s.q25),
            ("median", s.median),
            ("q75", s.q75),
            ("max", s.max),
        ];
        for (name, value) in fields {
            let _ = writeln!(out, "{prefix}_{name},{}", f3(value));
        }
    };
    push("runtime_seconds", &stats.runtime_seconds);
    push("cost_usd", &stats.cost_usd);
    out
}

/// Aligned text table over runtime and cost distributions.
pub fn emit_stats_text(stats: &TraceStatistics) -> String {
    type Field = fn(&SummaryStats) -> f64;
    let rows: [(&str, Field); 7] = [
        ("Mean", |s| s.mean),
        ("Std. deviation", |s| s.std),
        ("Minimum", |s| s.min),
        ("25% quantile", |s| s.q25),
        ("Median", |s| s.median),
        ("75% quantile", |s| s.q75),
        ("Maximum", |s| s.max),
    ];
    let mut out = format!(
        "{:<16} {:>14} {:>12}\n",
        format!("n = {}", stats.runtime_seconds.n),
        "Runtime (s)",
        "Cost (USD)"
    );
    for (label, get) in rows {
        let _ = writeln!(
            out,
            "{label:<16} {:>14} {:>12}",
            f3(get(&stats.runtime_seconds)),
            f3(get(&stats.cost_usd))
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{
        JobResult, PolicyAggregate, RobustnessRow, SubsetMethod, SweepRow,
    };
    use crate::trace::{ConfigId, JobId};

    fn tiny_report() -> EvaluationReport {
        EvaluationReport {
            per_job: vec![
                JobResult {
                    policy: "flora".to_owned(),
                    job_id: JobId::from("alpha/1"),
                    selected_config_id: Some(ConfigId(9)),
                    normalized_cost: 1.2345,
                    normalized_runtime: 1.0,
                },
                JobResult {
                    policy: "random".to_owned(),
                    job_id: JobId::from("alpha/1"),
                    selected_config_id: None,
                    normalized_cost: 1.9414,
                    normalized_runtime: 3.4841,
                },
            ],
            aggregate: vec![
                PolicyAggregate {
                    policy: "flora".to_owned(),
                    mean_cost: 1.2345,
                    mean_runtime: 1.0,
                    jobs: 1,
                },
                PolicyAggregate {
                    policy: "random".to_owned(),
                    mean_cost: 1.9414,
                    mean_runtime: 3.4841,
                    jobs: 1,
                },
            ],
            jobs_evaluated: 1,
            price_model_as_of: Some("2023-07".to_owned()),
            notices: vec![],
        }
    }

    #[test]
    fn job_csv_rounds_and_leaves_random_selection_empty() {
        let csv = emit_job_csv(&tiny_report());
        assert_eq!(
            csv,
            "policy,job_id,selected_config,normalized_cost,normalized_runtime\n\
             flora,alpha/1,9,1.234,1.000\n\
             random,alpha/1,,1.941,3.484\n"
        );
    }

    #[test]
    fn aggregate_csv_shape() {
        let csv = emit_aggregate_csv(&tiny_report());
        assert_eq!(
            csv,
            "policy,mean_cost,mean_runtime,jobs\n\
             flora,1.234,1.000,1\nrandom,1.941,3.484,1\n"
        );
    }

    #[test]
    fn empty_report_emits_headers_only() {
        let report = EvaluationReport {
            per_job: vec![],
            aggregate: vec![],
            jobs_evaluated: 0,
            price_model_as_of: None,
            notices: vec![],
        };
        assert_eq!(
            emit_job_csv(&report),
            "policy,job_id,selected_config,normalized_cost,normalized_runtime\n"
        );
        assert_eq!(emit_aggregate_csv(&report), "policy,mean_cost,mean_runtime,jobs\n");
    }

    #[test]
    fn markdown_has_one_row_per_policy_and_annotates_partial_coverage() {
        let mut report = tiny_report();
        report.jobs_evaluated = 18;
        report.aggregate = [
            "flora", "fw1c", "max-mem", "max-cpu", "min-mem", "random", "min-cpu", "crispy",
        ]
        .iter()
        .enumerate()
        .map(|(i, name)| PolicyAggregate {
            policy: (*name).to_owned(),
            mean_cost: 1.0 + i as f64,
            mean_runtime: 2.0,
            jobs: if *name == "crispy" { 6 } else { 18 },
        })
        .collect();
        let md = emit_markdown(&report);
        let table_rows = md
            .lines()
            .filter(|l| l.starts_with("| ") && !l.contains("Approach") && !l.contains("Job"))
            .count();
        // 8 aggregate rows plus the per-job detail row for alpha/1.
        assert_eq!(table_rows, 9);
        assert!(md.contains("| crispy (6 jobs) |"));
        assert!(md.contains("#9 1.234"));
        assert!(md.contains("Prices as of 2023-07."));
    }

    #[test]
    fn sweep_plotdata_is_one_row_per_policy_ratio_pair() {
        let table = SweepTable {
            policies: vec!["flora".to_owned(), "random".to_owned()],
            rows: (1..=4)
                .map(|i| SweepRow {
                    ratio: i as f64 / 10.0,
                    mean_cost: BTreeMap::from([
                        ("flora".to_owned(), 1.0),
                        ("random".to_owned(), 1.5),
                    ]),
                })
                .collect(),
        };
        let plot = emit_sweep_plotdata(&table);
        assert_eq!(plot.lines().count(), 1 + 8);
        assert!(plot.starts_with("series,x,y\n"));
        assert!(plot.contains("flora,0.1,1\n"));
        assert!(plot.contains("random,0.4,1.5\n"));

        let csv = emit_sweep_csv(&table);
        assert!(csv.starts_with("ratio,flora,random\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn robustness_emission_includes_reference_series() {
        let table = RobustnessTable {
            rows: vec![
                RobustnessRow {
                    k: 0,
                    mean_cost: 1.052,
                    method: SubsetMethod::Exhaustive,
                    subsets: 1,
                    std_error: None,
                },
                RobustnessRow {
                    k: 5,
                    mean_cost: 1.3,
                    method: SubsetMethod::Sampled,
                    subsets: 2000,
                    std_error: Some(0.0123456),
                },
            ],
            n_jobs: 18,
        };
        let csv = emit_robustness_csv(&table);
        assert!(csv.contains("0,1.052,exhaustive,1,\n"));
        assert!(csv.contains("5,1.300,sampled,2000,0.012346\n"));

        let refs = BTreeMap::from([("fw1c".to_owned(), 1.336)]);
        let plot = emit_robustness_plotdata(&table, &refs);
        assert!(plot.contains("flora,0,1.052\n"));
        assert!(plot.contains("fw1c,0,1.336\n"));
        assert!(plot.contains("fw1c,5,1.336\n"));
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!(matches!(
            "yaml".parse::<EmitFormat>(),
            Err(EmitError::UnknownFormat(_))
        ));
        assert!(matches!("csv".parse::<EmitFormat>(), Ok(EmitFormat::Csv)));
    }
}
