//! Summary statistics over the aggregated cells of a profiling trace.

use serde::Serialize;

use crate::pricing::{execution_cost, PriceModel, PricingError};
use crate::trace::{ProfilingTrace, TraceError};

/// Five-number summary plus mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor n-1); 0 by convention for n < 2.
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl SummaryStats {
    /// True when the sample is too small for a meaningful std (n < 2).
    pub fn degenerate(&self) -> bool {
        self.n < 2
    }
}

/// Computes summary statistics; `None` for an empty sample.
/// Quartiles use linear interpolation at position `(n-1) * q`.
pub fn summarize(values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        let ss = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    };
    Some(SummaryStats {
        n,
        mean,
        std,
        min: sorted[0],
        q25: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Per-cell cost and runtime statistics over a complete trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStatistics {
    pub cost_usd: SummaryStats,
    pub runtime_seconds: SummaryStats,
}

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// Statistics over all aggregated (job, config) cells of a complete trace;
/// cost per cell is the execution cost of the cell's median runtime under
/// `prices`.
pub fn trace_statistics(
    trace: &ProfilingTrace,
    prices: &PriceModel,
) -> Result<TraceStatistics, StatsError> {
    trace.require_complete()?;
    let mut runtimes = Vec::with_capacity(trace.aggregated_runtime().len());
    let mut costs = Vec::with_capacity(trace.aggregated_runtime().len());
    for ((_job, config_id), runtime) in trace.aggregated_runtime() {
        let config = &trace.configs()[config_id];
        runtimes.push(*runtime);
        costs.push(execution_cost(*runtime, config, prices)?);
    }
    // Non-empty by construction only for non-empty traces; an empty trace is
    // vacuously complete, so guard it.
    let runtime_seconds = summarize(&runtimes).ok_or(TraceError::Incomplete { missing: vec![] })?;
    let cost_usd = summarize(&costs).expect("same length as runtimes");
    if runtime_seconds.degenerate() {
        log::warn!(
            "trace statistics over {} cell(s): std reported as 0 by convention",
            runtime_seconds.n
        );
    }
    Ok(TraceStatistics {
        cost_usd,
        runtime_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::PriceModel;
    use crate::trace::{ingest_configs, ingest_trace};
    use approx::assert_relative_eq;

    #[test]
    fn summarize_matches_hand_computed_values() {
        // Values 1..=5: mean 3, sample std sqrt(2.5), quartiles 2/3/4.
        let s = summarize(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(s.n, 5);
        assert_eq!(s.mean, 3.0);
        assert_relative_eq!(s.std, 2.5_f64.sqrt(), epsilon = 1e-12);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.q25, 2.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q75, 4.0);
        assert_eq!(s.max, 5.0);
    }

    #[test]
    fn quartiles_interpolate_linearly() {
        // Four values: q25 sits 0.75 of the way from 10 to 20.
        let s = summarize(&[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_relative_eq!(s.q25, 17.5, epsilon = 1e-12);
        assert_eq!(s.median, 25.0);
        assert_relative_eq!(s.q75, 32.5, epsilon = 1e-12);
    }

    #[test]
    fn single_cell_trace_is_flagged_with_zero_std() {
        let configs = ingest_configs(
            "config_id,instance_type,node_count,cores_per_node,mem_gib_per_node\n1,x,1,1,1\n"
                .as_bytes(),
        )
        .unwrap();
        let trace = ingest_trace(
            "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\nA,1,A,1,3600,0\n"
                .as_bytes(),
            &configs,
        )
        .unwrap();
        let stats = trace_statistics(&trace, &PriceModel::linear(1.0, 0.0, 0.0)).unwrap();
        assert!(stats.runtime_seconds.degenerate());
        assert_eq!(stats.runtime_seconds.std, 0.0);
        assert_eq!(stats.cost_usd.mean, 1.0);
    }

    #[test]
    fn incomplete_trace_is_rejected_with_missing_cells() {
        let configs = ingest_configs(
            "config_id,instance_type,node_count,cores_per_node,mem_gib_per_node\n1,x,1,1,1\n2,y,1,1,1\n"
                .as_bytes(),
        )
        .unwrap();
        let trace = ingest_trace(
            "algorithm,dataset_gib,class,config_id,runtime_seconds,run_index\nA,1,A,1,100,0\n"
                .as_bytes(),
            &configs,
        )
        .unwrap();
        let err = trace_statistics(&trace, &PriceModel::linear(1.0, 0.0, 0.0)).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }
}
