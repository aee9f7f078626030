//! Hourly cost structures and execution-cost computation.
//!
//! A [`PriceModel`] is either linear in per-resource rates or a per-instance
//! catalog. All operations are pure; models are immutable value objects.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::CloudConfig;

#[derive(Debug, thiserror::Error)]
pub enum PricingError {
    #[error("catalog price model has no entry for instance type {0:?}")]
    MissingInstanceType(String),
    #[error("non-positive runtime_seconds {0}")]
    NonPositiveRuntime(f64),
    #[error("unreadable price snapshot: {0}")]
    SnapshotParse(String),
    #[error("invalid price snapshot: {0}")]
    Snapshot(String),
    #[error("non-positive {0}")]
    NonPositiveParameter(&'static str),
}

/// Rate structure of a price model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PriceRates {
    /// Per-resource rates; hourly cost of a cluster is
    /// `node_count * (cores_per_node * cpu_core_hour + mem_gib_per_node * mem_gib_hour + node_hour_base)`.
    Linear {
        cpu_core_hour: f64,
        mem_gib_hour: f64,
        #[serde(default)]
        node_hour_base: f64,
    },
    /// Per-instance-type hourly prices; hourly cost is
    /// `node_count * per_instance_hour[instance_type]`.
    Catalog {
        per_instance_hour: BTreeMap<String, f64>,
    },
}

/// Current hourly cost structure, with an optional provenance date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    #[serde(flatten)]
    pub rates: PriceRates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub as_of: Option<String>,
}

impl PriceModel {
    pub fn linear(cpu_core_hour: f64, mem_gib_hour: f64, node_hour_base: f64) -> Self {
        PriceModel {
            rates: PriceRates::Linear {
                cpu_core_hour,
                mem_gib_hour,
                node_hour_base,
            },
            as_of: None,
        }
    }

    pub fn catalog(per_instance_hour: BTreeMap<String, f64>) -> Self {
        PriceModel {
            rates: PriceRates::Catalog { per_instance_hour },
            as_of: None,
        }
    }

    pub fn with_as_of(mut self, as_of: impl Into<String>) -> Self {
        self.as_of = Some(as_of.into());
        self
    }

    /// Provenance date string, if carried by the snapshot.
    pub fn as_of(&self) -> Option<&str> {
        self.as_of.as_deref()
    }
}

impl fmt::Display for PriceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rates {
            PriceRates::Linear {
                cpu_core_hour,
                mem_gib_hour,
                node_hour_base,
            } => write!(
                f,
                "linear(cpu_core_hour={cpu_core_hour}, mem_gib_hour={mem_gib_hour}, node_hour_base={node_hour_base})"
            ),
            PriceRates::Catalog { per_instance_hour } => {
                write!(f, "catalog({} instance types)", per_instance_hour.len())
            }
        }
    }
}

/// Current hourly cost of running `config`, in USD per hour.
pub fn hourly_cost(config: &CloudConfig, prices: &PriceModel) -> Result<f64, PricingError> {
    let nodes = f64::from(config.node_count);
    match &prices.rates {
        PriceRates::Linear {
            cpu_core_hour,
            mem_gib_hour,
            node_hour_base,
        } => Ok(nodes
            * (f64::from(config.cores_per_node) * cpu_core_hour
                + config.mem_gib_per_node * mem_gib_hour
                + node_hour_base)),
        PriceRates::Catalog { per_instance_hour } => per_instance_hour
            .get(&config.instance_type)
            .map(|price| nodes * price)
            .ok_or_else(|| PricingError::MissingInstanceType(config.instance_type.clone())),
    }
}

/// Cost of one execution: `(runtime_seconds / 3600) * hourly_cost(config)`.
pub fn execution_cost(
    runtime_seconds: f64,
    config: &CloudConfig,
    prices: &PriceModel,
) -> Result<f64, PricingError> {
    if runtime_seconds <= 0.0 || !runtime_seconds.is_finite() {
        return Err(PricingError::NonPositiveRuntime(runtime_seconds));
    }
    Ok(runtime_seconds / 3600.0 * hourly_cost(config, prices)?)
}

/// Builds a linear model from a memory-to-CPU price ratio
/// (`ratio = mem_gib_hour / cpu_core_hour`) and a CPU rate anchor.
pub fn model_from_ratio(ratio: f64, cpu_core_hour_anchor: f64) -> Result<PriceModel, PricingError> {
    if ratio <= 0.0 || !ratio.is_finite() {
        return Err(PricingError::NonPositiveParameter("ratio"));
    }
    if cpu_core_hour_anchor <= 0.0 || !cpu_core_hour_anchor.is_finite() {
        return Err(PricingError::NonPositiveParameter("cpu_core_hour_anchor"));
    }
    Ok(PriceModel::linear(
        cpu_core_hour_anchor,
        ratio * cpu_core_hour_anchor,
        0.0,
    ))
}

/// Parses and validates a price snapshot from JSON.
pub fn ingest_price_snapshot<R: std::io::Read>(reader: R) -> Result<PriceModel, PricingError> {
    let model: PriceModel =
        serde_json::from_reader(reader).map_err(|e| PricingError::SnapshotParse(e.to_string()))?;
    validate_snapshot(&model)?;
    Ok(model)
}

fn validate_snapshot(model: &PriceModel) -> Result<(), PricingError> {
    match &model.rates {
        PriceRates::Linear {
            cpu_core_hour,
            mem_gib_hour,
            node_hour_base,
        } => {
            for (name, rate) in [
                ("cpu_core_hour", cpu_core_hour),
                ("mem_gib_hour", mem_gib_hour),
                ("node_hour_base", node_hour_base),
            ] {
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(PricingError::Snapshot(format!("negative rate {name}={rate}")));
                }
            }
            if *cpu_core_hour == 0.0 && *mem_gib_hour == 0.0 && *node_hour_base == 0.0 {
                return Err(PricingError::Snapshot("all rates zero".to_owned()));
            }
        }
        PriceRates::Catalog { per_instance_hour } => {
            if per_instance_hour.is_empty() {
                return Err(PricingError::Snapshot("empty catalog".to_owned()));
            }
            for (instance_type, price) in per_instance_hour {
                if !price.is_finite() || *price <= 0.0 {
                    return Err(PricingError::Snapshot(format!(
                        "non-positive price for {instance_type:?}"
                    )));
                }
            }
        }
    }
    Ok(())
}
