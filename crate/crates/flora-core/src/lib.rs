//! Cost-optimized cloud cluster configuration selection from shared
//! profiling traces.
//!
//! A profiling trace records runtimes of diverse test jobs across a catalog
//! of cluster configurations. Given a new job's data-access class, the
//! selector ranks configurations by summed normalized historical cost and
//! picks the cheapest-looking one; the evaluation harness measures selection
//! quality leave-one-algorithm-out against baseline policies, across price
//! structures, and under deliberate misclassification.

pub mod evaluation;
pub mod pricing;
pub mod report;
pub mod selector;
pub mod stats;
pub mod synth;
pub mod trace;
