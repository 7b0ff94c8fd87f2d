//! Repository mining for code-improvement work.
//!
//! The pipeline ingests a commit-history export, resolves rename chains into
//! stable file identities, builds a software supply chain network
//! (dependencies, co-changes and authorship), scores files with Katz
//! centrality and PageRank, and assembles a per-file prioritization table.
//! The [`impact`] module evaluates reengineering interventions against
//! matched controls with the tests in [`stats`].
//!
//! Numeric kernels in [`centrality`] and [`stats`] are generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix them to `f64`, which
//! is what the rest of the pipeline uses.

pub mod centrality;
pub mod classifier;
pub mod code_metrics;
pub mod error;
pub mod graph;
pub mod impact;
pub mod ingest;
pub mod prioritizer;
pub mod scalar;
pub mod stats;
pub mod synthgen;
pub mod workspace;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Weighted sparse graph with `f64` weights.
pub type Graph = centrality::SparseGraph<f64>;
/// Combined supply-chain graph with `f64` weights.
pub type SupplyChain = graph::SupplyChainGraph<f64>;
/// Centrality scores with `f64` values.
pub type Scores = centrality::CentralityScores<f64>;

/// Statistical test outcome with `f64` statistic and p-value.
pub type TestOutcome = stats::TestResult<f64>;

/// Seconds in a day.
pub const DAY_SECS: i64 = 86_400;

/// Serializes maps with non-string keys as sequences of `(key, value)`.
pub(crate) mod as_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K, V, S>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize,
        V: Serialize,
        S: Serializer,
    {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}
