//! Effectiveness measures, distributions, overlap and significance tests.

mod distribution;
mod overlap;
mod ranking;
pub mod report;
mod stats;

use thiserror::Error;

pub use distribution::{
    click_distribution, clicked_precision_graph, graded_distribution, precision_graph,
    ClickDistribution,
};
pub use overlap::{overlap_analysis, OverlapReport};
pub use ranking::{
    average_precision_at_k, dcg_at_k, ideal_dcg_at_k, mean_average_precision_at_k, ndcg_at_k,
    ndcg_at_k_with, precision_at_k, GainMode, JudgedEntry, RankedJudgedList,
};
pub(crate) use ranking::mean;
pub use stats::{
    descriptive_stats, ln_beta, ln_gamma, regularized_incomplete_beta, student_t_two_tailed,
    t_test_two_sample, DescriptiveStats, StatsError, TTestResult, TTestVariant,
    SIGNIFICANCE_LEVEL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no ranked lists to aggregate")]
    NoLists,
    #[error("overlap needs at least two engines, got {0}")]
    OverlapUndefined(usize),
    #[error("result from engine {0} which is not part of the analysis")]
    UnknownEngine(String),
}
