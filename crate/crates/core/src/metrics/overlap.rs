//! Result overlap between engines over a shared query set.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::serp::ResultBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub total_distinct: usize,
    pub shared: usize,
    pub unique_per_engine: BTreeMap<String, usize>,
    pub shared_fraction: f64,
    pub unique_fraction: f64,
}

impl OverlapReport {
    pub fn unique_total(&self) -> usize {
        self.unique_per_engine.values().sum()
    }
}

/// Counts distinct result URLs, as identified by `normalize`, that one or
/// several of `engines` returned.
///
/// A URL is shared when at least two engines returned it, for any queries.
/// A repeated `(engine, query, rank)` slot is read once, so duplicate
/// queries collapse before counting.
pub fn overlap_analysis<F>(
    batch: &ResultBatch,
    engines: &[String],
    normalize: F,
) -> Result<OverlapReport, MetricsError>
where
    F: Fn(&str) -> String,
{
    let engine_set: BTreeSet<&str> = engines.iter().map(String::as_str).collect();
    if engine_set.len() < 2 {
        return Err(MetricsError::OverlapUndefined(engine_set.len()));
    }

    let mut seen: HashSet<(&str, &str, u32)> = HashSet::new();
    let mut engines_by_url: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for r in &batch.results {
        if !engine_set.contains(r.engine_id.as_str()) {
            return Err(MetricsError::UnknownEngine(r.engine_id.clone()));
        }
        if !seen.insert((r.engine_id.as_str(), r.query_text.as_str(), r.rank)) {
            continue;
        }
        engines_by_url
            .entry(normalize(&r.url))
            .or_default()
            .insert(r.engine_id.as_str());
    }

    let mut unique_per_engine: BTreeMap<String, usize> =
        engine_set.iter().map(|e| (e.to_string(), 0)).collect();
    let mut shared = 0;
    for owners in engines_by_url.values() {
        if owners.len() >= 2 {
            shared += 1;
        } else if let Some(only) = owners.iter().next() {
            *unique_per_engine.get_mut(*only).expect("engine registered") += 1;
        }
    }
    let total_distinct = engines_by_url.len();
    let unique: usize = unique_per_engine.values().sum();
    let (shared_fraction, unique_fraction) = if total_distinct == 0 {
        (0.0, 0.0)
    } else {
        (
            shared as f64 / total_distinct as f64,
            unique as f64 / total_distinct as f64,
        )
    };
    Ok(OverlapReport {
        total_distinct,
        shared,
        unique_per_engine,
        shared_fraction,
        unique_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serp::SerpResult;

    fn batch(lists: &[(&str, &str, &[&str])]) -> ResultBatch {
        let mut b = ResultBatch::new("s");
        for (engine, query, urls) in lists {
            for (i, u) in urls.iter().enumerate() {
                b.results.push(SerpResult {
                    engine_id: engine.to_string(),
                    query_text: query.to_string(),
                    rank: i as u32 + 1,
                    url: u.to_string(),
                    title: String::new(),
                    snippet: String::new(),
                    fetched_at: 0,
                });
            }
        }
        b
    }

    fn engines() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn small_enumeration() {
        let b = batch(&[("a", "q", &["u1", "u2", "u3"]), ("b", "q", &["u2", "u4"])]);
        let r = overlap_analysis(&b, &engines(), str::to_string).unwrap();
        assert_eq!(r.total_distinct, 4);
        assert_eq!(r.shared, 1);
        assert_eq!(r.unique_per_engine["a"], 2);
        assert_eq!(r.unique_per_engine["b"], 1);
        assert_eq!(r.shared_fraction, 0.25);
        assert_eq!(r.unique_fraction, 0.75);
    }

    #[test]
    fn disjoint_sets() {
        let b = batch(&[("a", "q", &["u1"]), ("b", "q", &["u2"])]);
        let r = overlap_analysis(&b, &engines(), str::to_string).unwrap();
        assert_eq!((r.shared, r.shared_fraction, r.unique_fraction), (0, 0.0, 1.0));
    }

    #[test]
    fn shared_across_different_queries() {
        let b = batch(&[("a", "q1", &["u1"]), ("b", "q2", &["u1"])]);
        let r = overlap_analysis(&b, &engines(), str::to_string).unwrap();
        assert_eq!(r.shared, 1);
    }

    #[test]
    fn duplicate_query_lists_read_once() {
        let b = batch(&[
            ("a", "q", &["u1", "u2"]),
            ("b", "q", &["u3"]),
            ("a", "q", &["u9", "u8"]),
        ]);
        let r = overlap_analysis(&b, &engines(), str::to_string).unwrap();
        assert_eq!(r.total_distinct, 3);
    }

    #[test]
    fn needs_two_engines() {
        let b = batch(&[("a", "q", &["u1"])]);
        assert_eq!(
            overlap_analysis(&b, &["a".to_string()], str::to_string),
            Err(MetricsError::OverlapUndefined(1))
        );
    }

    #[test]
    fn normalizer_defines_identity() {
        let b = batch(&[("a", "q", &["HTTP://X.org/"]), ("b", "q", &["http://x.org"])]);
        let norm = |u: &str| crate::pool::normalize_url(u).unwrap();
        let r = overlap_analysis(&b, &engines(), norm).unwrap();
        assert_eq!((r.total_distinct, r.shared), (1, 1));
    }
}
