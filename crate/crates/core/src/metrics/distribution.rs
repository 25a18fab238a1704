//! Per-position precision curves and judgment / click histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ranking::{precision_at_k, RankedJudgedList};
use super::MetricsError;
use crate::logs::SessionRecord;

/// `p(i)` for `i = 1..=k`: mean P@i over all lists.
pub fn precision_graph<'a>(
    lists: impl IntoIterator<Item = &'a RankedJudgedList>,
    k: usize,
) -> Result<Vec<f64>, MetricsError> {
    let lists: Vec<&RankedJudgedList> = lists.into_iter().collect();
    if lists.is_empty() {
        return Err(MetricsError::NoLists);
    }
    let n = lists.len() as f64;
    Ok((1..=k)
        .map(|i| lists.iter().map(|l| precision_at_k(l, i)).sum::<f64>() / n)
        .collect())
}

/// Precision among clicked entries ranked at or above each position, pooled
/// across lists. `None` marks positions with no clicked entry yet.
pub fn clicked_precision_graph<'a>(
    lists: impl IntoIterator<Item = &'a RankedJudgedList>,
    k: usize,
) -> Vec<Option<f64>> {
    let mut clicked = vec![0usize; k + 1];
    let mut relevant = vec![0usize; k + 1];
    for entry in lists.into_iter().flat_map(|l| &l.entries) {
        let rank = entry.rank as usize;
        if entry.was_clicked && rank >= 1 && rank <= k {
            clicked[rank] += 1;
            if entry.is_relevant() {
                relevant[rank] += 1;
            }
        }
    }
    let (mut c, mut r) = (0usize, 0usize);
    (1..=k)
        .map(|i| {
            c += clicked[i];
            r += relevant[i];
            (c > 0).then(|| r as f64 / c as f64)
        })
        .collect()
}

/// Share of judgments per scale point. Points never used are absent.
pub fn graded_distribution(grades: impl IntoIterator<Item = i64>) -> BTreeMap<i64, f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    let mut total = 0usize;
    for g in grades {
        *counts.entry(g).or_default() += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(g, c)| (g, c as f64 / total as f64))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickDistribution {
    pub by_rank: BTreeMap<u32, u64>,
    pub unknown: u64,
}

impl ClickDistribution {
    pub fn total(&self) -> u64 {
        self.by_rank.values().sum::<u64>() + self.unknown
    }
}

pub fn click_distribution<'a>(
    sessions: impl IntoIterator<Item = &'a SessionRecord>,
) -> ClickDistribution {
    let mut dist = ClickDistribution::default();
    for click in sessions.into_iter().flat_map(|s| &s.clicks) {
        match click.serp_rank {
            Some(rank) => *dist.by_rank.entry(rank).or_default() += 1,
            None => dist.unknown += 1,
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logs::ClickRecord;

    fn clicked_list(bits: &[(u32, bool)]) -> RankedJudgedList {
        let mut l = RankedJudgedList::from_binary("e", "q", &[false; 10]);
        for &(rank, rel) in bits {
            let e = &mut l.entries[rank as usize - 1];
            e.was_clicked = true;
            e.binary = Some(rel);
        }
        l
    }

    #[test]
    fn precision_graph_examples() {
        let one = RankedJudgedList::from_binary("e", "q", &[true, false]);
        assert_eq!(precision_graph([&one], 2).unwrap(), vec![1.0, 0.5]);

        let a = RankedJudgedList::from_binary("e", "q", &[true]);
        let b = RankedJudgedList::from_binary("e", "q", &[false]);
        assert_eq!(precision_graph([&a, &b], 1).unwrap(), vec![0.5]);

        assert_eq!(
            precision_graph(std::iter::empty(), 3),
            Err(MetricsError::NoLists)
        );
    }

    #[test]
    fn clicked_graph_examples() {
        let l = clicked_list(&[(1, true), (2, false)]);
        assert_eq!(clicked_precision_graph([&l], 2), vec![Some(1.0), Some(0.5)]);

        let none = RankedJudgedList::from_binary("e", "q", &[true, true, true]);
        assert_eq!(clicked_precision_graph([&none], 3), vec![None, None, None]);

        let third = clicked_list(&[(3, true)]);
        assert_eq!(
            clicked_precision_graph([&third], 3),
            vec![None, None, Some(1.0)]
        );
    }

    #[test]
    fn graded_distribution_examples() {
        let d = graded_distribution([1, 1, 5, 3]);
        assert_eq!(d, BTreeMap::from([(1, 0.5), (3, 0.25), (5, 0.25)]));
        assert_eq!(graded_distribution([5, 5]), BTreeMap::from([(5, 1.0)]));
        assert!(graded_distribution([]).is_empty());
    }

    fn session_with_ranks(ranks: &[Option<u32>]) -> SessionRecord {
        let mut s = SessionRecord::empty("p", "t", 0, 1);
        s.clicks = ranks
            .iter()
            .map(|&r| ClickRecord {
                url: "https://x.org".into(),
                serp_rank: r,
                engine_id: "e".into(),
                query_text: "q".into(),
                timestamp: 0,
            })
            .collect();
        s
    }

    #[test]
    fn click_distribution_examples() {
        let d = click_distribution([&session_with_ranks(&[Some(1), Some(1), Some(2)])]);
        assert_eq!(d.by_rank, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(d.unknown, 0);

        assert_eq!(click_distribution([&session_with_ranks(&[])]), ClickDistribution::default());

        let d = click_distribution([&session_with_ranks(&[None])]);
        assert!(d.by_rank.is_empty());
        assert_eq!(d.unknown, 1);
    }
}
