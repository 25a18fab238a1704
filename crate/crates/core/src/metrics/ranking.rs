//! Rank-based effectiveness measures over judged result lists.
//!
//! Unjudged entries and positions past the end of a list count as not
//! relevant and carry zero gain.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedEntry {
    pub rank: u32,
    pub binary: Option<bool>,
    pub graded: Option<i64>,
    pub was_clicked: bool,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub item_id: String,
}

impl JudgedEntry {
    pub fn is_relevant(&self) -> bool {
        self.binary == Some(true)
    }

    pub fn is_judged(&self) -> bool {
        self.binary.is_some() || self.graded.is_some()
    }
}

/// One engine's result list for one query in one pool, with the juror's
/// judgments joined back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedJudgedList {
    pub engine_id: String,
    pub query_text: String,
    #[serde(default)]
    pub pool_id: String,
    #[serde(default)]
    pub participant_id: String,
    #[serde(default)]
    pub task_id: String,
    pub entries: Vec<JudgedEntry>,
}

impl RankedJudgedList {
    pub fn new(engine_id: impl Into<String>, query_text: impl Into<String>) -> Self {
        RankedJudgedList {
            engine_id: engine_id.into(),
            query_text: query_text.into(),
            pool_id: String::new(),
            participant_id: String::new(),
            task_id: String::new(),
            entries: Vec::new(),
        }
    }

    /// Builds a list from binary judgments in rank order.
    pub fn from_binary(engine_id: &str, query_text: &str, binary: &[bool]) -> Self {
        let mut list = RankedJudgedList::new(engine_id, query_text);
        list.entries = binary
            .iter()
            .enumerate()
            .map(|(i, &b)| JudgedEntry {
                rank: i as u32 + 1,
                binary: Some(b),
                graded: None,
                was_clicked: false,
                url: String::new(),
                item_id: String::new(),
            })
            .collect();
        list
    }

    /// Builds a list from graded judgments in rank order; binary is left unset.
    pub fn from_graded(engine_id: &str, query_text: &str, graded: &[i64]) -> Self {
        let mut list = RankedJudgedList::new(engine_id, query_text);
        list.entries = graded
            .iter()
            .enumerate()
            .map(|(i, &g)| JudgedEntry {
                rank: i as u32 + 1,
                binary: None,
                graded: Some(g),
                was_clicked: false,
                url: String::new(),
                item_id: String::new(),
            })
            .collect();
        list
    }

    pub fn unjudged_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_judged()).count()
    }

    fn top(&self, k: usize) -> impl Iterator<Item = &JudgedEntry> {
        self.entries.iter().filter(move |e| (e.rank as usize) <= k)
    }
}

/// How graded judgments map to gains for DCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// `graded - min`, so the lowest scale point has zero gain.
    #[default]
    Linear,
    /// `2^(graded - min) - 1`.
    Exponential,
}

impl GainMode {
    pub fn gain(self, graded: i64, scale_min: i64) -> f64 {
        let steps = (graded - scale_min).max(0);
        match self {
            GainMode::Linear => steps as f64,
            GainMode::Exponential => 2f64.powi(steps as i32) - 1.0,
        }
    }
}

pub fn precision_at_k(list: &RankedJudgedList, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let hits = list.top(k).filter(|e| e.is_relevant()).count();
    hits as f64 / k as f64
}

/// AP@k normalised by the number of relevant entries within the top k.
pub fn average_precision_at_k(list: &RankedJudgedList, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let mut top: Vec<&JudgedEntry> = list.top(k).collect();
    top.sort_by_key(|e| e.rank);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for entry in top {
        if entry.is_relevant() {
            hits += 1;
            sum += hits as f64 / f64::from(entry.rank);
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision_at_k<'a>(
    lists: impl IntoIterator<Item = &'a RankedJudgedList>,
    k: usize,
) -> Option<f64> {
    mean(lists.into_iter().map(|l| average_precision_at_k(l, k)))
}

pub fn dcg_at_k(list: &RankedJudgedList, k: usize, mode: GainMode, scale_min: i64) -> f64 {
    list.top(k)
        .map(|e| entry_gain(e, mode, scale_min) / (f64::from(e.rank) + 1.0).log2())
        .sum()
}

pub fn ideal_dcg_at_k(list: &RankedJudgedList, k: usize, mode: GainMode, scale_min: i64) -> f64 {
    let mut gains: Vec<f64> = list
        .entries
        .iter()
        .map(|e| entry_gain(e, mode, scale_min))
        .collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| g / (i as f64 + 2.0).log2())
        .sum()
}

fn entry_gain(entry: &JudgedEntry, mode: GainMode, scale_min: i64) -> f64 {
    entry.graded.map_or(0.0, |g| mode.gain(g, scale_min))
}

/// nDCG@k with linear gains on a scale starting at 1.
pub fn ndcg_at_k(list: &RankedJudgedList, k: usize) -> f64 {
    ndcg_at_k_with(list, k, GainMode::Linear, 1)
}

pub fn ndcg_at_k_with(list: &RankedJudgedList, k: usize, mode: GainMode, scale_min: i64) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let ideal = ideal_dcg_at_k(list, k, mode, scale_min);
    if ideal == 0.0 {
        0.0
    } else {
        dcg_at_k(list, k, mode, scale_min) / ideal
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
