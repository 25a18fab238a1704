//! The full analysis over exported lists, sessions and questionnaires.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    average_precision_at_k, click_distribution, clicked_precision_graph, descriptive_stats,
    graded_distribution, mean, ndcg_at_k_with, overlap_analysis, precision_at_k, precision_graph,
    t_test_two_sample, ClickDistribution, DescriptiveStats, GainMode, OverlapReport,
    RankedJudgedList, TTestResult, TTestVariant,
};
use crate::config::{Complexity, StudyConfig};
use crate::logs::{session_stats, SessionRecord};
use crate::pool::normalize_url;
use crate::serp::{ResultBatch, SerpResult};

/// Depth of the precision graphs.
pub const GRAPH_DEPTH: usize = 10;

pub const CONVENTIONS: [&str; 3] = [
    "unjudged entries count as not relevant with zero gain",
    "lists shorter than k are zero-padded",
    "AP@k is normalised by the relevant entries within the top k",
];

/// Selects `(participant, task)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    All,
    Complexity(Complexity),
    /// `phase.item = value` (or `!=` when `negated`) on questionnaire answers;
    /// pairs without an answer never match.
    Answer {
        key: String,
        value: String,
        negated: bool,
    },
}

impl Segment {
    /// Parses `all`, `complexity=simple|complex`, or `pre|post.<item>[!]=<value>`.
    pub fn parse(text: &str) -> Result<Segment, String> {
        let text = text.trim();
        if text.is_empty() || text == "all" {
            return Ok(Segment::All);
        }
        let (lhs, value, negated) = match text.split_once("!=") {
            Some((l, v)) => (l, v, true),
            None => match text.split_once('=') {
                Some((l, v)) => (l, v, false),
                None => return Err(format!("segment {text:?} has no '=' or '!='")),
            },
        };
        let (lhs, value) = (lhs.trim(), value.trim());
        if lhs == "complexity" && !negated {
            return match value {
                "simple" => Ok(Segment::Complexity(Complexity::Simple)),
                "complex" => Ok(Segment::Complexity(Complexity::Complex)),
                _ => Err(format!("unknown complexity {value:?}")),
            };
        }
        match lhs.split_once('.') {
            Some((phase, item)) if (phase == "pre" || phase == "post") && !item.is_empty() => {
                Ok(Segment::Answer {
                    key: lhs.to_string(),
                    value: value.to_string(),
                    negated,
                })
            }
            _ => Err(format!("segment field {lhs:?} is not complexity, pre.<item> or post.<item>")),
        }
    }

    fn selects(
        &self,
        participant_id: &str,
        task_id: &str,
        config: &StudyConfig,
        answers: &Answers,
    ) -> bool {
        match self {
            Segment::All => true,
            Segment::Complexity(c) => config.task(task_id).is_some_and(|t| t.complexity == *c),
            Segment::Answer { key, value, negated } => answers
                .get(&(participant_id.to_string(), task_id.to_string()))
                .and_then(|a| a.get(key))
                .is_some_and(|v| (v == value) != *negated),
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segment::All => write!(f, "all"),
            Segment::Complexity(Complexity::Simple) => write!(f, "complexity=simple"),
            Segment::Complexity(Complexity::Complex) => write!(f, "complexity=complex"),
            Segment::Answer { key, value, negated } => {
                write!(f, "{key}{}{value}", if *negated { "!=" } else { "=" })
            }
        }
    }
}

/// Questionnaire answers keyed by `(participant, task)`, then `phase.item`.
pub type Answers = BTreeMap<(String, String), BTreeMap<String, String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineMetrics {
    pub engine_id: String,
    pub lists: usize,
    pub judged_entries: usize,
    pub unjudged_entries: usize,
    pub p_at_5: Option<f64>,
    pub p_at_10: Option<f64>,
    pub map_at_5: Option<f64>,
    pub map_at_10: Option<f64>,
    pub ndcg_at_5: Option<f64>,
    pub ndcg_at_10: Option<f64>,
    pub precision_graph: Vec<f64>,
    pub graded_distribution: BTreeMap<i64, f64>,
    pub clicked_precision_graph: Vec<Option<f64>>,
    pub clicked_graded_distribution: BTreeMap<i64, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[serde(rename = "p_at_5")]
    PAt5,
    #[serde(rename = "p_at_10")]
    PAt10,
    #[serde(rename = "map_at_5")]
    MapAt5,
    #[serde(rename = "map_at_10")]
    MapAt10,
    #[serde(rename = "ndcg_at_5")]
    NdcgAt5,
    #[serde(rename = "ndcg_at_10")]
    NdcgAt10,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::PAt5,
        Measure::PAt10,
        Measure::MapAt5,
        Measure::MapAt10,
        Measure::NdcgAt5,
        Measure::NdcgAt10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::PAt5 => "p_at_5",
            Measure::PAt10 => "p_at_10",
            Measure::MapAt5 => "map_at_5",
            Measure::MapAt10 => "map_at_10",
            Measure::NdcgAt5 => "ndcg_at_5",
            Measure::NdcgAt10 => "ndcg_at_10",
        }
    }

    /// Per-list value whose mean is the reported measure.
    pub fn per_list(self, list: &RankedJudgedList, gain: GainMode, scale_min: i64) -> f64 {
        match self {
            Measure::PAt5 => precision_at_k(list, 5),
            Measure::PAt10 => precision_at_k(list, 10),
            Measure::MapAt5 => average_precision_at_k(list, 5),
            Measure::MapAt10 => average_precision_at_k(list, 10),
            Measure::NdcgAt5 => ndcg_at_k_with(list, 5, gain, scale_min),
            Measure::NdcgAt10 => ndcg_at_k_with(list, 10, gain, scale_min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub measure: Measure,
    pub engine_a: String,
    pub engine_b: String,
    pub result: Option<TTestResult>,
    /// Why no test was run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMeasure {
    TimeEffortSeconds,
    Queries,
    Clicks,
}

impl SessionMeasure {
    pub const ALL: [SessionMeasure; 3] = [
        SessionMeasure::TimeEffortSeconds,
        SessionMeasure::Queries,
        SessionMeasure::Clicks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SessionMeasure::TimeEffortSeconds => "time_effort_seconds",
            SessionMeasure::Queries => "queries",
            SessionMeasure::Clicks => "clicks",
        }
    }

    fn value(self, session: &SessionRecord) -> f64 {
        let s = session_stats(session);
        match self {
            SessionMeasure::TimeEffortSeconds => s.time_effort_seconds,
            SessionMeasure::Queries => s.query_count as f64,
            SessionMeasure::Clicks => s.click_count as f64,
        }
    }
}

/// One row of the simple-versus-complex task comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub measure: SessionMeasure,
    pub simple: Option<DescriptiveStats>,
    pub complex: Option<DescriptiveStats>,
    pub test: Option<TTestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub study_id: String,
    pub segment: String,
    /// Selected `(participant, task)` pairs with lists or sessions.
    pub pairs: usize,
    pub lists: usize,
    pub t_test: TTestVariant,
    pub gain: GainMode,
    pub conventions: Vec<String>,
    pub engines: Vec<EngineMetrics>,
    pub significance: Vec<Significance>,
    pub click_distribution: ClickDistribution,
    pub overlap: Option<OverlapReport>,
    pub complexity: Vec<ComplexityRow>,
}

pub struct AnalysisInput<'a> {
    pub config: &'a StudyConfig,
    pub lists: &'a [RankedJudgedList],
    pub sessions: &'a [SessionRecord],
    pub answers: &'a Answers,
}

fn engine_metrics(
    engine_id: &str,
    lists: &[&RankedJudgedList],
    gain: GainMode,
    scale_min: i64,
) -> EngineMetrics {
    let m = |measure: Measure| mean(lists.iter().map(|l| measure.per_list(l, gain, scale_min)));
    let entries = || lists.iter().flat_map(|l| &l.entries);
    EngineMetrics {
        engine_id: engine_id.to_string(),
        lists: lists.len(),
        judged_entries: entries().filter(|e| e.is_judged()).count(),
        unjudged_entries: entries().filter(|e| !e.is_judged()).count(),
        p_at_5: m(Measure::PAt5),
        p_at_10: m(Measure::PAt10),
        map_at_5: m(Measure::MapAt5),
        map_at_10: m(Measure::MapAt10),
        ndcg_at_5: m(Measure::NdcgAt5),
        ndcg_at_10: m(Measure::NdcgAt10),
        precision_graph: precision_graph(lists.iter().copied(), GRAPH_DEPTH).unwrap_or_default(),
        graded_distribution: graded_distribution(entries().filter_map(|e| e.graded)),
        clicked_precision_graph: clicked_precision_graph(lists.iter().copied(), GRAPH_DEPTH),
        clicked_graded_distribution: graded_distribution(
            entries().filter(|e| e.was_clicked).filter_map(|e| e.graded),
        ),
    }
}

fn compare(
    measure: Measure,
    a: (&str, &[&RankedJudgedList]),
    b: (&str, &[&RankedJudgedList]),
    variant: TTestVariant,
    gain: GainMode,
    scale_min: i64,
) -> Significance {
    let value = |l: &RankedJudgedList| measure.per_list(l, gain, scale_min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = if variant == TTestVariant::Paired {
        // pair the two engines' lists for the same query in the same pool
        let index: HashMap<(&str, &str), &RankedJudgedList> = b
            .1
            .iter()
            .map(|l| ((l.pool_id.as_str(), l.query_text.as_str()), *l))
            .collect();
        a.1.iter()
            .filter_map(|l| {
                index
                    .get(&(l.pool_id.as_str(), l.query_text.as_str()))
                    .map(|m| (value(l), value(m)))
            })
            .unzip()
    } else {
        (
            a.1.iter().map(|l| value(l)).collect(),
            b.1.iter().map(|l| value(l)).collect(),
        )
    };
    let (result, note) = match t_test_two_sample(&xs, &ys, variant) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Significance {
        measure,
        engine_a: a.0.to_string(),
        engine_b: b.0.to_string(),
        result,
        note,
    }
}

fn complexity_rows(sessions: &[&SessionRecord], config: &StudyConfig) -> Vec<ComplexityRow> {
    let of = |c: Complexity| -> Vec<&SessionRecord> {
        let mut v: Vec<&SessionRecord> = sessions
            .iter()
            .copied()
            .filter(|s| config.task(&s.task_id).is_some_and(|t| t.complexity == c))
            .collect();
        v.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
        v
    };
    let simple = of(Complexity::Simple);
    let complex = of(Complexity::Complex);
    let variant = config.analysis.t_test;
    SessionMeasure::ALL
        .iter()
        .map(|&measure| {
            let xs: Vec<f64> = simple.iter().map(|s| measure.value(s)).collect();
            let ys: Vec<f64> = complex.iter().map(|s| measure.value(s)).collect();
            let (test, note) = match t_test_two_sample(&xs, &ys, variant) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ComplexityRow {
                measure,
                simple: descriptive_stats(&xs).ok(),
                complex: descriptive_stats(&ys).ok(),
                test,
                note,
            }
        })
        .collect()
}

/// Computes every analysis over the pairs `segment` selects.
///
/// Empty engines report `None` measures rather than zeros.
pub fn segment_report(input: &AnalysisInput<'_>, segment: &Segment) -> MetricReport {
    let config = input.config;
    let gain = config.analysis.gain;
    let scale_min = config.judgment_scales.graded_min;
    let variant = config.analysis.t_test;
    let selected =
        |p: &str, t: &str| segment.selects(p, t, config, input.answers);

    let lists: Vec<&RankedJudgedList> = input
        .lists
        .iter()
        .filter(|l| selected(&l.participant_id, &l.task_id))
        .collect();
    let sessions: Vec<&SessionRecord> = input
        .sessions
        .iter()
        .filter(|s| selected(&s.participant_id, &s.task_id))
        .collect();
    let pairs: BTreeSet<(&str, &str)> = lists
        .iter()
        .map(|l| (l.participant_id.as_str(), l.task_id.as_str()))
        .chain(sessions.iter().map(|s| (s.participant_id.as_str(), s.task_id.as_str())))
        .collect();

    let mut engine_ids: Vec<String> = config.engines.iter().map(|e| e.engine_id.clone()).collect();
    engine_ids.sort();
    let by_engine: Vec<(&str, Vec<&RankedJudgedList>)> = engine_ids
        .iter()
        .map(|e| {
            let ls = lists.iter().copied().filter(|l| &l.engine_id == e).collect();
            (e.as_str(), ls)
        })
        .collect();

    let engines = by_engine
        .iter()
        .map(|(e, ls)| engine_metrics(e, ls, gain, scale_min))
        .collect();

    let mut significance = Vec::new();
    for measure in Measure::ALL {
        for (i, a) in by_engine.iter().enumerate() {
            for b in &by_engine[i + 1..] {
                significance.push(compare(
                    measure,
                    (a.0, &a.1),
                    (b.0, &b.1),
                    variant,
                    gain,
                    scale_min,
                ));
            }
        }
    }

    let mut batch = ResultBatch::new(&config.study_id);
    for l in &lists {
        for e in &l.entries {
            batch.results.push(SerpResult {
                engine_id: l.engine_id.clone(),
                query_text: l.query_text.clone(),
                rank: e.rank,
                url: e.url.clone(),
                title: String::new(),
                snippet: String::new(),
                fetched_at: 0,
            });
        }
    }
    let overlap = overlap_analysis(&batch, &engine_ids, |u| {
        normalize_url(u).unwrap_or_else(|_| u.to_string())
    })
    .ok();

    MetricReport {
        study_id: config.study_id.clone(),
        segment: segment.to_string(),
        pairs: pairs.len(),
        lists: lists.len(),
        t_test: variant,
        gain,
        conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
        engines,
        significance,
        click_distribution: click_distribution(sessions.iter().copied()),
        overlap,
        complexity: complexity_rows(&sessions, config),
    }
}

pub const TABLE_FILES: [&str; 10] = [
    "effectiveness.csv",
    "significance.csv",
    "click_distribution.csv",
    "precision_graph.csv",
    "graded_distribution.csv",
    "clicked_precision_graph.csv",
    "clicked_graded_distribution.csv",
    "complexity_stats.csv",
    "overlap.csv",
    "report.json",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    w.write_record(header).map_err(std::io::Error::other)?;
    for row in rows {
        w.write_record(&row).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// Writes `report.json` plus one flat table per plot-ready series.
pub fn write_report(report: &MetricReport, out: &Path) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let mut json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    json.push('\n');
    fs::write(out.join("report.json"), json)?;

    write_csv(
        &out.join("effectiveness.csv"),
        &[
            "engine_id", "lists", "judged_entries", "unjudged_entries", "p_at_5", "p_at_10",
            "map_at_5", "map_at_10", "ndcg_at_5", "ndcg_at_10",
        ],
        report
            .engines
            .iter()
            .map(|e| {
                vec![
                    e.engine_id.clone(),
                    e.lists.to_string(),
                    e.judged_entries.to_string(),
                    e.unjudged_entries.to_string(),
                    fmt_opt(e.p_at_5),
                    fmt_opt(e.p_at_10),
                    fmt_opt(e.map_at_5),
                    fmt_opt(e.map_at_10),
                    fmt_opt(e.ndcg_at_5),
                    fmt_opt(e.ndcg_at_10),
                ]
            })
            .collect(),
    )?;

    write_csv(
        &out.join("significance.csv"),
        &["measure", "engine_a", "engine_b", "variant", "t", "df", "p_two_tailed", "significant", "note"],
        report
            .significance
            .iter()
            .map(|s| {
                let r = s.result.as_ref();
                vec![
                    s.measure.as_str().to_string(),
                    s.engine_a.clone(),
                    s.engine_b.clone(),
                    format!("{:?}", report.t_test).to_lowercase(),
                    fmt_opt(r.map(|r| r.t)),
                    fmt_opt(r.map(|r| r.degrees_of_freedom)),
                    fmt_opt(r.map(|r| r.p_two_tailed)),
                    r.map(|r| r.significant.to_string()).unwrap_or_default(),
                    s.note.clone().unwrap_or_default(),
                ]
            })
            .collect(),
    )?;

    let cd = &report.click_distribution;
    let mut rows: Vec<Vec<String>> = cd
        .by_rank
        .iter()
        .map(|(r, c)| vec![r.to_string(), c.to_string()])
        .collect();
    if cd.unknown > 0 {
        rows.push(vec!["unknown".into(), cd.unknown.to_string()]);
    }
    write_csv(&out.join("click_distribution.csv"), &["rank", "clicks"], rows)?;

    let curve = |f: &dyn Fn(&EngineMetrics) -> Vec<Option<f64>>| -> Vec<Vec<String>> {
        report
            .engines
            .iter()
            .flat_map(|e| {
                f(e).into_iter()
                    .enumerate()
                    .map(|(i, v)| vec![e.engine_id.clone(), (i + 1).to_string(), fmt_opt(v)])
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    write_csv(
        &out.join("precision_graph.csv"),
        &["engine_id", "position", "precision"],
        curve(&|e| e.precision_graph.iter().map(|&p| Some(p)).collect()),
    )?;
    write_csv(
        &out.join("clicked_precision_graph.csv"),
        &["engine_id", "position", "precision"],
        curve(&|e| e.clicked_precision_graph.clone()),
    )?;

    let shares = |f: &dyn Fn(&EngineMetrics) -> &BTreeMap<i64, f64>| -> Vec<Vec<String>> {
        report
            .engines
            .iter()
            .flat_map(|e| {
                f(e).iter()
                    .map(|(g, s)| vec![e.engine_id.clone(), g.to_string(), s.to_string()])
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    write_csv(
        &out.join("graded_distribution.csv"),
        &["engine_id", "grade", "share"],
        shares(&|e| &e.graded_distribution),
    )?;
    write_csv(
        &out.join("clicked_graded_distribution.csv"),
        &["engine_id", "grade", "share"],
        shares(&|e| &e.clicked_graded_distribution),
    )?;

    let mut rows = Vec::new();
    for row in &report.complexity {
        for (label, stats) in [("simple", &row.simple), ("complex", &row.complex)] {
            let t = row.test.as_ref();
            rows.push(vec![
                row.measure.as_str().to_string(),
                label.to_string(),
                stats.map(|s| s.n.to_string()).unwrap_or_else(|| "0".into()),
                fmt_opt(stats.map(|s| s.min)),
                fmt_opt(stats.map(|s| s.max)),
                fmt_opt(stats.map(|s| s.mean)),
                fmt_opt(stats.map(|s| s.sd)),
                fmt_opt(t.map(|t| t.t)),
                fmt_opt(t.map(|t| t.degrees_of_freedom)),
                fmt_opt(t.map(|t| t.p_two_tailed)),
            ]);
        }
    }
    write_csv(
        &out.join("complexity_stats.csv"),
        &["measure", "complexity", "n", "min", "max", "mean", "sd", "t", "df", "p_two_tailed"],
        rows,
    )?;

    let mut rows = Vec::new();
    if let Some(o) = &report.overlap {
        rows.push(vec!["total".into(), o.total_distinct.to_string(), "1".into()]);
        rows.push(vec!["shared".into(), o.shared.to_string(), o.shared_fraction.to_string()]);
        for (engine, n) in &o.unique_per_engine {
            let share = if o.total_distinct == 0 { 0.0 } else { *n as f64 / o.total_distinct as f64 };
            rows.push(vec![format!("unique:{engine}"), n.to_string(), share.to_string()]);
        }
    }
    write_csv(&out.join("overlap.csv"), &["category", "urls", "fraction"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_study_config;
    use crate::logs::ClickRecord;
    use crate::metrics::JudgedEntry;

    fn config() -> StudyConfig {
        parse_study_config(
            r#"
schema_version = 1
study_id = "s"
[[engines]]
engine_id = "b"
adapter = "recorded_fixture"
params = { fixture_dir = "f" }
[[engines]]
engine_id = "a"
adapter = "recorded_fixture"
params = { fixture_dir = "f" }
[[tasks]]
task_id = "t1"
complexity = "simple"
description = "d"
[[tasks]]
task_id = "t2"
complexity = "complex"
description = "d"
"#,
        )
        .unwrap()
    }

    fn list(engine: &str, task: &str, grades: &[i64]) -> RankedJudgedList {
        let mut l = RankedJudgedList::new(engine, "q");
        l.pool_id = format!("pool-{task}");
        l.participant_id = "p1".into();
        l.task_id = task.into();
        l.entries = grades
            .iter()
            .enumerate()
            .map(|(i, &g)| JudgedEntry {
                rank: i as u32 + 1,
                binary: Some(g >= 3),
                graded: Some(g),
                was_clicked: i == 0,
                url: format!("https://{engine}{task}{i}.example"),
                item_id: String::new(),
            })
            .collect();
        l
    }

    #[test]
    fn segment_parsing() {
        assert_eq!(Segment::parse("all").unwrap(), Segment::All);
        assert_eq!(Segment::parse("complexity=complex").unwrap(), Segment::Complexity(Complexity::Complex));
        let s = Segment::parse("post.found_correct != no").unwrap();
        assert_eq!(s.to_string(), "post.found_correct!=no");
        assert!(Segment::parse("colour=red").is_err());
        assert!(Segment::parse("post.x").is_err());
    }

    #[test]
    fn single_task_segment_equals_that_task_alone() {
        let cfg = config();
        let lists = vec![
            list("a", "t1", &[5, 1, 3]),
            list("b", "t1", &[1, 1, 4]),
            list("a", "t2", &[2, 2]),
            list("b", "t2", &[4]),
        ];
        let answers = Answers::new();
        let full = AnalysisInput { config: &cfg, lists: &lists, sessions: &[], answers: &answers };
        let seg = segment_report(&full, &Segment::Complexity(Complexity::Simple));
        let only: Vec<_> = lists.iter().filter(|l| l.task_id == "t1").cloned().collect();
        let alone = segment_report(
            &AnalysisInput { config: &cfg, lists: &only, sessions: &[], answers: &answers },
            &Segment::All,
        );
        assert_eq!(seg.engines, alone.engines);
        assert_eq!(seg.overlap, alone.overlap);
        assert_eq!(seg.engines[0].engine_id, "a");
        assert_eq!(seg.engines[0].p_at_5, Some(0.4));
    }

    #[test]
    fn empty_segment_reports_no_values() {
        let cfg = config();
        let lists = vec![list("a", "t1", &[5])];
        let answers = Answers::new();
        let input = AnalysisInput { config: &cfg, lists: &lists, sessions: &[], answers: &answers };
        let r = segment_report(&input, &Segment::parse("post.easy=yes").unwrap());
        assert_eq!(r.pairs, 0);
        assert!(r.engines.iter().all(|e| e.lists == 0 && e.p_at_5.is_none() && e.precision_graph.is_empty()));
        assert!(r.significance.iter().all(|s| s.result.is_none() && s.note.is_some()));
    }

    #[test]
    fn answer_segment_and_click_table() {
        let cfg = config();
        let lists = vec![list("a", "t1", &[5, 4]), list("a", "t2", &[1])];
        let mut answers = Answers::new();
        answers.insert(("p1".into(), "t2".into()), [("post.easy".to_string(), "no".to_string())].into());
        let mut s = SessionRecord::empty("p1", "t2", 0, 1000);
        s.clicks.push(ClickRecord {
            url: "https://x.example".into(),
            serp_rank: Some(2),
            engine_id: "a".into(),
            query_text: "q".into(),
            timestamp: 1,
        });
        let sessions = vec![SessionRecord::empty("p1", "t1", 0, 500), s];
        let input = AnalysisInput { config: &cfg, lists: &lists, sessions: &sessions, answers: &answers };
        let r = segment_report(&input, &Segment::parse("post.easy=no").unwrap());
        assert_eq!(r.lists, 1);
        assert_eq!(r.click_distribution.by_rank[&2], 1);
        let r = segment_report(&input, &Segment::parse("post.easy!=no").unwrap());
        assert_eq!(r.lists, 0);

        let dir = tempfile::tempdir().unwrap();
        write_report(&segment_report(&input, &Segment::All), dir.path()).unwrap();
        for name in TABLE_FILES {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }
}
