//! Synthetic study data: interaction logs, recorded result pages, and a
//! judging script.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::config::{AnswerKind, Complexity, Phase, StudyConfig, TaskSpec};
use crate::judging::Answer;
use crate::logs::{EventKind, LogEvent};
use crate::pool::normalize_url;
use crate::serp::{FixtureStore, Recording, RecordedResult};

const BASE_TIME: u64 = 1_500_000_000_000;
const UNIVERSE: usize = 30;
const SITES: [&str; 10] = [
    "wiki", "news", "forum", "shop", "blog", "docs", "travel", "guide", "archive", "review",
];
const MODIFIERS: [&str; 10] = [
    "history", "facts", "official", "guide", "where", "when", "list", "best", "review", "map",
];
const FALLBACK_WORDS: [&str; 4] = ["topic", "information", "answer", "question"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedJudgment {
    pub binary: bool,
    pub graded: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedQuestionnaire {
    pub participant_id: String,
    pub task_id: String,
    pub phase: Phase,
    pub answers: BTreeMap<String, Answer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub participants: usize,
    pub seed: u64,
    /// Ratio between the click probabilities of consecutive ranks.
    pub click_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// participant id → events in timestamp order
    pub logs: BTreeMap<String, Vec<LogEvent>>,
    /// engine id → recordings
    pub fixtures: BTreeMap<String, Vec<Recording>>,
    /// normalized url → judgment
    pub judgments: BTreeMap<String, ScriptedJudgment>,
    pub questionnaires: Vec<ScriptedQuestionnaire>,
}

struct PlannedQuery {
    text: String,
    at: u64,
}

struct PlannedSession<'a> {
    participant_id: String,
    task: &'a TaskSpec,
    start: u64,
    queries: Vec<PlannedQuery>,
}

fn task_words(task: &TaskSpec) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut words: Vec<String> = task
        .description
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= 4 && seen.insert(w.clone()))
        .collect();
    if words.len() < 3 {
        words.extend(FALLBACK_WORDS.iter().map(|w| w.to_string()));
    }
    words
}

fn make_query(words: &[String], rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=2.min(words.len()));
    let mut parts: Vec<&str> = words.choose_multiple(rng, n).map(String::as_str).collect();
    if rng.random_bool(0.5) {
        parts.push(MODIFIERS.choose(rng).expect("non-empty"));
    }
    parts.join(" ")
}

fn universe(task: &TaskSpec) -> Vec<String> {
    (0..UNIVERSE)
        .map(|n| {
            let site = SITES[n % SITES.len()];
            format!("https://{site}{}.example/{}/page{n}", n / SITES.len(), task.task_id)
        })
        .collect()
}

/// Presents a URL the way a results page might: case, port and fragment
/// variations that normalize to the same page.
fn variant(url: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..10) {
        0 => {
            let (scheme, rest) = url.split_once("://").expect("absolute url");
            let (host, path) = rest.split_once('/').unwrap_or((rest, ""));
            format!("{}://{}/{path}", scheme.to_uppercase(), host.to_uppercase())
        }
        1 => {
            let (scheme, rest) = url.split_once("://").expect("absolute url");
            let (host, path) = rest.split_once('/').unwrap_or((rest, ""));
            format!("{scheme}://{host}:443/{path}")
        }
        2 => format!("{url}#top"),
        _ => url.to_string(),
    }
}

fn title_for(url: &str) -> String {
    let host = url
        .split_once("://")
        .map_or(url, |(_, r)| r.split('/').next().unwrap_or(r))
        .to_lowercase();
    let page = url.rsplit('/').next().unwrap_or("").split('#').next().unwrap_or("");
    format!("{} | {page}", host.trim_end_matches(":443"))
}

fn rank_weights(decay: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| decay.powi(i as i32)).collect()
}

fn pick_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn answer(kind: AnswerKind, yes_rate: f64, rng: &mut ChaCha8Rng) -> Answer {
    match kind {
        AnswerKind::YesNo => Answer::YesNo(rng.random_bool(yes_rate)),
        AnswerKind::Integer => Answer::Integer(rng.random_range(1..=10)),
        AnswerKind::FreeText => Answer::Text("none".to_string()),
    }
}

/// Generates one simple and one complex session per participant, recorded
/// result pages for every engine and query, and scripted answers.
pub fn simulate(config: &StudyConfig, opts: &SimulateOptions) -> Result<Simulation, CliError> {
    if opts.participants == 0 {
        return Err(CliError::Usage("simulate needs at least one participant".into()));
    }
    if !(opts.click_decay > 0.0 && opts.click_decay <= 1.0) {
        return Err(CliError::Usage("click decay must be in (0, 1]".into()));
    }
    let first_of = |c: Complexity| {
        config.tasks.iter().find(|t| t.complexity == c).ok_or_else(|| {
            CliError::Usage(format!("simulate needs a {c:?} task in the study").to_lowercase())
        })
    };
    let tasks = [first_of(Complexity::Simple)?, first_of(Complexity::Complex)?];
    let engine = config.engines[0].engine_id.clone();
    let k = config.results_per_query as usize;
    let width = opts.participants.to_string().len().max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // sessions and their queries first, so fixtures can cover every query
    let mut plans: Vec<PlannedSession> = Vec::new();
    for p in 0..opts.participants {
        let participant_id = format!("p{:0width$}", p + 1);
        for (t, task) in tasks.iter().enumerate() {
            let start = BASE_TIME + p as u64 * 7_200_000 + t as u64 * 3_600_000;
            let n = match task.complexity {
                Complexity::Simple => rng.random_range(1..=4),
                Complexity::Complex => rng.random_range(2..=8),
            };
            let words = task_words(task);
            let mut at = start + rng.random_range(2_000..10_000);
            let mut queries = Vec::new();
            for _ in 0..n {
                queries.push(PlannedQuery {
                    text: make_query(&words, &mut rng),
                    at,
                });
                at += rng.random_range(60_000..240_000);
            }
            plans.push(PlannedSession {
                participant_id: participant_id.clone(),
                task,
                start,
                queries,
            });
        }
    }

    let mut fixtures: BTreeMap<String, BTreeMap<String, Recording>> = BTreeMap::new();
    let mut judgments = BTreeMap::new();
    let graded_points: Vec<i64> = config.judgment_scales.points().collect();
    let relevant_from = config.judgment_scales.graded_min
        + (config.judgment_scales.graded_max - config.judgment_scales.graded_min + 1) / 2;
    let mut judge = |url: &str, rng: &mut ChaCha8Rng| {
        let key = normalize_url(url).expect("generated urls are absolute");
        judgments.entry(key).or_insert_with(|| {
            let graded = *graded_points.choose(rng).expect("scale has points");
            let flip = rng.random_bool(0.1);
            ScriptedJudgment {
                binary: (graded >= relevant_from) != flip,
                graded,
            }
        });
    };
    for plan in &plans {
        let pages = universe(plan.task);
        for q in &plan.queries {
            for spec in &config.engines {
                let recs = fixtures.entry(spec.engine_id.clone()).or_default();
                if recs.contains_key(&q.text) {
                    continue;
                }
                let mut order = pages.clone();
                order.shuffle(&mut rng);
                let results = order
                    .iter()
                    .take(k)
                    .enumerate()
                    .map(|(i, url)| {
                        judge(url, &mut rng);
                        let shown = variant(url, &mut rng);
                        RecordedResult {
                            rank: i as u32 + 1,
                            title: title_for(&shown),
                            snippet: format!("Information about {} on {}.", q.text, title_for(url)),
                            url: shown,
                        }
                    })
                    .collect();
                recs.insert(
                    q.text.clone(),
                    Recording {
                        query_text: q.text.clone(),
                        fetched_at: BASE_TIME,
                        results,
                    },
                );
            }
        }
    }

    let weights = rank_weights(opts.click_decay, k);
    let mut logs: BTreeMap<String, Vec<LogEvent>> = BTreeMap::new();
    let mut questionnaires = Vec::new();
    for plan in &plans {
        let pid = plan.participant_id.as_str();
        let tid = plan.task.task_id.as_str();
        let events = logs.entry(pid.to_string()).or_default();
        events.push(LogEvent::new(plan.start, pid, tid, EventKind::TaskStart));
        let mut last = plan.start;
        for q in &plan.queries {
            let mut e = LogEvent::new(q.at, pid, tid, EventKind::Query);
            e.engine_id = Some(engine.clone());
            e.query_text = Some(q.text.clone());
            events.push(e);
            last = q.at;
            let recording = &fixtures[&engine][&q.text];
            let mut clicked = BTreeSet::new();
            while clicked.len() < 3 && rng.random_bool(if clicked.is_empty() { 0.75 } else { 0.4 }) {
                let rank = pick_weighted(&weights, &mut rng);
                let Some(result) = recording.results.get(rank) else { break };
                if !clicked.insert(rank) {
                    continue;
                }
                last += rng.random_range(3_000..30_000);
                let mut c = LogEvent::new(last, pid, tid, EventKind::Click);
                c.engine_id = Some(engine.clone());
                c.query_text = Some(q.text.clone());
                c.url = Some(result.url.clone());
                c.serp_rank = Some(result.rank);
                events.push(c);
                if rng.random_bool(0.2) {
                    last += 500;
                    let mut t = LogEvent::new(last, pid, tid, EventKind::TabOpen);
                    t.url = Some(result.url.clone());
                    events.push(t);
                }
            }
        }
        if rng.random_bool(0.35) {
            last += rng.random_range(5_000..60_000);
            let url = format!("https://encyclopedia.example/wiki/{tid}-{}", rng.random_range(1..=5));
            judge(&url, &mut rng);
            let mut v = LogEvent::new(last, pid, tid, EventKind::PageView);
            v.url = Some(url);
            events.push(v);
        }
        let end = last + rng.random_range(10_000..120_000);
        events.push(LogEvent::new(end, pid, tid, EventKind::TaskEnd));

        let yes_rate = match plan.task.complexity {
            Complexity::Simple => 0.8,
            Complexity::Complex => 0.5,
        };
        for phase in [Phase::Pre, Phase::Post] {
            let items = config.questionnaire(phase);
            if items.is_empty() {
                continue;
            }
            questionnaires.push(ScriptedQuestionnaire {
                participant_id: pid.to_string(),
                task_id: tid.to_string(),
                phase,
                answers: items
                    .iter()
                    .map(|i| (i.item_id.clone(), answer(i.answer_kind, yes_rate, &mut rng)))
                    .collect(),
            });
        }
    }
    for events in logs.values_mut() {
        events.sort_by_key(|e| e.timestamp);
    }

    Ok(Simulation {
        logs,
        fixtures: fixtures
            .into_iter()
            .map(|(e, recs)| (e, recs.into_values().collect()))
            .collect(),
        judgments,
        questionnaires,
    })
}

pub const JUDGMENTS_SCRIPT: &str = "judgments.json";
pub const QUESTIONNAIRES_SCRIPT: &str = "questionnaires.json";

/// Writes `logs/<participant>.jsonl`, `fixtures/<engine>/`, and the two
/// scripts under `out`.
pub fn write_simulation(sim: &Simulation, out: &Path) -> Result<(), CliError> {
    let logs = out.join("logs");
    fs::create_dir_all(&logs).map_err(|e| CliError::io(&logs, e))?;
    for (participant, events) in &sim.logs {
        let path = logs.join(format!("{participant}.jsonl"));
        let mut text = String::new();
        for e in events {
            text.push_str(&e.to_line());
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    for (engine, recordings) in &sim.fixtures {
        let store = FixtureStore::new(out.join("fixtures").join(engine));
        for r in recordings {
            store.write(r).map_err(|e| CliError::io(store.root(), e))?;
        }
    }
    for (name, value) in [
        (JUDGMENTS_SCRIPT, serde_json::to_string_pretty(&sim.judgments)),
        (QUESTIONNAIRES_SCRIPT, serde_json::to_string_pretty(&sim.questionnaires)),
    ] {
        let path = out.join(name);
        let mut text = value.expect("scripts serialize");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
