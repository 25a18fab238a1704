use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use super::{JudgingError, Judgment, LogContents};
use crate::config::Phase;
use crate::metrics::{JudgedEntry, RankedJudgedList};
use crate::pool::JudgmentPool;

pub const EXPORT_FILES: [&str; 4] = [
    "judgments.csv",
    "judgments_by_engine.csv",
    "questionnaires.csv",
    "ranked_lists.jsonl",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExportSummary {
    pub judgments: usize,
    pub engine_rows: usize,
    pub questionnaire_rows: usize,
    pub ranked_lists: usize,
}

#[derive(Serialize)]
struct JudgmentRow<'a> {
    pool_id: &'a str,
    position: usize,
    item_id: &'a str,
    participant_id: &'a str,
    task_id: &'a str,
    url: &'a str,
    normalized_url: &'a str,
    binary: bool,
    graded: i64,
    judged_at: u64,
    was_clicked: bool,
    was_visited_outside_serp: bool,
    provenance: String,
}

#[derive(Serialize)]
struct EngineRow<'a> {
    pool_id: &'a str,
    position: usize,
    item_id: &'a str,
    participant_id: &'a str,
    task_id: &'a str,
    engine_id: &'a str,
    query_text: &'a str,
    rank: u32,
    clicked_on_engine: bool,
    binary: bool,
    graded: i64,
    url: &'a str,
}

#[derive(Serialize)]
struct QuestionnaireRow<'a> {
    participant_id: &'a str,
    task_id: &'a str,
    phase: &'a str,
    item_id: &'a str,
    answer: String,
    submitted_at: u64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, JudgingError> {
    let file = fs::File::create(path).map_err(JudgingError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> JudgingError + '_ {
    move |e| JudgingError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Writes a header row even when there are no records.
fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), JudgingError> {
    let mut w = csv_writer(path)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err(path))?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(JudgingError::io(path))
}

/// Joins stored judgments back to the researcher-side pools and writes the
/// export files into `out`.
///
/// Rows are ordered by pool id and presentation position. A judged item
/// found by several engines yields one row in `judgments.csv` and one row
/// per provenance entry in `judgments_by_engine.csv`.
pub fn export_study(
    pools: &[JudgmentPool],
    log: &LogContents,
    out: &Path,
) -> Result<ExportSummary, JudgingError> {
    fs::create_dir_all(out).map_err(JudgingError::io(out))?;
    let mut pools: Vec<&JudgmentPool> = pools.iter().collect();
    pools.sort_by(|a, b| a.pool_id.cmp(&b.pool_id));

    let mut by_item: HashMap<(&str, &str), &Judgment> = HashMap::new();
    for j in &log.judgments {
        let pool = pools.iter().find(|p| p.pool_id == j.pool_id);
        let resolves = pool.is_some_and(|p| p.item(&j.item_id).is_some());
        if !resolves {
            return Err(JudgingError::Corrupt {
                path: out.to_path_buf(),
                offset: 0,
                message: format!("judgment for unknown item {}/{}", j.pool_id, j.item_id),
            });
        }
        by_item.insert((&j.pool_id, &j.item_id), j);
    }

    let mut judgment_rows = Vec::new();
    let mut engine_rows = Vec::new();
    let mut lists = Vec::new();
    for pool in &pools {
        for (pos, item) in pool.items.iter().enumerate() {
            let Some(j) = by_item.get(&(pool.pool_id.as_str(), item.item_id.as_str())) else {
                continue;
            };
            let provenance = if item.provenance.is_empty() {
                "visited-only".to_string()
            } else {
                item.provenance
                    .iter()
                    .map(|p| format!("{}|{}|{}", p.engine_id, p.rank, p.query_text))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            judgment_rows.push(JudgmentRow {
                pool_id: &pool.pool_id,
                position: pos + 1,
                item_id: &item.item_id,
                participant_id: &pool.participant_id,
                task_id: &pool.task_id,
                url: &item.url,
                normalized_url: &item.normalized_url,
                binary: j.binary,
                graded: j.graded,
                judged_at: j.judged_at,
                was_clicked: item.was_clicked,
                was_visited_outside_serp: item.was_visited_outside_serp,
                provenance,
            });
            for p in &item.provenance {
                engine_rows.push(EngineRow {
                    pool_id: &pool.pool_id,
                    position: pos + 1,
                    item_id: &item.item_id,
                    participant_id: &pool.participant_id,
                    task_id: &pool.task_id,
                    engine_id: &p.engine_id,
                    query_text: &p.query_text,
                    rank: p.rank,
                    clicked_on_engine: p.clicked,
                    binary: j.binary,
                    graded: j.graded,
                    url: &item.url,
                });
            }
        }
        lists.extend(pool_lists(pool, &by_item));
    }

    let mut questionnaire_rows = Vec::new();
    let mut responses: Vec<_> = log.questionnaires.iter().collect();
    responses.sort_by(|a, b| (&a.participant_id, &a.task_id, a.phase).cmp(&(&b.participant_id, &b.task_id, b.phase)));
    for r in responses {
        for (item_id, answer) in &r.answers {
            questionnaire_rows.push(QuestionnaireRow {
                participant_id: &r.participant_id,
                task_id: &r.task_id,
                phase: r.phase.as_str(),
                item_id,
                answer: answer.render(),
                submitted_at: r.submitted_at,
            });
        }
    }

    write_rows(
        &out.join(EXPORT_FILES[0]),
        &[
            "pool_id", "position", "item_id", "participant_id", "task_id", "url", "normalized_url",
            "binary", "graded", "judged_at", "was_clicked", "was_visited_outside_serp", "provenance",
        ],
        &judgment_rows,
    )?;
    write_rows(
        &out.join(EXPORT_FILES[1]),
        &[
            "pool_id", "position", "item_id", "participant_id", "task_id", "engine_id", "query_text",
            "rank", "clicked_on_engine", "binary", "graded", "url",
        ],
        &engine_rows,
    )?;
    write_rows(
        &out.join(EXPORT_FILES[2]),
        &["participant_id", "task_id", "phase", "item_id", "answer", "submitted_at"],
        &questionnaire_rows,
    )?;
    let lists_path = out.join(EXPORT_FILES[3]);
    let mut f = fs::File::create(&lists_path).map_err(JudgingError::io(&lists_path))?;
    for list in &lists {
        let line = serde_json::to_string(list).expect("lists serialize");
        writeln!(f, "{line}").map_err(JudgingError::io(&lists_path))?;
    }

    Ok(ExportSummary {
        judgments: judgment_rows.len(),
        engine_rows: engine_rows.len(),
        questionnaire_rows: questionnaire_rows.len(),
        ranked_lists: lists.len(),
    })
}

/// Rebuilds each engine's result list per query, unjudged entries included.
fn pool_lists(pool: &JudgmentPool, judged: &HashMap<(&str, &str), &Judgment>) -> Vec<RankedJudgedList> {
    // (first canonical position, engine, query) → entries
    let mut groups: BTreeMap<(&str, &str), (usize, Vec<JudgedEntry>)> = BTreeMap::new();
    for item in &pool.items {
        let j = judged.get(&(pool.pool_id.as_str(), item.item_id.as_str()));
        for p in &item.provenance {
            let group = groups
                .entry((&p.engine_id, &p.query_text))
                .or_insert((usize::MAX, Vec::new()));
            group.0 = group.0.min(item.canonical_position);
            group.1.push(JudgedEntry {
                rank: p.rank,
                binary: j.map(|j| j.binary),
                graded: j.map(|j| j.graded),
                was_clicked: p.clicked,
                url: item.url.clone(),
                item_id: item.item_id.clone(),
            });
        }
    }
    let mut ordered: Vec<_> = groups.into_iter().collect();
    ordered.sort_by_key(|(_, (first, _))| *first);
    ordered
        .into_iter()
        .map(|((engine, query), (_, mut entries))| {
            entries.sort_by_key(|e| e.rank);
            RankedJudgedList {
                engine_id: engine.to_string(),
                query_text: query.to_string(),
                pool_id: pool.pool_id.clone(),
                participant_id: pool.participant_id.clone(),
                task_id: pool.task_id.clone(),
                entries,
            }
        })
        .collect()
}

pub fn read_ranked_lists(path: &Path) -> Result<Vec<RankedJudgedList>, JudgingError> {
    let file = fs::File::open(path).map_err(JudgingError::io(path))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(JudgingError::io(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| JudgingError::Corrupt {
                path: path.to_path_buf(),
                offset,
                message: e.to_string(),
            })?);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

/// Questionnaire answers keyed by (participant, task), then `phase.item`.
pub fn read_questionnaires(
    path: &Path,
) -> Result<BTreeMap<(String, String), BTreeMap<String, String>>, JudgingError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out: BTreeMap<(String, String), BTreeMap<String, String>> = BTreeMap::new();
    for record in reader.records() {
        let r = record.map_err(csv_err(path))?;
        let field = |i: usize| r.get(i).unwrap_or("").to_string();
        let phase = field(2);
        if Phase::parse(&phase).is_none() {
            return Err(JudgingError::Corrupt {
                path: path.to_path_buf(),
                offset: r.position().map_or(0, |p| p.byte()),
                message: format!("unknown phase {phase:?}"),
            });
        }
        out.entry((field(0), field(1)))
            .or_default()
            .insert(format!("{phase}.{}", field(3)), field(4));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judging::{Answer, QuestionnaireResponse};
    use crate::pool::{PooledItem, Provenance};

    fn prov(engine: &str, rank: u32) -> Provenance {
        Provenance {
            engine_id: engine.into(),
            query_text: "q".into(),
            rank,
            clicked: false,
        }
    }

    fn item(id: &str, canonical: usize, provenance: Vec<Provenance>) -> PooledItem {
        PooledItem {
            item_id: id.into(),
            url: format!("https://{id}.example"),
            normalized_url: format!("https://{id}.example"),
            title: String::new(),
            snippet: String::new(),
            was_visited_outside_serp: provenance.is_empty(),
            provenance,
            was_clicked: false,
            canonical_position: canonical,
        }
    }

    fn pool() -> JudgmentPool {
        JudgmentPool {
            pool_id: "pA".into(),
            study_id: "s".into(),
            participant_id: "p1".into(),
            task_id: "t1".into(),
            shuffle_seed: 0,
            items: vec![
                item("u2", 1, vec![prov("a", 2), prov("b", 1)]),
                item("u5", 4, vec![]),
                item("u1", 0, vec![prov("a", 1)]),
                item("u4", 3, vec![prov("b", 2)]),
            ],
        }
    }

    fn judgment(item: &str, graded: i64) -> Judgment {
        Judgment {
            pool_id: "pA".into(),
            item_id: item.into(),
            participant_id: "p1".into(),
            binary: graded >= 3,
            graded,
            judged_at: 1,
        }
    }

    #[test]
    fn empty_study_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let summary = export_study(&[], &LogContents::default(), dir.path()).unwrap();
        assert_eq!(summary.judgments, 0);
        for name in &EXPORT_FILES[..3] {
            let text = fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(text.lines().count(), 1, "{name}");
        }
        assert_eq!(fs::read_to_string(dir.path().join(EXPORT_FILES[3])).unwrap(), "");
    }

    #[test]
    fn shared_item_fans_out_per_engine() {
        let dir = tempfile::tempdir().unwrap();
        let log = LogContents {
            judgments: vec![judgment("u1", 5), judgment("u2", 4), judgment("u5", 1), judgment("u4", 2)],
            questionnaires: vec![QuestionnaireResponse {
                participant_id: "p1".into(),
                task_id: "t1".into(),
                phase: Phase::Post,
                answers: [("easy".to_string(), Answer::YesNo(true))].into_iter().collect(),
                submitted_at: 2,
            }],
            ..LogContents::default()
        };
        let summary = export_study(&[pool()], &log, dir.path()).unwrap();
        assert_eq!(summary.judgments, 4);
        assert_eq!(summary.engine_rows, 4);
        assert_eq!(summary.ranked_lists, 2);

        let text = fs::read_to_string(dir.path().join("judgments.csv")).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert!(rows[0].starts_with("pA,1,u2,"));
        assert!(rows[0].ends_with("a|2|q;b|1|q"));
        assert!(rows[1].ends_with("visited-only"));

        let lists = read_ranked_lists(&dir.path().join("ranked_lists.jsonl")).unwrap();
        assert_eq!(lists[0].engine_id, "a");
        let grades: Vec<_> = lists[0].entries.iter().map(|e| e.graded).collect();
        assert_eq!(grades, [Some(5), Some(4)]);
        assert_eq!(lists[1].entries[0].graded, Some(4));

        let q = read_questionnaires(&dir.path().join("questionnaires.csv")).unwrap();
        assert_eq!(q[&("p1".to_string(), "t1".to_string())]["post.easy"], "yes");
    }

    #[test]
    fn unjudged_entries_stay_in_lists() {
        let dir = tempfile::tempdir().unwrap();
        let log = LogContents {
            judgments: vec![judgment("u2", 4)],
            ..LogContents::default()
        };
        export_study(&[pool()], &log, dir.path()).unwrap();
        let lists = read_ranked_lists(&dir.path().join("ranked_lists.jsonl")).unwrap();
        assert_eq!(lists[0].unjudged_count(), 1);
        assert_eq!(lists[1].unjudged_count(), 1);
    }

    #[test]
    fn dangling_judgment_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let log = LogContents {
            judgments: vec![judgment("nope", 4)],
            ..LogContents::default()
        };
        assert!(export_study(&[pool()], &log, dir.path()).is_err());
    }
}
