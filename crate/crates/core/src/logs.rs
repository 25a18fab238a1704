//! Interaction log ingestion.
//!
//! Logs are JSON lines, one event per line:
//!
//! ```text
//! {"timestamp":1500000000000,"participant_id":"p01","task_id":"t1","kind":"task_start"}
//! {"timestamp":1500000004000,"participant_id":"p01","task_id":"t1","kind":"query","engine_id":"google","query_text":"mozart birthplace"}
//! {"timestamp":1500000009000,"participant_id":"p01","task_id":"t1","kind":"click","engine_id":"google","query_text":"mozart birthplace","url":"https://en.wikipedia.org/wiki/Salzburg","serp_rank":1}
//! ```
//!
//! Events are grouped into one [`SessionRecord`] per participant and task,
//! bounded by that pair's `task_start` and `task_end`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejects listed in a threshold error.
const REJECTS_SHOWN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskStart,
    TaskEnd,
    Query,
    Click,
    PageView,
    TabOpen,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TaskStart => "task_start",
            EventKind::TaskEnd => "task_end",
            EventKind::Query => "query",
            EventKind::Click => "click",
            EventKind::PageView => "page_view",
            EventKind::TabOpen => "tab_open",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEvent {
    pub timestamp: u64,
    pub participant_id: String,
    pub task_id: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serp_rank: Option<u32>,
}

impl LogEvent {
    pub fn new(timestamp: u64, participant_id: &str, task_id: &str, kind: EventKind) -> Self {
        LogEvent {
            timestamp,
            participant_id: participant_id.to_string(),
            task_id: task_id.to_string(),
            kind,
            engine_id: None,
            query_text: None,
            url: None,
            serp_rank: None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log events serialize")
    }

    /// Names the first field this event's kind requires but lacks.
    pub fn missing_field(&self) -> Option<&'static str> {
        let needs_engine = matches!(self.kind, EventKind::Query | EventKind::Click);
        let needs_url = matches!(self.kind, EventKind::Click | EventKind::PageView);
        if needs_engine && self.engine_id.is_none() {
            return Some("engine_id");
        }
        if needs_engine && self.query_text.is_none() {
            return Some("query_text");
        }
        if needs_url && self.url.as_deref().is_none_or(str::is_empty) {
            return Some("url");
        }
        None
    }
}

// Mirrors LogEvent with every field optional so that a malformed line
// still yields a precise reason.
#[derive(Debug, Deserialize)]
struct RawEvent {
    timestamp: Option<serde_json::Number>,
    participant_id: Option<String>,
    task_id: Option<String>,
    kind: Option<String>,
    engine_id: Option<String>,
    query_text: Option<String>,
    url: Option<String>,
    serp_rank: Option<serde_json::Number>,
}

fn parse_kind(s: &str) -> Option<EventKind> {
    Some(match s {
        "task_start" => EventKind::TaskStart,
        "task_end" => EventKind::TaskEnd,
        "query" => EventKind::Query,
        "click" => EventKind::Click,
        "page_view" => EventKind::PageView,
        "tab_open" => EventKind::TabOpen,
        _ => return None,
    })
}

/// Parses one log line into an event, or explains why it is rejected.
pub fn parse_event_line(line: &str) -> Result<LogEvent, String> {
    let raw: RawEvent = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let timestamp = match raw.timestamp {
        None => return Err("timestamp required".into()),
        Some(n) => match n.as_u64() {
            Some(t) => t,
            None => return Err(format!("timestamp must be a non-negative integer, got {n}")),
        },
    };
    let participant_id = raw
        .participant_id
        .filter(|p| !p.is_empty())
        .ok_or("participant_id required")?;
    let task_id = raw.task_id.ok_or("task_id required")?;
    let kind_text = raw.kind.ok_or("kind required")?;
    let kind = parse_kind(&kind_text).ok_or_else(|| format!("unknown kind {kind_text:?}"))?;
    let serp_rank = match raw.serp_rank {
        None => None,
        Some(n) => match n.as_u64() {
            Some(r) if r >= 1 && r <= u64::from(u32::MAX) => Some(r as u32),
            _ => return Err(format!("serp_rank must be a positive integer, got {n}")),
        },
    };
    if serp_rank.is_some() && kind != EventKind::Click {
        return Err(format!("serp_rank only allowed for click, found on {kind_text}"));
    }
    let event = LogEvent {
        timestamp,
        participant_id,
        task_id,
        kind,
        engine_id: raw.engine_id,
        query_text: raw.query_text,
        url: raw.url,
        serp_rank,
    };
    if let Some(field) = event.missing_field() {
        return Err(format!("{field} required for {kind_text}"));
    }
    Ok(event)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_number: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLog {
    pub events: Vec<LogEvent>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("failed to read log stream: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "reject rate {rate:.4} exceeds threshold {threshold:.4} ({count} of {lines} lines rejected); first rejects: {}",
        format_rejects(.first)
    )]
    TooManyRejects {
        rate: f64,
        threshold: f64,
        count: usize,
        lines: usize,
        first: Vec<Reject>,
    },
    #[error("participant {participant_id} task {task_id}: {problem}")]
    Session {
        participant_id: String,
        task_id: String,
        problem: String,
    },
}

fn format_rejects(rejects: &[Reject]) -> String {
    rejects
        .iter()
        .map(|r| format!("line {}: {}", r.line_number, r.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses a line-delimited log. Blank lines are ignored; malformed lines are
/// returned as rejects. Exceeding `max_reject_rate` (a fraction of
/// non-blank lines) is an error.
pub fn parse_log_stream(reader: impl BufRead, max_reject_rate: f64) -> Result<ParsedLog, LogError> {
    let mut parsed = ParsedLog::default();
    let mut lines = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        match parse_event_line(&line) {
            Ok(event) => parsed.events.push(event),
            Err(reason) => parsed.rejects.push(Reject {
                line_number: idx + 1,
                line,
                reason,
            }),
        }
    }
    if !parsed.rejects.is_empty() {
        let rate = parsed.rejects.len() as f64 / lines as f64;
        if rate > max_reject_rate {
            return Err(LogError::TooManyRejects {
                rate,
                threshold: max_reject_rate,
                count: parsed.rejects.len(),
                lines,
                first: parsed.rejects.iter().take(REJECTS_SHOWN).cloned().collect(),
            });
        }
    }
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryRecord {
    pub engine_id: String,
    pub query_text: String,
    pub first_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub url: String,
    pub serp_rank: Option<u32>,
    pub engine_id: String,
    pub query_text: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub participant_id: String,
    pub task_id: String,
    pub start: u64,
    pub end: u64,
    pub queries: Vec<QueryRecord>,
    pub clicks: Vec<ClickRecord>,
    pub visited_pages: Vec<String>,
}

impl SessionRecord {
    pub fn empty(participant_id: &str, task_id: &str, start: u64, end: u64) -> Self {
        SessionRecord {
            participant_id: participant_id.to_string(),
            task_id: task_id.to_string(),
            start,
            end,
            queries: Vec::new(),
            clicks: Vec::new(),
            visited_pages: Vec::new(),
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.participant_id, &self.task_id)
    }

    fn has_clicks_for(&self, query: &QueryRecord) -> bool {
        self.clicks
            .iter()
            .any(|c| c.engine_id == query.engine_id && c.query_text == query.query_text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionBuild {
    pub sessions: Vec<SessionRecord>,
    /// Events outside every session window, in timestamp order.
    pub unattributed: Vec<LogEvent>,
}

/// Groups events into sessions.
///
/// Events are stably sorted by timestamp first, so the result does not
/// depend on input order when timestamps are distinct. Sessions come out
/// ordered by `(participant_id, task_id)`.
pub fn build_sessions(events: &[LogEvent]) -> Result<SessionBuild, LogError> {
    let mut sorted: Vec<&LogEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.timestamp);

    let session_err = |p: &str, t: &str, problem: String| LogError::Session {
        participant_id: p.to_string(),
        task_id: t.to_string(),
        problem,
    };

    let mut bounds: BTreeMap<(&str, &str), (Option<u64>, Option<u64>)> = BTreeMap::new();
    for e in &sorted {
        let slot = match e.kind {
            EventKind::TaskStart | EventKind::TaskEnd => bounds
                .entry((e.participant_id.as_str(), e.task_id.as_str()))
                .or_default(),
            _ => continue,
        };
        let (field, name) = match e.kind {
            EventKind::TaskStart => (&mut slot.0, "task_start"),
            _ => (&mut slot.1, "task_end"),
        };
        if field.replace(e.timestamp).is_some() {
            return Err(session_err(
                &e.participant_id,
                &e.task_id,
                format!("duplicate {name}"),
            ));
        }
    }

    let mut sessions: BTreeMap<(&str, &str), SessionRecord> = BTreeMap::new();
    for (&(p, t), &(start, end)) in &bounds {
        let start = start.ok_or_else(|| session_err(p, t, "missing task_start".into()))?;
        let end = end.ok_or_else(|| session_err(p, t, "missing task_end".into()))?;
        if start > end {
            return Err(session_err(
                p,
                t,
                format!("task_end {end} precedes task_start {start}"),
            ));
        }
        sessions.insert((p, t), SessionRecord::empty(p, t, start, end));
    }

    let mut unattributed = Vec::new();
    let mut seen_queries: HashMap<(&str, &str), HashSet<(&str, &str)>> = HashMap::new();
    for e in &sorted {
        if matches!(e.kind, EventKind::TaskStart | EventKind::TaskEnd) {
            continue;
        }
        let key = (e.participant_id.as_str(), e.task_id.as_str());
        let session = match sessions.get_mut(&key) {
            Some(s) if s.start <= e.timestamp && e.timestamp <= s.end => s,
            _ => {
                unattributed.push((*e).clone());
                continue;
            }
        };
        match e.kind {
            EventKind::Query => {
                let engine = e.engine_id.as_deref().unwrap_or_default();
                let text = e.query_text.as_deref().unwrap_or_default();
                if seen_queries.entry(key).or_default().insert((engine, text)) {
                    session.queries.push(QueryRecord {
                        engine_id: engine.to_string(),
                        query_text: text.to_string(),
                        first_seen: e.timestamp,
                    });
                }
            }
            EventKind::Click => session.clicks.push(ClickRecord {
                url: e.url.clone().unwrap_or_default(),
                serp_rank: e.serp_rank,
                engine_id: e.engine_id.clone().unwrap_or_default(),
                query_text: e.query_text.clone().unwrap_or_default(),
                timestamp: e.timestamp,
            }),
            EventKind::PageView => session
                .visited_pages
                .push(e.url.clone().unwrap_or_default()),
            EventKind::TabOpen => {}
            EventKind::TaskStart | EventKind::TaskEnd => unreachable!(),
        }
    }

    for session in sessions.values() {
        for click in &session.clicks {
            let known = session
                .queries
                .iter()
                .any(|q| q.engine_id == click.engine_id && q.query_text == click.query_text);
            if !known {
                return Err(session_err(
                    &session.participant_id,
                    &session.task_id,
                    format!(
                        "click on {} references unseen query {:?} on {}",
                        click.url, click.query_text, click.engine_id
                    ),
                ));
            }
        }
    }

    Ok(SessionBuild {
        sessions: sessions.into_values().collect(),
        unattributed,
    })
}

/// Picks at most `max_queries` queries to send to the engines.
///
/// Without truncation the session's first-use order is kept. When the
/// session has more queries than the cap, queries with clicks come first,
/// each group in first-use order.
pub fn extract_queries(session: &SessionRecord, max_queries: usize) -> Vec<QueryRecord> {
    assert!(max_queries >= 1, "max_queries must be at least 1");
    if session.queries.len() <= max_queries {
        return session.queries.clone();
    }
    let (clicked, unclicked): (Vec<&QueryRecord>, Vec<&QueryRecord>) = session
        .queries
        .iter()
        .partition(|q| session.has_clicks_for(q));
    clicked
        .into_iter()
        .chain(unclicked)
        .take(max_queries)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub time_effort_seconds: f64,
    pub query_count: usize,
    pub click_count: usize,
}

pub fn session_stats(session: &SessionRecord) -> SessionStats {
    SessionStats {
        time_effort_seconds: (session.end - session.start) as f64 / 1000.0,
        query_count: session.queries.len(),
        click_count: session.clicks.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ParsedLog {
        parse_log_stream(text.as_bytes(), 1.0).unwrap()
    }

    const SIX: &str = r#"{"timestamp":1000,"participant_id":"p1","task_id":"t1","kind":"task_start"}
{"timestamp":2000,"participant_id":"p1","task_id":"t1","kind":"query","engine_id":"google","query_text":"mozart birthplace"}
{"timestamp":3000,"participant_id":"p1","task_id":"t1","kind":"click","engine_id":"google","query_text":"mozart birthplace","url":"https://a.example/1","serp_rank":1}
{"timestamp":4000,"participant_id":"p1","task_id":"t1","kind":"query","engine_id":"google","query_text":"mozart salzburg"}
{"timestamp":5000,"participant_id":"p1","task_id":"t1","kind":"click","engine_id":"google","query_text":"mozart salzburg","url":"https://b.example/2","serp_rank":3}
{"timestamp":6000,"participant_id":"p1","task_id":"t1","kind":"task_end"}
"#;

    #[test]
    fn single_task_start() {
        let p = parse(r#"{"timestamp":5,"participant_id":"p","task_id":"t","kind":"task_start"}"#);
        assert_eq!(p.events.len(), 1);
        assert_eq!(p.events[0].kind, EventKind::TaskStart);
        assert!(p.rejects.is_empty());
    }

    #[test]
    fn click_without_url_is_rejected() {
        let p = parse(
            r#"{"timestamp":5,"participant_id":"p","task_id":"t","kind":"click","engine_id":"g","query_text":"q"}"#,
        );
        assert!(p.events.is_empty());
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].reason, "url required for click");
    }

    #[test]
    fn six_line_fixture_preserves_order() {
        let p = parse(SIX);
        let kinds: Vec<EventKind> = p.events.iter().map(|e| e.kind).collect();
        use EventKind::*;
        assert_eq!(kinds, [TaskStart, Query, Click, Query, Click, TaskEnd]);
        assert_eq!(p.events[4].serp_rank, Some(3));
        assert_eq!(p.events[1].query_text.as_deref(), Some("mozart birthplace"));
    }

    #[test]
    fn default_threshold_rejects_any_bad_line() {
        let text = format!("{SIX}not json\n");
        match parse_log_stream(text.as_bytes(), 0.0) {
            Err(LogError::TooManyRejects { count, lines, first, .. }) => {
                assert_eq!((count, lines), (1, 7));
                assert_eq!(first[0].line_number, 7);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_list_is_capped_at_ten() {
        let text = "x\n".repeat(25);
        match parse_log_stream(text.as_bytes(), 0.5) {
            Err(LogError::TooManyRejects { first, count, .. }) => {
                assert_eq!(count, 25);
                assert_eq!(first.len(), 10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_timestamp_and_bad_kind() {
        let p = parse(
            "{\"timestamp\":-1,\"participant_id\":\"p\",\"task_id\":\"t\",\"kind\":\"task_start\"}\n\
             {\"timestamp\":1,\"participant_id\":\"p\",\"task_id\":\"t\",\"kind\":\"scroll\"}\n",
        );
        assert_eq!(p.rejects.len(), 2);
        assert!(p.rejects[0].reason.contains("non-negative"));
        assert!(p.rejects[1].reason.contains("unknown kind"));
    }

    fn ev(ts: u64, p: &str, t: &str, kind: EventKind) -> LogEvent {
        LogEvent::new(ts, p, t, kind)
    }

    fn query(ts: u64, p: &str, t: &str, q: &str) -> LogEvent {
        let mut e = ev(ts, p, t, EventKind::Query);
        e.engine_id = Some("google".into());
        e.query_text = Some(q.into());
        e
    }

    fn click(ts: u64, p: &str, t: &str, q: &str, url: &str, rank: u32) -> LogEvent {
        let mut e = ev(ts, p, t, EventKind::Click);
        e.engine_id = Some("google".into());
        e.query_text = Some(q.into());
        e.url = Some(url.into());
        e.serp_rank = Some(rank);
        e
    }

    #[test]
    fn empty_session() {
        let b = build_sessions(&[
            ev(100, "p", "t", EventKind::TaskStart),
            ev(157_230, "p", "t", EventKind::TaskEnd),
        ])
        .unwrap();
        assert_eq!(b.sessions.len(), 1);
        let s = &b.sessions[0];
        assert!(s.queries.is_empty() && s.clicks.is_empty());
        let stats = session_stats(s);
        assert_eq!(stats.time_effort_seconds, 157.13);
        assert_eq!((stats.query_count, stats.click_count), (0, 0));
    }

    #[test]
    fn repeated_query_keeps_first_timestamp() {
        let b = build_sessions(&[
            ev(0, "p", "t", EventKind::TaskStart),
            query(10, "p", "t", "q1"),
            query(20, "p", "t", "q1"),
            ev(30, "p", "t", EventKind::TaskEnd),
        ])
        .unwrap();
        assert_eq!(b.sessions[0].queries.len(), 1);
        assert_eq!(b.sessions[0].queries[0].first_seen, 10);
    }

    #[test]
    fn interleaved_participants_and_tasks() {
        use EventKind::*;
        let events = vec![
            ev(0, "p1", "simple", TaskStart),
            ev(1, "p2", "simple", TaskStart),
            query(2, "p1", "simple", "a"),
            query(3, "p2", "simple", "b"),
            click(4, "p2", "simple", "b", "https://x.example/b", 2),
            ev(5, "p1", "simple", TaskEnd),
            ev(6, "p2", "simple", TaskEnd),
            ev(7, "p1", "complex", TaskStart),
            ev(8, "p2", "complex", TaskStart),
            query(9, "p2", "complex", "c"),
            query(10, "p1", "complex", "d"),
            query(11, "p1", "complex", "e"),
            click(12, "p1", "complex", "e", "https://x.example/e", 1),
            ev(13, "p2", "complex", TaskEnd),
            ev(14, "p1", "complex", TaskEnd),
        ];
        let b = build_sessions(&events).unwrap();
        let summary: Vec<(&str, &str, u64, u64, Vec<&str>, usize)> = b
            .sessions
            .iter()
            .map(|s| {
                (
                    s.participant_id.as_str(),
                    s.task_id.as_str(),
                    s.start,
                    s.end,
                    s.queries.iter().map(|q| q.query_text.as_str()).collect(),
                    s.clicks.len(),
                )
            })
            .collect();
        assert_eq!(
            summary,
            vec![
                ("p1", "complex", 7, 14, vec!["d", "e"], 1),
                ("p1", "simple", 0, 5, vec!["a"], 0),
                ("p2", "complex", 8, 13, vec!["c"], 0),
                ("p2", "simple", 1, 6, vec!["b"], 1),
            ]
        );
        assert!(b.unattributed.is_empty());
    }

    #[test]
    fn missing_and_duplicate_bounds() {
        let err = build_sessions(&[ev(0, "p", "t", EventKind::TaskStart)]).unwrap_err();
        assert!(err.to_string().contains("missing task_end"), "{err}");
        let err = build_sessions(&[
            ev(0, "p", "t", EventKind::TaskStart),
            ev(1, "p", "t", EventKind::TaskStart),
            ev(2, "p", "t", EventKind::TaskEnd),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate task_start"), "{err}");
        assert!(err.to_string().contains("participant p task t"));
    }

    #[test]
    fn click_on_unseen_query_is_an_error() {
        let err = build_sessions(&[
            ev(0, "p", "t", EventKind::TaskStart),
            click(1, "p", "t", "ghost", "https://x.example", 1),
            ev(2, "p", "t", EventKind::TaskEnd),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("unseen query"), "{err}");
    }

    #[test]
    fn page_view_between_sessions_is_reported() {
        let mut view = ev(50, "p", "t", EventKind::PageView);
        view.url = Some("https://en.wikipedia.org/wiki/Mozart".into());
        let b = build_sessions(&[
            ev(0, "p", "t", EventKind::TaskStart),
            ev(10, "p", "t", EventKind::TaskEnd),
            view,
        ])
        .unwrap();
        assert_eq!(b.unattributed.len(), 1);
        assert!(b.sessions[0].visited_pages.is_empty());
    }

    fn session_with(queries: &[&str], clicked: &[&str]) -> SessionRecord {
        let mut s = SessionRecord::empty("p", "t", 0, 100);
        for (i, q) in queries.iter().enumerate() {
            s.queries.push(QueryRecord {
                engine_id: "google".into(),
                query_text: q.to_string(),
                first_seen: i as u64,
            });
        }
        for q in clicked {
            s.clicks.push(ClickRecord {
                url: format!("https://x.example/{q}"),
                serp_rank: Some(1),
                engine_id: "google".into(),
                query_text: q.to_string(),
                timestamp: 50,
            });
        }
        s
    }

    fn texts(qs: &[QueryRecord]) -> Vec<&str> {
        qs.iter().map(|q| q.query_text.as_str()).collect()
    }

    #[test]
    fn extract_without_truncation() {
        let s = session_with(&["q1", "q2"], &["q2"]);
        assert_eq!(texts(&extract_queries(&s, 3)), ["q1", "q2"]);
        assert!(extract_queries(&session_with(&[], &[]), 3).is_empty());
    }

    #[test]
    fn extract_prefers_clicked_queries() {
        let s = session_with(&["q1", "q2", "q3", "q4", "q5"], &["q3", "q5"]);
        assert_eq!(texts(&extract_queries(&s, 3)), ["q3", "q5", "q1"]);
    }

    #[test]
    fn stats_counts() {
        let mut s = session_with(&["a", "b", "c"], &["a", "a", "b", "c", "c"]);
        s.start = 1_000;
        s.end = 61_000;
        let st = session_stats(&s);
        assert_eq!(
            (st.time_effort_seconds, st.query_count, st.click_count),
            (60.0, 3, 5)
        );
        let mut s = session_with(&["a", "b"], &["a"]);
        s.start = 0;
        s.end = 157_130;
        assert_eq!(session_stats(&s).time_effort_seconds, 157.13);
    }
}
