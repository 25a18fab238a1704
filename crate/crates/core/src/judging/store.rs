use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{Answer, JudgingError, Judgment, LogRecord, QuestionnaireResponse};
use crate::config::{AnswerKind, Phase, StudyConfig};
use crate::pool::{JudgmentPool, JurorItem};
use crate::serp::now_millis;

pub const LOG_FILE: &str = "judgments.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const SNAPSHOT_EVERY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub judged: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    log_offset: u64,
    judgments: Vec<Judgment>,
    questionnaires: Vec<QuestionnaireResponse>,
}

/// Records recovered from a study log, first occurrence wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogContents {
    pub judgments: Vec<Judgment>,
    pub questionnaires: Vec<QuestionnaireResponse>,
    /// Length of the prefix made of complete lines.
    pub valid_len: u64,
    /// Bytes after the last newline, left by an interrupted write.
    pub torn_bytes: u64,
}

impl LogContents {
    fn apply(&mut self, records: Vec<LogRecord>) {
        let mut judged: HashSet<(String, String, String)> = self
            .judgments
            .iter()
            .map(|j| (j.pool_id.clone(), j.item_id.clone(), j.participant_id.clone()))
            .collect();
        let mut answered: HashSet<(String, String, Phase)> = self
            .questionnaires
            .iter()
            .map(|q| (q.participant_id.clone(), q.task_id.clone(), q.phase))
            .collect();
        for record in records {
            match record {
                LogRecord::Judgment(j) => {
                    if judged.insert((j.pool_id.clone(), j.item_id.clone(), j.participant_id.clone())) {
                        self.judgments.push(j);
                    } else {
                        log::warn!("ignoring repeated judgment of {}/{}", j.pool_id, j.item_id);
                    }
                }
                LogRecord::Questionnaire(q) => {
                    if answered.insert((q.participant_id.clone(), q.task_id.clone(), q.phase)) {
                        self.questionnaires.push(q);
                    }
                }
            }
        }
    }
}

fn parse_lines(path: &Path, bytes: &[u8], base: u64) -> Result<(Vec<LogRecord>, u64), JudgingError> {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut records = Vec::new();
    let mut offset = 0;
    for line in bytes[..complete].split_inclusive(|&b| b == b'\n') {
        let body = &line[..line.len() - 1];
        if !body.iter().all(u8::is_ascii_whitespace) {
            let record = serde_json::from_slice(body).map_err(|e| JudgingError::Corrupt {
                path: path.to_path_buf(),
                offset: base + offset as u64,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        offset += line.len();
    }
    Ok((records, complete as u64))
}

/// Reads a study log without modifying it.
pub fn read_log(path: &Path) -> Result<LogContents, JudgingError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(JudgingError::io(path)(e)),
    };
    let (records, valid_len) = parse_lines(path, &bytes, 0)?;
    let mut contents = LogContents {
        valid_len,
        torn_bytes: bytes.len() as u64 - valid_len,
        ..LogContents::default()
    };
    contents.apply(records);
    Ok(contents)
}

struct PoolSlot {
    pool: JudgmentPool,
    positions: HashMap<String, usize>,
    writer: Mutex<()>,
    judged: RwLock<HashMap<String, Judgment>>,
}

struct LogWriter {
    file: File,
    path: PathBuf,
    offset: u64,
    since_snapshot: usize,
}

type QuestionnaireKey = (String, String, Phase);

/// Durable judgment and questionnaire state for one study.
///
/// Every accepted submission is appended to `judgments.log` and flushed to
/// disk before the call returns. Lock order is per-pool writer, then log,
/// then the in-memory maps, so readers never wait on a disk write.
pub struct JudgmentStore {
    dir: PathBuf,
    config: StudyConfig,
    pools: BTreeMap<String, PoolSlot>,
    log: Mutex<LogWriter>,
    questionnaire_writer: Mutex<()>,
    questionnaires: RwLock<BTreeMap<QuestionnaireKey, QuestionnaireResponse>>,
    snapshot_every: usize,
}

impl JudgmentStore {
    pub fn open(dir: &Path, config: StudyConfig, pools: Vec<JudgmentPool>) -> Result<Self, JudgingError> {
        Self::open_with(dir, config, pools, SNAPSHOT_EVERY)
    }

    /// Opens the store, truncating an interrupted trailing write and
    /// replaying the log on top of the latest snapshot.
    pub fn open_with(
        dir: &Path,
        config: StudyConfig,
        pools: Vec<JudgmentPool>,
        snapshot_every: usize,
    ) -> Result<Self, JudgingError> {
        fs::create_dir_all(dir).map_err(JudgingError::io(dir))?;
        let path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(JudgingError::io(&path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(JudgingError::io(&path))?;

        let snapshot = read_snapshot(dir).filter(|s| s.log_offset <= bytes.len() as u64);
        let mut contents = LogContents::default();
        let start = match snapshot {
            Some(s) => {
                contents.judgments = s.judgments;
                contents.questionnaires = s.questionnaires;
                s.log_offset
            }
            None => 0,
        };
        let (records, tail_len) = parse_lines(&path, &bytes[start as usize..], start)?;
        contents.apply(records);
        let valid_len = start + tail_len;
        if valid_len < bytes.len() as u64 {
            log::warn!(
                "{}: dropping {} bytes of an interrupted write",
                path.display(),
                bytes.len() as u64 - valid_len
            );
            file.set_len(valid_len).map_err(JudgingError::io(&path))?;
            file.sync_all().map_err(JudgingError::io(&path))?;
        }

        let mut slots = BTreeMap::new();
        for pool in pools {
            let positions = pool
                .items
                .iter()
                .enumerate()
                .map(|(i, item)| (item.item_id.clone(), i))
                .collect();
            slots.insert(
                pool.pool_id.clone(),
                PoolSlot {
                    pool,
                    positions,
                    writer: Mutex::new(()),
                    judged: RwLock::new(HashMap::new()),
                },
            );
        }
        for j in contents.judgments {
            let slot = slots.get(&j.pool_id).filter(|s| s.positions.contains_key(&j.item_id));
            let Some(slot) = slot else {
                return Err(JudgingError::Corrupt {
                    path: path.clone(),
                    offset: 0,
                    message: format!("judgment for unknown item {}/{}", j.pool_id, j.item_id),
                });
            };
            slot.judged.write().unwrap().insert(j.item_id.clone(), j);
        }
        let questionnaires = contents
            .questionnaires
            .into_iter()
            .map(|q| ((q.participant_id.clone(), q.task_id.clone(), q.phase), q))
            .collect();

        Ok(JudgmentStore {
            dir: dir.to_path_buf(),
            config,
            pools: slots,
            log: Mutex::new(LogWriter {
                file,
                path,
                offset: valid_len,
                since_snapshot: 0,
            }),
            questionnaire_writer: Mutex::new(()),
            questionnaires: RwLock::new(questionnaires),
            snapshot_every: snapshot_every.max(1),
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn pools(&self) -> impl Iterator<Item = &JudgmentPool> {
        self.pools.values().map(|s| &s.pool)
    }

    pub fn pool(&self, pool_id: &str) -> Option<&JudgmentPool> {
        self.pools.get(pool_id).map(|s| &s.pool)
    }

    fn authorized(&self, pool_id: &str, participant_id: &str) -> Result<&PoolSlot, JudgingError> {
        let slot = self
            .pools
            .get(pool_id)
            .ok_or_else(|| JudgingError::NotFound(format!("pool {pool_id}")))?;
        if slot.pool.participant_id != participant_id {
            return Err(JudgingError::Forbidden(format!(
                "pool {pool_id} belongs to another participant"
            )));
        }
        Ok(slot)
    }

    pub fn progress(&self, pool_id: &str, participant_id: &str) -> Result<Progress, JudgingError> {
        let slot = self.authorized(pool_id, participant_id)?;
        Ok(Progress {
            judged: slot.judged.read().unwrap().len(),
            total: slot.pool.items.len(),
        })
    }

    /// First item in presentation order this participant has not judged.
    pub fn next_item(
        &self,
        pool_id: &str,
        participant_id: &str,
    ) -> Result<(Option<JurorItem>, Progress), JudgingError> {
        let slot = self.authorized(pool_id, participant_id)?;
        let judged = slot.judged.read().unwrap();
        let next = slot
            .pool
            .items
            .iter()
            .find(|item| !judged.contains_key(&item.item_id))
            .map(JurorItem::from);
        let progress = Progress {
            judged: judged.len(),
            total: slot.pool.items.len(),
        };
        Ok((next, progress))
    }

    pub fn submit_judgment(
        &self,
        pool_id: &str,
        participant_id: &str,
        item_id: &str,
        binary: bool,
        graded: i64,
    ) -> Result<Judgment, JudgingError> {
        let slot = self.authorized(pool_id, participant_id)?;
        if !slot.positions.contains_key(item_id) {
            return Err(JudgingError::NotFound(format!("item {item_id} in pool {pool_id}")));
        }
        let scale = &self.config.judgment_scales;
        if !scale.contains(graded) {
            return Err(JudgingError::Validation(format!(
                "graded {graded} outside scale bounds [{},{}]",
                scale.graded_min, scale.graded_max
            )));
        }
        let _writer = slot.writer.lock().unwrap();
        if slot.judged.read().unwrap().contains_key(item_id) {
            return Err(JudgingError::Conflict(format!(
                "item {item_id} in pool {pool_id} is already judged"
            )));
        }
        let judgment = Judgment {
            pool_id: pool_id.to_string(),
            item_id: item_id.to_string(),
            participant_id: participant_id.to_string(),
            binary,
            graded,
            judged_at: now_millis(),
        };
        let mut log = self.log.lock().unwrap();
        append(&mut log, &LogRecord::Judgment(judgment.clone()))?;
        slot.judged
            .write()
            .unwrap()
            .insert(item_id.to_string(), judgment.clone());
        self.after_append(&mut log);
        Ok(judgment)
    }

    pub fn submit_questionnaire(
        &self,
        participant_id: &str,
        task_id: &str,
        phase: Phase,
        answers: BTreeMap<String, Answer>,
    ) -> Result<QuestionnaireResponse, JudgingError> {
        if self.config.task(task_id).is_none() {
            return Err(JudgingError::NotFound(format!("task {task_id}")));
        }
        let items = self.config.questionnaire(phase);
        if items.is_empty() {
            return Err(JudgingError::NotFound(format!(
                "no {} questionnaire is defined",
                phase.as_str()
            )));
        }
        for (item_id, answer) in &answers {
            let item = items.iter().find(|i| &i.item_id == item_id).ok_or_else(|| {
                JudgingError::Validation(format!(
                    "{item_id} is not part of the {} questionnaire",
                    phase.as_str()
                ))
            })?;
            let fits = matches!(
                (item.answer_kind, answer),
                (AnswerKind::YesNo, Answer::YesNo(_))
                    | (AnswerKind::Integer, Answer::Integer(_))
                    | (AnswerKind::FreeText, Answer::Text(_))
            );
            if !fits {
                return Err(JudgingError::Validation(format!(
                    "{item_id} expects a {} answer",
                    match item.answer_kind {
                        AnswerKind::YesNo => "yes/no (boolean)",
                        AnswerKind::Integer => "integer",
                        AnswerKind::FreeText => "text",
                    }
                )));
            }
        }
        let key = (participant_id.to_string(), task_id.to_string(), phase);
        let _writer = self.questionnaire_writer.lock().unwrap();
        if self.questionnaires.read().unwrap().contains_key(&key) {
            return Err(JudgingError::Conflict(format!(
                "{} questionnaire for task {task_id} already submitted",
                phase.as_str()
            )));
        }
        let response = QuestionnaireResponse {
            participant_id: participant_id.to_string(),
            task_id: task_id.to_string(),
            phase,
            answers,
            submitted_at: now_millis(),
        };
        let mut log = self.log.lock().unwrap();
        append(&mut log, &LogRecord::Questionnaire(response.clone()))?;
        self.questionnaires.write().unwrap().insert(key, response.clone());
        self.after_append(&mut log);
        Ok(response)
    }

    /// All judgments ordered by pool id and presentation position.
    pub fn judgments(&self) -> Vec<Judgment> {
        let mut out = Vec::new();
        for slot in self.pools.values() {
            let judged = slot.judged.read().unwrap();
            let mut rows: Vec<&Judgment> = judged.values().collect();
            rows.sort_by_key(|j| slot.positions[&j.item_id]);
            out.extend(rows.into_iter().cloned());
        }
        out
    }

    pub fn questionnaires(&self) -> Vec<QuestionnaireResponse> {
        self.questionnaires.read().unwrap().values().cloned().collect()
    }

    pub fn snapshot(&self) -> Result<(), JudgingError> {
        let mut log = self.log.lock().unwrap();
        self.write_snapshot(&mut log)
    }

    fn after_append(&self, log: &mut LogWriter) {
        log.since_snapshot += 1;
        if log.since_snapshot >= self.snapshot_every {
            // the log alone is enough to recover, so a failed snapshot is not fatal
            if let Err(e) = self.write_snapshot(log) {
                log::warn!("snapshot failed: {e}");
            }
        }
    }

    fn write_snapshot(&self, log: &mut LogWriter) -> Result<(), JudgingError> {
        let snapshot = Snapshot {
            log_offset: log.offset,
            judgments: self.judgments(),
            questionnaires: self.questionnaires(),
        };
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(&snapshot).expect("snapshot serializes");
        let mut f = File::create(&tmp).map_err(JudgingError::io(&tmp))?;
        f.write_all(&bytes).map_err(JudgingError::io(&tmp))?;
        f.sync_all().map_err(JudgingError::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(JudgingError::io(&path))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        log.since_snapshot = 0;
        Ok(())
    }
}

fn read_snapshot(dir: &Path) -> Option<Snapshot> {
    let path = dir.join(SNAPSHOT_FILE);
    let bytes = fs::read(&path).ok()?;
    match serde_json::from_slice(&bytes) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("{}: ignoring unreadable snapshot: {e}", path.display());
            None
        }
    }
}

fn append(log: &mut LogWriter, record: &LogRecord) -> Result<(), JudgingError> {
    let mut line = serde_json::to_vec(record).expect("log records serialize");
    line.push(b'\n');
    let written = log.file.write_all(&line).and_then(|_| log.file.sync_data());
    if let Err(e) = written {
        // roll back a partial line so later appends stay parseable
        let _ = log.file.set_len(log.offset);
        return Err(JudgingError::io(&log.path)(e));
    }
    log.offset += line.len() as u64;
    Ok(())
}
