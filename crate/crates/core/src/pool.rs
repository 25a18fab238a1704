//! Judgment pools: one deduplicated, anonymised, shuffled item list per
//! participant and task.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::StudyConfig;
use crate::logs::{extract_queries, SessionRecord};
use crate::serp::ResultBatch;

pub const TOKENS_FILE: &str = "tokens.json";

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("cannot normalize url {0:?}")]
    BadUrl(String),
    #[error("empty pool for participant {participant_id}, task {task_id}")]
    EmptyPool {
        participant_id: String,
        task_id: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Canonical form used to detect duplicate results.
///
/// Lowercases scheme and host, drops the default port, strips the fragment
/// and removes a bare `/` path. Everything else is kept byte for byte.
pub fn normalize_url(raw: &str) -> Result<String, PoolError> {
    let bad = || PoolError::BadUrl(raw.to_string());
    let raw_trimmed = raw.trim();
    url::Url::parse(raw_trimmed).map_err(|_| bad())?;
    let (scheme, rest) = raw_trimmed.split_once("://").ok_or_else(bad)?;
    let scheme = scheme.to_ascii_lowercase();

    let authority_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (authority, tail) = rest.split_at(authority_end);
    let (userinfo, hostport) = match authority.rfind('@') {
        Some(at) => authority.split_at(at + 1),
        None => ("", authority),
    };
    // the port separator is the last colon outside an IPv6 literal
    let port_sep = match hostport.rfind(']') {
        Some(close) => hostport[close..].find(':').map(|i| close + i),
        None => hostport.rfind(':'),
    };
    let (host, port) = match port_sep {
        Some(i) => (&hostport[..i], Some(&hostport[i + 1..])),
        None => (hostport, None),
    };
    if host.is_empty() {
        return Err(bad());
    }
    let default_port = match scheme.as_str() {
        "http" => Some("80"),
        "https" => Some("443"),
        _ => None,
    };
    let port = port.filter(|p| !p.is_empty() && Some(*p) != default_port);

    let without_fragment = tail.split('#').next().unwrap_or("");
    let (path, query) = match without_fragment.find('?') {
        Some(q) => without_fragment.split_at(q),
        None => (without_fragment, ""),
    };
    let path = if path == "/" { "" } else { path };

    let mut out = format!("{scheme}://{userinfo}{}", host.to_ascii_lowercase());
    if let Some(p) = port {
        out.push(':');
        out.push_str(p);
    }
    out.push_str(path);
    out.push_str(query);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_id: String,
    pub query_text: String,
    pub rank: u32,
    /// The participant clicked this url on this engine.
    pub clicked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PooledItem {
    pub item_id: String,
    pub url: String,
    pub normalized_url: String,
    pub title: String,
    pub snippet: String,
    pub provenance: Vec<Provenance>,
    pub was_clicked: bool,
    pub was_visited_outside_serp: bool,
    /// Position in the merge order before shuffling, 0-based.
    pub canonical_position: usize,
}

/// Researcher-side pool; items are stored in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentPool {
    pub pool_id: String,
    pub study_id: String,
    pub participant_id: String,
    pub task_id: String,
    pub shuffle_seed: u64,
    pub items: Vec<PooledItem>,
}

impl JudgmentPool {
    pub fn item(&self, item_id: &str) -> Option<(usize, &PooledItem)> {
        self.items.iter().enumerate().find(|(_, i)| i.item_id == item_id)
    }

    pub fn file_name(&self) -> String {
        format!("{}.json", self.pool_id)
    }
}

/// The only item shape jurors ever receive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JurorItem {
    pub item_id: String,
    pub url: String,
    pub title: String,
    pub snippet: String,
}

impl From<&PooledItem> for JurorItem {
    fn from(item: &PooledItem) -> Self {
        JurorItem {
            item_id: item.item_id.clone(),
            url: item.url.clone(),
            title: item.title.clone(),
            snippet: item.snippet.clone(),
        }
    }
}

pub fn juror_view(pool: &JudgmentPool) -> Vec<JurorItem> {
    pool.items.iter().map(JurorItem::from).collect()
}

pub fn pool_id(study_id: &str, participant_id: &str, task_id: &str) -> String {
    let digest = Sha256::digest(format!("{study_id}\0{participant_id}\0{task_id}").as_bytes());
    format!("p{}", &hex::encode(digest)[..12])
}

pub fn item_id(pool_id: &str, normalized_url: &str) -> String {
    let digest = Sha256::digest(format!("{pool_id}\n{normalized_url}").as_bytes());
    hex::encode(digest)[..16].to_string()
}

fn shuffle_rng(seed: u64, participant_id: &str, task_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(participant_id.as_bytes());
    h.update([0]);
    h.update(task_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolOutcome {
    pub pool: JudgmentPool,
    pub warnings: Vec<String>,
}

/// Merges the session's results and visited pages into a pool.
///
/// Merge order is engine id, then query first-use order, then rank,
/// followed by visited pages in visit order. Equal normalized URLs merge
/// into the first occurrence. The merged list is then permuted with a
/// generator seeded by the study seed, participant and task.
pub fn build_pool(
    batch: &ResultBatch,
    session: &SessionRecord,
    config: &StudyConfig,
) -> Result<PoolOutcome, PoolError> {
    let mut warnings = Vec::new();
    let pool_id = pool_id(&config.study_id, &session.participant_id, &session.task_id);

    let mut queries: Vec<(u64, String)> = Vec::new();
    for q in extract_queries(session, config.max_queries_per_task as usize) {
        if !queries.iter().any(|(_, t)| *t == q.query_text) {
            queries.push((q.first_seen, q.query_text));
        }
    }
    queries.sort_by_key(|(first, _)| *first);

    let mut engines: Vec<&str> = config.engines.iter().map(|e| e.engine_id.as_str()).collect();
    engines.sort_unstable();

    let clicked_pairs: Vec<(String, String)> = session
        .clicks
        .iter()
        .filter_map(|c| Some((c.engine_id.clone(), normalize_url(&c.url).ok()?)))
        .collect();
    let clicked: HashSet<&str> = clicked_pairs.iter().map(|(_, u)| u.as_str()).collect();
    let clicked_on: HashSet<(&str, &str)> = clicked_pairs.iter().map(|(e, u)| (e.as_str(), u.as_str())).collect();
    let visited: HashSet<String> = session
        .visited_pages
        .iter()
        .filter_map(|u| normalize_url(u).ok())
        .collect();

    let mut items: Vec<PooledItem> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut push = |url: &str, title: &str, snippet: &str, prov: Option<Provenance>| -> Result<(), PoolError> {
        let normalized = normalize_url(url)?;
        let slot = match index.get(&normalized) {
            Some(&i) => i,
            None => {
                index.insert(normalized.clone(), items.len());
                items.push(PooledItem {
                    item_id: item_id(&pool_id, &normalized),
                    url: url.to_string(),
                    was_clicked: clicked.contains(normalized.as_str()),
                    was_visited_outside_serp: visited.contains(&normalized),
                    normalized_url: normalized,
                    title: title.to_string(),
                    snippet: snippet.to_string(),
                    provenance: Vec::new(),
                    canonical_position: items.len(),
                });
                items.len() - 1
            }
        };
        if let Some(p) = prov {
            if !items[slot].provenance.contains(&p) {
                items[slot].provenance.push(p);
            }
        }
        Ok(())
    };

    let mut covered: HashSet<&str> = HashSet::new();
    for engine in &engines {
        for (_, query) in &queries {
            for r in batch.list(engine, query) {
                if r.rank > config.results_per_query {
                    continue;
                }
                covered.insert(query.as_str());
                let prov = Provenance {
                    engine_id: r.engine_id.clone(),
                    query_text: r.query_text.clone(),
                    rank: r.rank,
                    clicked: normalize_url(&r.url)
                        .is_ok_and(|n| clicked_on.contains(&(r.engine_id.as_str(), n.as_str()))),
                };
                if let Err(e) = push(&r.url, &r.title, &r.snippet, Some(prov)) {
                    warnings.push(format!("skipping result {}/{query:?}#{}: {e}", r.engine_id, r.rank));
                }
            }
        }
    }
    for (_, query) in &queries {
        if !covered.contains(query.as_str()) {
            warnings.push(format!("no engine returned results for query {query:?}"));
        }
    }
    for page in &session.visited_pages {
        if let Err(e) = push(page, "", "", None) {
            warnings.push(format!("skipping visited page: {e}"));
        }
    }

    if items.is_empty() {
        return Err(PoolError::EmptyPool {
            participant_id: session.participant_id.clone(),
            task_id: session.task_id.clone(),
        });
    }
    for w in &warnings {
        log::warn!("pool {pool_id}: {w}");
    }

    items.shuffle(&mut shuffle_rng(
        config.shuffle_seed,
        &session.participant_id,
        &session.task_id,
    ));
    Ok(PoolOutcome {
        pool: JudgmentPool {
            pool_id,
            study_id: config.study_id.clone(),
            participant_id: session.participant_id.clone(),
            task_id: session.task_id.clone(),
            shuffle_seed: config.shuffle_seed,
            items,
        },
        warnings,
    })
}

/// Per-participant juror tokens plus the researcher token for exports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRegistry {
    pub admin_token: String,
    /// participant id → token
    pub participants: BTreeMap<String, String>,
}

fn random_token(rng: &mut impl Rng) -> String {
    let bytes: [u8; 16] = rng.random();
    hex::encode(bytes)
}

impl TokenRegistry {
    /// Keeps existing tokens and issues new ones for unseen participants.
    pub fn issue<'a>(&mut self, participants: impl IntoIterator<Item = &'a str>, rng: &mut impl Rng) {
        if self.admin_token.is_empty() {
            self.admin_token = random_token(rng);
        }
        for p in participants {
            if !self.participants.contains_key(p) {
                self.participants.insert(p.to_string(), random_token(rng));
            }
        }
    }

    pub fn participant_for(&self, token: &str) -> Option<&str> {
        self.participants
            .iter()
            .find(|(_, t)| t.as_str() == token)
            .map(|(p, _)| p.as_str())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PoolError + '_ {
    move |source| PoolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PoolError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| PoolError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PoolError> {
    let mut text = serde_json::to_string_pretty(value).expect("pool types serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_pool(dir: &Path, pool: &JudgmentPool) -> Result<PathBuf, PoolError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(pool.file_name());
    write_json(&path, pool)?;
    Ok(path)
}

fn is_pool_id(s: &str) -> bool {
    s.len() == 13 && s.starts_with('p') && s[1..].bytes().all(|b| b.is_ascii_hexdigit())
}

/// Reads every pool file in `dir`, ordered by pool id. Other files are
/// ignored.
pub fn load_pools(dir: &Path) -> Result<Vec<JudgmentPool>, PoolError> {
    let mut pools = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_pool = path.extension().is_some_and(|e| e == "json")
            && path.file_stem().and_then(|s| s.to_str()).is_some_and(is_pool_id);
        if is_pool {
            pools.push(read_json::<JudgmentPool>(&path)?);
        }
    }
    pools.sort_by(|a, b| a.pool_id.cmp(&b.pool_id));
    Ok(pools)
}

pub fn load_tokens(dir: &Path) -> Result<TokenRegistry, PoolError> {
    let path = dir.join(TOKENS_FILE);
    if !path.exists() {
        return Ok(TokenRegistry::default());
    }
    read_json(&path)
}

pub fn write_tokens(dir: &Path, tokens: &TokenRegistry) -> Result<(), PoolError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(TOKENS_FILE), tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_study_config;
    use crate::logs::{ClickRecord, QueryRecord};
    use crate::serp::SerpResult;

    #[test]
    fn normalization_rules() {
        let n = |u: &str| normalize_url(u).unwrap();
        assert_eq!(n("HTTP://Example.COM:80/a#frag"), "http://example.com/a");
        assert_eq!(n("https://example.com/"), "https://example.com");
        assert_eq!(n("https://example.com/a?x=1"), "https://example.com/a?x=1");
        assert_eq!(n("https://example.com:443"), "https://example.com");
        assert_eq!(n("http://example.com:443/"), "http://example.com:443");
        assert_eq!(n("https://Example.com/A/B/?Q=%2F"), "https://example.com/A/B/?Q=%2F");
        assert_eq!(n("https://example.com/?q=1"), "https://example.com?q=1");
        assert_eq!(n("http://[::1]:80/x"), "http://[::1]/x");
        assert!(matches!(normalize_url("not a url"), Err(PoolError::BadUrl(s)) if s == "not a url"));
        assert!(normalize_url("/relative").is_err());
    }

    fn config(engines: &[&str]) -> StudyConfig {
        let mut text = String::from("schema_version = 1\nstudy_id = \"s\"\nshuffle_seed = 7\n");
        for e in engines {
            text.push_str(&format!(
                "[[engines]]\nengine_id = \"{e}\"\nadapter = \"recorded_fixture\"\nparams = {{ fixture_dir = \"f/{e}\" }}\n"
            ));
        }
        text.push_str("[[tasks]]\ntask_id = \"t1\"\ncomplexity = \"simple\"\ndescription = \"d\"\n");
        parse_study_config(&text).unwrap()
    }

    fn result(engine: &str, query: &str, rank: u32, url: &str) -> SerpResult {
        SerpResult {
            engine_id: engine.into(),
            query_text: query.into(),
            rank,
            url: url.into(),
            title: format!("{} {rank}", &engine[..1]),
            snippet: String::new(),
            fetched_at: 0,
        }
    }

    fn session(queries: &[(&str, &str)]) -> SessionRecord {
        let mut s = SessionRecord::empty("p1", "t1", 0, 100);
        for (i, (e, q)) in queries.iter().enumerate() {
            s.queries.push(QueryRecord {
                engine_id: e.to_string(),
                query_text: q.to_string(),
                first_seen: i as u64 + 1,
            });
        }
        s
    }

    fn two_engine_batch() -> ResultBatch {
        let mut b = ResultBatch::new("s");
        b.results = vec![
            result("bing", "q", 1, "https://u2.example/"),
            result("bing", "q", 2, "https://u4.example/"),
            result("alpha", "q", 1, "https://u1.example/"),
            result("alpha", "q", 2, "https://U2.example:443/"),
            result("alpha", "q", 3, "https://u3.example/"),
        ];
        b
    }

    #[test]
    fn duplicates_merge_with_provenance_union() {
        let out = build_pool(&two_engine_batch(), &session(&[("alpha", "q")]), &config(&["alpha", "bing"])).unwrap();
        let pool = out.pool;
        assert_eq!(pool.items.len(), 4);
        let mut canonical = pool.items.clone();
        canonical.sort_by_key(|i| i.canonical_position);
        let urls: Vec<_> = canonical.iter().map(|i| i.normalized_url.as_str()).collect();
        assert_eq!(
            urls,
            ["https://u1.example", "https://u2.example", "https://u3.example", "https://u4.example"]
        );
        // title and url from the first canonical occurrence
        assert_eq!(canonical[1].title, "a 2");
        assert_eq!(canonical[1].url, "https://U2.example:443/");
        let engines: Vec<_> = canonical[1].provenance.iter().map(|p| p.engine_id.as_str()).collect();
        assert_eq!(engines, ["alpha", "bing"]);
    }

    #[test]
    fn visited_page_joins_without_provenance() {
        let mut s = session(&[("alpha", "q")]);
        s.visited_pages.push("https://u5.example/".into());
        s.clicks.push(ClickRecord {
            url: "https://u3.example".into(),
            serp_rank: Some(3),
            engine_id: "alpha".into(),
            query_text: "q".into(),
            timestamp: 5,
        });
        let pool = build_pool(&two_engine_batch(), &s, &config(&["alpha", "bing"])).unwrap().pool;
        assert_eq!(pool.items.len(), 5);
        let u5 = pool.items.iter().find(|i| i.normalized_url == "https://u5.example").unwrap();
        assert!(u5.provenance.is_empty() && u5.was_visited_outside_serp && !u5.was_clicked);
        let u3 = pool.items.iter().find(|i| i.normalized_url == "https://u3.example").unwrap();
        assert!(u3.was_clicked && !u3.was_visited_outside_serp);
        assert!(u3.provenance[0].clicked);
        let u2 = pool.items.iter().find(|i| i.normalized_url == "https://u2.example").unwrap();
        assert!(u2.provenance.iter().all(|p| !p.clicked));
    }

    #[test]
    fn shuffle_is_seeded() {
        let mut b = ResultBatch::new("s");
        b.results = (1..=10)
            .map(|r| result("alpha", "q", r, &format!("https://r{r}.example/")))
            .collect();
        let s = session(&[("alpha", "q")]);
        let cfg = config(&["alpha"]);
        let a = build_pool(&b, &s, &cfg).unwrap().pool;
        let again = build_pool(&b, &s, &cfg).unwrap().pool;
        assert_eq!(a, again);
        let mut positions: Vec<_> = a.items.iter().map(|i| i.canonical_position).collect();
        assert_ne!(positions, (0..10).collect::<Vec<_>>());
        positions.sort_unstable();
        assert_eq!(positions, (0..10).collect::<Vec<_>>());

        let mut other = cfg.clone();
        other.shuffle_seed = 8;
        let b2 = build_pool(&b, &s, &other).unwrap().pool;
        assert_ne!(
            a.items.iter().map(|i| &i.item_id).collect::<Vec<_>>(),
            b2.items.iter().map(|i| &i.item_id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn juror_view_hides_sources() {
        let pool = build_pool(&two_engine_batch(), &session(&[("alpha", "q")]), &config(&["alpha", "bing"])).unwrap().pool;
        let view = juror_view(&pool);
        assert_eq!(view.len(), 4);
        let json = serde_json::to_value(&view).unwrap();
        for entry in json.as_array().unwrap() {
            let keys: Vec<_> = entry.as_object().unwrap().keys().cloned().collect();
            assert_eq!(keys, ["item_id", "snippet", "title", "url"]);
        }
        let text = json.to_string();
        assert!(!text.contains("alpha") && !text.contains("bing"));
        let empty = JudgmentPool { items: vec![], ..pool };
        assert!(juror_view(&empty).is_empty());
    }

    #[test]
    fn empty_merge_is_an_error_and_missing_query_warns() {
        let cfg = config(&["alpha"]);
        let err = build_pool(&ResultBatch::new("s"), &session(&[("alpha", "q")]), &cfg).unwrap_err();
        assert!(matches!(err, PoolError::EmptyPool { .. }));

        let mut s = session(&[("alpha", "q"), ("alpha", "missing")]);
        s.visited_pages.push("https://v.example".into());
        let out = build_pool(&ResultBatch::new("s"), &s, &cfg).unwrap();
        assert_eq!(out.pool.items.len(), 1);
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn tokens_are_stable_once_issued() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut reg = TokenRegistry::default();
        reg.issue(["p1", "p2"], &mut rng);
        let before = reg.clone();
        reg.issue(["p2", "p3"], &mut rng);
        assert_eq!(reg.participants["p1"], before.participants["p1"]);
        assert_eq!(reg.admin_token, before.admin_token);
        assert_eq!(reg.participant_for(&reg.participants["p3"].clone()), Some("p3"));
        assert_eq!(reg.participant_for("nope"), None);
    }
}
