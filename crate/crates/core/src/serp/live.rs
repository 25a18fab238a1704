use std::time::Duration;

use url::form_urlencoded;

use super::html::{parse_serp_html, SelectorProfile};
use super::{now_millis, EngineAdapter, FetchError, RetryPolicy, SerpResult};

const USER_AGENT: &str = concat!("postjudge/", env!("CARGO_PKG_VERSION"));

/// Fetches a results page over HTTP and scrapes it with a selector profile.
///
/// `endpoint` is a URL template in which `{query}` is replaced with the
/// form-encoded query text, e.g. `https://www.bing.com/search?q={query}`.
pub struct LiveAdapter {
    engine_id: String,
    endpoint: String,
    profile: SelectorProfile,
    agent: ureq::Agent,
    min_interval: Duration,
    retry: RetryPolicy,
}

impl LiveAdapter {
    pub fn new(
        engine_id: &str,
        endpoint: &str,
        profile: SelectorProfile,
    ) -> Result<LiveAdapter, FetchError> {
        if !endpoint.contains("{query}") {
            return Err(FetchError::Setup(format!(
                "engine {engine_id}: endpoint {endpoint:?} has no {{query}} placeholder"
            )));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .user_agent(USER_AGENT)
            .build()
            .into();
        Ok(LiveAdapter {
            engine_id: engine_id.to_string(),
            endpoint: endpoint.to_string(),
            profile,
            agent,
            min_interval: Duration::from_secs(2),
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn request_url(&self, query_text: &str) -> String {
        let encoded: String = form_urlencoded::byte_serialize(query_text.trim().as_bytes()).collect();
        self.endpoint.replace("{query}", &encoded)
    }
}

impl EngineAdapter for LiveAdapter {
    fn engine_id(&self) -> &str {
        &self.engine_id
    }

    fn fetch(&self, query_text: &str, k: usize) -> Result<Vec<SerpResult>, FetchError> {
        let url = self.request_url(query_text);
        let page = self
            .agent
            .get(&url)
            .call()
            .and_then(|mut resp| resp.body_mut().read_to_string())
            .map_err(|e| FetchError::Transport(format!("GET {url}: {e}")))?;
        let fetched_at = now_millis();
        let parsed = parse_serp_html(&page, &self.profile, Some(&url))?;
        Ok(parsed
            .items
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, item)| SerpResult {
                engine_id: self.engine_id.clone(),
                query_text: query_text.to_string(),
                rank: i as u32 + 1,
                url: item.url,
                title: item.title,
                snippet: item.snippet,
                fetched_at,
            })
            .collect())
    }

    fn min_interval(&self) -> Duration {
        self.min_interval
    }

    fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }
}
