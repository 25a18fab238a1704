//! Shared helpers for the integration tests: a study on disk, an HTTP
//! client, and reference computations written independently of the crate.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use postjudge::cli::simulate::{simulate, write_simulation, SimulateOptions, Simulation};
use postjudge::cli::Context;
use postjudge::config::load_study_file;
use postjudge::pool::{normalize_url, TokenRegistry};
use serde_json::{json, Value};

pub fn study_toml(study_id: &str, fixture_root: &str) -> String {
    format!(
        r#"schema_version = 1
study_id = "{study_id}"
max_queries_per_task = 3
results_per_query = 10
shuffle_seed = 2017

[[engines]]
engine_id = "google"
adapter = "recorded_fixture"
params = {{ fixture_dir = "{fixture_root}/google" }}

[[engines]]
engine_id = "bing"
adapter = "recorded_fixture"
params = {{ fixture_dir = "{fixture_root}/bing" }}

[[tasks]]
task_id = "simple-1"
complexity = "simple"
description = "Find the birthplace of Wolfgang Amadeus Mozart"

[[tasks]]
task_id = "complex-1"
complexity = "complex"
description = "Plan a three day trip to Vienna on a student budget including museums"

[[post_questionnaire]]
item_id = "easy"
prompt = "The search task was easy to solve"
answer_kind = "yes_no"

[[post_questionnaire]]
item_id = "found"
prompt = "I found the correct information"
answer_kind = "yes_no"
"#
    )
}

/// A study config plus simulated logs and fixtures in a temp dir.
pub struct SimStudy {
    pub dir: tempfile::TempDir,
    pub study: PathBuf,
    pub ctx: Context,
    pub sim: Simulation,
}

impl SimStudy {
    pub fn new(participants: usize, seed: u64) -> SimStudy {
        let dir = tempfile::tempdir().unwrap();
        let study = dir.path().join("study.toml");
        fs::write(&study, study_toml("sim", "sim/fixtures")).unwrap();
        let config = load_study_file(&study).unwrap();
        let sim = simulate(
            &config,
            &SimulateOptions {
                participants,
                seed,
                click_decay: 0.5,
            },
        )
        .unwrap();
        write_simulation(&sim, &dir.path().join("sim")).unwrap();
        let ctx = Context::new(config, &study, dir.path().join("work"));
        SimStudy { dir, study, ctx, sim }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn log_files(&self) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = fs::read_dir(self.path().join("sim/logs"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

fn read(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
    let mut resp = resp.expect("request reaches the server");
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

pub fn get(agent: &ureq::Agent, url: &str, token: Option<&str>) -> (u16, Value) {
    let mut req = agent.get(url);
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    read(req.call())
}

pub fn post(agent: &ureq::Agent, url: &str, token: Option<&str>, body: &Value) -> (u16, Value) {
    let mut req = agent.post(url);
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    read(req.send_json(body))
}

/// Plays the judging script through the HTTP API: every item of every pool
/// the token can see, then the scripted questionnaires. Returns the number
/// of judgments submitted.
pub fn judge_by_script(base: &str, tokens: &TokenRegistry, sim: &Simulation) -> usize {
    let agent = agent();
    let mut submitted = 0;
    for (participant, token) in &tokens.participants {
        let (status, pools) = get(&agent, &format!("{base}/v1/pools"), Some(token));
        assert_eq!(status, 200, "{pools}");
        for pool in pools.as_array().unwrap() {
            let pool_id = pool["pool_id"].as_str().unwrap();
            loop {
                let (status, next) = get(&agent, &format!("{base}/v1/pools/{pool_id}/next"), Some(token));
                assert_eq!(status, 200, "{next}");
                if next["done"] == json!(true) {
                    break;
                }
                let item = &next["item"];
                let key = normalize_url(item["url"].as_str().unwrap()).unwrap();
                let verdict = &sim.judgments[&key];
                let (status, body) = post(
                    &agent,
                    &format!("{base}/v1/pools/{pool_id}/judgments"),
                    Some(token),
                    &json!({
                        "item_id": item["item_id"],
                        "binary": verdict.binary,
                        "graded": verdict.graded,
                    }),
                );
                assert_eq!(status, 201, "{body}");
                submitted += 1;
            }
        }
        for q in sim.questionnaires.iter().filter(|q| &q.participant_id == participant) {
            let (status, body) = post(
                &agent,
                &format!("{base}/v1/questionnaires"),
                Some(token),
                &json!({ "task_id": q.task_id, "phase": q.phase, "answers": q.answers }),
            );
            assert_eq!(status, 201, "{body}");
        }
    }
    submitted
}

// ---------------------------------------------------------------------------
// Reference computations. These deliberately share no code with the crate.

/// One judged position; `None` fields are unjudged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefEntry {
    pub binary: Option<bool>,
    pub graded: Option<i64>,
}

fn rel(list: &[RefEntry], i: usize) -> bool {
    list.get(i).is_some_and(|e| e.binary == Some(true))
}

pub fn ref_precision(list: &[RefEntry], k: usize) -> f64 {
    let hits = (0..k).filter(|&i| rel(list, i)).count();
    hits as f64 / k as f64
}

pub fn ref_average_precision(list: &[RefEntry], k: usize) -> f64 {
    let relevant: Vec<usize> = (0..k).filter(|&i| rel(list, i)).collect();
    if relevant.is_empty() {
        return 0.0;
    }
    let sum: f64 = relevant.iter().map(|&i| ref_precision(list, i + 1)).sum();
    sum / relevant.len() as f64
}

fn gain(e: &RefEntry, scale_min: i64) -> f64 {
    e.graded.map_or(0.0, |g| (g - scale_min) as f64)
}

pub fn ref_dcg(gains: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for (i, g) in gains.iter().take(k).enumerate() {
        total += g / ((i + 2) as f64).log2();
    }
    total
}

pub fn ref_ndcg(list: &[RefEntry], k: usize, scale_min: i64) -> f64 {
    let gains: Vec<f64> = list.iter().map(|e| gain(e, scale_min)).collect();
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg = ref_dcg(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        ref_dcg(&gains, k) / idcg
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let nodes = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        total += nodes.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
    }
    total
}

/// Two-tailed Student-t tail by quadrature in the angle `atan(t/sqrt(df))`:
/// the density of that angle is proportional to `cos^(df-1)`.
pub fn quadrature_two_tailed(t: f64, df: f64) -> f64 {
    let theta0 = (t.abs() / df.sqrt()).atan();
    let f = |th: f64| th.cos().powf(df - 1.0);
    let tail = integrate(f, theta0, FRAC_PI_2, 400);
    let whole = integrate(f, 0.0, FRAC_PI_2, 400);
    (tail / whole).min(1.0)
}

/// Pooled-variance t statistic and degrees of freedom.
pub fn ref_pooled_t(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let df = n1 + n2 - 2.0;
    let s2 = (ss(xs) + ss(ys)) / df;
    ((mean(xs) - mean(ys)) / (s2 * (1.0 / n1 + 1.0 / n2)).sqrt(), df)
}

/// Exact rational as `(numerator, denominator)`, reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio(pub i64, pub i64);

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    pub fn new(n: i64, d: i64) -> Ratio {
        assert!(d != 0);
        let g = gcd(n, d).max(1) * d.signum();
        Ratio(n / g, d / g)
    }

    pub fn add(self, o: Ratio) -> Ratio {
        let g = gcd(self.1, o.1);
        Ratio::new(self.0 * (o.1 / g) + o.0 * (self.1 / g), self.1 / g * o.1)
    }

    pub fn div_int(self, n: i64) -> Ratio {
        Ratio::new(self.0, self.1 * n)
    }

    pub fn parse(s: &str) -> Ratio {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        Ratio::new(n.parse().unwrap(), d.parse().unwrap())
    }

    pub fn render(self) -> String {
        format!("{}/{}", self.0, self.1)
    }

    /// True when `v` is this rational: `v * d` lies within rounding noise of
    /// the integer `n`, which no other fraction with this denominator does.
    pub fn matches(self, v: f64) -> bool {
        (v * self.1 as f64 - self.0 as f64).abs() < 1e-6
    }
}

pub fn ratio_mean(values: &[Ratio]) -> Ratio {
    values
        .iter()
        .fold(Ratio(0, 1), |acc, v| acc.add(*v))
        .div_int(values.len() as i64)
}
