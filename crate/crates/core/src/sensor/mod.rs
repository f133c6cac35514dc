//! Language model used as a danger sensor.
//!
//! A [`SensorQuery`] (operator prompt plus obstacle roster) is rendered into a
//! deterministic chat request, sent to a [`SensorBackend`], and the reply is
//! parsed into one [`DangerReading`] per obstacle. Out-of-range scores are
//! clamped into `[0, 1]` and recorded in the response's audit trail.

mod fixture;
mod http;
mod mock;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fusion::{self, BetaState, DangerReading, FusionParams};

pub use fixture::{FixtureBackend, FixtureRecord};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{MockBackend, Noise, Rule, RuleTable};

/// Version tag of the system instructions below. Fixture hashes depend on it.
pub const INSTRUCTIONS_VERSION: &str = "danger-v1";

const SYSTEM_INSTRUCTIONS: &str = "You are a danger assessor for a mobile ground robot navigating a \
construction site. You receive an operator message and a roster of map elements taken from the \
building information model, each with an identifier and a family name. For every element, estimate \
the probability in [0, 1] that driving close to it is dangerous given the operator message. \
Reply with a single JSON object of the form {\"scores\": {\"<identifier>\": <number>}} covering \
every identifier exactly once. Do not add any prose.";

/// Retries after the first attempt on transport or parse failures.
pub const DEFAULT_RETRIES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid sensor query: {0}")]
    InvalidQuery(String),
    #[error("sensor backend configuration: {0}")]
    Config(String),
    #[error("sensor transport failure: {0}")]
    Transport(String),
    #[error("sensor call timed out")]
    Timeout,
    #[error("malformed sensor output ({message}): {raw:?}")]
    Malformed { message: String, raw: String },
    #[error("sensor output is missing scores for {missing:?}: {raw:?}")]
    Incomplete { missing: Vec<String>, raw: String },
    #[error("sensor score for `{id}` is not a number: {raw:?}")]
    NonNumeric { id: String, raw: String },
    #[error("no fixture recorded for request {0}")]
    FixtureMiss(String),
}

impl SensorError {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            SensorError::Transport(_)
                | SensorError::Timeout
                | SensorError::Malformed { .. }
                | SensorError::Incomplete { .. }
                | SensorError::NonNumeric { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObstacleRef {
    pub id: String,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorQuery {
    pub prompt: String,
    pub obstacles: Vec<ObstacleRef>,
    pub instructions_version: String,
    /// Stamped onto every reading.
    #[serde(default)]
    pub prompt_id: String,
}

impl SensorQuery {
    pub fn new(prompt: impl Into<String>, obstacles: Vec<ObstacleRef>) -> Self {
        let prompt = prompt.into();
        SensorQuery {
            prompt_id: short_hash(prompt.as_bytes()),
            prompt,
            obstacles,
            instructions_version: INSTRUCTIONS_VERSION.to_string(),
        }
    }

    fn validate(&self) -> Result<(), SensorError> {
        if self.prompt.trim().is_empty() {
            return Err(SensorError::InvalidQuery("prompt is empty".into()));
        }
        if self.obstacles.is_empty() {
            return Err(SensorError::InvalidQuery("obstacle roster is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Fixture,
    Http,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Mock => "mock",
            BackendKind::Fixture => "fixture",
            BackendKind::Http => "http",
        })
    }
}

/// Rendered chat request. The roster is sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorRequest {
    pub instructions_version: String,
    pub system: String,
    pub user: String,
    #[serde(skip)]
    pub query: SensorQuery,
}

impl SensorRequest {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    /// SHA-256 of [`Self::to_text`], hex encoded; the fixture lookup key.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Something that turns a rendered request into raw model output.
pub trait SensorBackend {
    fn kind(&self) -> BackendKind;
    fn complete(&mut self, request: &SensorRequest) -> Result<String, SensorError>;
}

impl<B: SensorBackend + ?Sized> SensorBackend for Box<B> {
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }

    fn complete(&mut self, request: &SensorRequest) -> Result<String, SensorError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampAudit {
    pub obstacle_id: String,
    pub reported: f64,
    pub clamped_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorResponse {
    /// In query roster order.
    pub readings: Vec<DangerReading>,
    /// Verbatim output of the successful attempt.
    pub raw: String,
    pub backend: BackendKind,
    pub clamped: Vec<ClampAudit>,
    pub attempts: usize,
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub fn render_request(query: &SensorQuery) -> SensorRequest {
    let mut roster = query.obstacles.clone();
    roster.sort();
    let mut user = String::new();
    user.push_str("Operator message:\n");
    user.push_str(query.prompt.trim());
    user.push_str("\n\nMap elements:\n");
    for o in &roster {
        user.push_str(&format!("- id: {} | family: {}\n", o.id, o.family));
    }
    let mut sorted_query = query.clone();
    sorted_query.obstacles = roster;
    SensorRequest {
        instructions_version: query.instructions_version.clone(),
        system: SYSTEM_INSTRUCTIONS.to_string(),
        user,
        query: sorted_query,
    }
}

/// Deterministic text of the request sent for `query`.
pub fn build_request(query: &SensorQuery) -> String {
    render_request(query).to_text()
}

/// Extracts `{"scores": {id: number}}` (or a bare `{id: number}` object) from
/// the outermost braces of `raw` and checks it covers `expected_ids`.
pub fn parse_scores(raw: &str, expected_ids: &[String]) -> Result<BTreeMap<String, f64>, SensorError> {
    let malformed = |message: &str| SensorError::Malformed {
        message: message.to_string(),
        raw: raw.to_string(),
    };
    let (Some(open), Some(close)) = (raw.find('{'), raw.rfind('}')) else {
        return Err(malformed("no JSON object found"));
    };
    if close < open {
        return Err(malformed("no JSON object found"));
    }
    let value: serde_json::Value =
        serde_json::from_str(&raw[open..=close]).map_err(|e| malformed(&e.to_string()))?;
    let obj = match value.get("scores") {
        Some(serde_json::Value::Object(m)) => m,
        Some(_) => return Err(malformed("`scores` is not an object")),
        None => value.as_object().ok_or_else(|| malformed("not an object"))?,
    };
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for id in expected_ids {
        match obj.get(id) {
            None => missing.push(id.clone()),
            Some(v) => {
                let score = v.as_f64().ok_or_else(|| SensorError::NonNumeric {
                    id: id.clone(),
                    raw: raw.to_string(),
                })?;
                out.insert(id.clone(), score);
            }
        }
    }
    if !missing.is_empty() {
        return Err(SensorError::Incomplete {
            missing,
            raw: raw.to_string(),
        });
    }
    Ok(out)
}

/// Queries `backend` once (plus up to `retries` retries) and returns one
/// clamped reading per obstacle.
pub fn score_obstacles_with_retries<B: SensorBackend + ?Sized>(
    query: &SensorQuery,
    backend: &mut B,
    retries: usize,
) -> Result<SensorResponse, SensorError> {
    query.validate()?;
    let request = render_request(query);
    let ids: Vec<String> = query.obstacles.iter().map(|o| o.id.clone()).collect();
    let mut attempt = 0;
    loop {
        attempt += 1;
        let outcome = backend
            .complete(&request)
            .and_then(|raw| parse_scores(&raw, &ids).map(|scores| (raw, scores)));
        match outcome {
            Ok((raw, scores)) => {
                let mut clamped = Vec::new();
                let readings = ids
                    .iter()
                    .map(|id| {
                        let reported = scores[id];
                        let score = reported.clamp(0.0, 1.0);
                        if score != reported {
                            clamped.push(ClampAudit {
                                obstacle_id: id.clone(),
                                reported,
                                clamped_to: score,
                            });
                        }
                        DangerReading {
                            obstacle_id: id.clone(),
                            score,
                            prompt_id: query.prompt_id.clone(),
                        }
                    })
                    .collect();
                return Ok(SensorResponse {
                    readings,
                    raw,
                    backend: backend.kind(),
                    clamped,
                    attempts: attempt,
                });
            }
            Err(e) if e.is_retryable() && attempt <= retries => continue,
            Err(e) => return Err(e),
        }
    }
}

pub fn score_obstacles<B: SensorBackend + ?Sized>(
    query: &SensorQuery,
    backend: &mut B,
) -> Result<SensorResponse, SensorError> {
    score_obstacles_with_retries(query, backend, DEFAULT_RETRIES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleStats {
    pub obstacle_id: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Repeats the query `runs` times, fusing each reply into a fresh prior, and
/// reports the sample mean and sample standard deviation of the posterior
/// means per obstacle. Any failed run aborts the whole ablation.
pub fn ablation_run<B: SensorBackend + ?Sized>(
    query: &SensorQuery,
    backend: &mut B,
    runs: usize,
    fusion: &FusionParams<f64>,
) -> Result<Vec<ObstacleStats>, SensorError> {
    if runs < 2 {
        return Err(SensorError::InvalidQuery(format!("ablation needs at least 2 runs, got {runs}")));
    }
    let prior = fusion::reset(fusion).map_err(|e| SensorError::InvalidQuery(e.to_string()))?;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(runs); query.obstacles.len()];
    for _ in 0..runs {
        let response = score_obstacles(query, backend)?;
        for (slot, r) in samples.iter_mut().zip(&response.readings) {
            let post = fusion::update(&prior, r.score, fusion.trust_n)
                .map_err(|e| SensorError::InvalidQuery(e.to_string()))?;
            slot.push(post.mean());
        }
    }
    Ok(query
        .obstacles
        .iter()
        .zip(samples)
        .map(|(o, xs)| {
            let n = xs.len() as f64;
            let (mut mean, mut m2) = (0.0, 0.0);
            for (k, x) in xs.iter().enumerate() {
                let d = x - mean;
                mean += d / (k + 1) as f64;
                m2 += d * (x - mean);
            }
            let var = m2 / (n - 1.0);
            ObstacleStats {
                obstacle_id: o.id.clone(),
                mean,
                std: var.sqrt(),
                runs,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub trust_n: f64,
    pub score: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub obstacle_id: String,
    pub points: Vec<SweepPoint>,
}

/// Posterior mean after one prompt as a function of the trust knob. Each
/// value of `N` gets its own sensor call and a fresh prior.
pub fn trust_sweep<B: SensorBackend + ?Sized>(
    query: &SensorQuery,
    backend: &mut B,
    n_values: &[f64],
    fusion: &FusionParams<f64>,
) -> Result<Vec<SweepCurve>, SensorError> {
    if n_values.is_empty() {
        return Err(SensorError::InvalidQuery("no trust values given".into()));
    }
    if let Some(bad) = n_values.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
        return Err(SensorError::InvalidQuery(format!("trust value {bad} must be >= 0")));
    }
    let prior: BetaState<f64> = fusion::reset(fusion).map_err(|e| SensorError::InvalidQuery(e.to_string()))?;
    let mut curves: Vec<SweepCurve> = query
        .obstacles
        .iter()
        .map(|o| SweepCurve {
            obstacle_id: o.id.clone(),
            points: Vec::with_capacity(n_values.len()),
        })
        .collect();
    for &n in n_values {
        let response = score_obstacles(query, backend)?;
        for (curve, r) in curves.iter_mut().zip(&response.readings) {
            let post = fusion::update(&prior, r.score, n).map_err(|e| SensorError::InvalidQuery(e.to_string()))?;
            curve.points.push(SweepPoint {
                trust_n: n,
                score: r.score,
                mean: post.mean(),
            });
        }
    }
    Ok(curves)
}
