//! Offline rule-table sensor.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackendKind, SensorBackend, SensorError, SensorRequest};

/// Scores for prompts containing any of `keywords` (case-insensitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub keywords: Vec<String>,
    /// Family (or id) substring, lower case, mapped to a score. First match wins.
    pub scores: Vec<(String, f64)>,
    pub default: f64,
}

impl Rule {
    fn matches(&self, prompt_lower: &str) -> bool {
        self.keywords.iter().any(|k| prompt_lower.contains(&k.to_lowercase()))
    }

    fn score_for(&self, id: &str, family: &str) -> f64 {
        let (id, family) = (id.to_lowercase(), family.to_lowercase());
        self.scores
            .iter()
            .find(|(pat, _)| family.contains(pat.as_str()) || id.contains(pat.as_str()))
            .map(|(_, s)| *s)
            .unwrap_or(self.default)
    }
}

/// Ordered rules; the first rule whose keyword appears in the prompt applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTable {
    pub rules: Vec<Rule>,
    /// Score for every obstacle when no rule matches.
    pub fallback: f64,
}

fn rule(name: &str, keywords: &[&str], scores: &[(&str, f64)], default: f64) -> Rule {
    Rule {
        name: name.to_string(),
        keywords: keywords.iter().map(|s| s.to_string()).collect(),
        scores: scores.iter().map(|(p, s)| (p.to_string(), *s)).collect(),
        default,
    }
}

impl RuleTable {
    /// Construction-site vocabulary. Fused with a uniform prior at `N = 5`
    /// the scores give posterior means 0.86 (p̂ = 1.0), 0.71 (0.8),
    /// 0.57 (0.6), 0.36 (0.3), 0.29 (0.2) and 0.21 (0.1).
    pub fn construction_vocabulary() -> Self {
        RuleTable {
            rules: vec![
                rule(
                    "wet-cement",
                    &["poured cement", "wet cement", "fresh cement", "freshly poured"],
                    &[("cement", 0.8), ("weld", 0.2), ("storage", 0.1)],
                    0.1,
                ),
                rule(
                    "mep-ongoing",
                    &["undergoing", "ongoing", "in progress"],
                    &[("workstation", 0.8), ("wall", 0.6)],
                    0.6,
                ),
                rule(
                    "mep-completed",
                    &["completed electrical", "installation is complete", "installed"],
                    &[("workstation", 0.3), ("wall", 0.1)],
                    0.1,
                ),
                rule(
                    "work-completed",
                    &["work is completed", "cement is dry", "dried"],
                    &[("cement", 0.1), ("weld", 0.8), ("storage", 0.1)],
                    0.1,
                ),
                rule(
                    "busy",
                    &["busy", "crowded"],
                    &[("workstation", 1.0), ("weld", 1.0), ("wall", 0.2), ("storage", 0.3), ("cement", 0.6)],
                    0.5,
                ),
                rule("empty", &["empty", "quiet", "idle"], &[], 0.1),
            ],
            fallback: 0.5,
        }
    }

    pub fn scores(&self, prompt: &str, obstacles: &[(String, String)]) -> BTreeMap<String, f64> {
        let lower = prompt.to_lowercase();
        let rule = self.rules.iter().find(|r| r.matches(&lower));
        obstacles
            .iter()
            .map(|(id, family)| {
                let s = rule.map_or(self.fallback, |r| r.score_for(id, family));
                (id.clone(), s)
            })
            .collect()
    }
}

/// Additive perturbation of mock scores, drawn independently per obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    /// One of the offsets, uniformly.
    Discrete(Vec<f64>),
    /// Continuous uniform on `[-w, w]`.
    Uniform(f64),
}

impl Noise {
    /// Parses `discrete:-0.1,0,0.1` or `uniform:0.05`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let (kind, args) = spec
            .split_once(':')
            .ok_or_else(|| format!("noise spec `{spec}` must look like kind:args"))?;
        let nums = |s: &str| -> Result<Vec<f64>, String> {
            s.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}")))
                .collect()
        };
        match kind {
            "discrete" => {
                let v = nums(args)?;
                if v.is_empty() {
                    return Err("discrete noise needs at least one offset".into());
                }
                Ok(Noise::Discrete(v))
            }
            "uniform" => match nums(args)?.as_slice() {
                [w] if *w >= 0.0 => Ok(Noise::Uniform(*w)),
                _ => Err("uniform noise takes one non-negative half-width".into()),
            },
            other => Err(format!("unknown noise kind `{other}`")),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Noise::Discrete(v) => v[rng.gen_range(0..v.len())],
            Noise::Uniform(w) if *w > 0.0 => rng.gen_range(-*w..=*w),
            Noise::Uniform(_) => 0.0,
        }
    }
}

/// Rule-table backend. Deterministic unless constructed with noise.
#[derive(Debug, Clone)]
pub struct MockBackend {
    table: RuleTable,
    noise: Option<(Noise, ChaCha8Rng)>,
}

impl MockBackend {
    pub fn new(table: RuleTable) -> Self {
        MockBackend { table, noise: None }
    }

    pub fn construction() -> Self {
        Self::new(RuleTable::construction_vocabulary())
    }

    pub fn with_noise(mut self, noise: Noise, seed: u64) -> Self {
        self.noise = Some((noise, ChaCha8Rng::seed_from_u64(seed)));
        self
    }

    pub fn table(&self) -> &RuleTable {
        &self.table
    }
}

impl SensorBackend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&mut self, request: &SensorRequest) -> Result<String, SensorError> {
        let roster: Vec<(String, String)> = request
            .query
            .obstacles
            .iter()
            .map(|o| (o.id.clone(), o.family.clone()))
            .collect();
        let mut scores = self.table.scores(&request.query.prompt, &roster);
        if let Some((noise, rng)) = self.noise.as_mut() {
            for s in scores.values_mut() {
                *s += noise.sample(rng);
            }
        }
        Ok(serde_json::json!({ "scores": scores }).to_string())
    }
}
