//! Operator session: prompt → sensor → fusion → potential rebuild → plan.
//!
//! All mutations are all-or-nothing. A failed sensor call leaves the session
//! exactly as it was, so planning continues on the previous field (and on a
//! fresh session that is the plain geometric planner).

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance_field::{global_edf, obstacle_edfs, FieldDump, FieldError, ScalarField};
use crate::fusion::{self, BetaState, DangerReading, FusionError, PosteriorTrack};
use crate::metrics::{self, PathMetrics};
use crate::planner::{self, PlanError, PlanResult, PlannerParams};
use crate::potential_field::PotentialStack;
use crate::scenario::{load_scenario, rasterize, Cell, Scenario, ScenarioError, SemanticGrid};
use crate::sensor::{self, BackendKind, ObstacleRef, SensorBackend, SensorError, SensorQuery, SensorResponse};

/// Version written into saved session files.
pub const STATE_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("session file format version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("corrupt session file: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLogEntry {
    pub prompt_id: String,
    pub text: String,
    pub readings: Vec<DangerReading>,
    pub trust_n: f64,
    pub backend: BackendKind,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct UndoFrame {
    states: Vec<BetaState<f64>>,
    last_plan: Option<PlanResult<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Global Euclidean distance field.
    Edf,
    /// Total repulsive potential.
    Potential,
    /// Euclidean distance to goal plus `γ` times the potential.
    Combined,
}

impl std::str::FromStr for FieldKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "edf" => Ok(FieldKind::Edf),
            "potential" => Ok(FieldKind::Potential),
            "combined" => Ok(FieldKind::Combined),
            other => Err(format!("unknown field kind `{other}` (edf, potential, combined)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub id: String,
    pub family: String,
    pub alpha: f64,
    pub beta: f64,
    pub mean: f64,
    pub base_gain: f64,
    pub effective_gain: f64,
    pub history: Vec<fusion::HistoryEntry>,
}

/// Read-only view of a session for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub resolution_m: f64,
    pub start_cell: Cell,
    pub goal_cell: Cell,
    pub trust_n: f64,
    pub posteriors: Vec<PosteriorSnapshot>,
    pub prompt_log: Vec<PromptLogEntry>,
    pub last_plan: Option<PlanResult<f64>>,
    pub undo_depth: usize,
}

#[derive(Serialize, Deserialize)]
struct SavedSession {
    format_version: u64,
    scenario: Scenario,
    posteriors: Vec<PosteriorTrack>,
    prompt_log: Vec<PromptLogEntry>,
    last_plan: Option<PlanResult<f64>>,
    undo: Vec<UndoFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    scenario: Scenario,
    grid: SemanticGrid,
    global_edf: ScalarField<f64>,
    stack: PotentialStack<f64>,
    posteriors: Vec<PosteriorTrack>,
    prompt_log: Vec<PromptLogEntry>,
    last_plan: Option<PlanResult<f64>>,
    undo: Vec<UndoFrame>,
}

/// `prompt_id` for the `index`-th accepted prompt with `text`.
pub fn prompt_id(text: &str, index: usize) -> String {
    sensor::short_hash(format!("{index}\u{1f}{text}").as_bytes())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self, SessionError> {
        scenario.validate()?;
        let grid = rasterize(&scenario)?;
        let prior = fusion::reset(&scenario.fusion_params)?;
        let posteriors = vec![PosteriorTrack::new(prior); grid.obstacles.len()];
        Self::assemble(scenario, grid, posteriors, Vec::new(), None, Vec::new())
    }

    pub fn from_scenario_text(text: &str) -> Result<Self, SessionError> {
        Self::new(load_scenario(text)?)
    }

    fn assemble(
        scenario: Scenario,
        grid: SemanticGrid,
        posteriors: Vec<PosteriorTrack>,
        prompt_log: Vec<PromptLogEntry>,
        last_plan: Option<PlanResult<f64>>,
        undo: Vec<UndoFrame>,
    ) -> Result<Self, SessionError> {
        let distances = obstacle_edfs::<f64>(&grid)?;
        let gains = gains_for(&grid, &posteriors);
        let stack = PotentialStack::new(grid.width, grid.height, distances, gains)?;
        Ok(Session {
            global_edf: global_edf(&grid),
            scenario,
            grid,
            stack,
            posteriors,
            prompt_log,
            last_plan,
            undo,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn grid(&self) -> &SemanticGrid {
        &self.grid
    }

    pub fn posteriors(&self) -> &[PosteriorTrack] {
        &self.posteriors
    }

    pub fn prompt_log(&self) -> &[PromptLogEntry] {
        &self.prompt_log
    }

    pub fn last_plan(&self) -> Option<&PlanResult<f64>> {
        self.last_plan.as_ref()
    }

    pub fn potential(&self) -> &ScalarField<f64> {
        self.stack.total()
    }

    pub fn gains(&self) -> &[f64] {
        self.stack.gains()
    }

    pub fn global_edf(&self) -> &ScalarField<f64> {
        &self.global_edf
    }

    pub fn cached_distance_fields(&self) -> &[ScalarField<f64>] {
        self.stack.distances()
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    fn roster(&self) -> Vec<ObstacleRef> {
        self.grid
            .obstacles
            .iter()
            .map(|o| ObstacleRef {
                id: o.id.clone(),
                family: o.family.clone(),
            })
            .collect()
    }

    /// Sensor query for `text` as the next prompt of this session.
    pub fn query_for(&self, text: &str) -> SensorQuery {
        let mut q = SensorQuery::new(text, self.roster());
        q.prompt_id = prompt_id(text, self.prompt_log.len());
        q
    }

    /// Queries the sensor once and fuses every reading with the scenario's
    /// trust `N` (or `trust_n` when given). On any error nothing changes.
    pub fn apply_prompt<B: SensorBackend + ?Sized>(
        &mut self,
        text: &str,
        backend: &mut B,
        trust_n: Option<f64>,
    ) -> Result<SensorResponse, SessionError> {
        let trust = trust_n.unwrap_or(self.scenario.fusion_params.trust_n);
        if !(trust.is_finite() && trust >= 0.0) {
            return Err(FusionError::InvalidTrust(trust.to_string()).into());
        }
        let query = self.query_for(text);
        if self.grid.obstacles.is_empty() {
            return Err(SensorError::InvalidQuery("scenario has no obstacles to score".into()).into());
        }
        let response = sensor::score_obstacles(&query, backend)?;
        self.accept(
            PromptLogEntry {
                prompt_id: query.prompt_id,
                text: text.to_string(),
                readings: response.readings.clone(),
                trust_n: trust,
                backend: response.backend,
                timestamp_ms: now_ms(),
            },
        )?;
        Ok(response)
    }

    /// Fuses already obtained readings as the next prompt.
    fn accept(&mut self, entry: PromptLogEntry) -> Result<(), SessionError> {
        let mut posteriors = self.posteriors.clone();
        for reading in &entry.readings {
            let i = self.grid.obstacle_index(&reading.obstacle_id).ok_or_else(|| {
                SensorError::InvalidQuery(format!("reading for unknown obstacle `{}`", reading.obstacle_id))
            })?;
            posteriors[i].apply(&entry.prompt_id, reading.score, entry.trust_n)?;
        }
        let mut stack = self.stack.clone();
        stack.set_gains(gains_for(&self.grid, &posteriors))?;

        let frame = UndoFrame {
            states: self.posteriors.iter().map(|p| p.state).collect(),
            last_plan: self.last_plan.clone(),
        };
        self.undo.push(frame);
        self.posteriors = posteriors;
        self.stack = stack;
        self.prompt_log.push(entry);
        Ok(())
    }

    /// Restores the state before the most recent accepted prompt.
    pub fn undo(&mut self) -> Result<(), SessionError> {
        let frame = self.undo.pop().ok_or(SessionError::NothingToUndo)?;
        for (track, state) in self.posteriors.iter_mut().zip(frame.states) {
            track.state = state;
            track.history.pop();
        }
        self.prompt_log.pop();
        self.last_plan = frame.last_plan;
        self.stack.set_gains(gains_for(&self.grid, &self.posteriors))?;
        Ok(())
    }

    /// Plans on the current field with the scenario's planner parameters.
    pub fn replan(&mut self) -> Result<PlanResult<f64>, SessionError> {
        let params = self.scenario.planner_params;
        self.replan_with(&params)
    }

    pub fn replan_with(&mut self, params: &PlannerParams<f64>) -> Result<PlanResult<f64>, SessionError> {
        let result = self.plan_with(params)?;
        self.last_plan = Some(result.clone());
        Ok(result)
    }

    /// Plans without storing the result.
    pub fn plan_with(&self, params: &PlannerParams<f64>) -> Result<PlanResult<f64>, SessionError> {
        let mut result = planner::plan(
            &self.grid,
            self.stack.total(),
            self.scenario.start_cell,
            self.scenario.goal_cell,
            params,
        )?;
        result.metrics = Some(self.metrics_for(&result.path));
        Ok(result)
    }

    /// Plain A*: `γ = 0` on a zero field, so neither the edge costs nor the
    /// informed queue see the potential.
    pub fn plan_baseline(&self) -> Result<PlanResult<f64>, SessionError> {
        let params = PlannerParams {
            gamma: 0.0,
            ..self.scenario.planner_params
        };
        let zero = ScalarField::zeros(self.grid.width, self.grid.height);
        let mut result = planner::plan(&self.grid, &zero, self.scenario.start_cell, self.scenario.goal_cell, &params)?;
        result.metrics = Some(self.metrics_for(&result.path));
        Ok(result)
    }

    pub fn metrics_for(&self, path: &[Cell]) -> PathMetrics {
        metrics::compute(path, &self.global_edf, self.grid.resolution_m)
    }

    pub fn field(&self, kind: FieldKind) -> ScalarField<f64> {
        match kind {
            FieldKind::Edf => self.global_edf.clone(),
            FieldKind::Potential => self.stack.total().clone(),
            FieldKind::Combined => {
                let goal = self.scenario.goal_cell;
                let gamma = self.scenario.planner_params.gamma;
                let total = self.stack.total();
                let values = (0..self.grid.len())
                    .map(|i| {
                        let c = self.grid.cell_at(i);
                        let dx = c.col as f64 - goal.col as f64;
                        let dy = c.row as f64 - goal.row as f64;
                        dx.hypot(dy) + gamma * total.values[i]
                    })
                    .collect();
                ScalarField {
                    width: self.grid.width,
                    height: self.grid.height,
                    values,
                }
            }
        }
    }

    pub fn field_dump(&self, kind: FieldKind) -> FieldDump {
        self.field(kind).dump()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            name: self.scenario.name.clone(),
            width: self.grid.width,
            height: self.grid.height,
            resolution_m: self.grid.resolution_m,
            start_cell: self.scenario.start_cell,
            goal_cell: self.scenario.goal_cell,
            trust_n: self.scenario.fusion_params.trust_n,
            posteriors: self
                .grid
                .obstacles
                .iter()
                .zip(&self.posteriors)
                .zip(self.stack.gains())
                .map(|((o, p), &gain)| PosteriorSnapshot {
                    id: o.id.clone(),
                    family: o.family.clone(),
                    alpha: p.state.alpha,
                    beta: p.state.beta,
                    mean: p.state.mean(),
                    base_gain: o.base_gain,
                    effective_gain: gain,
                    history: p.history.clone(),
                })
                .collect(),
            prompt_log: self.prompt_log.clone(),
            last_plan: self.last_plan.clone(),
            undo_depth: self.undo.len(),
        }
    }

    /// Rebuilds a session by fusing the logged readings of `log` in order,
    /// without contacting any sensor.
    pub fn replay(scenario: Scenario, log: &[PromptLogEntry]) -> Result<Self, SessionError> {
        let mut s = Session::new(scenario)?;
        for entry in log {
            s.accept(entry.clone())?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let saved = SavedSession {
            format_version: STATE_FORMAT_VERSION,
            scenario: self.scenario.clone(),
            posteriors: self.posteriors.clone(),
            prompt_log: self.prompt_log.clone(),
            last_plan: self.last_plan.clone(),
            undo: self.undo.clone(),
        };
        serde_json::to_string_pretty(&saved).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| SessionError::Corrupt("missing format_version".into()))?;
        if found != STATE_FORMAT_VERSION {
            return Err(SessionError::Version {
                found,
                expected: STATE_FORMAT_VERSION,
            });
        }
        let saved: SavedSession =
            serde_json::from_value(value).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        saved.scenario.validate()?;
        let grid = rasterize(&saved.scenario)?;
        let n = grid.obstacles.len();
        if saved.posteriors.len() != n || saved.undo.iter().any(|f| f.states.len() != n) {
            return Err(SessionError::Corrupt(format!(
                "posterior count does not match the {n} obstacles of the scenario"
            )));
        }
        for p in &saved.posteriors {
            BetaState::new(p.state.alpha, p.state.beta)?;
        }
        Self::assemble(
            saved.scenario,
            grid,
            saved.posteriors,
            saved.prompt_log,
            saved.last_plan,
            saved.undo,
        )
    }

    pub fn save_state(&self, path: impl AsRef<Path>) -> Result<(), SessionError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load_state(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn gains_for(grid: &SemanticGrid, posteriors: &[PosteriorTrack]) -> Vec<f64> {
    grid.obstacles
        .iter()
        .zip(posteriors)
        .map(|(o, p)| fusion::effective_gain(&p.state, o.base_gain))
        .collect()
}

/// One prompt to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptVariant {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonColumn {
    pub label: String,
    pub prompt: Option<String>,
    pub metrics: Option<PathMetrics>,
    /// Posterior mean per obstacle; absent for the baseline column.
    pub posteriors: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenario: String,
    pub obstacles: Vec<ObstacleRef>,
    pub columns: Vec<ComparisonColumn>,
}

pub const BASELINE_LABEL: &str = "A* baseline (gamma=0)";

/// Runs each prompt in its own fresh session and tabulates path metrics and
/// posteriors, plus a `γ = 0` baseline column. A failing variant is reported
/// in its column and does not stop the others.
pub fn compare_runs<B: SensorBackend + ?Sized>(
    scenario: &Scenario,
    variants: &[PromptVariant],
    backend: &mut B,
) -> Result<ComparisonTable, SessionError> {
    let fresh = Session::new(scenario.clone())?;
    let mut columns = Vec::with_capacity(variants.len() + 1);
    for v in variants {
        let mut session = fresh.clone();
        let outcome = session
            .apply_prompt(&v.text, backend, None)
            .and_then(|_| session.replan());
        columns.push(match outcome {
            Ok(plan) => ComparisonColumn {
                label: v.label.clone(),
                prompt: Some(v.text.clone()),
                metrics: plan.metrics,
                posteriors: Some(session.posteriors.iter().map(|p| p.state.mean()).collect()),
                error: None,
            },
            Err(e) => ComparisonColumn {
                label: v.label.clone(),
                prompt: Some(v.text.clone()),
                metrics: None,
                posteriors: None,
                error: Some(e.to_string()),
            },
        });
    }
    columns.push(match fresh.plan_baseline() {
        Ok(plan) => ComparisonColumn {
            label: BASELINE_LABEL.to_string(),
            prompt: None,
            metrics: plan.metrics,
            posteriors: None,
            error: None,
        },
        Err(e) => ComparisonColumn {
            label: BASELINE_LABEL.to_string(),
            prompt: None,
            metrics: None,
            posteriors: None,
            error: Some(e.to_string()),
        },
    });
    Ok(ComparisonTable {
        scenario: scenario.name.clone(),
        obstacles: fresh.roster(),
        columns,
    })
}

impl ComparisonTable {
    /// Plain-text table: path metrics on top, posterior means below.
    pub fn render(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["".to_string()];
        header.extend(self.columns.iter().map(|c| c.label.clone()));
        rows.push(header);
        let metric = |f: &dyn Fn(&PathMetrics) -> Option<f64>, digits: usize| -> Vec<String> {
            self.columns
                .iter()
                .map(|c| match (&c.error, c.metrics.as_ref().and_then(f)) {
                    (Some(_), _) => "error".to_string(),
                    (None, Some(v)) => format!("{v:.digits$}"),
                    (None, None) => "-".to_string(),
                })
                .collect()
        };
        let mut push = |name: &str, vals: Vec<String>| {
            let mut r = vec![name.to_string()];
            r.extend(vals);
            rows.push(r);
        };
        push("Length (cells)", metric(&|m| Some(m.length_cells), 3));
        push("Length (m)", metric(&|m| Some(m.length_m), 3));
        push("Min. obstacle dist. (m)", metric(&|m| m.min_obstacle_dist_m, 3));
        push("Avg. obstacle dist. (m)", metric(&|m| m.avg_obstacle_dist_m, 3));
        for (i, o) in self.obstacles.iter().enumerate() {
            let vals = self
                .columns
                .iter()
                .map(|c| match &c.posteriors {
                    Some(p) => format!("{:.2}", p[i]),
                    None => "-".to_string(),
                })
                .collect();
            push(&format!("{} (post.)", o.family), vals);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (k, r) in rows.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (cell, w))| {
                    let pad = w - cell.chars().count();
                    if j == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if k == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-|-"));
                out.push('\n');
            }
        }
        out
    }
}
