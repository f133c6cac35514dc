//! Scenario files and their rasterization into a [`SemanticGrid`].
//!
//! Coordinates are `(col, row)` with the origin at the lower-left corner of
//! the map. Cell `(c, r)` covers `[c·res, (c+1)·res] × [r·res, (r+1)·res]`
//! meters and its center sits at `((c+0.5)·res, (r+0.5)·res)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionParams;
use crate::planner::PlannerParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Grid cell address, serialized as `[col, row]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Cell { col, row }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([col, row]: [usize; 2]) -> Self {
        Cell { col, row }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.col, c.row]
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Footprint {
    /// Closed axis-aligned rectangle `[x0, y0, x1, y1]` in meters.
    RectM([f64; 4]),
    Cells(Vec<Cell>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObstacle", into = "RawObstacle")]
pub struct ObstacleSpec {
    pub id: String,
    pub family: String,
    pub base_gain: f64,
    pub footprint: Footprint,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    id: String,
    family: String,
    #[serde(default = "default_base_gain")]
    base_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rect_m: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cells: Option<Vec<Cell>>,
}

fn default_base_gain() -> f64 {
    1.0
}

impl TryFrom<RawObstacle> for ObstacleSpec {
    type Error = String;

    fn try_from(raw: RawObstacle) -> Result<Self, String> {
        let footprint = match (raw.rect_m, raw.cells) {
            (Some(r), None) => Footprint::RectM(r),
            (None, Some(c)) => Footprint::Cells(c),
            (Some(_), Some(_)) => {
                return Err(format!(
                    "obstacle `{}` declares both `rect_m` and `cells`",
                    raw.id
                ))
            }
            (None, None) => {
                return Err(format!(
                    "obstacle `{}` needs a `rect_m` or `cells` footprint",
                    raw.id
                ))
            }
        };
        Ok(ObstacleSpec {
            id: raw.id,
            family: raw.family,
            base_gain: raw.base_gain,
            footprint,
        })
    }
}

impl From<ObstacleSpec> for RawObstacle {
    fn from(o: ObstacleSpec) -> Self {
        let (rect_m, cells) = match o.footprint {
            Footprint::RectM(r) => (Some(r), None),
            Footprint::Cells(c) => (None, Some(c)),
        };
        RawObstacle {
            id: o.id,
            family: o.family,
            base_gain: o.base_gain,
            rect_m,
            cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub resolution_m: f64,
    pub width_cells: usize,
    pub height_cells: usize,
    pub start_cell: Cell,
    pub goal_cell: Cell,
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(rename = "planner", default)]
    pub planner_params: PlannerParams<f64>,
    #[serde(rename = "fusion", default)]
    pub fusion_params: FusionParams<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.resolution_m.is_finite() && self.resolution_m > 0.0) {
            return Err(ScenarioError::invalid(
                "resolution_m",
                format!("must be a positive number, got {}", self.resolution_m),
            ));
        }
        if self.width_cells < 2 {
            return Err(ScenarioError::invalid("width_cells", "must be at least 2"));
        }
        if self.height_cells < 2 {
            return Err(ScenarioError::invalid("height_cells", "must be at least 2"));
        }
        for (field, cell) in [("start_cell", self.start_cell), ("goal_cell", self.goal_cell)] {
            if !self.contains(cell) {
                return Err(ScenarioError::invalid(
                    field,
                    format!(
                        "{cell} lies outside the {}x{} grid",
                        self.width_cells, self.height_cells
                    ),
                ));
            }
        }
        let mut seen = HashSet::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            if !seen.insert(o.id.as_str()) {
                return Err(ScenarioError::invalid(
                    format!("obstacles[{i}].id"),
                    format!("duplicate obstacle id `{}`", o.id),
                ));
            }
            if !(o.base_gain.is_finite() && o.base_gain >= 0.0) {
                return Err(ScenarioError::invalid(
                    format!("obstacles[{i}].base_gain"),
                    format!("obstacle `{}` base gain must be >= 0, got {}", o.id, o.base_gain),
                ));
            }
            match &o.footprint {
                Footprint::RectM(r) => {
                    if r.iter().any(|v| !v.is_finite()) || r[0] > r[2] || r[1] > r[3] {
                        return Err(ScenarioError::invalid(
                            format!("obstacles[{i}].rect_m"),
                            format!("obstacle `{}` rectangle {:?} is not [x0, y0, x1, y1] with x0 <= x1, y0 <= y1", o.id, r),
                        ));
                    }
                }
                Footprint::Cells(cells) => {
                    if let Some(c) = cells.iter().find(|c| !self.contains(**c)) {
                        return Err(ScenarioError::invalid(
                            format!("obstacles[{i}].cells"),
                            format!("obstacle `{}` cell {c} is out of bounds", o.id),
                        ));
                    }
                }
            }
            if self.footprint_cells(&o.footprint).is_empty() {
                return Err(ScenarioError::invalid(
                    format!("obstacles[{i}]"),
                    format!("obstacle `{}` footprint covers no grid cell", o.id),
                ));
            }
        }
        self.planner_params
            .validate()
            .map_err(|(field, msg)| ScenarioError::invalid(format!("planner.{field}"), msg))?;
        self.fusion_params
            .validate()
            .map_err(|(field, msg)| ScenarioError::invalid(format!("fusion.{field}"), msg))?;
        Ok(())
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col < self.width_cells && cell.row < self.height_cells
    }

    /// Cells covered by a footprint: cell lists verbatim, rectangles by
    /// closed cell-center containment in row-major order.
    pub fn footprint_cells(&self, footprint: &Footprint) -> Vec<Cell> {
        match footprint {
            Footprint::Cells(cells) => cells.clone(),
            Footprint::RectM([x0, y0, x1, y1]) => {
                let res = self.resolution_m;
                let mut out = Vec::new();
                for row in 0..self.height_cells {
                    let cy = (row as f64 + 0.5) * res;
                    if cy < *y0 || cy > *y1 {
                        continue;
                    }
                    for col in 0..self.width_cells {
                        let cx = (col as f64 + 0.5) * res;
                        if cx >= *x0 && cx <= *x1 {
                            out.push(Cell::new(col, row));
                        }
                    }
                }
                out
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses and validates scenario markup.
pub fn load_scenario(source_text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario =
        serde_json::from_str(source_text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridObstacle {
    pub id: String,
    pub family: String,
    pub base_gain: f64,
    pub cells: Vec<Cell>,
}

/// Rasterized occupancy grid; occupied cells carry the owning obstacle index.
///
/// Storage is row-major with row 0 at the bottom of the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGrid {
    pub width: usize,
    pub height: usize,
    pub resolution_m: f64,
    pub cell_owner: Vec<Option<usize>>,
    pub obstacles: Vec<GridObstacle>,
}

impl SemanticGrid {
    /// Obstacle-free grid.
    pub fn empty(width: usize, height: usize, resolution_m: f64) -> Self {
        SemanticGrid {
            width,
            height,
            resolution_m,
            cell_owner: vec![None; width * height],
            obstacles: Vec::new(),
        }
    }

    /// Appends an obstacle; it takes ownership of any cells it overlaps.
    pub fn add_obstacle(&mut self, obstacle: GridObstacle) {
        let idx = self.obstacles.len();
        for c in &obstacle.cells {
            let i = self.index(*c);
            self.cell_owner[i] = Some(idx);
        }
        self.obstacles.push(obstacle);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    #[inline]
    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    #[inline]
    pub fn owner(&self, cell: Cell) -> Option<usize> {
        self.cell_owner[self.index(cell)]
    }

    #[inline]
    pub fn is_free(&self, cell: Cell) -> bool {
        self.owner(cell).is_none()
    }

    pub fn occupied_count(&self) -> usize {
        self.cell_owner.iter().filter(|o| o.is_some()).count()
    }

    pub fn obstacle_index(&self, id: &str) -> Option<usize> {
        self.obstacles.iter().position(|o| o.id == id)
    }

    /// Canonical serialization used for determinism checks.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("grid serializes")
    }
}

/// Rasterizes a scenario. Later-declared obstacles win overlapping cells.
pub fn rasterize(scenario: &Scenario) -> Result<SemanticGrid, ScenarioError> {
    let mut grid = SemanticGrid::empty(
        scenario.width_cells,
        scenario.height_cells,
        scenario.resolution_m,
    );
    for (i, spec) in scenario.obstacles.iter().enumerate() {
        let cells = scenario.footprint_cells(&spec.footprint);
        if cells.is_empty() {
            return Err(ScenarioError::invalid(
                format!("obstacles[{i}]"),
                format!("obstacle `{}` footprint covers no grid cell", spec.id),
            ));
        }
        if let Some(c) = cells.iter().find(|c| !scenario.contains(**c)) {
            return Err(ScenarioError::invalid(
                format!("obstacles[{i}].cells"),
                format!("obstacle `{}` cell {c} is out of bounds", spec.id),
            ));
        }
        grid.add_obstacle(GridObstacle {
            id: spec.id.clone(),
            family: spec.family.clone(),
            base_gain: spec.base_gain,
            cells,
        });
    }
    Ok(grid)
}
