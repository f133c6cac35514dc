//! Two-queue Multi-Heuristic A* over the occupancy grid.
//!
//! Edge cost from `u` to neighbor `v` is the Euclidean step length plus
//! `γ·F(v)`, where `F` is the total repulsive potential. The anchor queue is
//! keyed by `g + w1·‖v − goal‖` (admissible), the informed queue by
//! `g + w1·F(v)`. Each iteration expands from the informed queue when its top
//! key is within `w2` of the anchor's top key, otherwise from the anchor.
//!
//! Closed-set discipline: a node expanded by the anchor is never expanded
//! again; a node expanded by the informed queue only re-enters the anchor
//! queue. Diagonal moves may not cut the corner of an occupied cell.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance_field::ScalarField;
use crate::metrics::PathMetrics;
use crate::num::{cmp_scalar, Scalar};
use crate::scenario::{Cell, SemanticGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PlannerParams<T> {
    /// Heuristic inflation.
    pub w1: T,
    /// Informed-vs-anchor factor.
    pub w2: T,
    /// Potential weight.
    pub gamma: T,
    pub connectivity: Connectivity,
}

impl<T: Scalar> Default for PlannerParams<T> {
    fn default() -> Self {
        PlannerParams {
            w1: T::one(),
            w2: T::lit(1.5),
            gamma: T::one(),
            connectivity: Connectivity::Eight,
        }
    }
}

impl<T: Scalar> PlannerParams<T> {
    pub fn new(w1: T, w2: T, gamma: T) -> Self {
        PlannerParams {
            w1,
            w2,
            gamma,
            connectivity: Connectivity::Eight,
        }
    }

    /// Multiplicative suboptimality bound `max(1, w1)·w2`.
    pub fn bound(&self) -> T {
        self.w1.max(T::one()) * self.w2
    }

    pub(crate) fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.w1.is_finite() && self.w1 > T::zero()) {
            return Err(("w1", format!("must be > 0, got {}", self.w1)));
        }
        if !(self.w2.is_finite() && self.w2 >= T::one()) {
            return Err(("w2", format!("must be >= 1, got {}", self.w2)));
        }
        if !(self.gamma.is_finite() && self.gamma >= T::zero()) {
            return Err(("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Queue {
    Anchor,
    Informed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchNode<T> {
    pub cell: Cell,
    pub g: T,
    pub parent: Option<Cell>,
    /// Euclidean distance to the goal in cell-lengths.
    pub h0: T,
    /// Potential at the cell as charged on arrival, `γ·F`. With `γ = 0`
    /// the informed queue orders by `g` alone and the search is plain A*.
    pub h1: T,
}

/// Priority of `node` in `queue`.
pub fn key<T: Scalar>(node: &SearchNode<T>, queue: Queue, params: &PlannerParams<T>) -> T {
    match queue {
        Queue::Anchor => node.g + params.w1 * node.h0,
        Queue::Informed => node.g + params.w1 * node.h1,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansions {
    pub anchor_count: usize,
    pub informed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult<T> {
    pub path: Vec<Cell>,
    /// `g(goal)`.
    pub total_cost: T,
    pub expansions: Expansions,
    #[serde(default)]
    pub metrics: Option<PathMetrics>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{which} cell {cell} is outside the grid")]
    OutOfBounds { which: &'static str, cell: Cell },
    #[error("{which} cell {cell} is occupied")]
    Occupied { which: &'static str, cell: Cell },
    #[error("potential field is {got:?} but grid is {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid planner parameter `{0}`: {1}")]
    InvalidParams(&'static str, String),
    #[error("goal unreachable after {} anchor and {} informed expansions", .0.anchor_count, .0.informed_count)]
    NoPath(Expansions),
    #[error("parent chain from {0} does not reach the start")]
    BrokenChain(Cell),
}

#[derive(Debug, Clone, Copy)]
struct Entry<T> {
    key: T,
    g: T,
    idx: usize,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // Max-heap order: smaller key first, then larger g, then lower row-major index.
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_scalar(other.key, self.key)
            .then_with(|| cmp_scalar(self.g, other.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

const ORTHOGONAL: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const DIAGONAL: [(i64, i64); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Free neighbors of `cell` with their step lengths. Diagonal steps require
/// both adjacent orthogonal cells to be free.
pub fn neighbors<T: Scalar>(
    grid: &SemanticGrid,
    cell: Cell,
    connectivity: Connectivity,
    out: &mut Vec<(Cell, T)>,
) {
    out.clear();
    let free = |dc: i64, dr: i64| -> Option<Cell> {
        let c = cell.col as i64 + dc;
        let r = cell.row as i64 + dr;
        if c < 0 || r < 0 || c >= grid.width as i64 || r >= grid.height as i64 {
            return None;
        }
        let n = Cell::new(c as usize, r as usize);
        grid.is_free(n).then_some(n)
    };
    for (dc, dr) in ORTHOGONAL {
        if let Some(n) = free(dc, dr) {
            out.push((n, T::one()));
        }
    }
    if connectivity == Connectivity::Eight {
        let diag = T::lit(std::f64::consts::SQRT_2);
        for (dc, dr) in DIAGONAL {
            if free(dc, 0).is_some() && free(0, dr).is_some() {
                if let Some(n) = free(dc, dr) {
                    out.push((n, diag));
                }
            }
        }
    }
}

fn euclid<T: Scalar>(a: Cell, b: Cell) -> T {
    let dx = T::from_usize_exact(a.col.abs_diff(b.col));
    let dy = T::from_usize_exact(a.row.abs_diff(b.row));
    (dx * dx + dy * dy).sqrt()
}

/// Walks parent links back from `goal`; returns the start-first path.
pub fn reconstruct_path(
    grid_width: usize,
    parents: &[Option<usize>],
    start: Cell,
    goal: Cell,
) -> Result<Vec<Cell>, PlanError> {
    let to_cell = |i: usize| Cell::new(i % grid_width, i / grid_width);
    let start_idx = start.row * grid_width + start.col;
    let mut idx = goal.row * grid_width + goal.col;
    let mut path = vec![goal];
    while idx != start_idx {
        match parents[idx] {
            Some(p) if path.len() <= parents.len() => {
                idx = p;
                path.push(to_cell(p));
            }
            _ => return Err(PlanError::BrokenChain(goal)),
        }
    }
    path.reverse();
    Ok(path)
}

/// Plans from `start` to `goal` over `field`.
///
/// The returned cost is at most `max(1, w1)·w2` times the optimal cost under
/// the same edge costs; with `γ = 0` and `w1 = 1` it is optimal.
pub fn plan<T: Scalar>(
    grid: &SemanticGrid,
    field: &ScalarField<T>,
    start: Cell,
    goal: Cell,
    params: &PlannerParams<T>,
) -> Result<PlanResult<T>, PlanError> {
    params
        .validate()
        .map_err(|(f, m)| PlanError::InvalidParams(f, m))?;
    if field.dims() != (grid.width, grid.height) {
        return Err(PlanError::DimensionMismatch {
            expected: (grid.width, grid.height),
            got: field.dims(),
        });
    }
    for (which, cell) in [("start", start), ("goal", goal)] {
        if !grid.in_bounds(cell) {
            return Err(PlanError::OutOfBounds { which, cell });
        }
        if !grid.is_free(cell) {
            return Err(PlanError::Occupied { which, cell });
        }
    }

    let n = grid.len();
    let mut g = vec![T::infinity(); n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut in_open = [vec![false; n], vec![false; n]];
    let mut closed_anchor = vec![false; n];
    let mut closed_informed = vec![false; n];
    let mut open: [BinaryHeap<Entry<T>>; 2] = [BinaryHeap::new(), BinaryHeap::new()];
    let mut expansions = Expansions::default();

    let node = |idx: usize, g: T| SearchNode {
        cell: grid.cell_at(idx),
        g,
        parent: None,
        h0: euclid(grid.cell_at(idx), goal),
        h1: params.gamma * field.values[idx],
    };
    let push = |open: &mut BinaryHeap<Entry<T>>, queue: Queue, idx: usize, gv: T| {
        open.push(Entry {
            key: key(&node(idx, gv), queue, params),
            g: gv,
            idx,
        });
    };

    let s = grid.index(start);
    let t = grid.index(goal);
    g[s] = T::zero();
    push(&mut open[0], Queue::Anchor, s, T::zero());
    push(&mut open[1], Queue::Informed, s, T::zero());
    in_open[0][s] = true;
    in_open[1][s] = true;

    let mut succ = Vec::with_capacity(8);
    loop {
        for q in 0..2 {
            while let Some(top) = open[q].peek() {
                if in_open[q][top.idx] && top.g == g[top.idx] {
                    break;
                }
                open[q].pop();
            }
        }
        let Some(&top0) = open[0].peek() else { break };
        let (q, top) = match open[1].peek() {
            Some(&top1) if top1.key <= params.w2 * top0.key => (1, top1),
            _ => (0, top0),
        };
        if g[t] <= top.key {
            break;
        }
        open[q].pop();
        let u = top.idx;
        in_open[0][u] = false;
        in_open[1][u] = false;
        if q == 1 {
            closed_informed[u] = true;
            expansions.informed_count += 1;
        } else {
            closed_anchor[u] = true;
            expansions.anchor_count += 1;
        }

        neighbors(grid, grid.cell_at(u), params.connectivity, &mut succ);
        for &(vc, step) in &succ {
            let v = grid.index(vc);
            let candidate = g[u] + step + params.gamma * field.values[v];
            if candidate < g[v] {
                g[v] = candidate;
                parent[v] = Some(u);
                if !closed_anchor[v] {
                    push(&mut open[0], Queue::Anchor, v, candidate);
                    in_open[0][v] = true;
                    if !closed_informed[v] {
                        push(&mut open[1], Queue::Informed, v, candidate);
                        in_open[1][v] = true;
                    }
                }
            }
        }
    }

    if g[t].is_infinite() {
        return Err(PlanError::NoPath(expansions));
    }
    let path = reconstruct_path(grid.width, &parent, start, goal)?;
    Ok(PlanResult {
        path,
        total_cost: g[t],
        expansions,
        metrics: None,
    })
}

/// Cost of `path` under the planner's edge costs (step length + `γ·F` of
/// every cell after the first).
pub fn path_cost<T: Scalar>(field: &ScalarField<T>, path: &[Cell], gamma: T) -> T {
    path.windows(2).fold(T::zero(), |acc, w| {
        acc + euclid(w[0], w[1]) + gamma * field.at(w[1])
    })
}
