//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::PathBuf;

use rand::Rng;
use semcost::distance_field::{obstacle_edfs, ScalarField};
use semcost::scenario::GridObstacle;
use semcost::{Cell, PotentialStack, SemanticGrid};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Distance to the nearest cell of `cells` by exhaustive comparison.
pub fn brute_edf(width: usize, height: usize, cells: &[Cell]) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; width * height];
    for r in 0..height {
        for c in 0..width {
            for o in cells {
                let dx = c as f64 - o.col as f64;
                let dy = r as f64 - o.row as f64;
                let d = (dx * dx + dy * dy).sqrt();
                if d < out[r * width + c] {
                    out[r * width + c] = d;
                }
            }
        }
    }
    out
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Plain uniform-cost search over 8-connected free cells with edge cost
/// `step + gamma * field(arrival)`; diagonals need both side cells free.
/// Returns the optimal cost to every cell.
pub fn uniform_cost(grid: &SemanticGrid, field: &[f64], gamma: f64, start: Cell) -> Vec<f64> {
    uniform_cost_tree(grid, field, gamma, start).0
}

/// Optimal path to `goal` from the uniform-cost tree, start first.
pub fn oracle_path(grid: &SemanticGrid, field: &[f64], gamma: f64, start: Cell, goal: Cell) -> Option<(f64, Vec<Cell>)> {
    let (dist, parent) = uniform_cost_tree(grid, field, gamma, start);
    let t = goal.row * grid.width + goal.col;
    if dist[t].is_infinite() {
        return None;
    }
    let mut path = vec![t];
    while let Some(p) = parent[*path.last().unwrap()] {
        path.push(p);
    }
    path.reverse();
    Some((dist[t], path.into_iter().map(|i| Cell::new(i % grid.width, i / grid.width)).collect()))
}

/// Numbers of straight and diagonal moves along `path`.
pub fn step_counts(path: &[Cell]) -> (usize, usize) {
    path.windows(2).fold((0, 0), |(s, d), w| {
        if w[0].col != w[1].col && w[0].row != w[1].row {
            (s, d + 1)
        } else {
            (s + 1, d)
        }
    })
}

fn uniform_cost_tree(grid: &SemanticGrid, field: &[f64], gamma: f64, start: Cell) -> (Vec<f64>, Vec<Option<usize>>) {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let free = |c: i64, r: i64| c >= 0 && r >= 0 && c < w && r < h && grid.cell_owner[(r * w + c) as usize].is_none();
    let mut dist = vec![f64::INFINITY; grid.width * grid.height];
    let mut parent = vec![None; grid.width * grid.height];
    let s = start.row * grid.width + start.col;
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, s));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        let (uc, ur) = ((u % grid.width) as i64, (u / grid.width) as i64);
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (vc, vr) = (uc + dc, ur + dr);
                if !free(vc, vr) {
                    continue;
                }
                let diagonal = dr != 0 && dc != 0;
                if diagonal && !(free(uc + dc, ur) && free(uc, ur + dr)) {
                    continue;
                }
                let v = (vr * w + vc) as usize;
                let step = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
                let nd = d + step + gamma * field[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = Some(u);
                    heap.push(Item(nd, v));
                }
            }
        }
    }
    (dist, parent)
}

pub struct RandomInstance {
    pub grid: SemanticGrid,
    pub field: ScalarField<f64>,
    pub start: Cell,
    pub goal: Cell,
}

/// Random rectangles with random gains on a `size`×`size` grid, random free
/// start and goal. The field is the summed repulsive potential.
pub fn random_instance<R: Rng>(rng: &mut R, size: usize) -> RandomInstance {
    loop {
        let mut grid = SemanticGrid::empty(size, size, 0.1);
        let n_rects = rng.gen_range(1..=7);
        for k in 0..n_rects {
            let w = rng.gen_range(1..=size / 3);
            let h = rng.gen_range(1..=size / 3);
            let c0 = rng.gen_range(0..size - w);
            let r0 = rng.gen_range(0..size - h);
            let cells = (r0..r0 + h)
                .flat_map(|r| (c0..c0 + w).map(move |c| Cell::new(c, r)))
                .collect();
            grid.add_obstacle(GridObstacle {
                id: format!("o{k}"),
                family: "Block".into(),
                base_gain: rng.gen_range(0.0..20.0),
                cells,
            });
        }
        let free: Vec<usize> = (0..grid.len()).filter(|&i| grid.cell_owner[i].is_none()).collect();
        if free.len() < 2 {
            continue;
        }
        let start = grid.cell_at(free[rng.gen_range(0..free.len())]);
        let goal = grid.cell_at(free[rng.gen_range(0..free.len())]);
        let distances = obstacle_edfs::<f64>(&grid).expect("non-empty obstacles");
        let gains = grid.obstacles.iter().map(|o| o.base_gain).collect();
        let field = PotentialStack::new(size, size, distances, gains).unwrap().total().clone();
        return RandomInstance { grid, field, start, goal };
    }
}
