//! Path quality metrics: length and clearance to the nearest obstacle.

use serde::{Deserialize, Serialize};

use crate::distance_field::ScalarField;
use crate::num::Scalar;
use crate::scenario::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLength {
    pub cells: f64,
    pub meters: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleDistances {
    pub min_m: f64,
    pub avg_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub length_cells: f64,
    pub length_m: f64,
    /// Absent when the map has no obstacles.
    pub min_obstacle_dist_m: Option<f64>,
    pub avg_obstacle_dist_m: Option<f64>,
}

/// Sum of Euclidean distances between consecutive cell centers.
pub fn path_length(path: &[Cell], resolution_m: f64) -> PathLength {
    let cells: f64 = path
        .windows(2)
        .map(|w| {
            let dx = w[0].col.abs_diff(w[1].col) as f64;
            let dy = w[0].row.abs_diff(w[1].row) as f64;
            dx.hypot(dy)
        })
        .sum();
    PathLength {
        cells,
        meters: cells * resolution_m,
    }
}

/// Minimum and mean of the global distance field over every path cell
/// (start and goal included), in meters. `None` for an empty path or an
/// unbounded field.
pub fn obstacle_distances<T: Scalar>(
    path: &[Cell],
    global_edf: &ScalarField<T>,
    resolution_m: f64,
) -> Option<ObstacleDistances> {
    if path.is_empty() {
        return None;
    }
    let samples: Vec<f64> = path
        .iter()
        .map(|c| global_edf.at(*c).to_f64().unwrap_or(f64::INFINITY))
        .collect();
    if samples.iter().any(|d| !d.is_finite()) {
        return None;
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = samples.iter().sum::<f64>() / samples.len() as f64;
    Some(ObstacleDistances {
        min_m: min * resolution_m,
        avg_m: avg * resolution_m,
    })
}

pub fn compute<T: Scalar>(path: &[Cell], global_edf: &ScalarField<T>, resolution_m: f64) -> PathMetrics {
    let len = path_length(path, resolution_m);
    let dist = obstacle_distances(path, global_edf, resolution_m);
    PathMetrics {
        length_cells: len.cells,
        length_m: len.meters,
        min_obstacle_dist_m: dist.map(|d| d.min_m),
        avg_obstacle_dist_m: dist.map(|d| d.avg_m),
    }
}
