//! Exact Euclidean distance fields over a [`SemanticGrid`].
//!
//! Distances are measured between cell centers in cell-lengths. The transform
//! is the separable lower-envelope-of-parabolas algorithm on squared
//! distances, which is exact: every squared distance is an integer and the
//! only rounding happens in the final square root.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::scenario::{Cell, SemanticGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("obstacle index {0} is out of range")]
    NoSuchObstacle(usize),
    #[error("obstacle `{0}` has no cells")]
    EmptyObstacle(String),
    #[error("field dimensions {got:?} do not match {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("negative gain {0} for obstacle {1}")]
    NegativeGain(String, usize),
    #[error("{gains} gains supplied for {fields} fields")]
    GainCountMismatch { gains: usize, fields: usize },
}

/// Per-cell real values, row-major with row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        ScalarField {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    #[inline]
    pub fn at(&self, cell: Cell) -> T {
        self.values[cell.row * self.width + cell.col]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// `true` when the field is the "no obstacles" sentinel.
    pub fn is_unbounded(&self) -> bool {
        self.values.iter().all(|v| v.is_infinite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise minimum with another field of the same shape.
    pub fn min_with(&mut self, other: &Self) {
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            if b < *a {
                *a = b;
            }
        }
    }

    pub fn dump(&self) -> FieldDump {
        FieldDump {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|v| v.to_f64().filter(|x| x.is_finite()))
                .collect(),
        }
    }
}

/// Flat row-major export. Non-finite values (the unbounded sentinel) are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDump {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
}

/// One-dimensional squared distance transform of `f` into `out`.
///
/// Entries of `f` that are infinite contribute no parabola; if every entry is
/// infinite the output is infinite everywhere.
fn edt_1d<T: Scalar>(f: &[T], out: &mut [T], sites: &mut Vec<usize>, bounds: &mut Vec<T>) {
    let n = f.len();
    sites.clear();
    bounds.clear();
    let two = T::lit(2.0);
    let sq = |q: usize| T::from_usize_exact(q * q);
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(T::neg_infinity());
                break;
            };
            let s = ((f[q] + sq(q)) - (f[v] + sq(v))) / (two * T::from_usize_exact(q - v));
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = T::infinity());
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qt = T::from_usize_exact(q);
        while k + 1 < sites.len() && bounds[k + 1] < qt {
            k += 1;
        }
        let v = sites[k];
        let d = q.abs_diff(v);
        *o = T::from_usize_exact(d * d) + f[v];
    }
}

/// Squared Euclidean distance transform of a binary mask (`true` = feature).
pub fn squared_edt<T: Scalar>(width: usize, height: usize, is_feature: &[bool]) -> Vec<T> {
    assert_eq!(is_feature.len(), width * height);
    let mut grid: Vec<T> = is_feature
        .iter()
        .map(|&b| if b { T::zero() } else { T::infinity() })
        .collect();
    let (mut sites, mut bounds) = (Vec::new(), Vec::new());

    let mut column = vec![T::zero(); height];
    let mut column_out = vec![T::zero(); height];
    for col in 0..width {
        for row in 0..height {
            column[row] = grid[row * width + col];
        }
        edt_1d(&column, &mut column_out, &mut sites, &mut bounds);
        for row in 0..height {
            grid[row * width + col] = column_out[row];
        }
    }

    let mut row_out = vec![T::zero(); width];
    for row in 0..height {
        let line = &mut grid[row * width..(row + 1) * width];
        edt_1d(line, &mut row_out, &mut sites, &mut bounds);
        line.copy_from_slice(&row_out);
    }
    grid
}

fn edt_of_cells<T: Scalar>(grid: &SemanticGrid, cells: &[Cell]) -> ScalarField<T> {
    let mut mask = vec![false; grid.len()];
    for &c in cells {
        mask[grid.index(c)] = true;
    }
    let values = squared_edt::<T>(grid.width, grid.height, &mask)
        .into_iter()
        .map(|d| d.sqrt())
        .collect();
    ScalarField {
        width: grid.width,
        height: grid.height,
        values,
    }
}

/// Distance from every cell to the nearest cell of obstacle `obstacle_index`.
pub fn per_obstacle_edf<T: Scalar>(
    grid: &SemanticGrid,
    obstacle_index: usize,
) -> Result<ScalarField<T>, FieldError> {
    let obstacle = grid
        .obstacles
        .get(obstacle_index)
        .ok_or(FieldError::NoSuchObstacle(obstacle_index))?;
    if obstacle.cells.is_empty() {
        return Err(FieldError::EmptyObstacle(obstacle.id.clone()));
    }
    Ok(edt_of_cells(grid, &obstacle.cells))
}

/// All per-obstacle fields, in obstacle order.
pub fn obstacle_edfs<T: Scalar>(grid: &SemanticGrid) -> Result<Vec<ScalarField<T>>, FieldError> {
    (0..grid.obstacles.len())
        .map(|i| per_obstacle_edf(grid, i))
        .collect()
}

/// Distance to the union of all obstacle cells.
///
/// With no obstacles every value is `+∞`; see [`ScalarField::is_unbounded`].
pub fn global_edf<T: Scalar>(grid: &SemanticGrid) -> ScalarField<T> {
    let cells: Vec<Cell> = grid
        .obstacles
        .iter()
        .flat_map(|o| o.cells.iter().copied())
        .collect();
    edt_of_cells(grid, &cells)
}

/// Pointwise minimum of already computed per-obstacle fields.
pub fn global_from_parts<T: Scalar>(width: usize, height: usize, parts: &[ScalarField<T>]) -> ScalarField<T> {
    let mut out = ScalarField::filled(width, height, T::infinity());
    for p in parts {
        out.min_with(p);
    }
    out
}
