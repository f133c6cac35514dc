//! Repulsive potentials `λ·exp(−D)` and their gain-weighted sum.

use crate::distance_field::{FieldError, ScalarField};
use crate::num::Scalar;

/// Repulsive field of one obstacle: `gain · exp(−distance)` at every cell.
pub fn repulsive_field<T: Scalar>(distance: &ScalarField<T>, gain: T) -> Result<ScalarField<T>, FieldError> {
    if !(gain >= T::zero()) {
        return Err(FieldError::NegativeGain(gain.to_string(), 0));
    }
    Ok(distance.map(|d| gain * (-d).exp()))
}

/// Cached per-obstacle distance fields plus the current gains and their
/// weighted sum. Distances never change after construction; only gains do.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialStack<T> {
    per_obstacle_distance: Vec<ScalarField<T>>,
    gains: Vec<T>,
    total: ScalarField<T>,
}

impl<T: Scalar> PotentialStack<T> {
    /// Builds a stack over `distances` with the given gains.
    ///
    /// `width`/`height` give the grid shape so that an empty stack still has
    /// a (zero) total of the right size.
    pub fn new(
        width: usize,
        height: usize,
        distances: Vec<ScalarField<T>>,
        gains: Vec<T>,
    ) -> Result<Self, FieldError> {
        for d in &distances {
            if d.dims() != (width, height) {
                return Err(FieldError::DimensionMismatch {
                    expected: (width, height),
                    got: d.dims(),
                });
            }
        }
        let mut stack = PotentialStack {
            per_obstacle_distance: distances,
            gains: Vec::new(),
            total: ScalarField::zeros(width, height),
        };
        stack.set_gains(gains)?;
        Ok(stack)
    }

    /// Replaces all gains and rebuilds the total. On error the stack is unchanged.
    pub fn set_gains(&mut self, gains: Vec<T>) -> Result<(), FieldError> {
        if gains.len() != self.per_obstacle_distance.len() {
            return Err(FieldError::GainCountMismatch {
                gains: gains.len(),
                fields: self.per_obstacle_distance.len(),
            });
        }
        if let Some((i, g)) = gains.iter().enumerate().find(|(_, g)| !(**g >= T::zero())) {
            return Err(FieldError::NegativeGain(g.to_string(), i));
        }
        self.total = weighted_sum(self.total.width, self.total.height, &self.per_obstacle_distance, &gains);
        self.gains = gains;
        Ok(())
    }

    pub fn gains(&self) -> &[T] {
        &self.gains
    }

    pub fn distances(&self) -> &[ScalarField<T>] {
        &self.per_obstacle_distance
    }

    pub fn total(&self) -> &ScalarField<T> {
        &self.total
    }
}

fn weighted_sum<T: Scalar>(width: usize, height: usize, distances: &[ScalarField<T>], gains: &[T]) -> ScalarField<T> {
    let mut total = ScalarField::zeros(width, height);
    for (d, &g) in distances.iter().zip(gains) {
        if g == T::zero() {
            continue;
        }
        for (t, &dv) in total.values.iter_mut().zip(&d.values) {
            *t = *t + g * (-dv).exp();
        }
    }
    total
}

/// `F_total` for the stack's current gains.
pub fn total_field<T: Scalar>(stack: &PotentialStack<T>) -> ScalarField<T> {
    stack.total.clone()
}
