//! Beta–Bernoulli fusion of danger scores.
//!
//! Each obstacle carries a `Beta(α, β)` belief that it is dangerous. A danger
//! score `p̂ ∈ [0, 1]` is read as the mean of `N` virtual Bernoulli trials and
//! added as pseudo-counts `(N·p̂, N·(1−p̂))`. The effective repulsive gain is
//! always `mean · λ⁰` against the obstacle's original base gain, so chained
//! prompts accumulate evidence in `(α, β)` and never compound the gain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("danger score {0} is outside [0, 1]")]
    ScoreOutOfRange(String),
    #[error("trust N must be finite and >= 0, got {0}")]
    InvalidTrust(String),
    #[error("prior pseudo-counts must be finite and > 0, got alpha={alpha}, beta={beta}")]
    InvalidPrior { alpha: String, beta: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaState<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> BetaState<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self, FusionError> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if ok(alpha) && ok(beta) {
            Ok(BetaState { alpha, beta })
        } else {
            Err(FusionError::InvalidPrior {
                alpha: alpha.to_string(),
                beta: beta.to_string(),
            })
        }
    }

    /// The uniform prior `Beta(1, 1)`.
    pub fn uniform() -> Self {
        BetaState {
            alpha: T::one(),
            beta: T::one(),
        }
    }

    pub fn mean(&self) -> T {
        posterior_mean(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FusionParams<T> {
    /// Virtual sample size `N`.
    pub trust_n: T,
    pub prior_alpha: T,
    pub prior_beta: T,
}

impl<T: Scalar> Default for FusionParams<T> {
    fn default() -> Self {
        FusionParams {
            trust_n: T::lit(5.0),
            prior_alpha: T::one(),
            prior_beta: T::one(),
        }
    }
}

impl<T: Scalar> FusionParams<T> {
    pub fn with_trust(trust_n: T) -> Self {
        FusionParams {
            trust_n,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.trust_n.is_finite() && self.trust_n >= T::zero()) {
            return Err(("trust_n", format!("must be >= 0, got {}", self.trust_n)));
        }
        reset(self)
            .map(|_| ())
            .map_err(|e| ("prior_alpha", e.to_string()))
    }
}

/// One sensor reading for one obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DangerReading {
    pub obstacle_id: String,
    pub score: f64,
    pub prompt_id: String,
}

/// Adds the pseudo-counts of one reading. The input state is not modified.
pub fn update<T: Scalar>(state: &BetaState<T>, score: T, trust_n: T) -> Result<BetaState<T>, FusionError> {
    if !(score >= T::zero() && score <= T::one()) {
        return Err(FusionError::ScoreOutOfRange(score.to_string()));
    }
    if !(trust_n.is_finite() && trust_n >= T::zero()) {
        return Err(FusionError::InvalidTrust(trust_n.to_string()));
    }
    Ok(BetaState {
        alpha: state.alpha + trust_n * score,
        beta: state.beta + trust_n * (T::one() - score),
    })
}

/// `α / (α + β)`.
pub fn posterior_mean<T: Scalar>(state: &BetaState<T>) -> T {
    state.alpha / (state.alpha + state.beta)
}

/// `mean · λ⁰`.
pub fn effective_gain<T: Scalar>(state: &BetaState<T>, base_gain: T) -> T {
    posterior_mean(state) * base_gain
}

pub fn reset<T: Scalar>(params: &FusionParams<T>) -> Result<BetaState<T>, FusionError> {
    BetaState::new(params.prior_alpha, params.prior_beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub prompt_id: String,
    pub alpha: f64,
    pub beta: f64,
}

/// Posterior of one obstacle together with the `(α, β)` reached after each
/// accepted prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrack {
    pub state: BetaState<f64>,
    pub history: Vec<HistoryEntry>,
}

impl PosteriorTrack {
    pub fn new(prior: BetaState<f64>) -> Self {
        PosteriorTrack {
            state: prior,
            history: Vec::new(),
        }
    }

    pub fn apply(&mut self, prompt_id: &str, score: f64, trust_n: f64) -> Result<(), FusionError> {
        self.state = update(&self.state, score, trust_n)?;
        self.history.push(HistoryEntry {
            prompt_id: prompt_id.to_string(),
            alpha: self.state.alpha,
            beta: self.state.beta,
        });
        Ok(())
    }
}
