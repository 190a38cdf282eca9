//! Three-parameter logistic (3PL) response model.
//!
//! An item is described by discrimination `alpha` (slope of the curve),
//! difficulty `beta` (ability at which the curve is steepest), and guessing
//! `gamma` (floor probability an arbitrarily weak responder answers
//! correctly). The probability that a responder with ability `theta` answers
//! the item correctly is
//!
//! ```text
//! p(theta) = gamma + (1 - gamma) / (1 + exp(-alpha * (theta - beta)))
//! ```
//!
//! The headroom score of an item is the slope of this curve evaluated at the
//! strongest responder's ability: a steep slope there means the item still
//! separates the best responders from slightly weaker ones, while a flat
//! slope means the item is saturated (or far beyond everyone's reach).

use serde::{Deserialize, Serialize};

/// Probabilities are clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]` before
/// taking logs so that log-likelihoods stay finite.
pub const PROB_EPSILON: f64 = 1e-7;

/// Item parameters of the 3PL model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters {
    /// Discrimination; must be positive and finite.
    pub alpha: f64,
    /// Difficulty; must be finite.
    pub beta: f64,
    /// Guessing floor; must lie in `[0, 1)`.
    pub gamma: f64,
}

impl ItemParameters {
    /// Builds validated item parameters.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, String> {
        let item = Self { alpha, beta, gamma };
        item.validate()?;
        Ok(item)
    }

    /// Checks the type invariants: `alpha > 0`, `gamma in [0, 1)`, all finite.
    pub fn validate(&self) -> Result<(), String> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(format!(
                "discrimination must be positive and finite, got {}",
                self.alpha
            ));
        }
        if !self.beta.is_finite() {
            return Err(format!("difficulty must be finite, got {}", self.beta));
        }
        if !self.gamma.is_finite() || !(0.0..1.0).contains(&self.gamma) {
            return Err(format!("guessing must lie in [0, 1), got {}", self.gamma));
        }
        Ok(())
    }
}

/// A responder's latent ability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ability {
    pub theta: f64,
}

/// Numerically stable logistic function.
///
/// Branches on the sign of the argument so that `exp` is only ever called on
/// non-positive values; never overflows and maps `-inf/+inf` to `0/1`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of a correct response under the 3PL model.
///
/// Lies in `[gamma, 1)` and increases monotonically in `theta`.
pub fn icc_prob(theta: f64, item: &ItemParameters) -> f64 {
    debug_assert!(item.validate().is_ok(), "invalid item parameters");
    item.gamma + (1.0 - item.gamma) * sigmoid(item.alpha * (theta - item.beta))
}

/// Derivative of [`icc_prob`] with respect to `theta`.
///
/// Equals `(1 - gamma) * alpha * s * (1 - s)` with
/// `s = sigmoid(alpha * (theta - beta))`; non-negative everywhere and
/// symmetric about `theta = beta`, where it peaks at `(1 - gamma) * alpha / 4`.
pub fn icc_slope(theta: f64, item: &ItemParameters) -> f64 {
    debug_assert!(item.validate().is_ok(), "invalid item parameters");
    let s = sigmoid(item.alpha * (theta - item.beta));
    (1.0 - item.gamma) * item.alpha * s * (1.0 - s)
}

/// Bernoulli log-likelihood of one response.
///
/// The success probability is clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]`
/// first, so the result is always finite.
pub fn response_loglik(correct: bool, theta: f64, item: &ItemParameters) -> f64 {
    let p = icc_prob(theta, item).clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
    if correct {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// Locally estimated headroom: the ICC slope at the best responder's ability.
pub fn leh_score(item: &ItemParameters, theta_star: f64) -> f64 {
    icc_slope(theta_star, item)
}

// ============================================================================
// Tests
// ============================================================================
