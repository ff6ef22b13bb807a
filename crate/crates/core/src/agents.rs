//! Agent decisions against take-it-or-leave-it offers and utility accounting.
//!
//! An offer is a tuple `(p, ε¹, ε²)`: payment `p` for using the agent's
//! reported type in an ε²-private computation, with the participation
//! decision itself handled ε¹-privately whether or not she accepts. Agents
//! are quasilinear: accepting yields `p - c(ε² + κ·ε¹)` and rejecting yields
//! `-c(κ·ε¹)`, where `c` is the agent's nondecreasing privacy-cost curve and
//! `κ ∈ [0, 1]` scales how much the participation decision itself leaks about
//! the type (κ = 0: costs carry no type information; κ = 1: fully
//! disclosive).
//!
//! Every strategy accepts whenever `p >= c(ε¹ + ε²)` — offers at or above
//! that threshold guarantee non-negative utility regardless of κ, so a
//! rational agent has no reason to refuse (one-sided truthfulness). Below the
//! threshold the model makes no prediction, and behavior is pluggable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::PrivacyLevel;
use crate::population::TypeId;
use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent parameter: {0}")]
    InvalidParameter(String),
}

/// Nondecreasing privacy-cost curve `c: ε ↦ cost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostCurve {
    /// `c(ε) = rate·ε`; the form used by all population models and by the
    /// cost benchmark.
    Linear { rate: f64 },
    /// Piecewise-linear interpolation through `(ε, cost)` knots, extrapolated
    /// with the final slope. Accepted by the agent model for experimentation;
    /// benchmark math assumes linear costs.
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

impl CostCurve {
    pub fn linear(rate: f64) -> Result<Self, AgentError> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(AgentError::InvalidParameter(format!(
                "linear cost rate must be non-negative and finite, got {rate}"
            )));
        }
        Ok(CostCurve::Linear { rate })
    }

    pub fn piecewise(points: Vec<(f64, f64)>) -> Result<Self, AgentError> {
        if points.is_empty() {
            return Err(AgentError::InvalidParameter(
                "piecewise cost curve needs at least one knot".into(),
            ));
        }
        let mut prev = (0.0, 0.0);
        for &(eps, cost) in &points {
            if !(eps.is_finite() && cost.is_finite() && eps >= prev.0 && cost >= prev.1) {
                return Err(AgentError::InvalidParameter(
                    "piecewise cost knots must be finite and nondecreasing in both coordinates"
                        .into(),
                ));
            }
            prev = (eps, cost);
        }
        Ok(CostCurve::PiecewiseLinear { points })
    }

    /// Evaluate `c(eps)`. Curves pass through the origin.
    pub fn eval(&self, eps: f64) -> f64 {
        match self {
            CostCurve::Linear { rate } => rate * eps,
            CostCurve::PiecewiseLinear { points } => {
                let mut prev = (0.0, 0.0);
                for &(x, y) in points {
                    if eps <= x {
                        if x == prev.0 {
                            return y;
                        }
                        let t = (eps - prev.0) / (x - prev.0);
                        return prev.1 + t * (y - prev.1);
                    }
                    prev = (x, y);
                }
                let (last_x, last_y) = *points.last().expect("validated non-empty");
                let slope = if points.len() >= 2 {
                    let (px, py) = points[points.len() - 2];
                    if last_x > px {
                        (last_y - py) / (last_x - px)
                    } else {
                        0.0
                    }
                } else if last_x > 0.0 {
                    last_y / last_x
                } else {
                    0.0
                };
                last_y + slope * (eps - last_x)
            }
        }
    }

    /// The per-unit rate for linear curves.
    pub fn linear_rate(&self) -> Option<f64> {
        match self {
            CostCurve::Linear { rate } => Some(*rate),
            CostCurve::PiecewiseLinear { .. } => None,
        }
    }
}

/// How an agent responds to offers below the guaranteed-acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum DecisionStrategy {
    /// Accept exactly when `p >= c(ε¹ + ε²)`, the sufficient condition for
    /// non-negative utility. The conservative rule assumed by the cost
    /// analysis.
    #[default]
    RationalThreshold,
    /// Accept exactly when accepting is at least as good as rejecting:
    /// `p - c(ε² + κ·ε¹) >= -c(κ·ε¹)` (for linear costs, `p >= v·ε²`).
    /// Correlated agents may therefore accept cheaper offers.
    ExactUtilityMax,
    /// Apply the threshold rule at or above threshold; below it, accept with
    /// probability `accept_probability`.
    SubThreshold { accept_probability: f64 },
}

/// One sampled individual: private type, privacy-cost curve, correlation
/// leak, and response strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub type_id: TypeId,
    pub cost: CostCurve,
    pub kappa: f64,
    pub strategy: DecisionStrategy,
}

impl Agent {
    pub fn new(
        type_id: TypeId,
        cost: CostCurve,
        kappa: f64,
        strategy: DecisionStrategy,
    ) -> Result<Self, AgentError> {
        if !(kappa.is_finite() && (0.0..=1.0).contains(&kappa)) {
            return Err(AgentError::InvalidParameter(format!(
                "kappa must lie in [0, 1], got {kappa}"
            )));
        }
        if let DecisionStrategy::SubThreshold { accept_probability } = strategy {
            if !(accept_probability.is_finite() && (0.0..=1.0).contains(&accept_probability)) {
                return Err(AgentError::InvalidParameter(format!(
                    "sub-threshold accept probability must lie in [0, 1], got {accept_probability}"
                )));
            }
        }
        Ok(Self {
            type_id,
            cost,
            kappa,
            strategy,
        })
    }

    /// Convenience constructor for the standard linear-cost agent.
    pub fn with_linear_cost(
        type_id: TypeId,
        value: f64,
        kappa: f64,
        strategy: DecisionStrategy,
    ) -> Result<Self, AgentError> {
        Self::new(type_id, CostCurve::linear(value)?, kappa, strategy)
    }

    /// Whether the offer clears the guaranteed-acceptance threshold
    /// `p >= c(ε¹ + ε²)`.
    pub fn clears_threshold(&self, offer: &Offer) -> bool {
        offer.payment >= self.cost.eval(offer.eps1.epsilon() + offer.eps2.epsilon())
    }
}

/// A take-it-or-leave-it offer `(p, ε¹, ε²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub payment: f64,
    pub eps1: PrivacyLevel,
    pub eps2: PrivacyLevel,
}

impl Offer {
    pub fn new(payment: f64, eps1: PrivacyLevel, eps2: PrivacyLevel) -> Result<Self, AgentError> {
        if !(payment.is_finite() && payment >= 0.0) {
            return Err(AgentError::InvalidParameter(format!(
                "offer payment must be non-negative and finite, got {payment}"
            )));
        }
        Ok(Self {
            payment,
            eps1,
            eps2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

/// The agent's participation decision for `offer`.
///
/// Ties resolve to accept (the acceptance conditions are weak inequalities).
/// Only `SubThreshold` consumes randomness, and only below threshold.
pub fn decide(agent: &Agent, offer: &Offer, rng: &mut SimRng) -> Decision {
    if agent.clears_threshold(offer) {
        return Decision::Accept;
    }
    match agent.strategy {
        DecisionStrategy::RationalThreshold => Decision::Reject,
        DecisionStrategy::ExactUtilityMax => {
            if realized_utility(agent, offer, Decision::Accept)
                >= realized_utility(agent, offer, Decision::Reject)
            {
                Decision::Accept
            } else {
                Decision::Reject
            }
        }
        DecisionStrategy::SubThreshold { accept_probability } => {
            if rng.bernoulli(accept_probability) {
                Decision::Accept
            } else {
                Decision::Reject
            }
        }
    }
}

/// Quasilinear utility realized by `decision` against `offer`.
///
/// Accept: `p - c(ε² + κ·ε¹)`. Reject: `-c(κ·ε¹)` — rejecting is not free
/// when costs correlate with types, because the observed refusal is itself
/// used in an ε¹-private computation.
pub fn realized_utility(agent: &Agent, offer: &Offer, decision: Decision) -> f64 {
    let leak = agent.kappa * offer.eps1.epsilon();
    match decision {
        Decision::Accept => offer.payment - agent.cost.eval(offer.eps2.epsilon() + leak),
        Decision::Reject => -agent.cost.eval(leak),
    }
}
