//! Non-learning baselines: zero-intelligence bidding and reputation/distance
//! partner selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentState};
use crate::environment::ActionVector;
use crate::error::{Result, SimError};
use crate::market::MarketBounds;

/// Random feasible bid. The side follows the agent's net position (coin flip when
/// balanced); quantity is uniform between `q_min` and the feasible bound, and the
/// action abstains (zero quantity) when that bound is below `q_min`.
pub fn zero_intelligence_action<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: &MarketBounds,
    agent: &AgentState,
    t: usize,
) -> ActionVector {
    let price = rng.random_range(bounds.p_min..=bounds.p_max);
    let coin: bool = rng.random();
    let unit: f64 = rng.random();
    let net = agent.generation.at(t) - agent.demand.at(t);
    let buy = if net < 0.0 {
        true
    } else if net > 0.0 {
        false
    } else {
        coin
    };
    let (sell_max, buy_max) = agent.feasible_bounds(t);
    let upper = bounds.q_max.min(if buy { buy_max } else { sell_max });
    let q_bid = if upper >= bounds.q_min {
        bounds.q_min + unit * (upper - bounds.q_min)
    } else {
        0.0
    };
    ActionVector {
        p_bid: price,
        q_bid,
        alpha: if buy { 1.0 } else { 0.0 },
        beta: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartnerWeights {
    pub reputation: f64,
    pub distance: f64,
}

impl Default for PartnerWeights {
    fn default() -> Self {
        PartnerWeights {
            reputation: 0.7,
            distance: 0.3,
        }
    }
}

impl PartnerWeights {
    pub fn validate(&self) -> Result<()> {
        if self.reputation < 0.0 || self.distance < 0.0 || (self.reputation + self.distance - 1.0).abs() > 1e-9 {
            return Err(SimError::config("partner_weights", "weights must be >= 0 and sum to 1"));
        }
        Ok(())
    }
}

/// A candidate partner as seen from the selecting agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerInfo {
    pub id: AgentId,
    pub reputation: f64,
    pub distance: f64,
}

/// Highest `w_rep·r_j + w_dist·(1 − d_ij/d_max)`; ties go to the lowest id.
pub fn rule_based_partner(agent: AgentId, peers: &[PeerInfo], d_max: f64, weights: &PartnerWeights) -> Option<AgentId> {
    let closeness = |d: f64| if d_max > 0.0 { 1.0 - d / d_max } else { 1.0 };
    let mut best: Option<(f64, AgentId)> = None;
    for p in peers.iter().filter(|p| p.id != agent) {
        let score = weights.reputation * p.reputation + weights.distance * closeness(p.distance);
        best = match best {
            Some((s, id)) if s > score || (s == score && id < p.id) => Some((s, id)),
            _ => Some((score, p.id)),
        };
    }
    best.map(|(_, id)| id)
}
