//! Per-agent reputation from reliability, price fairness and grid contribution,
//! updated once per period with exponential decay.

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::error::{Result, SimError};
use crate::market::{Order, Party, Trade};
use crate::units::Quantity;

pub const INITIAL_REPUTATION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationConfig {
    pub w_rel: f64,
    pub w_fair: f64,
    pub w_grid: f64,
    /// Weight of the current period's evidence.
    pub decay: f64,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        ReputationConfig {
            w_rel: 0.4,
            w_fair: 0.3,
            w_grid: 0.3,
            decay: 0.3,
        }
    }
}

impl ReputationConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_rel, self.w_fair, self.w_grid];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(SimError::config("reputation.w_rel", "weights must be >= 0"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SimError::config("reputation.w_rel", "weights must sum to 1"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(SimError::config("reputation.decay", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationScore {
    pub score: f64,
    pub reliability: f64,
    pub fairness: f64,
    pub grid: f64,
}

impl Default for ReputationScore {
    fn default() -> Self {
        ReputationScore {
            score: INITIAL_REPUTATION,
            reliability: INITIAL_REPUTATION,
            fairness: INITIAL_REPUTATION,
            grid: INITIAL_REPUTATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationState {
    pub agents: Vec<ReputationScore>,
}

impl ReputationState {
    pub fn new(n_agents: usize) -> Self {
        ReputationState {
            agents: vec![ReputationScore::default(); n_agents],
        }
    }

    pub fn score(&self, agent: AgentId) -> f64 {
        self.agents[agent].score
    }

    pub fn scores(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.score).collect()
    }
}

/// Grid contribution of one agent's trades: 1 when every trade leaned against the
/// imbalance, 0 when every trade leaned with it, 0.5 otherwise.
fn grid_component(sold: bool, bought: bool, grid_balance: f64) -> f64 {
    let deficit = grid_balance < 0.0;
    let surplus = grid_balance > 0.0;
    match (sold, bought) {
        (true, false) if deficit => 1.0,
        (true, false) if surplus => 0.0,
        (false, true) if surplus => 1.0,
        (false, true) if deficit => 0.0,
        _ => 0.5,
    }
}

/// Applies one period of evidence. `clearing_price` is the period's P2P clearing
/// price (if any); `grid_balance` the pre-clearing physical balance.
pub fn update_reputation(
    state: &ReputationState,
    trades: &[Trade],
    orders: &[Order],
    clearing_price: Option<f64>,
    grid_balance: f64,
    config: &ReputationConfig,
) -> ReputationState {
    let n = state.agents.len();
    let mut submitted = vec![Quantity::ZERO; n];
    let mut matched = vec![Quantity::ZERO; n];
    let mut price_volume = vec![(0.0, 0.0); n];
    let mut sold = vec![false; n];
    let mut bought = vec![false; n];
    for o in orders {
        submitted[o.agent] += o.quantity;
        let q = o.quantity.kwh();
        price_volume[o.agent].0 += o.price * q;
        price_volume[o.agent].1 += q;
    }
    for t in trades {
        if let Party::Agent(s) = t.seller {
            sold[s] = true;
            if t.is_p2p() {
                matched[s] += t.quantity;
            }
        }
        if let Party::Agent(b) = t.buyer {
            bought[b] = true;
            if t.is_p2p() {
                matched[b] += t.quantity;
            }
        }
    }

    let agents = state
        .agents
        .iter()
        .enumerate()
        .map(|(i, prev)| {
            let reliability = if submitted[i].is_zero() {
                1.0
            } else {
                matched[i].kwh() / submitted[i].kwh()
            };
            let fairness = match clearing_price {
                Some(cp) if price_volume[i].1 > 0.0 && cp > 0.0 => {
                    let own = price_volume[i].0 / price_volume[i].1;
                    1.0 - ((own - cp).abs() / cp).min(1.0)
                }
                _ => prev.fairness,
            };
            let grid = grid_component(sold[i], bought[i], grid_balance);
            let reliability = reliability.clamp(0.0, 1.0);
            let fairness = fairness.clamp(0.0, 1.0);
            let evidence = config.w_rel * reliability + config.w_fair * fairness + config.w_grid * grid;
            let score = (config.decay * evidence + (1.0 - config.decay) * prev.score).clamp(0.0, 1.0);
            ReputationScore {
                score,
                reliability,
                fairness,
                grid,
            }
        })
        .collect();
    ReputationState { agents }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{FeeBreakdown, Partner, Side, Stage};
    use proptest::prelude::*;

    fn order(agent: usize, side: Side, price: f64, kwh: f64) -> Order {
        Order {
            agent,
            side,
            price,
            quantity: Quantity::from_kwh(kwh),
            partner: Partner::None,
            reputation: 0.5,
        }
    }

    fn p2p(buyer: usize, seller: usize, price: f64, kwh: f64) -> Trade {
        Trade {
            period: 0,
            stage: Stage::Auction,
            buyer: Party::Agent(buyer),
            seller: Party::Agent(seller),
            price,
            quantity: Quantity::from_kwh(kwh),
            loss: 0.0,
            fees: FeeBreakdown::default(),
        }
    }

    #[test]
    fn fixed_point_at_full_marks() {
        let cfg = ReputationConfig::default();
        let mut state = ReputationState::new(2);
        state.agents[0].score = 1.0;
        state.agents[1].score = 1.0;
        // Seller during deficit and buyer during surplus both earn full grid credit,
        // so use a seller in a deficit grid and give the buyer no trades.
        let orders = [order(0, Side::Sell, 150.0, 5.0)];
        let trades = [p2p(1, 0, 150.0, 5.0)];
        let next = update_reputation(&state, &trades, &orders, Some(150.0), -10.0, &cfg);
        let s = next.agents[0];
        assert_eq!((s.reliability, s.fairness, s.grid), (1.0, 1.0, 1.0));
        assert!((s.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn abstention_convention() {
        let cfg = ReputationConfig::default();
        let mut state = ReputationState::new(1);
        state.agents[0].fairness = 0.8;
        let next = update_reputation(&state, &[], &[], Some(150.0), 5.0, &cfg);
        let s = next.agents[0];
        assert_eq!((s.reliability, s.fairness, s.grid), (1.0, 0.8, 0.5));
    }

    #[test]
    fn full_match_at_clearing_price_neutral_grid() {
        let cfg = ReputationConfig::default();
        let state = ReputationState::new(2);
        let orders = [order(0, Side::Sell, 150.0, 5.0), order(1, Side::Buy, 150.0, 5.0)];
        let trades = [p2p(1, 0, 150.0, 5.0)];
        let next = update_reputation(&state, &trades, &orders, Some(150.0), 0.0, &cfg);
        for s in next.agents {
            assert_eq!((s.reliability, s.fairness, s.grid), (1.0, 1.0, 0.5));
        }
    }

    #[test]
    fn invalid_weights() {
        let cfg = ReputationConfig {
            w_rel: 0.5,
            ..ReputationConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_slow_moving(
            prev in 0.0f64..=1.0, decay in 0.01f64..=1.0,
            price in 35.0f64..280.0, cp in 35.0f64..280.0, q in 0.1f64..50.0, fill in 0.0f64..=1.0,
            balance in -50.0f64..50.0,
        ) {
            let cfg = ReputationConfig { decay, ..ReputationConfig::default() };
            let mut state = ReputationState::new(2);
            state.agents[0].score = prev;
            let orders = [order(0, Side::Sell, price, q)];
            let filled = q * fill;
            let trades: Vec<Trade> = if filled >= 1e-6 { vec![p2p(1, 0, cp, filled)] } else { vec![] };
            let next = update_reputation(&state, &trades, &orders, Some(cp), balance, &cfg);
            let r = next.agents[0].score;
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((r - prev).abs() <= decay + 1e-12);
        }
    }
}
