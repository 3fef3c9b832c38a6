//! Order book types and the three-stage clearing workflow: mutual-preference
//! matching, price-ranked double auction, then DSO backstop at the tariff prices.

mod clearing;
mod dso;
mod fees;
mod matching;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentState};
use crate::environment::ActionVector;
use crate::error::{Result, SimError};
use crate::grid::{transmission_loss, GridState};
use crate::units::Quantity;

pub use clearing::{clearing_price, ClearingMechanism};
pub use dso::{dso_clear, DsoState};
pub use fees::{balance_impact, dso_fee, fee_breakdown, FeeBreakdown, FeeConfig, FeeInputs};
pub use matching::{preference_match, price_match};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

/// Trade counterparty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Party {
    Agent(AgentId),
    Dso,
}

impl Party {
    pub fn agent(self) -> Option<AgentId> {
        match self {
            Party::Agent(id) => Some(id),
            Party::Dso => None,
        }
    }

    /// Sort key placing the DSO after every agent.
    pub fn sort_key(self) -> usize {
        self.agent().unwrap_or(usize::MAX)
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Agent(id) => write!(f, "{id}"),
            Party::Dso => f.write_str("dso"),
        }
    }
}

impl From<Party> for String {
    fn from(p: Party) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Party {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("dso") {
            Ok(Party::Dso)
        } else {
            s.parse().map(Party::Agent).map_err(|_| format!("invalid party `{s}`"))
        }
    }
}

/// Preferred trading partner carried on an order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partner {
    None,
    Agent(AgentId),
    Dso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub agent: AgentId,
    pub side: Side,
    /// $/MWh
    pub price: f64,
    pub quantity: Quantity,
    pub partner: Partner,
    /// Reputation at submission; secondary auction priority.
    pub reputation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preference,
    Auction,
    Dso,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Preference => "preference",
            Stage::Auction => "auction",
            Stage::Dso => "dso",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub period: usize,
    pub stage: Stage,
    pub buyer: Party,
    pub seller: Party,
    /// $/MWh
    pub price: f64,
    pub quantity: Quantity,
    /// Transmission loss (kWh), borne by the buyer's received energy.
    pub loss: f64,
    pub fees: FeeBreakdown,
}

impl Trade {
    pub fn is_p2p(&self) -> bool {
        self.stage != Stage::Dso
    }

    pub fn involves(&self, agent: AgentId) -> bool {
        self.buyer == Party::Agent(agent) || self.seller == Party::Agent(agent)
    }
}

/// Price and quantity limits applied to every order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketBounds {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl Default for MarketBounds {
    fn default() -> Self {
        MarketBounds {
            p_min: 35.0,
            p_max: 280.0,
            q_min: 0.1,
            q_max: 200.0,
        }
    }
}

impl MarketBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min.is_finite() && self.p_min > 0.0 && self.p_max > self.p_min && self.p_max.is_finite()) {
            return Err(SimError::config("market.p_max", "need 0 < p_min < p_max"));
        }
        if !(self.q_min.is_finite() && self.q_min > 0.0 && self.q_max >= self.q_min && self.q_max.is_finite()) {
            return Err(SimError::config("market.q_max", "need 0 < q_min <= q_max"));
        }
        Ok(())
    }
}

/// Turns a raw action into an order, or `None` when the agent abstains.
///
/// Price is clipped to the market bounds. Quantity below `q_min` abstains; above,
/// it is capped by `q_max` and the agent's feasible bound for the decoded side. `alpha >= 0.5` means buy. `beta`
/// rounds to a partner index: 0 none, 1..=n agent `beta - 1`, n + 1 the DSO.
pub fn action_to_order(
    action: &ActionVector,
    agent: &AgentState,
    bounds: &MarketBounds,
    t: usize,
    n_agents: usize,
) -> Option<Order> {
    if !action.is_finite() {
        return None;
    }
    let side = if action.alpha >= 0.5 { Side::Buy } else { Side::Sell };
    let price = action.p_bid.clamp(bounds.p_min, bounds.p_max);
    let (sell_max, buy_max) = agent.feasible_bounds(t);
    let feasible = match side {
        Side::Buy => buy_max,
        Side::Sell => sell_max,
    };
    if action.q_bid < bounds.q_min {
        return None;
    }
    let kwh = action.q_bid.min(bounds.q_max).min(feasible);
    let quantity = Quantity::from_kwh_floor(kwh);
    if quantity < Quantity::from_kwh(bounds.q_min) {
        return None;
    }
    let beta = action.beta.round().clamp(0.0, (n_agents + 1) as f64) as usize;
    let partner = match beta {
        0 => Partner::None,
        b if b == n_agents + 1 => Partner::Dso,
        b if b - 1 == agent.id => Partner::None,
        b => Partner::Agent(b - 1),
    };
    Some(Order {
        agent: agent.id,
        side,
        price,
        quantity,
        partner,
        reputation: agent.reputation,
    })
}

/// Inputs to one period's clearing besides the order book.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearingContext {
    pub period: usize,
    pub mechanism: ClearingMechanism,
    /// Reference price for proportional surplus pricing.
    pub reference_price: f64,
    pub fit: f64,
    pub utility: f64,
    pub fees: FeeConfig,
    /// Physical balance Σ(G − D) before clearing; positive means excess supply.
    pub grid_balance: f64,
}

/// Aggregate outcome of one clearing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    /// Volume-weighted mean P2P price, if any P2P trade executed.
    pub clearing_price: Option<f64>,
    pub p2p_volume: f64,
    pub dso_volume: f64,
    pub dso_bought: f64,
    pub dso_sold: f64,
    pub submitted_buy: f64,
    pub submitted_sell: f64,
    pub average_congestion: f64,
    pub fee_total: f64,
    pub loss_total: f64,
    pub trade_count: usize,
}

impl MarketStats {
    pub fn total_volume(&self) -> f64 {
        self.p2p_volume + self.dso_volume
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingOutcome {
    pub trades: Vec<Trade>,
    pub stats: MarketStats,
}

fn party_node(grid: &GridState, party: Party) -> usize {
    match party {
        Party::Agent(id) => grid.agent_node(id),
        Party::Dso => grid.dso_node(),
    }
}

/// Runs preference → auction → DSO clearing, then routes every trade over the grid
/// and prices losses and fees at the resulting period congestion.
pub fn clear_period(
    orders: &[Order],
    ctx: &ClearingContext,
    grid: &mut GridState,
    dso: &mut DsoState,
) -> ClearingOutcome {
    let (direct_to_dso, open): (Vec<Order>, Vec<Order>) =
        orders.iter().cloned().partition(|o| o.partner == Partner::Dso);

    let (mut trades, remaining) = preference_match(&open, ctx.mechanism, ctx.reference_price, ctx.period);
    let (auction, mut unmatched) = price_match(&remaining, ctx.mechanism, ctx.reference_price, ctx.period);
    trades.extend(auction);
    unmatched.extend(direct_to_dso);
    unmatched.sort_by_key(|o| (o.agent, o.side == Side::Sell));
    trades.extend(dso_clear(&unmatched, ctx.fit, ctx.utility, ctx.period, dso));

    grid.reset_flows();
    for trade in &trades {
        let (from, to) = (party_node(grid, trade.seller), party_node(grid, trade.buyer));
        grid.apply_flow(from, to, trade.quantity.kwh());
    }
    let congestion = grid.average_congestion();

    let mut stats = MarketStats {
        average_congestion: congestion,
        submitted_buy: orders
            .iter()
            .filter(|o| o.side == Side::Buy)
            .map(|o| o.quantity)
            .sum::<Quantity>()
            .kwh(),
        submitted_sell: orders
            .iter()
            .filter(|o| o.side == Side::Sell)
            .map(|o| o.quantity)
            .sum::<Quantity>()
            .kwh(),
        trade_count: trades.len(),
        ..MarketStats::default()
    };
    let mut p2p_value = 0.0;
    for trade in &mut trades {
        let q = trade.quantity.kwh();
        let distance = grid.node_distance(party_node(grid, trade.seller), party_node(grid, trade.buyer));
        trade.loss = transmission_loss(distance, q, grid.loss_factor());
        trade.fees = dso_fee(trade, grid, &ctx.fees, congestion, ctx.grid_balance);
        stats.fee_total += trade.fees.total;
        stats.loss_total += trade.loss;
        if trade.is_p2p() {
            stats.p2p_volume += q;
            p2p_value += q * trade.price;
            // Both parties pay half.
            dso.fee_revenue += trade.fees.total;
        } else {
            stats.dso_volume += q;
            if trade.buyer == Party::Dso {
                stats.dso_bought += q;
            } else {
                stats.dso_sold += q;
            }
            // Only the agent's half is collected.
            dso.fee_revenue += trade.fees.total / 2.0;
        }
    }
    if stats.p2p_volume > 0.0 {
        stats.clearing_price = Some(p2p_value / stats.p2p_volume);
    }
    ClearingOutcome { trades, stats }
}
