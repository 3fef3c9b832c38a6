//! System KPIs, the market-wide cooperation factor, per-agent contribution and the
//! modulated multi-objective reward.

use serde::{Deserialize, Serialize};

use crate::agent::SettlementRecord;
use crate::error::{Result, SimError};
use crate::market::{Order, Side, Trade};
use crate::units::{value_dollars, Quantity};

pub const DEFAULT_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSet {
    /// $
    pub social_welfare: f64,
    /// kWh
    pub liquidity: f64,
    /// $/MWh
    pub bid_ask_spread: f64,
    /// $/MWh
    pub price_volatility: f64,
    pub imbalance: f64,
    pub avg_congestion: f64,
    /// Pre-clearing Σ(G − D), kWh.
    pub grid_balance: f64,
    pub self_consumption: f64,
    pub flexibility_utilization: f64,
    pub coordination_score: f64,
    pub coordination_convergence: f64,
    /// Welfare over its full-liquidity reference, in [0, 1].
    pub normalized_welfare: f64,
}

impl Default for KpiSet {
    /// Values observed before any period has cleared.
    fn default() -> Self {
        KpiSet {
            social_welfare: 0.0,
            liquidity: 0.0,
            bid_ask_spread: 0.0,
            price_volatility: 0.0,
            imbalance: 0.0,
            avg_congestion: 0.0,
            grid_balance: 0.0,
            self_consumption: 1.0,
            flexibility_utilization: 0.0,
            coordination_score: 1.0,
            coordination_convergence: 1.0,
            normalized_welfare: 0.0,
        }
    }
}

impl KpiSet {
    /// Names and values of the fraction-valued indicators.
    pub fn fractions(&self) -> [(&'static str, f64); 7] {
        [
            ("imbalance", self.imbalance),
            ("avg_congestion", self.avg_congestion),
            ("self_consumption", self.self_consumption),
            ("flexibility_utilization", self.flexibility_utilization),
            ("coordination_score", self.coordination_score),
            ("coordination_convergence", self.coordination_convergence),
            ("normalized_welfare", self.normalized_welfare),
        ]
    }
}

/// Everything one period contributes to the KPI computation.
#[derive(Debug, Clone)]
pub struct KpiInputs<'a> {
    pub trades: &'a [Trade],
    pub orders: &'a [Order],
    /// Total line capacity used to normalize imbalance (kWh per period).
    pub grid_capacity: f64,
    pub avg_congestion: f64,
    pub grid_balance: f64,
    /// Σ over agents of the larger feasible bound, before clearing.
    pub available_flexibility: f64,
    /// P2P clearing prices of past periods, oldest first, including this one.
    pub price_history: &'a [f64],
    /// Traded volumes of past periods, oldest first, including this one.
    pub volume_history: &'a [f64],
    pub window: usize,
    /// Upper price used for the full-liquidity welfare reference.
    pub p_max: f64,
}

fn tail(xs: &[f64], window: usize) -> &[f64] {
    &xs[xs.len().saturating_sub(window.max(1))..]
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_price(orders: &[Order], side: Side) -> Option<f64> {
    let prices: Vec<f64> = orders.iter().filter(|o| o.side == side).map(|o| o.price).collect();
    (!prices.is_empty()).then(|| prices.iter().sum::<f64>() / prices.len() as f64)
}

pub fn compute_kpis(input: &KpiInputs<'_>) -> KpiSet {
    let mut welfare = 0.0;
    let mut p2p = Quantity::ZERO;
    let mut dso = Quantity::ZERO;
    for t in input.trades {
        welfare += value_dollars(t.quantity.kwh(), t.price);
        if t.is_p2p() {
            p2p += t.quantity;
        } else {
            dso += t.quantity;
        }
    }
    let liquidity = (p2p + dso).kwh();

    let bid_ask_spread = match (
        mean_price(input.orders, Side::Sell),
        mean_price(input.orders, Side::Buy),
    ) {
        (Some(ask), Some(bid)) => ask - bid,
        _ => 0.0,
    };
    let price_volatility = mean_std(tail(input.price_history, input.window)).1;

    let side_total = |side| {
        input
            .orders
            .iter()
            .filter(|o| o.side == side)
            .map(|o| o.quantity)
            .sum::<Quantity>()
            .kwh()
    };
    let submitted_buy = side_total(Side::Buy);
    let submitted_sell = side_total(Side::Sell);
    let imbalance = if input.grid_capacity > 0.0 {
        ((submitted_buy - submitted_sell).abs() / input.grid_capacity).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let self_consumption = if p2p + dso == Quantity::ZERO {
        1.0
    } else {
        p2p.kwh() / (p2p + dso).kwh()
    };
    let flexibility_utilization = if input.available_flexibility > 0.0 {
        (p2p.kwh() / input.available_flexibility).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let coordination_convergence = {
        let (mean, std) = mean_std(tail(input.volume_history, input.window));
        if mean > 0.0 {
            1.0 - (std / mean).min(1.0)
        } else {
            1.0
        }
    };
    let reference = value_dollars(submitted_buy + submitted_sell, input.p_max);
    let normalized_welfare = if reference > 0.0 {
        (welfare / reference).clamp(0.0, 1.0)
    } else {
        0.0
    };

    KpiSet {
        social_welfare: welfare,
        liquidity,
        bid_ask_spread,
        price_volatility,
        imbalance,
        avg_congestion: input.avg_congestion.clamp(0.0, 1.0),
        grid_balance: input.grid_balance,
        self_consumption,
        flexibility_utilization,
        coordination_score: 1.0 - imbalance,
        coordination_convergence,
        normalized_welfare,
    }
}

/// Mean of coordination, self-consumption, spare line capacity and normalized welfare.
pub fn cooperation_factor(kpis: &KpiSet) -> f64 {
    let terms = [
        kpis.coordination_score,
        kpis.self_consumption,
        1.0 - kpis.avg_congestion,
        kpis.normalized_welfare,
    ];
    (terms.iter().sum::<f64>() / 4.0).clamp(0.0, 1.0)
}

/// +1 when the agent's net trade leaned against the grid imbalance, -1 when it
/// leaned with it, 0 when neutral.
fn imbalance_direction(record: &SettlementRecord, grid_balance: f64) -> f64 {
    let net_sold = record.sold - record.bought;
    if net_sold == 0.0 || grid_balance == 0.0 {
        0.0
    } else if (net_sold > 0.0) == (grid_balance < 0.0) {
        1.0
    } else {
        -1.0
    }
}

pub fn contribution_factor(record: &SettlementRecord, grid_balance: f64) -> f64 {
    let traded = record.traded();
    if traded <= 0.0 {
        return 0.5;
    }
    let f = 0.5 + 0.3 * imbalance_direction(record, grid_balance) + 0.2 * record.p2p_traded() / traded;
    f.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_economic: f64,
    pub w_grid: f64,
    pub w_allocation: f64,
    pub w_participation: f64,
    pub w_stability: f64,
    pub cooperation_gain: f64,
    /// $ per kWh traded with the DSO.
    pub gamma_dso: f64,
    /// $ per kWh of unmet demand.
    pub gamma_ud: f64,
    pub window: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w_economic: 1.0,
            w_grid: 0.25,
            w_allocation: 0.25,
            w_participation: 0.25,
            w_stability: 0.25,
            cooperation_gain: 1.0,
            gamma_dso: 0.5,
            gamma_ud: 2.0,
            window: DEFAULT_WINDOW,
        }
    }
}

impl RewardConfig {
    pub fn zero() -> Self {
        RewardConfig {
            w_economic: 0.0,
            w_grid: 0.0,
            w_allocation: 0.0,
            w_participation: 0.0,
            w_stability: 0.0,
            cooperation_gain: 0.0,
            gamma_dso: 0.0,
            gamma_ud: 0.0,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("reward.w_economic", self.w_economic),
            ("reward.w_grid", self.w_grid),
            ("reward.w_allocation", self.w_allocation),
            ("reward.w_participation", self.w_participation),
            ("reward.w_stability", self.w_stability),
            ("reward.cooperation_gain", self.cooperation_gain),
            ("reward.gamma_dso", self.gamma_dso),
            ("reward.gamma_ud", self.gamma_ud),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::config(name, "must be finite and >= 0"));
            }
        }
        if self.window == 0 {
            return Err(SimError::config("reward.window", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-agent inputs to the reward beyond the settlement record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext {
    /// Volume the agent submitted this period (0 when it abstained).
    pub submitted: f64,
    pub grid_balance: f64,
    pub previous_price: Option<f64>,
    pub current_price: Option<f64>,
    pub f_coop: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub economic: f64,
    pub grid: f64,
    pub allocation: f64,
    pub participation: f64,
    pub stability: f64,
    pub r_base: f64,
    pub f_coop: f64,
    pub cooperation_gain: f64,
    pub f_contrib: f64,
    pub penalty_dso: f64,
    pub penalty_unmet: f64,
    pub r_total: f64,
}

impl RewardBreakdown {
    pub fn recompose(&self) -> f64 {
        self.r_base * (1.0 + self.cooperation_gain * self.f_coop * self.f_contrib)
            - self.penalty_dso
            - self.penalty_unmet
    }
}

pub fn compute_reward(record: &SettlementRecord, ctx: &RewardContext, config: &RewardConfig) -> RewardBreakdown {
    let economic = record.profit_delta;
    let grid = if ctx.grid_balance != 0.0 {
        let net = (record.sold - record.bought).abs();
        imbalance_direction(record, ctx.grid_balance) * (net / ctx.grid_balance.abs()).min(1.0)
    } else {
        0.0
    };
    let allocation = if ctx.submitted > 0.0 {
        (record.p2p_traded() / ctx.submitted).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let participation = if ctx.submitted > 0.0 { 1.0 } else { 0.0 };
    let stability = match (ctx.previous_price, ctx.current_price) {
        (Some(prev), Some(cur)) if prev > 0.0 => 1.0 - ((cur - prev).abs() / prev).min(1.0),
        _ => 1.0,
    };
    let r_base = config.w_economic * economic
        + config.w_grid * grid
        + config.w_allocation * allocation
        + config.w_participation * participation
        + config.w_stability * stability;
    let mut out = RewardBreakdown {
        economic,
        grid,
        allocation,
        participation,
        stability,
        r_base,
        f_coop: ctx.f_coop,
        cooperation_gain: config.cooperation_gain,
        f_contrib: contribution_factor(record, ctx.grid_balance),
        penalty_dso: config.gamma_dso * record.dso_traded(),
        penalty_unmet: config.gamma_ud * record.deferred,
        r_total: 0.0,
    };
    out.r_total = out.recompose();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{FeeBreakdown, Partner, Party, Stage};
    use proptest::prelude::*;

    fn inputs<'a>(trades: &'a [Trade], orders: &'a [Order]) -> KpiInputs<'a> {
        KpiInputs {
            trades,
            orders,
            grid_capacity: 1200.0,
            avg_congestion: 0.0,
            grid_balance: 0.0,
            available_flexibility: 0.0,
            price_history: &[],
            volume_history: &[],
            window: DEFAULT_WINDOW,
            p_max: 280.0,
        }
    }

    fn order(side: Side, kwh: f64) -> Order {
        Order {
            agent: 0,
            side,
            price: 100.0,
            quantity: Quantity::from_kwh(kwh),
            partner: Partner::None,
            reputation: 0.5,
        }
    }

    fn trade(stage: Stage, price: f64, kwh: f64) -> Trade {
        Trade {
            period: 0,
            stage,
            buyer: Party::Agent(0),
            seller: if stage == Stage::Dso {
                Party::Dso
            } else {
                Party::Agent(1)
            },
            price,
            quantity: Quantity::from_kwh(kwh),
            loss: 0.0,
            fees: FeeBreakdown::default(),
        }
    }

    #[test]
    fn empty_market() {
        let k = compute_kpis(&inputs(&[], &[]));
        assert_eq!(k.social_welfare, 0.0);
        assert_eq!(k.liquidity, 0.0);
        assert_eq!(k.self_consumption, 1.0);
        assert_eq!(k.coordination_score, 1.0);
    }

    #[test]
    fn single_p2p_trade() {
        let trades = [trade(Stage::Auction, 150.0, 10.0)];
        let k = compute_kpis(&inputs(&trades, &[]));
        assert!((k.social_welfare - 1.5).abs() < 1e-12);
        assert_eq!(k.liquidity, 10.0);
        assert_eq!(k.self_consumption, 1.0);
    }

    #[test]
    fn balanced_submissions() {
        let orders = [order(Side::Buy, 30.0), order(Side::Sell, 30.0)];
        let k = compute_kpis(&inputs(&[], &orders));
        assert_eq!(k.imbalance, 0.0);
        assert_eq!(k.coordination_score, 1.0);
    }

    #[test]
    fn cooperation_factor_is_a_mean() {
        let mut k = KpiSet {
            coordination_score: 1.0,
            self_consumption: 1.0,
            avg_congestion: 0.0,
            normalized_welfare: 1.0,
            ..KpiSet::default()
        };
        assert_eq!(cooperation_factor(&k), 1.0);
        k = KpiSet {
            coordination_score: 0.0,
            self_consumption: 0.0,
            avg_congestion: 1.0,
            normalized_welfare: 0.0,
            ..k
        };
        assert_eq!(cooperation_factor(&k), 0.0);
        k = KpiSet {
            coordination_score: 1.0,
            self_consumption: 0.5,
            avg_congestion: 0.5,
            normalized_welfare: 0.0,
            ..k
        };
        assert_eq!(cooperation_factor(&k), 0.5);
    }

    #[test]
    fn contribution_examples() {
        let idle = SettlementRecord::default();
        assert_eq!(contribution_factor(&idle, -10.0), 0.5);
        let p2p_seller = SettlementRecord {
            sold: 5.0,
            p2p_sold: 5.0,
            ..SettlementRecord::default()
        };
        assert!((contribution_factor(&p2p_seller, -10.0) - 1.0).abs() < 1e-12);
        let dso_buyer = SettlementRecord {
            bought: 5.0,
            dso_bought: 5.0,
            ..SettlementRecord::default()
        };
        assert!((contribution_factor(&dso_buyer, -10.0) - 0.2).abs() < 1e-12);
    }

    fn ctx(f_coop: f64) -> RewardContext {
        RewardContext {
            submitted: 0.0,
            grid_balance: 0.0,
            previous_price: None,
            current_price: None,
            f_coop,
        }
    }

    #[test]
    fn reward_examples() {
        let busy = SettlementRecord {
            sold: 10.0,
            p2p_sold: 4.0,
            dso_sold: 6.0,
            deferred: 3.0,
            profit_delta: 7.0,
            ..SettlementRecord::default()
        };
        assert_eq!(compute_reward(&busy, &ctx(0.7), &RewardConfig::zero()).r_total, 0.0);

        let parts = RewardBreakdown {
            r_base: 10.0,
            f_coop: 0.5,
            cooperation_gain: 1.0,
            f_contrib: 0.4,
            ..RewardBreakdown::default()
        };
        assert!((parts.recompose() - 12.0).abs() < 1e-12);

        let unmet = SettlementRecord {
            deferred: 5.0,
            ..SettlementRecord::default()
        };
        let cfg = RewardConfig {
            gamma_ud: 2.0,
            ..RewardConfig::zero()
        };
        assert_eq!(compute_reward(&unmet, &ctx(0.5), &cfg).r_total, -10.0);
    }

    proptest! {
        #[test]
        fn fraction_kpis_bounded(
            book in prop::collection::vec((any::<bool>(), 0.1f64..100.0, 35.0f64..300.0), 0..20),
            fills in prop::collection::vec((any::<bool>(), 0.1f64..100.0, 35.0f64..300.0), 0..20),
            congestion in 0.0f64..=1.0, capacity in 1.0f64..2000.0, flex in 0.0f64..500.0,
            prices in prop::collection::vec(35.0f64..300.0, 0..10),
            volumes in prop::collection::vec(0.0f64..300.0, 0..10),
        ) {
            let orders: Vec<Order> = book.iter().map(|&(buy, q, p)| Order {
                price: p,
                ..order(if buy { Side::Buy } else { Side::Sell }, q)
            }).collect();
            let trades: Vec<Trade> = fills.iter()
                .map(|&(p2p, q, p)| trade(if p2p { Stage::Auction } else { Stage::Dso }, p, q))
                .collect();
            let k = compute_kpis(&KpiInputs {
                grid_capacity: capacity,
                avg_congestion: congestion,
                available_flexibility: flex,
                price_history: &prices,
                volume_history: &volumes,
                ..inputs(&trades, &orders)
            });
            for (name, v) in k.fractions() {
                prop_assert!((0.0..=1.0).contains(&v), "{name} = {v}");
            }
            prop_assert_eq!(k.coordination_score + k.imbalance, 1.0);
            prop_assert!(k.social_welfare >= 0.0);
            prop_assert!((0.0..=1.0).contains(&cooperation_factor(&k)));
        }

        #[test]
        fn reward_recomposes_and_is_monotone_in_coop(
            profit in -50.0f64..50.0, sold in 0.0f64..20.0, bought in 0.0f64..20.0,
            p2p_share in 0.0f64..=1.0, deferred in 0.0f64..10.0, balance in -40.0f64..40.0,
            f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0,
        ) {
            let rec = SettlementRecord {
                profit_delta: profit,
                sold,
                bought,
                p2p_sold: sold * p2p_share,
                dso_sold: sold * (1.0 - p2p_share),
                dso_bought: bought,
                deferred,
                ..SettlementRecord::default()
            };
            let cfg = RewardConfig::default();
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let c = RewardContext { submitted: sold + bought, grid_balance: balance, ..ctx(lo) };
            let a = compute_reward(&rec, &c, &cfg);
            let b = compute_reward(&rec, &RewardContext { f_coop: hi, ..c }, &cfg);
            prop_assert!((a.recompose() - a.r_total).abs() <= 1e-9);
            if a.r_base > 0.0 {
                prop_assert!(b.r_total >= a.r_total);
            }
        }
    }
}
