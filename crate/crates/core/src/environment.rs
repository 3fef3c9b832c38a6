//! The simulation loop: reset, step, and observation assembly.

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, Battery, SettlementRecord};
use crate::cooperation::{
    compute_kpis, compute_reward, cooperation_factor, KpiInputs, KpiSet, RewardBreakdown, RewardContext,
};
use crate::error::{Result, SimError};
use crate::grid::{grid_balance, GridState};
use crate::ledger::{Digest, Ledger};
use crate::market::{
    action_to_order, clear_period, ClearingContext, DsoState, MarketStats, Order, Partner, Party, Trade,
};
use crate::policies::{rule_based_partner, PeerInfo};
use crate::profiles::{generate_demand, generate_dso_prices, generate_generation, TimeSeries};
use crate::reputation::{update_reputation, ReputationState};
use crate::scenario::ScenarioConfig;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raw agent action: bid price, quantity, side selector and partner selector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionVector {
    pub p_bid: f64,
    pub q_bid: f64,
    /// `>= 0.5` buys, otherwise sells.
    pub alpha: f64,
    /// Rounded: 0 no preference, `1..=n` agent `beta - 1`, `n + 1` the DSO.
    pub beta: f64,
}

impl ActionVector {
    pub fn is_finite(&self) -> bool {
        self.p_bid.is_finite() && self.q_bid.is_finite() && self.alpha.is_finite() && self.beta.is_finite()
    }

    /// An action that never yields an order.
    pub fn abstain() -> Self {
        ActionVector::default()
    }
}

/// Index map of an observation vector for `n` agents.
///
/// | range | content |
/// |---|---|
/// | 0 | last P2P clearing price ($/MWh, 0 if none) |
/// | 1 | last total traded volume (kWh) |
/// | 2 | last P2P volume |
/// | 3 | last DSO volume |
/// | 4 | feed-in tariff for the coming period |
/// | 5 | utility price for the coming period |
/// | 6 .. 6+n | every agent's reputation |
/// | 6+n | own generation for the coming period |
/// | 7+n | own demand for the coming period |
/// | 8+n | own SoC (0 without a battery) |
/// | 9+n | own cumulative profit ($) |
/// | 10+n | own reputation |
/// | 11+n .. 16+n | coordination, congestion, imbalance, self-consumption, normalized welfare |
pub mod obs_index {
    pub const LAST_PRICE: usize = 0;
    pub const LAST_VOLUME: usize = 1;
    pub const LAST_P2P_VOLUME: usize = 2;
    pub const LAST_DSO_VOLUME: usize = 3;
    pub const FIT: usize = 4;
    pub const UTILITY: usize = 5;
    pub const REPUTATIONS: usize = 6;
    pub const MARKET_LEN: usize = 6;
    pub const PRIVATE_LEN: usize = 5;
    pub const KPI_LEN: usize = 5;

    pub fn private_start(n: usize) -> usize {
        MARKET_LEN + n
    }

    pub fn kpi_start(n: usize) -> usize {
        private_start(n) + PRIVATE_LEN
    }

    pub fn len(n: usize) -> usize {
        kpi_start(n) + KPI_LEN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationVector(pub Vec<f64>);

impl ObservationVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn market_block(&self, n: usize) -> &[f64] {
        &self.0[..obs_index::private_start(n)]
    }

    pub fn private_block(&self, n: usize) -> &[f64] {
        &self.0[obs_index::private_start(n)..obs_index::kpi_start(n)]
    }

    pub fn kpi_block(&self, n: usize) -> &[f64] {
        &self.0[obs_index::kpi_start(n)..]
    }
}

/// System-wide energy accounting for one period (kWh).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemBalance {
    pub generation: f64,
    pub discharge: f64,
    /// Energy the DSO injected.
    pub dso_sold: f64,
    pub satisfied: f64,
    pub charge_input: f64,
    /// Energy that reached the DSO, net of losses.
    pub dso_received: f64,
    pub losses: f64,
    pub curtailed: f64,
}

impl SystemBalance {
    pub fn residual(&self) -> f64 {
        (self.generation + self.discharge + self.dso_sold)
            - (self.satisfied + self.charge_input + self.dso_received + self.losses + self.curtailed)
    }
}

/// Everything a step produced besides the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub period: usize,
    pub grid_balance: f64,
    pub orders: Vec<Order>,
    pub trades: Vec<Trade>,
    pub stats: MarketStats,
    pub kpis: KpiSet,
    pub f_coop: f64,
    pub rewards: Vec<RewardBreakdown>,
    pub settlements: Vec<SettlementRecord>,
    pub balance: SystemBalance,
    pub edge_congestion: Vec<f64>,
    /// State of charge after settlement; `None` for agents without storage.
    pub soc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<ObservationVector>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    config: ScenarioConfig,
    seed: u64,
    period: usize,
    agents: Vec<AgentState>,
    grid: GridState,
    dso: DsoState,
    fit: TimeSeries,
    utility: TimeSeries,
    last_stats: MarketStats,
    kpis: KpiSet,
    reputation: ReputationState,
    ledger: Ledger,
    price_history: Vec<f64>,
    volume_history: Vec<f64>,
}

/// Seed stream used for the capacity jitter draw, kept apart from profile streams.
const JITTER_SALT: u64 = 0x6a17_7e55;

impl EnvState {
    /// Builds a fresh episode: profiles, grid, batteries at their initial SoC,
    /// neutral reputations and a sealed genesis block.
    pub fn reset(config: &ScenarioConfig, seed: u64) -> Result<(EnvState, Vec<ObservationVector>)> {
        config.validate()?;
        let templates = config.resolve_agents()?;
        let grid = GridState::build(&config.grid, config.agent_count)?;
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(seed ^ JITTER_SALT);
        let mut agents = Vec::with_capacity(config.agent_count);
        for (i, t) in templates.iter().enumerate() {
            let u: f64 = jitter_rng.random_range(-1.0..=1.0);
            let capacity = t.nominal_capacity * (1.0 + t.capacity_jitter * u);
            let v: f64 = jitter_rng.random_range(-1.0..=1.0);
            let profile = t.profile_config(config.periods, capacity, t.timing_jitter * v, seed, i as u64);
            let (generation, demand) = if config.periods == 0 {
                (TimeSeries::zeros(0), TimeSeries::zeros(0))
            } else {
                (generate_generation(&profile)?, generate_demand(&profile)?)
            };
            let battery = t
                .battery
                .as_ref()
                .map(|b| {
                    Battery::new(
                        b.ratio * capacity,
                        b.initial_soc(),
                        b.soc_min,
                        b.soc_max,
                        b.eta_charge,
                        b.eta_discharge,
                        b.max_rate,
                    )
                })
                .transpose()?;
            agents.push(AgentState::new(i, grid.agent_node(i), generation, demand, battery));
        }
        let mut dso_cfg = config.dso_prices.clone();
        dso_cfg.periods = config.periods;
        let (fit, utility) = generate_dso_prices(&dso_cfg)?;
        let state = EnvState {
            config: config.clone(),
            seed,
            period: 0,
            agents,
            grid,
            dso: DsoState::default(),
            fit,
            utility,
            last_stats: MarketStats::default(),
            kpis: KpiSet::default(),
            reputation: ReputationState::new(config.agent_count),
            ledger: Ledger::new(config.ledger_difficulty),
            price_history: Vec::new(),
            volume_history: Vec::new(),
        };
        let obs = state.observations();
        Ok((state, obs))
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn periods(&self) -> usize {
        self.config.periods
    }

    pub fn is_done(&self) -> bool {
        self.period >= self.config.periods
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn grid(&self) -> &GridState {
        &self.grid
    }

    pub fn dso(&self) -> &DsoState {
        &self.dso
    }

    pub fn fit(&self) -> &TimeSeries {
        &self.fit
    }

    pub fn utility(&self) -> &TimeSeries {
        &self.utility
    }

    pub fn kpis(&self) -> &KpiSet {
        &self.kpis
    }

    pub fn last_stats(&self) -> &MarketStats {
        &self.last_stats
    }

    pub fn reputation(&self) -> &ReputationState {
        &self.reputation
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// SHA-256 of the canonical JSON form of the whole state.
    pub fn digest(&self) -> Digest {
        Digest::of(&serde_json::to_vec(self).expect("state serializes"))
    }

    pub fn observations(&self) -> Vec<ObservationVector> {
        (0..self.agents.len()).map(|i| self.build_observation(i)).collect()
    }

    pub fn build_observation(&self, agent: usize) -> ObservationVector {
        let n = self.agents.len();
        let t = self.period;
        let s = &self.last_stats;
        let mut v = Vec::with_capacity(obs_index::len(n));
        v.extend([
            s.clearing_price.unwrap_or(0.0),
            s.total_volume(),
            s.p2p_volume,
            s.dso_volume,
            self.fit.at(t),
            self.utility.at(t),
        ]);
        v.extend(self.agents.iter().map(|a| a.reputation));
        let a = &self.agents[agent];
        v.extend([
            a.generation.at(t),
            a.demand.at(t),
            a.soc().unwrap_or(0.0),
            a.profit,
            a.reputation,
        ]);
        let k = &self.kpis;
        v.extend([
            k.coordination_score,
            k.avg_congestion,
            k.imbalance,
            k.self_consumption,
            k.normalized_welfare,
        ]);
        ObservationVector(v)
    }

    fn fill_partner(&self, order: &mut Order) {
        if order.partner != Partner::None {
            return;
        }
        let peers: Vec<PeerInfo> = self
            .agents
            .iter()
            .filter(|p| p.id != order.agent)
            .map(|p| PeerInfo {
                id: p.id,
                reputation: p.reputation,
                distance: self.grid.electrical_distance(order.agent, p.id),
            })
            .collect();
        let d_max = self.grid.max_agent_distance();
        if let Some(j) = rule_based_partner(order.agent, &peers, d_max, &self.config.partner_weights) {
            order.partner = Partner::Agent(j);
        }
    }

    /// Advances one period. `actions` holds one action per agent, in id order.
    pub fn step(&mut self, actions: &[ActionVector]) -> Result<StepResult> {
        if self.is_done() {
            return Err(SimError::Lifecycle(format!(
                "episode finished after {} periods; call reset",
                self.config.periods
            )));
        }
        let n = self.agents.len();
        if actions.len() != n {
            return Err(SimError::Lifecycle(format!(
                "expected {n} actions, got {}",
                actions.len()
            )));
        }
        let t = self.period;

        // Clip actions into orders, optionally fill partner preferences.
        for a in &mut self.agents {
            a.energy_bought = 0.0;
            a.energy_sold = 0.0;
        }
        let available: f64 = self
            .agents
            .iter()
            .map(|a| {
                let (s, b) = a.feasible_bounds(t);
                s.max(b)
            })
            .sum();
        let mut orders: Vec<Order> = actions
            .iter()
            .zip(&self.agents)
            .filter_map(|(act, a)| action_to_order(act, a, &self.config.market, t, n))
            .collect();
        if self.config.rule_based_partner {
            for o in &mut orders {
                self.fill_partner(o);
            }
        }

        // Three-stage clearing.
        let balance = grid_balance(&self.agents, t);
        let ctx = ClearingContext {
            period: t,
            mechanism: self.config.clearing_mechanism,
            // Previous period's clearing price, else the tariff midpoint.
            reference_price: self
                .last_stats
                .clearing_price
                .unwrap_or((self.fit.at(t) + self.utility.at(t)) / 2.0),
            fit: self.fit.at(t),
            utility: self.utility.at(t),
            fees: self.config.fees.clone(),
            grid_balance: balance,
        };
        let outcome = clear_period(&orders, &ctx, &mut self.grid, &mut self.dso);
        let trades = outcome.trades;
        let stats = outcome.stats;

        // Settlement and battery dispatch.
        let mut per_agent: Vec<Vec<Trade>> = vec![Vec::new(); n];
        let mut sys = SystemBalance::default();
        for tr in &trades {
            sys.losses += tr.loss;
            if let Party::Agent(s) = tr.seller {
                per_agent[s].push(tr.clone());
            } else {
                sys.dso_sold += tr.quantity.kwh();
            }
            if let Party::Agent(b) = tr.buyer {
                per_agent[b].push(tr.clone());
            } else {
                sys.dso_received += tr.quantity.kwh() - tr.loss;
            }
        }
        let mut settlements = Vec::with_capacity(n);
        for (agent, own) in self.agents.iter_mut().zip(&per_agent) {
            let rec = agent.settle_trades(own, t)?;
            sys.generation += rec.generation;
            sys.discharge += rec.discharge_delivered;
            sys.satisfied += rec.satisfied;
            sys.charge_input += rec.charge_input;
            sys.curtailed += rec.curtailed;
            settlements.push(rec);
        }

        // KPIs and rewards.
        if let Some(p) = stats.clearing_price {
            self.price_history.push(p);
        }
        self.volume_history.push(stats.total_volume());
        let edge_congestion = self.grid.congestion().0;
        let kpis = compute_kpis(&KpiInputs {
            trades: &trades,
            orders: &orders,
            grid_capacity: self.grid.total_capacity(),
            avg_congestion: stats.average_congestion,
            grid_balance: balance,
            available_flexibility: available,
            price_history: &self.price_history,
            volume_history: &self.volume_history,
            window: self.config.reward.window,
            p_max: self.config.market.p_max,
        });
        let f_coop = cooperation_factor(&kpis);
        let mut submitted = vec![0.0; n];
        for o in &orders {
            submitted[o.agent] += o.quantity.kwh();
        }
        let rewards: Vec<RewardBreakdown> = settlements
            .iter()
            .map(|rec| {
                let ctx = RewardContext {
                    submitted: submitted[rec.agent],
                    grid_balance: balance,
                    previous_price: self.last_stats.clearing_price,
                    current_price: stats.clearing_price,
                    f_coop,
                };
                compute_reward(rec, &ctx, &self.config.reward)
            })
            .collect();

        // Reputation and ledger.
        self.reputation = update_reputation(
            &self.reputation,
            &trades,
            &orders,
            stats.clearing_price,
            balance,
            &self.config.reputation,
        );
        for (a, r) in self.agents.iter_mut().zip(&self.reputation.agents) {
            a.reputation = r.score;
        }
        self.ledger.append(t as u64, trades.clone());

        // Advance and observe.
        self.last_stats = stats.clone();
        self.kpis = kpis;
        self.period += 1;
        let observations = self.observations();
        Ok(StepResult {
            observations,
            rewards: rewards.iter().map(|r| r.r_total).collect(),
            done: self.is_done(),
            info: StepInfo {
                period: t,
                grid_balance: balance,
                orders,
                trades,
                stats,
                kpis,
                f_coop,
                rewards,
                settlements,
                balance: sys,
                edge_congestion,
                soc: self.agents.iter().map(AgentState::soc).collect(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TopologyKind;

    fn config(n: usize) -> ScenarioConfig {
        ScenarioConfig {
            agent_count: n,
            ledger_difficulty: crate::ledger::Difficulty::new(4).unwrap(),
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn reset_shapes() {
        let (state, obs) = EnvState::reset(&config(7), 1).unwrap();
        assert_eq!(obs.len(), 7);
        for o in &obs {
            assert_eq!(o.values().len(), obs_index::len(7));
            assert_eq!(o.kpi_block(7), obs[0].kpi_block(7));
            assert_eq!(o.kpi_block(7), &[1.0, 0.0, 0.0, 1.0, 0.0]);
            assert_eq!(&o.market_block(7)[..4], &[0.0; 4]);
        }
        assert_eq!(state.ledger().blocks().len(), 1);
        assert_eq!(state.period(), 0);
    }

    #[test]
    fn two_agent_line_layout() {
        let mut c = config(2);
        c.grid.topology = TopologyKind::Line;
        let (_, obs) = EnvState::reset(&c, 0).unwrap();
        assert_eq!(obs[0].values().len(), 18);
    }

    #[test]
    fn reset_is_deterministic() {
        let a = EnvState::reset(&config(5), 11).unwrap().0;
        let b = EnvState::reset(&config(5), 11).unwrap().0;
        assert_eq!(a.digest(), b.digest());
        let c = EnvState::reset(&config(5), 12).unwrap().0;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn abstaining_market() {
        let c = config(3);
        let (mut s, _) = EnvState::reset(&c, 3).unwrap();
        let mut steps = 0;
        loop {
            let r = s.step(&[ActionVector::abstain(); 3]).unwrap();
            steps += 1;
            assert!(r.info.trades.is_empty());
            assert_eq!(r.info.stats.average_congestion, 0.0);
            for (reward, rec) in r.info.rewards.iter().zip(&r.info.settlements) {
                // Only the stability credit survives: it is 1 with no price history.
                let expected = (c.reward.w_stability) * (1.0 + r.info.f_coop * 0.5) - c.reward.gamma_ud * rec.deferred;
                assert!((reward.r_total - expected).abs() < 1e-9);
            }
            assert!(r.info.balance.residual().abs() < 1e-6);
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 24);
        assert!(matches!(
            s.step(&[ActionVector::abstain(); 3]),
            Err(SimError::Lifecycle(_))
        ));
    }

    #[test]
    fn wrong_action_count() {
        let (mut s, _) = EnvState::reset(&config(3), 3).unwrap();
        assert!(s.step(&[ActionVector::abstain()]).is_err());
    }
}
