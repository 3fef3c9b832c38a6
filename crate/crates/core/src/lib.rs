//! Deterministic, seedable local energy market simulator.
//!
//! Prosumer agents with PV and optional batteries trade over a constrained grid
//! graph through a three-stage market (mutual preference, double auction, DSO
//! backstop). Each period settles energy and money, updates KPIs, rewards and
//! reputations, and seals the trades into a hash-chained ledger.

pub mod agent;
pub mod cooperation;
pub mod environment;
pub mod episode;
pub mod error;
pub mod grid;
pub mod ledger;
pub mod market;
pub mod policies;
pub mod profiles;
pub mod protocol;
pub mod reputation;
pub mod scenario;
pub mod units;

pub use agent::{apply_battery_flow, AgentId, AgentState, Battery, SettlementRecord};
pub use cooperation::{
    compute_kpis, compute_reward, contribution_factor, cooperation_factor, KpiInputs, KpiSet, RewardBreakdown,
    RewardConfig, RewardContext,
};
pub use environment::{obs_index, ActionVector, EnvState, ObservationVector, StepInfo, StepResult, SystemBalance};
pub use episode::{run_zero_intelligence, Episode, ZeroIntelligence};
pub use error::{Result, SimError};
pub use grid::{build_topology, transmission_loss, GridConfig, GridState, TopologyKind};
pub use ledger::{seal_block, verify_chain, Block, Difficulty, Digest, Ledger};
pub use market::{
    action_to_order, clear_period, clearing_price, dso_clear, dso_fee, preference_match, price_match, ClearingContext,
    ClearingMechanism, DsoState, FeeBreakdown, FeeConfig, MarketBounds, MarketStats, Order, Partner, Party, Side,
    Stage, Trade,
};
pub use policies::{rule_based_partner, zero_intelligence_action, PartnerWeights, PeerInfo};
pub use profiles::{
    generate_demand, generate_dso_prices, generate_generation, smooth, DsoPriceConfig, ProfileConfig, TimeSeries,
};
pub use reputation::{update_reputation, ReputationConfig, ReputationState};
pub use scenario::{AgentTemplate, BatteryConfig, ScenarioConfig};
pub use units::Quantity;
