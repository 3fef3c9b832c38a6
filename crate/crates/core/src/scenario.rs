//! Scenario documents: the full JSON description of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cooperation::RewardConfig;
use crate::error::{Result, SimError};
use crate::grid::GridConfig;
use crate::ledger::Difficulty;
use crate::market::{ClearingMechanism, FeeConfig, MarketBounds};
use crate::policies::PartnerWeights;
use crate::profiles::{DsoPriceConfig, ProfileConfig};
use crate::reputation::ReputationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    /// Usable capacity as a multiple of the agent's PV nominal capacity (kWh per kW).
    pub ratio: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Defaults to the midpoint of `[soc_min, soc_max]`.
    pub initial_soc: Option<f64>,
    /// kWh per period; defaults to the capacity.
    pub max_rate: Option<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            ratio: 1.0,
            eta_charge: 0.95,
            eta_discharge: 0.95,
            soc_min: 0.1,
            soc_max: 0.9,
            initial_soc: None,
            max_rate: None,
        }
    }
}

impl BatteryConfig {
    pub fn initial_soc(&self) -> f64 {
        self.initial_soc.unwrap_or((self.soc_min + self.soc_max) / 2.0)
    }
}

/// Per-agent asset and profile parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentTemplate {
    /// PV nominal capacity (kW).
    pub nominal_capacity: f64,
    /// Uniform relative jitter applied to the capacity at reset.
    pub capacity_jitter: f64,
    /// Uniform shift (± periods) applied to the irradiance and demand peaks at reset.
    pub timing_jitter: f64,
    pub irradiance_peak_period: f64,
    pub irradiance_width: f64,
    pub noise_sigma: f64,
    pub cloud_probability: f64,
    pub cloud_depth: f64,
    pub demand_base: f64,
    pub demand_morning_peak: usize,
    pub demand_morning_magnitude: f64,
    pub demand_evening_peak: usize,
    pub demand_evening_magnitude: f64,
    pub demand_width: f64,
    pub smoothing_window: usize,
    pub battery: Option<BatteryConfig>,
}

impl Default for AgentTemplate {
    fn default() -> Self {
        let p = ProfileConfig::default();
        AgentTemplate {
            nominal_capacity: p.nominal_capacity,
            capacity_jitter: 0.1,
            timing_jitter: 0.0,
            irradiance_peak_period: p.irradiance_peak_period,
            irradiance_width: p.irradiance_width,
            noise_sigma: p.noise_sigma,
            cloud_probability: p.cloud_probability,
            cloud_depth: p.cloud_depth,
            demand_base: p.demand_base,
            demand_morning_peak: p.demand_morning_peak,
            demand_morning_magnitude: p.demand_morning_magnitude,
            demand_evening_peak: p.demand_evening_peak,
            demand_evening_magnitude: p.demand_evening_magnitude,
            demand_width: p.demand_width,
            smoothing_window: p.smoothing_window,
            battery: None,
        }
    }
}

impl AgentTemplate {
    /// Profile parameters for a concrete agent; `shift` moves every peak by that
    /// many periods (demand peaks rounded and kept inside the horizon).
    pub fn profile_config(
        &self,
        periods: usize,
        nominal_capacity: f64,
        shift: f64,
        seed: u64,
        stream: u64,
    ) -> ProfileConfig {
        let last = periods.saturating_sub(1) as f64;
        let move_peak = |p: usize| (p as f64 + shift).round().clamp(0.0, last) as usize;
        ProfileConfig {
            periods,
            nominal_capacity,
            irradiance_peak_period: self.irradiance_peak_period + shift,
            irradiance_width: self.irradiance_width,
            noise_sigma: self.noise_sigma,
            cloud_probability: self.cloud_probability,
            cloud_depth: self.cloud_depth,
            demand_base: self.demand_base,
            demand_morning_peak: move_peak(self.demand_morning_peak),
            demand_morning_magnitude: self.demand_morning_magnitude,
            demand_evening_peak: move_peak(self.demand_evening_peak),
            demand_evening_magnitude: self.demand_evening_magnitude,
            demand_width: self.demand_width,
            smoothing_window: self.smoothing_window,
            seed,
            stream,
        }
    }

    fn validate(&self, periods: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.capacity_jitter) {
            return Err(SimError::config("capacity_jitter", "must lie in [0, 1)"));
        }
        if !(self.timing_jitter.is_finite() && self.timing_jitter >= 0.0) {
            return Err(SimError::config("timing_jitter", "must be >= 0"));
        }
        let profile = self.profile_config(periods.max(1), self.nominal_capacity, 0.0, 0, 0);
        profile.validate()?;
        // Peak indices only matter when there are enough periods to hold them.
        if periods > 0 && (self.demand_morning_peak >= periods || self.demand_evening_peak >= periods) {
            return Err(SimError::config("demand_evening_peak", "peak index must be < periods"));
        }
        if let Some(b) = &self.battery {
            if !(b.ratio.is_finite() && b.ratio > 0.0) {
                return Err(SimError::config("battery.ratio", "must be > 0"));
            }
            crate::agent::Battery::new(
                b.ratio * self.nominal_capacity.max(1.0),
                b.initial_soc(),
                b.soc_min,
                b.soc_max,
                b.eta_charge,
                b.eta_discharge,
                b.max_rate,
            )?;
        }
        Ok(())
    }
}

/// Partial template applied to the listed agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOverride {
    pub agents: Vec<usize>,
    #[serde(flatten)]
    pub fields: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    /// Trading periods per episode.
    pub periods: usize,
    pub seeds: Vec<u64>,
    pub agent_count: usize,
    pub agent_defaults: AgentTemplate,
    pub agent_overrides: Vec<AgentOverride>,
    pub grid: GridConfig,
    pub market: MarketBounds,
    pub clearing_mechanism: ClearingMechanism,
    pub dso_prices: DsoPriceConfig,
    pub fees: FeeConfig,
    pub reward: RewardConfig,
    pub reputation: ReputationConfig,
    pub ledger_difficulty: Difficulty,
    /// Fill missing partner preferences with the reputation/distance heuristic.
    pub rule_based_partner: bool,
    pub partner_weights: PartnerWeights,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "default".into(),
            description: String::new(),
            periods: 24,
            seeds: vec![42],
            agent_count: 7,
            agent_defaults: AgentTemplate::default(),
            agent_overrides: Vec::new(),
            grid: GridConfig::default(),
            market: MarketBounds::default(),
            clearing_mechanism: ClearingMechanism::Average,
            dso_prices: DsoPriceConfig::default(),
            fees: FeeConfig::default(),
            reward: RewardConfig::default(),
            reputation: ReputationConfig::default(),
            ledger_difficulty: Difficulty::default(),
            rule_based_partner: false,
            partner_weights: PartnerWeights::default(),
        }
    }
}

fn prefixed(prefix: &str, err: SimError) -> SimError {
    match err {
        SimError::Config { field, reason } => SimError::config(format!("{prefix}.{field}"), reason),
        other => other,
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario; errors name the offending field path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SimError::config(
                if path.is_empty() { ".".into() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Effective template for every agent after overrides.
    pub fn resolve_agents(&self) -> Result<Vec<AgentTemplate>> {
        let base = serde_json::to_value(&self.agent_defaults).expect("template serializes");
        let mut values = vec![base; self.agent_count];
        for (k, o) in self.agent_overrides.iter().enumerate() {
            for &i in &o.agents {
                let slot = values.get_mut(i).ok_or_else(|| {
                    SimError::config(
                        format!("agent_overrides[{k}].agents"),
                        format!("agent {i} out of range (agent_count {})", self.agent_count),
                    )
                })?;
                merge(slot, &Value::Object(o.fields.clone()));
            }
        }
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_path_to_error::deserialize::<_, AgentTemplate>(v)
                    .map_err(|e| SimError::config(format!("agents[{i}].{}", e.path()), e.into_inner().to_string()))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agent_count < 2 {
            return Err(SimError::config("agent_count", "need at least 2 agents"));
        }
        if self.seeds.is_empty() {
            return Err(SimError::config("seeds", "need at least one seed"));
        }
        self.market.validate()?;
        let mut dso = self.dso_prices.clone();
        dso.periods = self.periods;
        dso.validate().map_err(|e| prefixed("dso_prices", e))?;
        self.fees.validate().map_err(|e| prefixed("fees", e))?;
        self.reward.validate()?;
        self.reputation.validate()?;
        self.partner_weights.validate()?;
        for (i, t) in self.resolve_agents()?.iter().enumerate() {
            t.validate(self.periods)
                .map_err(|e| prefixed(&format!("agents[{i}]"), e))?;
        }
        crate::grid::GridState::build(&self.grid, self.agent_count).map_err(|e| match e {
            SimError::Config { field, reason } if !field.contains('.') => {
                SimError::config(format!("grid.{field}"), reason)
            }
            other => other,
        })?;
        Ok(())
    }
}
