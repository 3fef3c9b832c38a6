//! Composite DSO grid-usage fee. Every component is a fraction of the trade value
//! q·p (kWh × $/MWh × 10⁻³ = $).

use serde::{Deserialize, Serialize};

use super::{Party, Trade};
use crate::error::{Result, SimError};
use crate::grid::GridState;
use crate::units::value_dollars;

/// Below this magnitude the grid counts as balanced (kWh).
const BALANCED_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeeConfig {
    pub f_cong: f64,
    /// Per unit distance.
    pub f_trans: f64,
    pub f_imb: f64,
    /// Voltage drop per unit distance.
    pub f_volt: f64,
    /// Cap on the thermal stress factor.
    pub f_threshold: f64,
    pub f_zone: f64,
    pub c_threshold: f64,
    pub v_threshold: f64,
    pub t_threshold: f64,
}

impl Default for FeeConfig {
    fn default() -> Self {
        FeeConfig {
            f_cong: 0.1,
            f_trans: 0.01,
            f_imb: 0.05,
            f_volt: 0.01,
            f_threshold: 0.05,
            f_zone: 0.02,
            c_threshold: 0.8,
            v_threshold: 0.05,
            t_threshold: 0.2,
        }
    }
}

impl FeeConfig {
    /// All factors zero; thresholds at their defaults.
    pub fn zero() -> Self {
        FeeConfig {
            f_cong: 0.0,
            f_trans: 0.0,
            f_imb: 0.0,
            f_volt: 0.0,
            f_threshold: 0.0,
            f_zone: 0.0,
            ..FeeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let factors = [
            ("fees.f_cong", self.f_cong),
            ("fees.f_trans", self.f_trans),
            ("fees.f_imb", self.f_imb),
            ("fees.f_volt", self.f_volt),
            ("fees.f_threshold", self.f_threshold),
            ("fees.f_zone", self.f_zone),
        ];
        for (name, v) in factors {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::config(name, "must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("fees.c_threshold", self.c_threshold),
            ("fees.v_threshold", self.v_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::config(name, "must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.t_threshold) {
            return Err(SimError::config("fees.t_threshold", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeeBreakdown {
    pub congestion: f64,
    pub transmission: f64,
    pub imbalance: f64,
    pub voltage: f64,
    pub thermal: f64,
    pub zone: f64,
    pub total: f64,
    /// Signed balance impact score in [-1, 1].
    pub balance_impact: f64,
}

/// Everything the fee schedule needs to know about one trade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeeInputs {
    pub quantity: f64,
    pub price: f64,
    pub distance: f64,
    pub same_zone: bool,
    /// Period congestion in [0, 1].
    pub congestion: f64,
    pub balance_impact: f64,
}

/// Balance impact of a DSO trade: positive when the DSO absorbs the excess
/// (buys during surplus, sells during deficit), negative when it adds to it.
pub fn balance_impact(dso_buying: bool, quantity: f64, grid_balance: f64) -> f64 {
    if grid_balance.abs() < BALANCED_EPS {
        return 0.0;
    }
    let magnitude = (quantity / grid_balance.abs()).min(1.0);
    let relieves = dso_buying == (grid_balance > 0.0);
    if relieves {
        magnitude
    } else {
        -magnitude
    }
}

pub fn fee_breakdown(inputs: &FeeInputs, config: &FeeConfig) -> FeeBreakdown {
    let value = value_dollars(inputs.quantity, inputs.price);
    let c = inputs.congestion;
    let congestion = config.f_cong * (c - config.c_threshold).max(0.0) * value;
    let transmission = config.f_trans * inputs.distance * value;
    let imbalance = config.f_imb * inputs.balance_impact.abs() * value;
    let v_drop = config.f_volt * inputs.distance;
    let voltage = v_drop.min(config.v_threshold) * value;
    let thermal_stress = ((c - config.t_threshold) / (1.0 - config.t_threshold)).max(0.0);
    let thermal = thermal_stress.min(config.f_threshold) * value;
    let zone = if inputs.same_zone { -config.f_zone * value } else { 0.0 };
    FeeBreakdown {
        congestion,
        transmission,
        imbalance,
        voltage,
        thermal,
        zone,
        total: congestion + transmission + imbalance + voltage + thermal + zone,
        balance_impact: inputs.balance_impact,
    }
}

/// Fee for an executed trade given the period's congestion and pre-clearing grid
/// balance. P2P trades leave the grid balance unchanged and have zero impact score.
pub fn dso_fee(
    trade: &Trade,
    grid: &GridState,
    config: &FeeConfig,
    congestion: f64,
    grid_balance: f64,
) -> FeeBreakdown {
    let node = |p: Party| match p {
        Party::Agent(id) => grid.agent_node(id),
        Party::Dso => grid.dso_node(),
    };
    let (a, b) = (node(trade.seller), node(trade.buyer));
    let q = trade.quantity.kwh();
    let impact = match (trade.buyer, trade.seller) {
        (Party::Dso, _) => balance_impact(true, q, grid_balance),
        (_, Party::Dso) => balance_impact(false, q, grid_balance),
        _ => 0.0,
    };
    fee_breakdown(
        &FeeInputs {
            quantity: q,
            price: trade.price,
            distance: grid.node_distance(a, b),
            same_zone: grid.same_zone_nodes(a, b),
            congestion,
            balance_impact: impact,
        },
        config,
    )
}
