//! Prosumer state, battery physics, feasibility bounds and post-trade settlement.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::market::{Party, Trade};
use crate::profiles::TimeSeries;
use crate::units::value_dollars;

pub type AgentId = usize;

/// Tolerance for energy bookkeeping checks (kWh).
const ENERGY_EPS: f64 = 1e-9;

/// Stationary battery. Energy is tracked in kWh; state of charge is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    capacity: f64,
    energy: f64,
    soc_min: f64,
    soc_max: f64,
    eta_charge: f64,
    eta_discharge: f64,
    max_rate: f64,
}

impl Battery {
    /// `max_rate` (kWh per period) defaults to the nominal capacity when `None`.
    pub fn new(
        capacity: f64,
        soc: f64,
        soc_min: f64,
        soc_max: f64,
        eta_charge: f64,
        eta_discharge: f64,
        max_rate: Option<f64>,
    ) -> Result<Self> {
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(SimError::config("battery.capacity", "must be > 0"));
        }
        if !(0.0 <= soc_min && soc_min <= soc && soc <= soc_max && soc_max <= 1.0) {
            return Err(SimError::config(
                "battery.soc",
                format!("need 0 <= soc_min <= soc <= soc_max <= 1, got {soc_min}/{soc}/{soc_max}"),
            ));
        }
        for (name, eta) in [
            ("battery.eta_charge", eta_charge),
            ("battery.eta_discharge", eta_discharge),
        ] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(SimError::config(name, "efficiency must lie in (0, 1]"));
            }
        }
        let max_rate = max_rate.unwrap_or(capacity);
        if !(max_rate.is_finite() && max_rate > 0.0) {
            return Err(SimError::config("battery.max_rate", "must be > 0"));
        }
        Ok(Battery {
            capacity,
            energy: soc * capacity,
            soc_min,
            soc_max,
            eta_charge,
            eta_discharge,
            max_rate,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn soc(&self) -> f64 {
        self.energy / self.capacity
    }

    pub fn soc_min(&self) -> f64 {
        self.soc_min
    }

    pub fn soc_max(&self) -> f64 {
        self.soc_max
    }

    pub fn stored(&self) -> f64 {
        self.energy
    }

    pub fn eta_charge(&self) -> f64 {
        self.eta_charge
    }

    pub fn eta_discharge(&self) -> f64 {
        self.eta_discharge
    }

    fn floor(&self) -> f64 {
        self.soc_min * self.capacity
    }

    fn ceiling(&self) -> f64 {
        self.soc_max * self.capacity
    }

    /// Energy the battery can accept as input this period.
    pub fn chargeable(&self) -> f64 {
        ((self.soc_max - self.soc()) * self.capacity)
            .max(0.0)
            .min(self.max_rate)
    }

    /// Energy the battery can deliver this period, net of discharge losses.
    pub fn dischargeable(&self) -> f64 {
        ((self.energy - self.floor()).max(0.0) * self.eta_discharge).min(self.max_rate)
    }

    /// Pushes `net_energy` through the battery: positive charges, negative discharges.
    /// Returns the realized flow at the terminals (input accepted when charging,
    /// negative energy delivered when discharging); the caps absorb the rest.
    pub fn apply_flow(&mut self, net_energy: f64) -> f64 {
        if net_energy > 0.0 {
            let input = net_energy.min(self.max_rate);
            let target = (self.energy + input * self.eta_charge).min(self.ceiling());
            let stored = (target - self.energy).max(0.0);
            self.energy = target.max(self.energy);
            stored / self.eta_charge
        } else if net_energy < 0.0 {
            let delivered = (-net_energy).min(self.dischargeable());
            self.energy = (self.energy - delivered / self.eta_discharge).max(self.floor());
            -delivered
        } else {
            0.0
        }
    }
}

/// Functional form of [`Battery::apply_flow`]: returns the updated battery and the
/// realized flow.
pub fn apply_battery_flow(battery: &Battery, net_energy: f64) -> (Battery, f64) {
    let mut next = battery.clone();
    let realized = next.apply_flow(net_energy);
    (next, realized)
}

/// A prosumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub node: usize,
    pub generation: TimeSeries,
    pub demand: TimeSeries,
    pub battery: Option<Battery>,
    /// Cumulative profit ($).
    pub profit: f64,
    /// Energy bought and sold in the most recently settled period (kWh).
    pub energy_bought: f64,
    pub energy_sold: f64,
    /// Cumulative demand outcomes (kWh).
    pub demand_satisfied: f64,
    pub demand_deferred: f64,
    pub curtailed: f64,
    pub reputation: f64,
}

impl AgentState {
    pub fn new(id: AgentId, node: usize, generation: TimeSeries, demand: TimeSeries, battery: Option<Battery>) -> Self {
        AgentState {
            id,
            node,
            generation,
            demand,
            battery,
            profit: 0.0,
            energy_bought: 0.0,
            energy_sold: 0.0,
            demand_satisfied: 0.0,
            demand_deferred: 0.0,
            curtailed: 0.0,
            reputation: 0.5,
        }
    }

    pub fn soc(&self) -> Option<f64> {
        self.battery.as_ref().map(Battery::soc)
    }

    /// (G_t − D_t) + (bought − sold). Positive means surplus.
    pub fn energy_balance(&self, t: usize) -> f64 {
        (self.generation.at(t) - self.demand.at(t)) + (self.energy_bought - self.energy_sold)
    }

    /// Maximum sellable and purchasable energy at `t`, in that order.
    pub fn feasible_bounds(&self, t: usize) -> (f64, f64) {
        let net = self.generation.at(t) - self.demand.at(t);
        let (discharge, charge) = self
            .battery
            .as_ref()
            .map_or((0.0, 0.0), |b| (b.dischargeable(), b.chargeable()));
        (net.max(0.0) + discharge, (-net).max(0.0) + charge)
    }

    /// Books the period's trades: profit, energy counters, then battery dispatch.
    /// Surplus charges the battery before being curtailed; deficit discharges it
    /// before being deferred.
    pub fn settle_trades(&mut self, trades: &[Trade], t: usize) -> Result<SettlementRecord> {
        let me = Party::Agent(self.id);
        let mut rec = SettlementRecord {
            agent: self.id,
            period: t,
            generation: self.generation.at(t),
            demand: self.demand.at(t),
            ..SettlementRecord::default()
        };
        for trade in trades {
            let q = trade.quantity.kwh();
            let fee_share = trade.fees.total / 2.0;
            let p2p = trade.is_p2p();
            if trade.seller == me {
                rec.sold += q;
                rec.revenue += value_dollars(q, trade.price);
                rec.fees += fee_share;
                if p2p {
                    rec.p2p_sold += q;
                } else {
                    rec.dso_sold += q;
                }
            } else if trade.buyer == me {
                rec.bought += q;
                rec.received += q - trade.loss;
                rec.cost += value_dollars(q, trade.price);
                rec.fees += fee_share;
                if p2p {
                    rec.p2p_bought += q;
                } else {
                    rec.dso_bought += q;
                }
            } else {
                return Err(SimError::Consistency(format!(
                    "trade {} -> {} settled against agent {}",
                    trade.seller, trade.buyer, self.id
                )));
            }
        }
        rec.profit_delta = rec.revenue - rec.cost - rec.fees;

        let net = rec.generation + rec.received - rec.demand - rec.sold;
        if net >= 0.0 {
            let input = self.battery.as_mut().map_or(0.0, |b| b.apply_flow(net));
            rec.charge_input = input;
            rec.curtailed = net - input;
            rec.satisfied = rec.demand;
        } else {
            let delivered = self.battery.as_mut().map_or(0.0, |b| -b.apply_flow(net));
            rec.discharge_delivered = delivered;
            let shortfall = -net - delivered;
            if shortfall > rec.demand + ENERGY_EPS {
                return Err(SimError::Consistency(format!(
                    "agent {} sold {:.6} kWh more than it could supply in period {t}",
                    self.id,
                    shortfall - rec.demand
                )));
            }
            rec.deferred = shortfall.min(rec.demand);
            rec.satisfied = rec.demand - rec.deferred;
        }

        self.profit += rec.profit_delta;
        self.energy_bought = rec.bought;
        self.energy_sold = rec.sold;
        self.demand_satisfied += rec.satisfied;
        self.demand_deferred += rec.deferred;
        self.curtailed += rec.curtailed;
        Ok(rec)
    }
}

/// Per-agent, per-period settlement outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub agent: AgentId,
    pub period: usize,
    pub generation: f64,
    pub demand: f64,
    /// Energy sold (injected) and bought (paid for), kWh.
    pub sold: f64,
    pub bought: f64,
    /// Energy actually received after transmission losses.
    pub received: f64,
    pub p2p_sold: f64,
    pub p2p_bought: f64,
    pub dso_sold: f64,
    pub dso_bought: f64,
    pub revenue: f64,
    pub cost: f64,
    pub fees: f64,
    pub profit_delta: f64,
    pub charge_input: f64,
    pub discharge_delivered: f64,
    pub curtailed: f64,
    pub satisfied: f64,
    pub deferred: f64,
}

impl SettlementRecord {
    /// Supply minus use; zero up to rounding when the period conserves energy.
    pub fn conservation_residual(&self) -> f64 {
        (self.generation + self.received + self.discharge_delivered)
            - (self.satisfied + self.sold + self.charge_input + self.curtailed)
    }

    pub fn traded(&self) -> f64 {
        self.sold + self.bought
    }

    pub fn p2p_traded(&self) -> f64 {
        self.p2p_sold + self.p2p_bought
    }

    pub fn dso_traded(&self) -> f64 {
        self.dso_sold + self.dso_bought
    }
}
