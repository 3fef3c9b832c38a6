//! Bundled case-study scenarios carry the published setup.

use lemsim_cli::scenarios;
use lemsim_core::{ClearingMechanism, TopologyKind};

#[test]
fn shared_case_study_parameters() {
    for name in ["no_battery", "strategic_battery"] {
        let c = scenarios::load(name).unwrap();
        assert_eq!(c.agent_count, 7, "{name}");
        assert_eq!(c.periods, 24, "{name}");
        assert_eq!(c.grid.topology, TopologyKind::Mesh, "{name}");
        assert_eq!(c.grid.total_capacity, 1200.0, "{name}");
        assert_eq!(c.clearing_mechanism, ClearingMechanism::Average, "{name}");
        assert_eq!((c.market.p_min, c.market.p_max), (35.0, 280.0), "{name}");
        assert_eq!((c.market.q_min, c.market.q_max), (0.1, 200.0), "{name}");
        for t in c.resolve_agents().unwrap() {
            assert_eq!(t.nominal_capacity, 60.0, "{name}");
            assert!(t.capacity_jitter > 0.0, "{name}: capacity should vary");
        }
    }
}

#[test]
fn no_battery_has_no_storage() {
    let c = scenarios::load("no_battery").unwrap();
    assert!(c.resolve_agents().unwrap().iter().all(|t| t.battery.is_none()));
}

#[test]
fn strategic_battery_storage() {
    let c = scenarios::load("strategic_battery").unwrap();
    let agents = c.resolve_agents().unwrap();
    let ratios: Vec<f64> = agents.iter().map(|t| t.battery.as_ref().unwrap().ratio).collect();
    assert!(ratios.iter().all(|r| (0.5..=1.2).contains(r)), "{ratios:?}");
    assert_eq!(ratios.iter().copied().fold(f64::INFINITY, f64::min), 0.5);
    assert_eq!(ratios.iter().copied().fold(0.0, f64::max), 1.2);
    for t in &agents {
        let b = t.battery.as_ref().unwrap();
        assert_eq!((b.eta_charge, b.eta_discharge), (0.95, 0.95));
        assert_eq!((b.soc_min, b.soc_max), (0.1, 0.9));
    }
    // Morning producers and evening consumers.
    let early = agents.iter().filter(|t| t.irradiance_peak_period < 12.0).count();
    let evening = agents
        .iter()
        .filter(|t| t.demand_evening_magnitude > t.demand_morning_magnitude * 2.0)
        .count();
    assert!(early > 0 && evening > 0);
}
