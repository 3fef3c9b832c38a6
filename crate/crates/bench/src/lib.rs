//! Shared inputs for the benchmarks.

use lemsim_core::{Order, Partner, Quantity, ScenarioConfig, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A reproducible book of `n` single-agent orders with some mutual preferences.
pub fn random_book(seed: u64, n: usize) -> Vec<Order> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|agent| Order {
            agent,
            side: if rng.random() { Side::Buy } else { Side::Sell },
            price: rng.random_range(35.0..=280.0),
            quantity: Quantity::from_kwh(rng.random_range(0.1..50.0)),
            partner: if rng.random_range(0..4) == 0 {
                Partner::Agent(rng.random_range(0..n))
            } else {
                Partner::None
            },
            reputation: rng.random_range(0.0..=1.0),
        })
        .collect()
}

/// Default scenario resized to `agents`.
pub fn scenario(agents: usize) -> ScenarioConfig {
    ScenarioConfig {
        agent_count: agents,
        ..ScenarioConfig::default()
    }
}
