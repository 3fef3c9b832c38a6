//! Zero-intelligence episodes: the batch driver shared by the CLI, tests and benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::environment::{ActionVector, EnvState, StepInfo};
use crate::error::Result;
use crate::policies::zero_intelligence_action;
use crate::scenario::ScenarioConfig;

/// Offset separating policy randomness from profile randomness for the same seed.
const POLICY_SALT: u64 = 0x005e_ed0f_a9e7;

/// One independent random stream per agent.
#[derive(Debug, Clone)]
pub struct ZeroIntelligence {
    rngs: Vec<ChaCha8Rng>,
}

impl ZeroIntelligence {
    pub fn new(seed: u64, n_agents: usize) -> Self {
        let rngs = (0..n_agents)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ POLICY_SALT);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        ZeroIntelligence { rngs }
    }

    pub fn actions(&mut self, state: &EnvState) -> Vec<ActionVector> {
        let bounds = &state.config().market;
        let t = state.period();
        state
            .agents()
            .iter()
            .zip(&mut self.rngs)
            .map(|(a, rng)| zero_intelligence_action(rng, bounds, a, t))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub seed: u64,
    pub steps: Vec<StepInfo>,
    pub final_state: EnvState,
}

impl Episode {
    /// Σ over agents and periods of the total reward.
    pub fn aggregate_reward(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| s.rewards.iter().map(|r| r.r_total))
            .fold(0.0, |a, x| a + x)
    }
}

/// Runs a full episode with zero-intelligence agents.
pub fn run_zero_intelligence(config: &ScenarioConfig, seed: u64) -> Result<Episode> {
    let (mut state, _) = EnvState::reset(config, seed)?;
    let mut policy = ZeroIntelligence::new(seed, config.agent_count);
    let mut steps = Vec::with_capacity(config.periods);
    while !state.is_done() {
        let actions = policy.actions(&state);
        steps.push(state.step(&actions)?.info);
    }
    Ok(Episode {
        seed,
        steps,
        final_state: state,
    })
}
