//! Newline-delimited JSON reset/step protocol for external controllers.
//!
//! Requests:
//! ```json
//! {"version": 1, "type": "reset", "seed": 7, "config_path": "optional/scenario.json"}
//! {"version": 1, "type": "step", "actions": [{"p_bid": 150, "q_bid": 5, "alpha": 1, "beta": 0}]}
//! {"version": 1, "type": "close"}
//! ```
//! Every request gets exactly one response line of type `reset`, `step`, `closed`
//! or `error`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::environment::{ActionVector, EnvState, ObservationVector, StepInfo};
use crate::scenario::ScenarioConfig;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Reset {
        #[serde(default = "default_version")]
        version: u32,
        seed: u64,
        #[serde(default)]
        config_path: Option<PathBuf>,
    },
    Step {
        #[serde(default = "default_version")]
        version: u32,
        actions: Vec<ActionVector>,
    },
    Close {
        #[serde(default = "default_version")]
        version: u32,
    },
}

fn default_version() -> u32 {
    PROTOCOL_VERSION
}

impl Request {
    fn version(&self) -> u32 {
        match self {
            Request::Reset { version, .. } | Request::Step { version, .. } | Request::Close { version } => *version,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Reset {
        version: u32,
        period: usize,
        observation_len: usize,
        observations: Vec<ObservationVector>,
    },
    Step {
        version: u32,
        period: usize,
        observations: Vec<ObservationVector>,
        rewards: Vec<f64>,
        done: bool,
        info: Box<StepInfo>,
    },
    Closed {
        version: u32,
    },
    Error {
        version: u32,
        message: String,
    },
}

/// One controller connection: holds the default scenario and the live episode.
#[derive(Debug, Clone)]
pub struct Session {
    config: ScenarioConfig,
    state: Option<EnvState>,
    closed: bool,
}

impl Session {
    pub fn new(config: ScenarioConfig) -> Self {
        Session {
            config,
            state: None,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    fn error(message: impl Into<String>) -> Response {
        Response::Error {
            version: PROTOCOL_VERSION,
            message: message.into(),
        }
    }

    pub fn handle(&mut self, request: Request) -> Response {
        if request.version() != PROTOCOL_VERSION {
            return Self::error(format!(
                "unsupported protocol version {} (server speaks {PROTOCOL_VERSION})",
                request.version()
            ));
        }
        match request {
            Request::Reset { seed, config_path, .. } => {
                let config = match config_path {
                    Some(path) => match ScenarioConfig::from_path(&path) {
                        Ok(c) => c,
                        Err(e) => return Self::error(e.to_string()),
                    },
                    None => self.config.clone(),
                };
                match EnvState::reset(&config, seed) {
                    Ok((state, observations)) => {
                        self.state = Some(state);
                        Response::Reset {
                            version: PROTOCOL_VERSION,
                            period: 0,
                            observation_len: observations.first().map_or(0, |o| o.values().len()),
                            observations,
                        }
                    }
                    Err(e) => Self::error(e.to_string()),
                }
            }
            Request::Step { actions, .. } => {
                let Some(state) = self.state.as_mut() else {
                    return Self::error("step before reset");
                };
                match state.step(&actions) {
                    Ok(r) => Response::Step {
                        version: PROTOCOL_VERSION,
                        period: r.info.period,
                        observations: r.observations,
                        rewards: r.rewards,
                        done: r.done,
                        info: Box::new(r.info),
                    },
                    Err(e) => Self::error(e.to_string()),
                }
            }
            Request::Close { .. } => {
                self.closed = true;
                Response::Closed {
                    version: PROTOCOL_VERSION,
                }
            }
        }
    }

    /// Parses one request line and renders the response line (without newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => Self::error(format!("malformed request: {e}")),
        };
        serde_json::to_string(&response).expect("response serializes")
    }
}
