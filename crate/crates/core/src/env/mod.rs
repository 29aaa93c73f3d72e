//! Task environments behind one interface, looked up by name.

pub mod acrobot;
pub mod gridmaze;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

pub use acrobot::Acrobot;
pub use gridmaze::GridMaze;

pub type Observation = Vec<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub action_count: usize,
    pub max_steps_target: usize,
    pub max_steps_selfplay: usize,
    pub success_epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoneReason {
    Goal,
    TimeLimit,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

/// Target mode applies the task's reward, goal termination and step limit.
/// Self-play mode never terminates on its own: the self-play protocol owns the budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskMode {
    Target,
    SelfPlay,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn set_mode(&mut self, mode: TaskMode);
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Observation;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    fn observe(&self) -> Observation;
    /// Self-play success test between two observations of this environment.
    fn state_close(&self, a: &[f64], b: &[f64]) -> Result<bool>;
    /// Puts the environment into the state encoded by `observation`; resets the step counter.
    fn place_agent(&mut self, observation: &[f64]) -> Result<()>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    /// Grid maze only.
    pub width: usize,
    pub height: usize,
    pub wall_fraction: f64,
    pub max_steps_target: usize,
    pub max_steps_selfplay: usize,
    /// Acrobot self-play closeness threshold in observation space.
    pub success_epsilon: f64,
}

impl EnvConfig {
    pub fn gridmaze() -> Self {
        EnvConfig {
            name: "gridmaze".into(),
            width: 8,
            height: 8,
            wall_fraction: 0.25,
            max_steps_target: 50,
            max_steps_selfplay: 80,
            success_epsilon: 0.5,
        }
    }

    pub fn acrobot() -> Self {
        EnvConfig {
            name: "acrobot".into(),
            width: 0,
            height: 0,
            wall_fraction: 0.0,
            max_steps_target: 1000,
            max_steps_selfplay: 2000,
            success_epsilon: acrobot::DEFAULT_SUCCESS_EPSILON,
        }
    }

    pub fn defaults_for(name: &str) -> Result<Self> {
        match name {
            "gridmaze" => Ok(Self::gridmaze()),
            "acrobot" => Ok(Self::acrobot()),
            other => Err(Error::UnknownName {
                kind: "environment",
                name: other.to_string(),
                known: environment_registry().names().join(", "),
            }),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        (environment_registry().get(&self.name)?)(self)
    }
}

pub type EnvFactory = fn(&EnvConfig) -> Result<Box<dyn Environment>>;

pub fn environment_registry() -> Registry<EnvFactory> {
    let mut r: Registry<EnvFactory> = Registry::new("environment");
    r.register("gridmaze", |cfg| Ok(Box::new(GridMaze::new(cfg)?)));
    r.register("acrobot", |cfg| Ok(Box::new(Acrobot::new(cfg)?)));
    r
}

pub(crate) fn check_limits(cfg: &EnvConfig) -> Result<()> {
    if cfg.max_steps_target == 0 || cfg.max_steps_selfplay < cfg.max_steps_target {
        return Err(Error::Config(format!(
            "need 0 < max_steps_target ({}) <= max_steps_selfplay ({})",
            cfg.max_steps_target, cfg.max_steps_selfplay
        )));
    }
    if !(cfg.success_epsilon > 0.0) {
        return Err(Error::Config("success_epsilon must be positive".into()));
    }
    Ok(())
}
