//! Alice and Bob policy networks: episodic-tuple feature extractor followed by
//! single-layer actor and critic heads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::nn::params::{prefixed, prefixed_mut};
use crate::nn::{log_softmax, softmax, Activation, DenseLayer, DenseTape, Parameters};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub feature_dim: usize,
    pub action_count: usize,
    pub has_stop_action: bool,
    pub uses_memory: bool,
    pub memory_dim: usize,
}

impl AgentConfig {
    pub fn bob(obs_dim: usize, feature_dim: usize, action_count: usize) -> Self {
        AgentConfig {
            obs_dim,
            feature_dim,
            action_count,
            has_stop_action: false,
            uses_memory: false,
            memory_dim: 0,
        }
    }

    pub fn alice(obs_dim: usize, feature_dim: usize, action_count: usize, memory_dim: Option<usize>) -> Self {
        AgentConfig {
            obs_dim,
            feature_dim,
            action_count,
            has_stop_action: true,
            uses_memory: memory_dim.is_some(),
            memory_dim: memory_dim.unwrap_or(0),
        }
    }

    pub fn actor_outputs(&self) -> usize {
        self.action_count + usize::from(self.has_stop_action)
    }

    pub fn head_input_dim(&self) -> usize {
        self.feature_dim + if self.uses_memory { self.memory_dim } else { 0 }
    }

    /// Index of the stop action, if this agent has one.
    pub fn stop_action(&self) -> Option<usize> {
        self.has_stop_action.then_some(self.action_count)
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.feature_dim == 0 || self.action_count == 0 {
            return Err(Error::contract("agent dims must be positive"));
        }
        if self.uses_memory && self.memory_dim == 0 {
            return Err(Error::contract("memory agent needs memory_dim > 0"));
        }
        Ok(())
    }
}

/// Concatenates the current observation with the conditioning observation.
pub fn episodic_tuple(current: &[f64], conditioning: &[f64]) -> Result<Vec<f64>> {
    ensure_dim("episodic tuple conditioning", current.len(), conditioning.len())?;
    let mut v = Vec::with_capacity(2 * current.len());
    v.extend_from_slice(current);
    v.extend_from_slice(conditioning);
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub config: AgentConfig,
    pub feature: DenseLayer,
    pub actor: DenseLayer,
    pub critic: DenseLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct PolicyTape {
    feature: DenseTape,
    actor: DenseTape,
    critic: DenseTape,
}

impl PolicyParams {
    pub fn zeros(config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let head = config.head_input_dim();
        Ok(PolicyParams {
            feature: DenseLayer::zeros(2 * config.obs_dim, config.feature_dim)?,
            actor: DenseLayer::zeros(head, config.actor_outputs())?,
            critic: DenseLayer::zeros(head, 1)?,
            config,
        })
    }

    pub fn init<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let head = config.head_input_dim();
        Ok(PolicyParams {
            feature: DenseLayer::init_uniform(2 * config.obs_dim, config.feature_dim, rng)?,
            actor: DenseLayer::init_uniform(head, config.actor_outputs(), rng)?,
            critic: DenseLayer::init_uniform(head, 1, rng)?,
            config,
        })
    }

    fn head_input(&self, feature: Vec<f64>, memory: Option<&[f64]>) -> Result<Vec<f64>> {
        match (self.config.uses_memory, memory) {
            (false, None) => Ok(feature),
            (true, Some(m)) => {
                ensure_dim("memory feature", self.config.memory_dim, m.len())?;
                let mut h = feature;
                h.extend_from_slice(m);
                Ok(h)
            }
            (true, None) => Err(Error::contract("memory agent called without a memory feature")),
            (false, Some(_)) => Err(Error::contract("memory feature passed to a memoryless agent")),
        }
    }

    pub fn forward(&self, tuple: &[f64], memory: Option<&[f64]>) -> Result<PolicyOutput> {
        let feature = self.feature.forward(tuple, Activation::Relu)?;
        let head = self.head_input(feature, memory)?;
        let logits = self.actor.forward(&head, Activation::None)?;
        let value = self.critic.forward(&head, Activation::None)?[0];
        let probs = softmax(&logits)?;
        Ok(PolicyOutput { logits, probs, value })
    }

    pub fn forward_taped(&self, tuple: &[f64], memory: Option<&[f64]>) -> Result<(PolicyOutput, PolicyTape)> {
        let (feature, feature_tape) = self.feature.forward_taped(tuple, Activation::Relu)?;
        let head = self.head_input(feature, memory)?;
        let (logits, actor_tape) = self.actor.forward_taped(&head, Activation::None)?;
        let (value, critic_tape) = self.critic.forward_taped(&head, Activation::None)?;
        let probs = softmax(&logits)?;
        Ok((
            PolicyOutput {
                logits,
                probs,
                value: value[0],
            },
            PolicyTape {
                feature: feature_tape,
                actor: actor_tape,
                critic: critic_tape,
            },
        ))
    }

    /// Back-propagates gradients w.r.t. logits and value. Returns `dL/d(memory feature)`
    /// (empty for memoryless agents).
    pub fn backward(&self, tape: &PolicyTape, dlogits: &[f64], dvalue: f64, grad: &mut PolicyParams) -> Result<Vec<f64>> {
        let mut dhead = self.actor.backward(&tape.actor, dlogits, &mut grad.actor)?;
        let dcritic = self.critic.backward(&tape.critic, &[dvalue], &mut grad.critic)?;
        dhead.iter_mut().zip(&dcritic).for_each(|(a, b)| *a += b);
        let dmemory = dhead.split_off(self.config.feature_dim);
        self.feature.backward(&tape.feature, &dhead, &mut grad.feature)?;
        Ok(dmemory)
    }

    pub fn log_probs(output: &PolicyOutput) -> Result<Vec<f64>> {
        log_softmax(&output.logits)
    }
}

impl Parameters for PolicyParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        prefixed("feature", self.feature.blocks())
            .chain(prefixed("actor", self.actor.blocks()))
            .chain(prefixed("critic", self.critic.blocks()))
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        prefixed_mut("feature", self.feature.blocks_mut())
            .chain(prefixed_mut("actor", self.actor.blocks_mut()))
            .chain(prefixed_mut("critic", self.critic.blocks_mut()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledAction {
    pub index: usize,
    pub log_prob: f64,
}

/// Categorical sample by inverse CDF; consumes exactly one uniform draw.
pub fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> SampledAction {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = Some(i);
            break;
        }
    }
    // rounding can leave `acc` a hair below 1: fall back to the last supported index
    let index = chosen.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(0));
    SampledAction {
        index,
        log_prob: probs[index].ln(),
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn act_greedy(params: &PolicyParams, tuple: &[f64], memory: Option<&[f64]>) -> Result<usize> {
    Ok(argmax(&params.forward(tuple, memory)?.probs))
}
