use rand::Rng;

use crate::agents::{AgentConfig, PolicyParams};
use crate::error::{Error, Result};
use crate::memory::MemoryNet;
use crate::nn::params::{prefixed, prefixed_mut};
use crate::nn::Parameters;

/// A trainable policy, optionally fed by an episode memory.
pub trait PolicyNet: Parameters + Clone + Send + Sync {
    fn policy(&self) -> &PolicyParams;
    fn policy_mut(&mut self) -> &mut PolicyParams;

    fn memory_net(&self) -> Option<&MemoryNet> {
        None
    }

    fn memory_net_mut(&mut self) -> Option<&mut MemoryNet> {
        None
    }
}

impl PolicyNet for PolicyParams {
    fn policy(&self) -> &PolicyParams {
        self
    }

    fn policy_mut(&mut self) -> &mut PolicyParams {
        self
    }
}

/// Alice: policy plus (for memory self-play) her memory extractor and LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct AliceNet {
    pub policy: PolicyParams,
    pub memory: Option<MemoryNet>,
}

impl AliceNet {
    pub fn init<R: Rng + ?Sized>(config: AgentConfig, lstm: bool, rng: &mut R) -> Result<Self> {
        let memory = if config.uses_memory {
            Some(MemoryNet::init(config.obs_dim, config.memory_dim, lstm, rng)?)
        } else if lstm {
            return Err(Error::contract("lstm memory requested for a memoryless Alice"));
        } else {
            None
        };
        let policy = PolicyParams::init(config, rng)?;
        Ok(AliceNet { policy, memory })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.policy.config
    }
}

impl Parameters for AliceNet {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<_> = prefixed("policy", self.policy.blocks()).collect();
        if let Some(m) = &self.memory {
            out.extend(prefixed("memory", m.blocks()));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<_> = prefixed_mut("policy", self.policy.blocks_mut()).collect();
        if let Some(m) = &mut self.memory {
            out.extend(prefixed_mut("memory", m.blocks_mut()));
        }
        out
    }
}

impl PolicyNet for AliceNet {
    fn policy(&self) -> &PolicyParams {
        &self.policy
    }

    fn policy_mut(&mut self) -> &mut PolicyParams {
        &mut self.policy
    }

    fn memory_net(&self) -> Option<&MemoryNet> {
        self.memory.as_ref()
    }

    fn memory_net_mut(&mut self) -> Option<&mut MemoryNet> {
        self.memory.as_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_names_are_prefixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = AliceNet::init(AgentConfig::alice(6, 10, 3, Some(10)), true, &mut rng).unwrap();
        let names: Vec<String> = a.blocks().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "policy.feature.weights");
        assert!(names.contains(&"memory.extractor.weights".to_string()));
        assert!(names.contains(&"memory.lstm.u_g".to_string()));
        assert_eq!(a.policy.actor.out_dim(), 4);
    }

    #[test]
    fn lstm_needs_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(AliceNet::init(AgentConfig::alice(6, 10, 3, None), true, &mut rng).is_err());
    }
}
