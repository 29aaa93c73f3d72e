//! Run configuration: a TOML file with one table per module. Every key has a
//! per-environment default, so a file only lists what it changes; unknown keys
//! are rejected.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::memory::{memory_registry, MemoryConfig};
use crate::selfplay::{SelfPlayConfig, SelfPlayParams};
use crate::training::strategy::strategy_registry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDims {
    pub alice_feature_dim: usize,
    pub bob_feature_dim: usize,
    /// Width of the memory feature concatenated onto memory-Alice's episodic feature.
    pub memory_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub strategy: String,
    pub batch_size: usize,
    pub interleave_n: usize,
    /// Target-task episodes to train for.
    pub total_episodes: u64,
    pub lr: f64,
    pub seeds: Vec<u64>,
    pub avg_window: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub out: String,
    /// Target episodes between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub parallel_seeds: usize,
    pub rollout_threads: usize,
    /// When false, `wall_time_ms` is written as 0 so metrics files are reproducible byte for byte.
    pub record_wall_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent: AgentDims,
    pub memory: MemoryConfig,
    pub selfplay: SelfPlayConfig,
    pub train: TrainConfig,
    pub run: OutputConfig,
}

impl RunConfig {
    pub fn defaults_for(env: &str) -> Result<Self> {
        let env_cfg = EnvConfig::defaults_for(env)?;
        let maze = env == "gridmaze";
        let dim = if maze { 50 } else { 10 };
        Ok(RunConfig {
            env: env_cfg,
            agent: AgentDims {
                alice_feature_dim: dim,
                bob_feature_dim: dim,
                memory_dim: dim,
            },
            memory: MemoryConfig::default(),
            selfplay: SelfPlayConfig::default(),
            train: TrainConfig {
                strategy: "memory_selfplay".into(),
                batch_size: if maze { 256 } else { 1 },
                interleave_n: if maze { 4 } else { 100 },
                total_episodes: if maze { 700_000 } else { 50_000 },
                lr: 0.001,
                seeds: if maze { vec![1, 2, 3, 4, 5] } else { vec![1, 2, 3] },
                avg_window: if maze { 10_000 } else { 2_000 },
                entropy_coef: 0.0,
                value_coef: 0.5,
                grad_clip: 5.0,
            },
            run: OutputConfig {
                out: "runs".into(),
                checkpoint_every: if maze { 50_000 } else { 5_000 },
                parallel_seeds: 1,
                rollout_threads: 1,
                record_wall_time: true,
            },
        })
    }

    /// Parses `text` over the defaults of its environment. `env_override` picks
    /// the environment (and thus the defaults) regardless of the file.
    pub fn from_toml(text: &str, env_override: Option<&str>) -> Result<Self> {
        let user: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let file_env = user
            .get("env")
            .and_then(|e| e.get("name"))
            .and_then(Value::as_str)
            .map(str::to_string);
        let env = env_override
            .map(str::to_string)
            .or(file_env)
            .unwrap_or_else(|| "gridmaze".into());
        let defaults = Self::defaults_for(&env)?;
        let mut merged = Table::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))?;
        merge_known(&mut merged, &user, "")?;
        if let Some(Value::Table(t)) = merged.get_mut("env") {
            t.insert("name".into(), Value::String(env));
        }
        let cfg: RunConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn selfplay_params(&self) -> Result<SelfPlayParams> {
        SelfPlayParams::new(self.env.max_steps_selfplay, self.selfplay.reward_scale)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.build()?;
        self.selfplay_params()?;
        strategy_registry().get(&self.train.strategy)?;
        memory_registry().get(&self.memory.variant)?;
        let t = &self.train;
        let positive = [
            ("train.batch_size", t.batch_size as u64),
            ("train.interleave_n", t.interleave_n as u64),
            ("train.total_episodes", t.total_episodes),
            ("train.avg_window", t.avg_window as u64),
            ("agent.alice_feature_dim", self.agent.alice_feature_dim as u64),
            ("agent.bob_feature_dim", self.agent.bob_feature_dim as u64),
            ("agent.memory_dim", self.agent.memory_dim as u64),
            ("memory.k", self.memory.k as u64),
            ("run.parallel_seeds", self.run.parallel_seeds as u64),
            ("run.rollout_threads", self.run.rollout_threads as u64),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        if !(t.lr > 0.0) {
            return Err(Error::Config("`train.lr` must be positive".into()));
        }
        if t.seeds.is_empty() {
            return Err(Error::Config("`train.seeds` must not be empty".into()));
        }
        if t.entropy_coef < 0.0 || t.value_coef < 0.0 {
            return Err(Error::Config("loss coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

fn merge_known(base: &mut Table, user: &Table, path: &str) -> Result<()> {
    for (key, value) in user {
        let full = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match (base.get_mut(key), value) {
            (None, _) => return Err(Error::Config(format!("unknown key `{full}`"))),
            (Some(Value::Table(b)), Value::Table(u)) => merge_known(b, u, &full)?,
            (Some(Value::Table(_)), _) => return Err(Error::Config(format!("`{full}` must be a table"))),
            (Some(slot), v) => {
                if std::mem::discriminant(slot) != std::mem::discriminant(v)
                    && !(slot.is_float() && v.is_integer())
                {
                    return Err(Error::Config(format!(
                        "`{full}` expects {}, got {}",
                        slot.type_str(),
                        v.type_str()
                    )));
                }
                *slot = match (slot.is_float(), v) {
                    (true, Value::Integer(i)) => Value::Float(*i as f64),
                    _ => v.clone(),
                };
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_environment() {
        let g = RunConfig::from_toml("", None).unwrap();
        assert_eq!(g.env.name, "gridmaze");
        assert_eq!((g.train.batch_size, g.train.interleave_n), (256, 4));
        assert_eq!(g.train.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!((g.env.max_steps_target, g.env.max_steps_selfplay), (50, 80));

        let a = RunConfig::from_toml("", Some("acrobot")).unwrap();
        assert_eq!((a.train.batch_size, a.train.interleave_n), (1, 100));
        assert_eq!(a.agent.alice_feature_dim, 10);
        assert_eq!(a.train.avg_window, 2000);
        assert_eq!((a.env.max_steps_target, a.env.max_steps_selfplay), (1000, 2000));
        assert_eq!(a.train.seeds, vec![1, 2, 3]);
        assert_eq!(a.train.lr, 0.001);
    }

    #[test]
    fn file_overrides_and_env_from_file() {
        let c = RunConfig::from_toml("[env]\nname = \"acrobot\"\n[train]\nbatch_size = 4\nlr = 1\n", None).unwrap();
        assert_eq!(c.env.name, "acrobot");
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.train.lr, 1.0);
        assert_eq!(c.train.interleave_n, 100);
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        let e = RunConfig::from_toml("[train]\nbatchsize = 4\n", None).unwrap_err();
        assert!(e.to_string().contains("train.batchsize"), "{e}");
        let e = RunConfig::from_toml("[train]\nbatch_size = \"x\"\n", None).unwrap_err();
        assert!(e.to_string().contains("train.batch_size"), "{e}");
        let e = RunConfig::from_toml("[train\n", None).unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        assert!(RunConfig::from_toml("[train]\nstrategy = \"bogus\"\n", None).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_toml("[memory]\nvariant = \"last_k\"\nk = 3\n", None).unwrap();
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text, None).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }
}
