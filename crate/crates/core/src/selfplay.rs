//! One repeat-mode self-play episode: Alice acts from a random start until she
//! emits STOP, then Bob restarts from her start state and must reach her end
//! state within the remaining shared budget.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{episodic_tuple, sample_action, PolicyParams};
use crate::env::{Environment, Observation, TaskMode};
use crate::error::{Error, Result};
use crate::memory::{AliceMemory, EpisodeSummary};
use crate::nets::AliceNet;
use crate::rollout::{Step, Trajectory};

/// The shared step budget comes from the environment's self-play limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfPlayConfig {
    pub reward_scale: f64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        SelfPlayConfig { reward_scale: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfPlayParams {
    pub t_max: usize,
    pub reward_scale: f64,
}

impl SelfPlayParams {
    pub fn new(t_max: usize, reward_scale: f64) -> Result<Self> {
        if t_max < 2 {
            return Err(Error::Config("self-play t_max must be at least 2".into()));
        }
        if !(reward_scale > 0.0) {
            return Err(Error::Config("self-play reward_scale must be positive".into()));
        }
        Ok(SelfPlayParams { t_max, reward_scale })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfPlayRecord {
    pub s0: Observation,
    pub s_a: Observation,
    pub s_b: Observation,
    pub t_a: usize,
    pub t_b: usize,
    pub bob_success: bool,
    pub r_a: f64,
    pub r_b: f64,
}

#[derive(Clone, Debug)]
pub struct AliceRollout {
    pub trajectory: Trajectory,
    pub s0: Observation,
    pub s_a: Observation,
    pub t_a: usize,
}

#[derive(Clone, Debug)]
pub struct BobRollout {
    pub trajectory: Trajectory,
    pub s_b: Observation,
    pub t_b: usize,
    pub success: bool,
}

#[derive(Clone, Debug)]
pub struct SelfPlayOutcome {
    pub record: SelfPlayRecord,
    pub alice: Trajectory,
    pub bob: Trajectory,
}

/// Alice proposes a task. She is forced to stop after `t_max - 1` steps so Bob
/// always has a non-empty budget.
pub fn run_alice(
    alice: &AliceNet,
    env: &mut dyn Environment,
    memory: Option<&AliceMemory>,
    rng: &mut ChaCha8Rng,
    params: &SelfPlayParams,
) -> Result<AliceRollout> {
    let config = alice.config();
    if config.uses_memory != memory.is_some() {
        return Err(Error::contract("memory must be supplied iff Alice uses memory"));
    }
    let stop = config
        .stop_action()
        .ok_or_else(|| Error::contract("Alice needs a stop action"))?;
    env.set_mode(TaskMode::SelfPlay);
    let s0 = env.reset(rng);
    let memory_feature = memory.map(AliceMemory::read);
    let mut current = s0.clone();
    let mut steps = Vec::new();
    loop {
        let input = episodic_tuple(&current, &s0)?;
        let out = alice.policy.forward(&input, memory_feature.as_deref())?;
        let action = sample_action(&out.probs, rng).index;
        steps.push(Step {
            input,
            action,
            reward: 0.0,
        });
        if action == stop {
            break;
        }
        current = env.step(action)?.observation;
        if steps.len() >= params.t_max - 1 {
            break;
        }
    }
    Ok(AliceRollout {
        t_a: steps.len(),
        trajectory: Trajectory {
            steps,
            memory: memory.map(AliceMemory::tape),
        },
        s0,
        s_a: current,
    })
}

/// Bob starts from `s0` and tries to reach `s_a` within `budget` steps.
pub fn run_bob(
    bob: &PolicyParams,
    env: &mut dyn Environment,
    s0: &[f64],
    s_a: &[f64],
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BobRollout> {
    if bob.config.has_stop_action {
        return Err(Error::contract("Bob's action space has no stop action"));
    }
    env.set_mode(TaskMode::SelfPlay);
    env.place_agent(s0)?;
    let mut current = env.observe();
    let mut steps = Vec::new();
    let mut success = env.state_close(&current, s_a)?;
    while !success && steps.len() < budget {
        let input = episodic_tuple(&current, s_a)?;
        let out = bob.forward(&input, None)?;
        let action = sample_action(&out.probs, rng).index;
        current = env.step(action)?.observation;
        steps.push(Step {
            input,
            action,
            reward: 0.0,
        });
        success = env.state_close(&current, s_a)?;
    }
    Ok(BobRollout {
        t_b: steps.len(),
        trajectory: Trajectory { steps, memory: None },
        s_b: current,
        success,
    })
}

/// `R_B = -γ·t_B'`, `R_A = γ·max(0, t_B' - t_A)` with `t_B' = t_B` on success and
/// the whole remaining budget `t_max - t_A` on failure.
pub fn selfplay_rewards(t_a: usize, t_b: usize, bob_success: bool, params: &SelfPlayParams) -> (f64, f64) {
    let t_b_eff = effective_bob_time(t_a, t_b, bob_success, params.t_max);
    let gamma = params.reward_scale;
    let r_a = gamma * (t_b_eff as f64 - t_a as f64).max(0.0);
    let r_b = -gamma * t_b_eff as f64;
    (r_a, r_b)
}

pub fn effective_bob_time(t_a: usize, t_b: usize, bob_success: bool, t_max: usize) -> usize {
    if bob_success {
        t_b
    } else {
        t_max.saturating_sub(t_a)
    }
}

/// Runs Alice then Bob, assigns rewards and folds the episode into Alice's memory.
///
/// Alice's reward lands on her final step. Bob pays `-γ` per step taken, which
/// sums to `R_B` since a failing Bob always spends the whole budget.
pub fn selfplay_episode(
    alice: &AliceNet,
    bob: &PolicyParams,
    env: &mut dyn Environment,
    memory: Option<&mut AliceMemory>,
    rng: &mut ChaCha8Rng,
    params: &SelfPlayParams,
) -> Result<SelfPlayOutcome> {
    let alice_run = run_alice(alice, env, memory.as_deref(), rng, params)?;
    let budget = params.t_max - alice_run.t_a;
    let bob_run = run_bob(bob, env, &alice_run.s0, &alice_run.s_a, budget, rng)?;
    let (r_a, r_b) = selfplay_rewards(alice_run.t_a, bob_run.t_b, bob_run.success, params);

    let mut alice_traj = alice_run.trajectory;
    if let Some(last) = alice_traj.steps.last_mut() {
        last.reward = r_a;
    }
    let mut bob_traj = bob_run.trajectory;
    for s in bob_traj.steps.iter_mut() {
        s.reward = -params.reward_scale;
    }

    if let Some(mem) = memory {
        let net = alice
            .memory
            .as_ref()
            .ok_or_else(|| Error::contract("memory supplied but Alice has no memory network"))?;
        mem.record(
            net,
            &EpisodeSummary {
                start_state: alice_run.s0.clone(),
                end_state: alice_run.s_a.clone(),
            },
        )?;
    }

    Ok(SelfPlayOutcome {
        record: SelfPlayRecord {
            s0: alice_run.s0,
            s_a: alice_run.s_a,
            s_b: bob_run.s_b,
            t_a: alice_run.t_a,
            t_b: bob_run.t_b,
            bob_success: bob_run.success,
            r_a,
            r_b,
        },
        alice: alice_traj,
        bob: bob_traj,
    })
}
