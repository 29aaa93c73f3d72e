use rand_chacha::ChaCha8Rng;

use crate::agents::{episodic_tuple, sample_action, PolicyParams};
use crate::env::{Environment, TaskMode};
use crate::error::Result;
use crate::memory::MemoryTape;

/// One decision: the policy input, the sampled action and the reward that followed.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub input: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Present for memory-conditioned Alice episodes.
    pub memory: Option<MemoryTape>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeBatch {
    pub episodes: Vec<Trajectory>,
}

impl EpisodeBatch {
    pub fn step_count(&self) -> usize {
        self.episodes.iter().map(Trajectory::len).sum()
    }

    pub fn push(&mut self, t: Trajectory) {
        if !t.is_empty() {
            self.episodes.push(t);
        }
    }
}

/// Plays one target-task episode with Bob; the conditioning slot is the zero vector.
pub fn run_target_episode(bob: &PolicyParams, env: &mut dyn Environment, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    env.set_mode(TaskMode::Target);
    let mut obs = env.reset(rng);
    let target = vec![0.0; obs.len()];
    let mut steps = Vec::new();
    loop {
        let input = episodic_tuple(&obs, &target)?;
        let out = bob.forward(&input, None)?;
        let action = sample_action(&out.probs, rng).index;
        let result = env.step(action)?;
        steps.push(Step {
            input,
            action,
            reward: result.reward,
        });
        obs = result.observation;
        if result.done {
            break;
        }
    }
    Ok(Trajectory { steps, memory: None })
}
