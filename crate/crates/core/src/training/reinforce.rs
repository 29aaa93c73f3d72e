//! REINFORCE with a learned state-value baseline.
//!
//! Per-step loss, averaged over every step of the batch:
//! `-(G_t - V_t)·log π(a_t) + value_coef·(G_t - V_t)² - entropy_coef·H(π)`
//! where the advantage in the actor term is held constant.

use crate::error::{Error, Result};
use crate::nets::PolicyNet;
use crate::nn::{clip_global_norm, entropy, log_softmax, AdamState};
use crate::rollout::EpisodeBatch;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global-norm clip; `<= 0` disables.
    pub grad_clip: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            value_coef: 0.5,
            entropy_coef: 0.0,
            grad_clip: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub steps: usize,
}

impl Diagnostics {
    pub fn total_loss(&self, cfg: &LossConfig) -> f64 {
        self.actor_loss + cfg.value_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }
}

/// Undiscounted reward-to-go.
pub fn episode_return(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc += r;
        *g = acc;
    }
    out
}

/// Advantages `G_t - V_t` at `net`, per episode and step.
pub fn advantages<N: PolicyNet>(net: &N, batch: &EpisodeBatch) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(batch.episodes.len());
    for ep in &batch.episodes {
        let memory = match (&ep.memory, net.memory_net()) {
            (Some(tape), Some(m)) => Some(m.read_taped(tape)?.0),
            (None, None) => None,
            _ => return Err(Error::contract("episode memory tape does not match the network")),
        };
        let returns = episode_return(&ep.rewards());
        let mut adv = Vec::with_capacity(ep.len());
        for (step, g) in ep.steps.iter().zip(returns) {
            let v = net.policy().forward(&step.input, memory.as_deref())?.value;
            adv.push(g - v);
        }
        out.push(adv);
    }
    Ok(out)
}

/// Evaluates the batch loss and, if `grad` is given, accumulates its gradient.
///
/// With `frozen_advantages` the actor term uses those values instead of the
/// current `G - V`; this makes the returned loss the exact function whose
/// gradient is computed (the actor advantage is a constant).
pub fn batch_loss<N: PolicyNet>(
    net: &N,
    batch: &EpisodeBatch,
    cfg: &LossConfig,
    frozen_advantages: Option<&[Vec<f64>]>,
    mut grad: Option<&mut N>,
) -> Result<Diagnostics> {
    let n = batch.step_count();
    if n == 0 {
        return Err(Error::contract("empty episode batch"));
    }
    let inv_n = 1.0 / n as f64;
    let mut diag = Diagnostics {
        steps: n,
        ..Diagnostics::default()
    };

    for (e, ep) in batch.episodes.iter().enumerate() {
        let (memory, cache) = match (&ep.memory, net.memory_net()) {
            (Some(tape), Some(m)) => {
                let (read, cache) = m.read_taped(tape)?;
                (Some(read), cache)
            }
            (None, None) => (None, None),
            _ => return Err(Error::contract("episode memory tape does not match the network")),
        };
        let returns = episode_return(&ep.rewards());
        let mut d_memory = memory.as_ref().map(|m| vec![0.0; m.len()]);

        for (t, (step, g)) in ep.steps.iter().zip(returns).enumerate() {
            let (out, tape) = net.policy().forward_taped(&step.input, memory.as_deref())?;
            let log_probs = log_softmax(&out.logits)?;
            let h = entropy(&out.probs, &log_probs);
            let td = g - out.value;
            let adv = frozen_advantages.map_or(td, |a| a[e][t]);
            diag.actor_loss += -adv * log_probs[step.action] * inv_n;
            diag.value_loss += td * td * inv_n;
            diag.entropy += h * inv_n;

            if let Some(grad) = grad.as_deref_mut() {
                let dlogits: Vec<f64> = out
                    .probs
                    .iter()
                    .zip(&log_probs)
                    .enumerate()
                    .map(|(k, (&p, &lp))| {
                        let onehot = if k == step.action { 1.0 } else { 0.0 };
                        (adv * (p - onehot) + cfg.entropy_coef * p * (lp + h)) * inv_n
                    })
                    .collect();
                let dvalue = -2.0 * cfg.value_coef * td * inv_n;
                let dm = net.policy().backward(&tape, &dlogits, dvalue, grad.policy_mut())?;
                if let Some(acc) = d_memory.as_mut() {
                    acc.iter_mut().zip(&dm).for_each(|(a, d)| *a += d);
                }
            }
        }

        if let (Some(grad), Some(cache), Some(tape), Some(d)) =
            (grad.as_deref_mut(), cache.as_ref(), ep.memory.as_ref(), d_memory.as_ref())
        {
            let mnet = net.memory_net().expect("checked above");
            let gnet = grad
                .memory_net_mut()
                .ok_or_else(|| Error::contract("gradient buffer lacks a memory network"))?;
            mnet.backward(tape, cache, d, gnet)?;
        }
    }
    Ok(diag)
}

/// Total loss and its gradient. Pass the advantages of a reference point as
/// `frozen_advantages` to get a loss that finite differences can check.
pub fn loss_and_grad<N: PolicyNet>(
    net: &N,
    batch: &EpisodeBatch,
    cfg: &LossConfig,
    frozen_advantages: Option<&[Vec<f64>]>,
) -> Result<(f64, N)> {
    let mut grad = net.zeros_like();
    let diag = batch_loss(net, batch, cfg, frozen_advantages, Some(&mut grad))?;
    Ok((diag.total_loss(cfg), grad))
}

/// One clipped Adam step on the batch loss. `context` names the batch in fault reports.
pub fn reinforce_update<N: PolicyNet>(
    net: &mut N,
    optimizer: &mut AdamState,
    batch: &EpisodeBatch,
    cfg: &LossConfig,
    context: &str,
) -> Result<Diagnostics> {
    let mut grad = net.zeros_like();
    let mut diag = batch_loss(net, batch, cfg, None, Some(&mut grad))?;
    let loss = diag.total_loss(cfg);
    if !loss.is_finite() {
        return Err(Error::NumericFault {
            block: context.to_string(),
            detail: format!("non-finite loss {loss}"),
        });
    }
    diag.grad_norm = clip_global_norm(&mut grad, cfg.grad_clip);
    optimizer.step(net, &grad).map_err(|e| match e {
        Error::NumericFault { block, detail } => Error::NumericFault {
            block: format!("{context}: {block}"),
            detail,
        },
        other => other,
    })?;
    Ok(diag)
}
