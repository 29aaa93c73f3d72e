use super::params::Parameters;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 0.001;

/// Bias-corrected Adam. Moment buffers are laid out in the `blocks()` order of the
/// parameter set they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, lr: f64) -> Self {
        let shapes: Vec<usize> = params.blocks().iter().map(|(_, b)| b.len()).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update in place. Gradients are validated before anything is touched,
    /// so a fault leaves both parameters and state unchanged.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.m.len() {
            return Err(Error::contract(format!(
                "adam: expected {} parameter blocks, got {}",
                self.m.len(),
                grad_blocks.len()
            )));
        }
        for ((name, g), m) in grad_blocks.iter().zip(&self.m) {
            if g.len() != m.len() {
                return Err(Error::contract(format!("adam: block {name} changed shape")));
            }
            if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
                return Err(Error::NumericFault {
                    block: name.clone(),
                    detail: format!("non-finite gradient {bad}"),
                });
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((_, p), (_, g)), (m, v)) in params
            .blocks_mut()
            .into_iter()
            .zip(grad_blocks)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
