use rand::Rng;

use super::params::Parameters;
use crate::error::{ensure_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::None => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::None => 1.0,
        }
    }
}

/// Fully connected layer `y = act(W x + b)` with `W` stored row-major (`out_dim × in_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Activations recorded by a taped forward pass; enough to run [`DenseLayer::backward`].
#[derive(Clone, Debug)]
pub struct DenseTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::contract(format!(
                "dense layer needs positive dims, got {out_dim}x{in_dim}"
            )));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        })
    }

    /// Weights uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim)?;
        let bound = 1.0 / (in_dim as f64).sqrt();
        for w in layer.weights.iter_mut() {
            *w = rng.gen_range(-bound..=bound);
        }
        Ok(layer)
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let layer = Self::zeros(in_dim, out_dim)?;
        ensure_dim("dense weights", in_dim * out_dim, weights.len())?;
        ensure_dim("dense bias", out_dim, bias.len())?;
        Ok(DenseLayer {
            weights,
            bias,
            ..layer
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    pub fn weight_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.weights[row * self.in_dim + col]
    }

    fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("dense input", self.in_dim, x.len())?;
        Ok(self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect())
    }

    pub fn forward(&self, x: &[f64], activation: Activation) -> Result<Vec<f64>> {
        let mut y = self.affine(x)?;
        y.iter_mut().for_each(|v| *v = activation.apply(*v));
        Ok(y)
    }

    pub fn forward_taped(&self, x: &[f64], activation: Activation) -> Result<(Vec<f64>, DenseTape)> {
        let pre = self.affine(x)?;
        let y = pre.iter().map(|&v| activation.apply(v)).collect();
        Ok((
            y,
            DenseTape {
                input: x.to_vec(),
                pre,
                activation,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, tape: &DenseTape, dy: &[f64], grad: &mut DenseLayer) -> Result<Vec<f64>> {
        ensure_dim("dense upstream gradient", self.out_dim, dy.len())?;
        let mut dx = vec![0.0; self.in_dim];
        for (row, (&d, &pre)) in dy.iter().zip(&tape.pre).enumerate() {
            let dpre = d * tape.activation.derivative(pre);
            if dpre == 0.0 {
                continue;
            }
            grad.bias[row] += dpre;
            let offset = row * self.in_dim;
            let grad_row = &mut grad.weights[offset..offset + self.in_dim];
            let w_row = &self.weights[offset..offset + self.in_dim];
            for col in 0..self.in_dim {
                grad_row[col] += dpre * tape.input[col];
                dx[col] += dpre * w_row[col];
            }
        }
        Ok(dx)
    }
}

impl Parameters for DenseLayer {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![("weights".into(), &self.weights), ("bias".into(), &self.bias)]
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("weights".into(), &mut self.weights),
            ("bias".into(), &mut self.bias),
        ]
    }
}
