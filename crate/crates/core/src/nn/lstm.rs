use rand::Rng;

use super::params::Parameters;
use crate::error::{ensure_dim, Error, Result};

/// Gate order used throughout: input, forget, output, candidate.
pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    /// `h_dim × x_dim`, row-major.
    pub w: Vec<f64>,
    /// `h_dim × h_dim`, row-major.
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

/// Standard LSTM cell:
/// `i = σ(W_i x + U_i h + b_i)`, `f`, `o` likewise, `g = tanh(W_g x + U_g h + b_g)`,
/// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams {
    x_dim: usize,
    h_dim: usize,
    pub gates: [GateParams; 4],
}

#[derive(Clone, Debug)]
pub struct LstmTape {
    x: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
    /// Post-nonlinearity gate values, `[i, f, o, g]`.
    act: [Vec<f64>; 4],
    tanh_c_next: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmInputGrads {
    pub dx: Vec<f64>,
    pub dh: Vec<f64>,
    pub dc: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmCellParams {
    pub fn zeros(x_dim: usize, h_dim: usize) -> Result<Self> {
        if x_dim == 0 || h_dim == 0 {
            return Err(Error::contract("lstm cell needs positive dims"));
        }
        let gate = GateParams {
            w: vec![0.0; h_dim * x_dim],
            u: vec![0.0; h_dim * h_dim],
            b: vec![0.0; h_dim],
        };
        Ok(LstmCellParams {
            x_dim,
            h_dim,
            gates: [gate.clone(), gate.clone(), gate.clone(), gate],
        })
    }

    pub fn init_uniform<R: Rng + ?Sized>(x_dim: usize, h_dim: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(x_dim, h_dim)?;
        let wb = 1.0 / (x_dim as f64).sqrt();
        let ub = 1.0 / (h_dim as f64).sqrt();
        for gate in p.gates.iter_mut() {
            gate.w.iter_mut().for_each(|v| *v = rng.gen_range(-wb..=wb));
            gate.u.iter_mut().for_each(|v| *v = rng.gen_range(-ub..=ub));
        }
        Ok(p)
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn h_dim(&self) -> usize {
        self.h_dim
    }

    fn preactivations(&self, x: &[f64], h: &[f64]) -> [Vec<f64>; 4] {
        let (xd, hd) = (self.x_dim, self.h_dim);
        std::array::from_fn(|k| {
            let gate = &self.gates[k];
            (0..hd)
                .map(|r| {
                    let wx: f64 = gate.w[r * xd..(r + 1) * xd].iter().zip(x).map(|(a, b)| a * b).sum();
                    let uh: f64 = gate.u[r * hd..(r + 1) * hd].iter().zip(h).map(|(a, b)| a * b).sum();
                    wx + uh + gate.b[r]
                })
                .collect()
        })
    }

    fn check_inputs(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<()> {
        ensure_dim("lstm input", self.x_dim, x.len())?;
        ensure_dim("lstm hidden state", self.h_dim, h.len())?;
        ensure_dim("lstm cell state", self.h_dim, c.len())
    }

    pub fn forward(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (h_next, c_next, _) = self.forward_taped(x, h, c)?;
        Ok((h_next, c_next))
    }

    pub fn forward_taped(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LstmTape)> {
        self.check_inputs(x, h, c)?;
        let pre = self.preactivations(x, h);
        let act: [Vec<f64>; 4] = std::array::from_fn(|k| {
            pre[k]
                .iter()
                .map(|&z| if k == 3 { z.tanh() } else { sigmoid(z) })
                .collect()
        });
        let [i, f, o, g] = &act;
        let c_next: Vec<f64> = (0..self.h_dim).map(|r| f[r] * c[r] + i[r] * g[r]).collect();
        let tanh_c_next: Vec<f64> = c_next.iter().map(|v| v.tanh()).collect();
        let h_next: Vec<f64> = o.iter().zip(&tanh_c_next).map(|(a, b)| a * b).collect();
        let tape = LstmTape {
            x: x.to_vec(),
            h: h.to_vec(),
            c: c.to_vec(),
            act,
            tanh_c_next,
        };
        Ok((h_next, c_next, tape))
    }

    /// Back-propagates `(dL/dh', dL/dc')` through one cell step, accumulating into `grad`.
    pub fn backward(
        &self,
        tape: &LstmTape,
        dh_next: &[f64],
        dc_next: &[f64],
        grad: &mut LstmCellParams,
    ) -> Result<LstmInputGrads> {
        ensure_dim("lstm dh'", self.h_dim, dh_next.len())?;
        ensure_dim("lstm dc'", self.h_dim, dc_next.len())?;
        let (xd, hd) = (self.x_dim, self.h_dim);
        let [i, f, o, g] = &tape.act;

        let mut dpre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hd]);
        let mut dc = vec![0.0; hd];
        for r in 0..hd {
            let tc = tape.tanh_c_next[r];
            let do_ = dh_next[r] * tc;
            let dct = dc_next[r] + dh_next[r] * o[r] * (1.0 - tc * tc);
            let di = dct * g[r];
            let df = dct * tape.c[r];
            let dg = dct * i[r];
            dc[r] = dct * f[r];
            dpre[0][r] = di * i[r] * (1.0 - i[r]);
            dpre[1][r] = df * f[r] * (1.0 - f[r]);
            dpre[2][r] = do_ * o[r] * (1.0 - o[r]);
            dpre[3][r] = dg * (1.0 - g[r] * g[r]);
        }

        let mut dx = vec![0.0; xd];
        let mut dh = vec![0.0; hd];
        for k in 0..4 {
            let gate = &self.gates[k];
            let ggate = &mut grad.gates[k];
            for r in 0..hd {
                let d = dpre[k][r];
                if d == 0.0 {
                    continue;
                }
                ggate.b[r] += d;
                for col in 0..xd {
                    ggate.w[r * xd + col] += d * tape.x[col];
                    dx[col] += d * gate.w[r * xd + col];
                }
                for col in 0..hd {
                    ggate.u[r * hd + col] += d * tape.h[col];
                    dh[col] += d * gate.u[r * hd + col];
                }
            }
        }
        Ok(LstmInputGrads { dx, dh, dc })
    }
}

impl Parameters for LstmCellParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(12);
        for (name, gate) in GATE_NAMES.iter().zip(&self.gates) {
            out.push((format!("w_{name}"), gate.w.as_slice()));
            out.push((format!("u_{name}"), gate.u.as_slice()));
            out.push((format!("b_{name}"), gate.b.as_slice()));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(12);
        for (name, gate) in GATE_NAMES.iter().zip(self.gates.iter_mut()) {
            out.push((format!("w_{name}"), gate.w.as_mut_slice()));
            out.push((format!("u_{name}"), gate.u.as_mut_slice()));
            out.push((format!("b_{name}"), gate.b.as_mut_slice()));
        }
        out
    }
}
