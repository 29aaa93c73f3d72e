//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod criteria;

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use memplay::agents::{AgentConfig, PolicyParams};
use memplay::config::RunConfig;
use memplay::memory::{AliceMemory, EpisodeSummary, MemoryConfig};
use memplay::nets::{AliceNet, PolicyNet};
use memplay::nn::{grad_check, LstmCellParams};
use memplay::rollout::{EpisodeBatch, Step, Trajectory};
use memplay::training::reinforce::advantages;
use memplay::training::{loss_and_grad, LossConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- acrobot

/// Acrobot accelerations from the manipulator form `M(q) q̈ + C(q, q̇) + G(q) = [0, τ]`,
/// solved by Cramer's rule. Angles are measured from the hanging position.
pub fn acrobot_accel(s: [f64; 4], tau: f64) -> [f64; 2] {
    let (m1, m2, l1, lc1, lc2, i1, i2, g) = (1.0, 1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 9.8);
    let [q1, q2, dq1, dq2] = s;
    let m11 = m1 * lc1 * lc1 + i1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * q2.cos()) + i2;
    let m12 = m2 * (lc2 * lc2 + l1 * lc2 * q2.cos()) + i2;
    let m22 = m2 * lc2 * lc2 + i2;
    let h = m2 * l1 * lc2 * q2.sin();
    let c1 = -h * (2.0 * dq1 * dq2 + dq2 * dq2);
    let c2 = h * dq1 * dq1;
    let g2 = m2 * lc2 * g * (q1 + q2).sin();
    let g1 = (m1 * lc1 + m2 * l1) * g * q1.sin() + g2;
    let (r1, r2) = (-c1 - g1, tau - c2 - g2);
    let det = m11 * m22 - m12 * m12;
    [(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det]
}

/// One classical Runge-Kutta interval of length `dt`, then angle wrapping and
/// optional velocity clipping.
pub fn acrobot_step(s: [f64; 4], tau: f64, dt: f64, clip: bool) -> [f64; 4] {
    let f = |x: [f64; 4]| {
        let [a1, a2] = acrobot_accel(x, tau);
        [x[2], x[3], a1, a2]
    };
    let axpy = |x: [f64; 4], k: [f64; 4], h: f64| [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2], x[3] + h * k[3]];
    let k1 = f(s);
    let k2 = f(axpy(s, k1, dt / 2.0));
    let k3 = f(axpy(s, k2, dt / 2.0));
    let k4 = f(axpy(s, k3, dt));
    let mut n = [0.0; 4];
    for i in 0..4 {
        n[i] = s[i] + dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    for a in &mut n[..2] {
        *a = a.sin().atan2(a.cos());
        if *a <= -PI {
            *a += 2.0 * PI;
        }
    }
    if clip {
        n[2] = n[2].clamp(-4.0 * PI, 4.0 * PI);
        n[3] = n[3].clamp(-9.0 * PI, 9.0 * PI);
    }
    n
}

/// Difference of two angles folded into `[-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b).sin().atan2((a - b).cos())
}

// ---------------------------------------------------------------- linear algebra

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenpairs
/// sorted by descending eigenvalue; vectors are unit length.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n).map(|j| (a[j][j], v.iter().map(|row| row[j]).collect())).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

/// Population covariance, computed entry by entry.
pub fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| points.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------- grid maze

/// Shortest action sequence from the agent cell of `from` to the agent cell of
/// `to`, both grid-maze observations of the same layout. Actions: up, down, left, right.
pub fn bfs_path(from: &[f64], to: &[f64], width: usize, height: usize) -> Option<Vec<usize>> {
    let cells = width * height;
    let walls = &from[..cells];
    let start = from[cells..2 * cells].iter().position(|&v| v == 1.0)?;
    let goal = to[cells..2 * cells].iter().position(|&v| v == 1.0)?;
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; cells];
    let mut seen = vec![false; cells];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(c) = queue.pop_front() {
        if c == goal {
            let mut path = Vec::new();
            let mut at = c;
            while let Some((p, a)) = prev[at] {
                path.push(a);
                at = p;
            }
            path.reverse();
            return Some(path);
        }
        let (x, y) = ((c % width) as isize, (c / width) as isize);
        for (a, (dx, dy)) in [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)].into_iter().enumerate() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                continue;
            }
            let n = ny as usize * width + nx as usize;
            if walls[n] == 0.0 && !seen[n] {
                seen[n] = true;
                prev[n] = Some((c, a));
                queue.push_back(n);
            }
        }
    }
    None
}

// ---------------------------------------------------------------- lstm

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate equations evaluated directly from the parameter matrices.
pub fn lstm_oracle(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (hd, xd) = (h.len(), x.len());
    let pre = |g: usize, r: usize| {
        let gate = &p.gates[g];
        let mut s = gate.b[r];
        for j in 0..xd {
            s += gate.w[r * xd + j] * x[j];
        }
        for j in 0..hd {
            s += gate.u[r * hd + j] * h[j];
        }
        s
    };
    let mut h2 = vec![0.0; hd];
    let mut c2 = vec![0.0; hd];
    for r in 0..hd {
        let (i, f, o, g) = (sig(pre(0, r)), sig(pre(1, r)), sig(pre(2, r)), pre(3, r).tanh());
        c2[r] = f * c[r] + i * g;
        h2[r] = o * c2[r].tanh();
    }
    (h2, c2)
}

// ---------------------------------------------------------------- gradients

pub const GRAD_H: f64 = 1e-5;

pub fn grad_loss_config() -> LossConfig {
    LossConfig {
        value_coef: 0.5,
        entropy_coef: 0.05,
        grad_clip: 5.0,
    }
}

fn random_trajectory(r: &mut ChaCha8Rng, input_dim: usize, actions: usize, len: usize) -> Trajectory {
    Trajectory {
        steps: (0..len)
            .map(|_| Step {
                input: (0..input_dim).map(|_| r.gen_range(-1.0..1.0)).collect(),
                action: r.gen_range(0..actions),
                reward: r.gen_range(-1.0..1.0),
            })
            .collect(),
        memory: None,
    }
}

/// Max relative gradient error of the full REINFORCE loss for one network
/// composition at one random parameter draw. `kind` is `bob`, `alice`, or a
/// memory variant name for memory-Alice.
pub fn composition_grad_error(kind: &str, draw: u64) -> f64 {
    composition_check(kind, draw).0
}

fn check_net<N: PolicyNet>(net: &N, batch: &EpisodeBatch) -> (f64, Vec<(String, f64)>) {
    let cfg = grad_loss_config();
    let adv = advantages(net, batch).unwrap();
    let f = |p: &N| loss_and_grad(p, batch, &cfg, Some(adv.as_slice())).unwrap();
    let (_, g) = f(net);
    let norms = g
        .blocks()
        .into_iter()
        .map(|(name, v)| (name, v.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    (grad_check(f, net, GRAD_H), norms)
}

/// Gradient error plus the analytic gradient norm of every parameter block.
pub fn composition_check(kind: &str, draw: u64) -> (f64, Vec<(String, f64)>) {
    let (obs, feat, mem, acts) = (3, 5, 4, 3);
    let mut r = rng(1000 + draw);
    match kind {
        "bob" => {
            let net = PolicyParams::init(AgentConfig::bob(obs, feat, acts), &mut r).unwrap();
            let batch = EpisodeBatch {
                episodes: (0..2).map(|_| random_trajectory(&mut r, 2 * obs, acts, 3)).collect(),
            };
            check_net(&net, &batch)
        }
        "alice" => {
            let net = AliceNet::init(AgentConfig::alice(obs, feat, acts, None), false, &mut r).unwrap();
            let batch = EpisodeBatch {
                episodes: (0..2).map(|_| random_trajectory(&mut r, 2 * obs, acts + 1, 3)).collect(),
            };
            check_net(&net, &batch)
        }
        variant => {
            let mcfg = MemoryConfig {
                variant: variant.into(),
                k: 3,
            };
            let mut memory = AliceMemory::new(&mcfg, mem).unwrap();
            let net = AliceNet::init(AgentConfig::alice(obs, feat, acts, Some(mem)), memory.needs_lstm(), &mut r).unwrap();
            let mut episodes = Vec::new();
            for e in 0..3 {
                // Earlier episodes make the state entering the differentiated update non-trivial.
                for _ in 0..e + 1 {
                    let summary = EpisodeSummary {
                        start_state: (0..obs).map(|_| r.gen_range(-1.0..1.0)).collect(),
                        end_state: (0..obs).map(|_| r.gen_range(-1.0..1.0)).collect(),
                    };
                    memory.record(net.memory.as_ref().unwrap(), &summary).unwrap();
                }
                let mut t = random_trajectory(&mut r, 2 * obs, acts + 1, 3);
                t.memory = Some(memory.tape());
                episodes.push(t);
            }
            let batch = EpisodeBatch { episodes };
            check_net(&net, &batch)
        }
    }
}

pub const COMPOSITIONS: [&str; 5] = ["bob", "alice", "last_episode", "last_k", "lstm"];

// ---------------------------------------------------------------- runs

pub fn run_config(text: &str) -> RunConfig {
    RunConfig::from_toml(text, None).unwrap()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn checkpoints_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("checkpoint_"))
        .collect();
    v.sort();
    v
}
