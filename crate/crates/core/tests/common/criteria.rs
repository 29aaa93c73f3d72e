//! One check per acceptance criterion. Each returns `Ok(detail)` on pass and
//! `Err(detail)` on failure; thresholds are the constants below.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use memplay::agents::{AgentConfig, PolicyParams};
use memplay::analysis::{fit_pca, pca_analysis, read_segments};
use memplay::config::RunConfig;
use memplay::env::acrobot::{Acrobot, AcrobotState, MAX_VEL_1, MAX_VEL_2, TORQUES};
use memplay::env::{EnvConfig, Environment, TaskMode};
use memplay::memory::{AliceMemory, EpisodeMemory, LastEpisodeMemory, LastKMemory, LstmMemory, MemoryConfig};
use memplay::nets::AliceNet;
use memplay::nn::LstmCellParams;
use memplay::rollout::run_target_episode;
use memplay::selfplay::{effective_bob_time, selfplay_episode, selfplay_rewards, SelfPlayParams};
use memplay::training::metrics::{METRICS_FILE, SEGMENTS_FILE};
use memplay::training::trainer::CHECKPOINT_FILE;
use memplay::training::{resume_run, run_to_dir, seed_dir, stream, StreamKind};
use rand::Rng;
use tempfile::TempDir;

use super::*;

pub const GRAD_DRAWS: u64 = 20;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_SECONDS: f64 = 10.0;
pub const ACROBOT_PAIRS: usize = 1000;
pub const ACROBOT_TOL: f64 = 1e-9;
pub const ENERGY_STEPS: usize = 100;
pub const ENERGY_STATES: u64 = 100;
pub const ENERGY_TOL: f64 = 0.01;
pub const PCA_CLOUDS: u64 = 50;
pub const PCA_TOL: f64 = 1e-8;
pub const PROTOCOL_EPISODES: u64 = 1000;
pub const DETERMINISM_SEED: u64 = 7;
pub const DETERMINISM_EPISODES: u64 = 2000;
pub const DESK_SEEDS: [u64; 3] = [1, 2, 3];
pub const DESK_STRATEGIES: [&str; 3] = ["none", "selfplay", "memory_selfplay"];
pub const DESK_MINUTES: f64 = 15.0;
pub const RANDOM_BASELINE_EPISODES: u64 = 2000;
pub const LEARNING_MARGIN: f64 = 1.0;
pub const TREND_SLACK: f64 = 0.05;
pub const DIVERSITY_RATIO: f64 = 1.5;
pub const MEMORY_SEQUENCES: u64 = 10_000;
pub const LSTM_SEQUENCES: u64 = 1000;
pub const LSTM_TOL: f64 = 1e-12;

pub type Verdict = std::result::Result<String, String>;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- gradients

pub fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let mut worst = (0.0f64, "", 0);
    for kind in COMPOSITIONS {
        for draw in 0..GRAD_DRAWS {
            let e = composition_grad_error(kind, draw);
            if !(e <= worst.0) {
                worst = (e, kind, draw);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst.0 < GRAD_TOL && secs < GRAD_SECONDS,
        format!(
            "max rel err {:.2e} ({} draw {}) over {} compositions x {GRAD_DRAWS} draws, {secs:.2}s",
            worst.0,
            worst.1,
            worst.2,
            COMPOSITIONS.len()
        ),
    )
}

// ---------------------------------------------------------------- oracles

pub fn random_acrobot_state<R: Rng>(r: &mut R) -> AcrobotState {
    [
        r.gen_range(-PI..PI),
        r.gen_range(-PI..PI),
        r.gen_range(-MAX_VEL_1..MAX_VEL_1),
        r.gen_range(-MAX_VEL_2..MAX_VEL_2),
    ]
}

/// Largest component error of the library step against the oracle step.
pub fn acrobot_step_error(pairs: usize) -> f64 {
    let env = Acrobot::new(&EnvConfig::acrobot()).unwrap();
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let s = random_acrobot_state(&mut r);
        let a = r.gen_range(0..TORQUES.len());
        let got = env.advance(&s, a);
        let want = acrobot_step(s, TORQUES[a], 0.2, true);
        let errs = [
            angle_diff(got[0], want[0]).abs(),
            angle_diff(got[1], want[1]).abs(),
            (got[2] - want[2]).abs(),
            (got[3] - want[3]).abs(),
        ];
        worst = errs.iter().fold(worst, |m, &e| m.max(e));
    }
    worst
}

/// Total mechanical energy from link centre-of-mass positions and velocities,
/// zero potential at the pivot.
pub fn energy_oracle(s: &AcrobotState) -> f64 {
    let [q1, q2, w1, w2] = *s;
    let (lc1, l1, lc2, g) = (0.5, 1.0, 0.5, 9.8);
    let y1 = -lc1 * q1.cos();
    let y2 = -l1 * q1.cos() - lc2 * (q1 + q2).cos();
    let (vx1, vy1) = (lc1 * q1.cos() * w1, lc1 * q1.sin() * w1);
    let vx2 = l1 * q1.cos() * w1 + lc2 * (q1 + q2).cos() * (w1 + w2);
    let vy2 = l1 * q1.sin() * w1 + lc2 * (q1 + q2).sin() * (w1 + w2);
    0.5 * (vx1 * vx1 + vy1 * vy1) + 0.5 * w1 * w1 + 0.5 * (vx2 * vx2 + vy2 * vy2) + 0.5 * (w1 + w2) * (w1 + w2) + g * (y1 + y2)
}

/// Worst relative drift of total energy over `steps` zero-torque steps, from
/// starting states drawn by the environment's own reset.
pub fn energy_drift(states: u64, steps: usize) -> f64 {
    let mut env = Acrobot::new(&EnvConfig::acrobot()).unwrap();
    env.set_velocity_clipping(false);
    env.set_mode(TaskMode::SelfPlay);
    let mut worst = 0.0f64;
    for i in 0..states {
        let mut r = stream(i, StreamKind::Target, 0);
        env.reset(&mut r);
        let e0 = energy_oracle(&env.state());
        for _ in 0..steps {
            env.step(1).unwrap();
        }
        let e1 = energy_oracle(&env.state());
        worst = worst.max((e1 - e0).abs() / e0.abs());
    }
    worst
}

/// Largest axis or variance disagreement between the library PCA and a Jacobi
/// eigendecomposition of the covariance, over random point clouds.
pub fn pca_error(clouds: u64) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..clouds {
        let mut r = rng(500 + c);
        let scales: Vec<f64> = (0..6).map(|j| 0.3 + j as f64 * 0.7 + r.gen_range(0.0..0.2)).collect();
        let points: Vec<Vec<f64>> = (0..20)
            .map(|_| scales.iter().map(|s| s * r.gen_range(-1.0..1.0) + 2.0).collect())
            .collect();
        let model = fit_pca(&points, 6).unwrap();
        let oracle = jacobi_eigen(&covariance(&points));
        for (k, (lambda, v)) in oracle.iter().enumerate() {
            worst = worst.max((model.variances[k] - lambda).abs());
            let plus: f64 = model.axes[k].iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let minus: f64 = model.axes[k].iter().zip(v).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            worst = worst.max(plus.min(minus));
        }
    }
    worst
}

pub fn numeric_oracles() -> Verdict {
    let step = acrobot_step_error(ACROBOT_PAIRS);
    let drift = energy_drift(ENERGY_STATES, ENERGY_STEPS);
    let pca = pca_error(PCA_CLOUDS);
    verdict(
        step < ACROBOT_TOL && drift < ENERGY_TOL && pca < PCA_TOL,
        format!(
            "acrobot step err {step:.2e} over {ACROBOT_PAIRS} pairs; energy drift {:.4}% over {ENERGY_STEPS} steps; PCA err {pca:.2e} over {PCA_CLOUDS} clouds",
            100.0 * drift
        ),
    )
}

// ---------------------------------------------------------------- protocol

#[derive(Debug, Default)]
pub struct ProtocolTally {
    pub episodes: u64,
    pub successes: u64,
    pub failures: u64,
    pub violations: Vec<String>,
}

/// Plays random self-play episodes with freshly initialised agents and checks
/// every protocol invariant on each.
pub fn protocol_tally(env_cfg: &EnvConfig, episodes: u64, variant: Option<&str>) -> ProtocolTally {
    let mut env = env_cfg.build().unwrap();
    let spec = env.spec().clone();
    let params = SelfPlayParams::new(spec.max_steps_selfplay, 0.1).unwrap();
    let mut r = rng(77);
    let mem_cfg = variant.map(|v| MemoryConfig { variant: v.into(), k: 5 });
    let mut memory = mem_cfg.as_ref().map(|c| AliceMemory::new(c, 6).unwrap());
    let alice = AliceNet::init(
        AgentConfig::alice(spec.obs_dim, 16, spec.action_count, memory.as_ref().map(|_| 6)),
        memory.as_ref().is_some_and(AliceMemory::needs_lstm),
        &mut r,
    )
    .unwrap();
    let bob = PolicyParams::init(AgentConfig::bob(spec.obs_dim, 16, spec.action_count), &mut r).unwrap();
    let mut tally = ProtocolTally::default();
    for i in 0..episodes {
        let mut er = stream(3, StreamKind::SelfPlay, i);
        let before = memory.as_ref().map(AliceMemory::updates);
        let out = selfplay_episode(&alice, &bob, env.as_mut(), memory.as_mut(), &mut er, &params).unwrap();
        let rec = &out.record;
        let mut bad = |what: &str| tally.violations.push(format!("episode {i}: {what}"));
        if rec.t_a + rec.t_b > params.t_max {
            bad("t_A + t_B > t_max");
        }
        if rec.t_a == 0 || rec.t_a > params.t_max - 1 {
            bad("t_A outside [1, t_max - 1]");
        }
        if !rec.bob_success && rec.t_b != params.t_max - rec.t_a {
            bad("failed Bob did not use the whole budget");
        }
        if rec.bob_success && !env.state_close(&rec.s_b, &rec.s_a).unwrap() {
            bad("success without state_close(s_B, s_A)");
        }
        let t_eff = effective_bob_time(rec.t_a, rec.t_b, rec.bob_success, params.t_max);
        let want_a = 0.1 * (t_eff as f64 - rec.t_a as f64).max(0.0);
        if (rec.r_a - want_a).abs() > 1e-12 || (rec.r_b + 0.1 * t_eff as f64).abs() > 1e-12 {
            bad("rewards disagree with the payoff formulas");
        }
        // Monotone in t_B_eff: Alice never loses and Bob always loses from a longer chase.
        let (ra1, rb1) = selfplay_rewards(rec.t_a, t_eff + 1, true, &params);
        if ra1 < rec.r_a || rb1 >= rec.r_b {
            bad("rewards not monotone in effective Bob time");
        }
        if (out.alice.total_reward() - rec.r_a).abs() > 1e-12 || (out.bob.total_reward() - rec.r_b).abs() > 1e-9 {
            bad("trajectory rewards do not sum to the episode rewards");
        }
        if out.alice.len() != rec.t_a || out.bob.len() != rec.t_b {
            bad("trajectory lengths differ from t_A / t_B");
        }
        if let (Some(b), Some(m)) = (before, memory.as_ref()) {
            if m.updates() != b + 1 {
                bad("memory not updated exactly once");
            }
        }
        tally.episodes += 1;
        if rec.bob_success {
            tally.successes += 1;
        } else {
            tally.failures += 1;
        }
    }
    tally
}

pub fn protocol_maze() -> EnvConfig {
    let mut cfg = EnvConfig::gridmaze();
    cfg.width = 6;
    cfg.height = 6;
    // short budget so failures are common enough to exercise that branch
    cfg.max_steps_selfplay = 12;
    cfg.max_steps_target = 12;
    cfg
}

pub fn selfplay_protocol() -> Verdict {
    let t = protocol_tally(&protocol_maze(), PROTOCOL_EPISODES, Some("lstm"));
    let ok = t.violations.is_empty() && t.episodes == PROTOCOL_EPISODES && t.successes > 0 && t.failures > 0;
    verdict(
        ok,
        format!(
            "{} episodes ({} Bob successes, {} failures), {} violations{}",
            t.episodes,
            t.successes,
            t.failures,
            t.violations.len(),
            t.violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- determinism

pub fn determinism_config(checkpoint_every: u64) -> RunConfig {
    run_config(&format!(
        "[train]\nstrategy = \"memory_selfplay\"\ntotal_episodes = {DETERMINISM_EPISODES}\nseeds = [{DETERMINISM_SEED}]\n\
         [run]\ncheckpoint_every = {checkpoint_every}\nrecord_wall_time = false\n"
    ))
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn determinism() -> Verdict {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cfg = determinism_config(0);
    run_to_dir(&cfg, DETERMINISM_SEED, &a).unwrap();
    run_to_dir(&cfg, DETERMINISM_SEED, &b).unwrap();
    let same_metrics = bytes(&a.join(METRICS_FILE)) == bytes(&b.join(METRICS_FILE));
    let same_segments = bytes(&a.join(SEGMENTS_FILE)) == bytes(&b.join(SEGMENTS_FILE));

    // Interrupted run: keep only the first interval checkpoint and the rows it
    // covers, then resume from it.
    run_to_dir(&determinism_config(1000), DETERMINISM_SEED, &c).unwrap();
    let ckpts = checkpoints_in(&c);
    let Some(first) = ckpts.first().cloned() else {
        return Err("no interval checkpoint written".into());
    };
    let d = tmp.path().join("d");
    std::fs::create_dir_all(&d).unwrap();
    let resumed_from = d.join(first.file_name().unwrap());
    std::fs::copy(&first, &resumed_from).unwrap();
    for f in [METRICS_FILE, SEGMENTS_FILE] {
        std::fs::copy(c.join(f), d.join(f)).unwrap();
    }
    resume_run(&resumed_from).unwrap();
    let resume_metrics = bytes(&d.join(METRICS_FILE)) == bytes(&a.join(METRICS_FILE));
    let resume_segments = bytes(&d.join(SEGMENTS_FILE)) == bytes(&a.join(SEGMENTS_FILE));
    // `c` ran to the end under the same configuration, so its final checkpoint is the reference.
    let resume_state = bytes(&d.join(CHECKPOINT_FILE)) == bytes(&c.join(CHECKPOINT_FILE));
    verdict(
        same_metrics && same_segments && resume_metrics && resume_segments && resume_state,
        format!(
            "repeat: metrics {same_metrics}, segments {same_segments}; resume from {}: metrics {resume_metrics}, segments {resume_segments}, final state {resume_state}",
            first.file_name().unwrap().to_string_lossy()
        ),
    )
}

// ---------------------------------------------------------------- desk scale

/// The compressed training setting used by the desk-scale criteria.
pub fn desk_config(strategy: &str) -> RunConfig {
    run_config(&format!(
        "[env]\nwidth = 6\nheight = 6\n\
         [train]\nstrategy = \"{strategy}\"\nbatch_size = 32\ntotal_episodes = 20000\nlr = 0.003\navg_window = 2000\n\
         [run]\ncheckpoint_every = 0\nrecord_wall_time = false\n"
    ))
}

pub struct DeskRuns {
    pub dir: TempDir,
    /// `(strategy, seed, final running average)`.
    pub finals: Vec<(String, u64, f64)>,
    /// Random-policy mean target reward per seed.
    pub random: Vec<f64>,
    pub minutes: f64,
}

impl DeskRuns {
    pub fn finals_of(&self, strategy: &str) -> Vec<f64> {
        self.finals.iter().filter(|f| f.0 == strategy).map(|f| f.2).collect()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean target-task reward of a uniform-random Bob over fresh mazes.
pub fn random_baseline(cfg: &RunConfig, seed: u64) -> f64 {
    let mut env = cfg.env.build().unwrap();
    let spec = env.spec().clone();
    let uniform = PolicyParams::zeros(AgentConfig::bob(spec.obs_dim, 1, spec.action_count)).unwrap();
    let mut total = 0.0;
    for i in 0..RANDOM_BASELINE_EPISODES {
        let mut r = stream(seed, StreamKind::Target, i);
        total += run_target_episode(&uniform, env.as_mut(), &mut r).unwrap().total_reward();
    }
    total / RANDOM_BASELINE_EPISODES as f64
}

pub fn desk_runs() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let start = Instant::now();
        let mut finals = Vec::new();
        for strategy in DESK_STRATEGIES {
            let cfg = desk_config(strategy);
            for seed in DESK_SEEDS {
                let out = seed_dir(dir.path(), strategy, seed);
                let s = run_to_dir(&cfg, seed, &out).unwrap();
                finals.push((strategy.to_string(), seed, s.final_running_avg));
            }
        }
        let minutes = start.elapsed().as_secs_f64() / 60.0;
        let random = DESK_SEEDS.iter().map(|&s| random_baseline(&desk_config("none"), s)).collect();
        DeskRuns {
            dir,
            finals,
            random,
            minutes,
        }
    })
}

pub fn desk_learning() -> Verdict {
    let runs = desk_runs();
    let none = runs.finals_of("none");
    let gains: Vec<f64> = none.iter().zip(&runs.random).map(|(n, r)| n - r).collect();
    let gain = median(gains);
    verdict(
        gain >= LEARNING_MARGIN && runs.minutes < DESK_MINUTES,
        format!(
            "none finals {none:.3?} vs random {:.3?}: median gain {gain:.3} (need >= {LEARNING_MARGIN}); 9 runs in {:.1} min",
            runs.random, runs.minutes
        ),
    )
}

pub fn desk_trend() -> Verdict {
    let runs = desk_runs();
    let m: Vec<f64> = DESK_STRATEGIES.iter().map(|s| median(runs.finals_of(s))).collect();
    let (none, sp, mem) = (m[0], m[1], m[2]);
    verdict(
        mem - sp >= -TREND_SLACK && sp - none >= -TREND_SLACK,
        format!(
            "median finals none {none:.3}, selfplay {sp:.3}, memory_selfplay {mem:.3}; margins mem-sp {:.3}, sp-none {:.3} (need >= -{TREND_SLACK})",
            mem - sp,
            sp - none
        ),
    )
}

pub fn diversity() -> Verdict {
    let runs = desk_runs();
    let mut segments = Vec::new();
    for strategy in ["selfplay", "memory_selfplay"] {
        for seed in DESK_SEEDS {
            segments.extend(read_segments(&seed_dir(runs.dir.path(), strategy, seed).join(SEGMENTS_FILE)).unwrap());
        }
    }
    let (report, _) = pca_analysis(&segments, false).unwrap();
    let ratio = report.distance_ratio.unwrap_or(f64::NAN);
    verdict(
        ratio >= DIVERSITY_RATIO,
        format!(
            "median PCA segment distance {:?}; ratio {ratio:.3} (need >= {DIVERSITY_RATIO})",
            report.per_strategy
        ),
    )
}

// ---------------------------------------------------------------- memory

/// Reads after every update of last_k(1) and last_episode, plus their gradients
/// with respect to the newest feature; returns the number of disagreements.
pub fn last_k_one_mismatches(sequences: u64) -> u64 {
    let mut mismatches = 0;
    for s in 0..sequences {
        let mut r = rng(9000 + s);
        let dim = r.gen_range(1..6);
        let len = r.gen_range(1..12);
        let mut a = LastKMemory::new(dim, 1).unwrap();
        let mut b = LastEpisodeMemory::new(dim);
        for _ in 0..len {
            let f: Vec<f64> = (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect();
            let d: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            if a.backward_update_read(&f, None, &d, None).unwrap() != b.backward_update_read(&f, None, &d, None).unwrap() {
                mismatches += 1;
            }
            a.update(&f, None).unwrap();
            b.update(&f, None).unwrap();
            if a.read() != b.read() {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Largest difference between the LSTM memory and the gate equations unrolled by hand.
pub fn lstm_unroll_error(sequences: u64) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..sequences {
        let mut r = rng(20_000 + s);
        let dim = r.gen_range(1..7);
        let cell = LstmCellParams::init_uniform(dim, dim, &mut r).unwrap();
        let mut mem = LstmMemory::new(dim);
        let (mut h, mut c) = (vec![0.0; dim], vec![0.0; dim]);
        for _ in 0..r.gen_range(1..15) {
            let x: Vec<f64> = (0..dim).map(|_| r.gen_range(-2.0..2.0)).collect();
            mem.update(&x, Some(&cell)).unwrap();
            (h, c) = lstm_oracle(&cell, &x, &h, &c);
            let (mh, mc) = mem.hidden();
            for i in 0..dim {
                worst = worst.max((mh[i] - h[i]).abs()).max((mc[i] - c[i]).abs());
            }
            let read = mem.read();
            for i in 0..dim {
                worst = worst.max((read[i] - h[i]).abs());
            }
        }
    }
    worst
}

pub fn memory_equivalences() -> Verdict {
    let mismatches = last_k_one_mismatches(MEMORY_SEQUENCES);
    let lstm = lstm_unroll_error(LSTM_SEQUENCES);
    verdict(
        mismatches == 0 && lstm < LSTM_TOL,
        format!("last_k(1) vs last_episode: {mismatches} mismatches over {MEMORY_SEQUENCES} sequences; LSTM unroll err {lstm:.2e} over {LSTM_SEQUENCES} sequences"),
    )
}
