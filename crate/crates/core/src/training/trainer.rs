//! The interleaved training loop for one seed, its checkpoints, and the
//! on-disk run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::agents::{AgentConfig, PolicyParams};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::memory::AliceMemory;
use crate::nets::AliceNet;
use crate::nn::{AdamState, Parameters};
use crate::rollout::{run_target_episode, EpisodeBatch};
use crate::selfplay::{selfplay_episode, SelfPlayOutcome, SelfPlayParams, SelfPlayRecord};

use super::checkpoint::{Checkpoint, EXTENSION};
use super::metrics::{segments_header, CsvAppender, MetricsRow, RunningAverage, SegmentRow, METRICS_FILE, METRICS_HEADER, SEGMENTS_FILE};
use super::reinforce::{reinforce_update, Diagnostics, LossConfig};
use super::rng::{stream, StreamKind};
use super::strategy::{strategy_registry, BatchKind, Strategy};

pub const CONFIG_ECHO_FILE: &str = "config.echo";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";

/// Everything one batch produced.
#[derive(Clone, Debug, Default)]
pub struct BatchOutput {
    pub kind: Option<BatchKind>,
    pub metrics: Vec<MetricsRow>,
    pub segments: Vec<SegmentRow>,
    pub records: Vec<SelfPlayRecord>,
    /// `(agent, diagnostics)` for each update applied.
    pub diagnostics: Vec<(&'static str, Diagnostics)>,
}

pub struct Trainer {
    cfg: RunConfig,
    seed: u64,
    strategy: Box<dyn Strategy>,
    loss: LossConfig,
    selfplay: SelfPlayParams,
    bob: PolicyParams,
    bob_opt: AdamState,
    alice: Option<(AliceNet, AdamState)>,
    memory: Option<AliceMemory>,
    target_episodes: u64,
    selfplay_episodes: u64,
    slot: u64,
    average: RunningAverage,
    elapsed_before_ms: u64,
    started: Instant,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(cfg: RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let strategy = strategy_registry().take(&cfg.train.strategy)?;
        let env = cfg.env.build()?;
        let spec = env.spec().clone();
        let mut rng = stream(seed, StreamKind::Init, 0);

        let bob_cfg = AgentConfig::bob(spec.obs_dim, cfg.agent.bob_feature_dim, spec.action_count);
        let bob = PolicyParams::init(bob_cfg, &mut rng)?;
        let bob_opt = AdamState::new(&bob, cfg.train.lr);

        let memory = if strategy.alice_memory() {
            Some(AliceMemory::new(&cfg.memory, cfg.agent.memory_dim)?)
        } else {
            None
        };
        let alice = if strategy.uses_selfplay() {
            let mem_dim = memory.as_ref().map(|_| cfg.agent.memory_dim);
            let alice_cfg = AgentConfig::alice(spec.obs_dim, cfg.agent.alice_feature_dim, spec.action_count, mem_dim);
            let lstm = memory.as_ref().is_some_and(AliceMemory::needs_lstm);
            let net = AliceNet::init(alice_cfg, lstm, &mut rng)?;
            let opt = AdamState::new(&net, cfg.train.lr);
            Some((net, opt))
        } else {
            None
        };

        let pool = if cfg.run.rollout_threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.run.rollout_threads)
                    .build()
                    .map_err(|e| Error::Config(format!("rollout thread pool: {e}")))?,
            )
        } else {
            None
        };

        Ok(Trainer {
            loss: LossConfig {
                value_coef: cfg.train.value_coef,
                entropy_coef: cfg.train.entropy_coef,
                grad_clip: cfg.train.grad_clip,
            },
            selfplay: cfg.selfplay_params()?,
            average: RunningAverage::new(cfg.train.avg_window),
            cfg,
            seed,
            strategy,
            bob,
            bob_opt,
            alice,
            memory,
            target_episodes: 0,
            selfplay_episodes: 0,
            slot: 0,
            elapsed_before_ms: 0,
            started: Instant::now(),
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bob(&self) -> &PolicyParams {
        &self.bob
    }

    pub fn alice(&self) -> Option<&AliceNet> {
        self.alice.as_ref().map(|(net, _)| net)
    }

    pub fn memory(&self) -> Option<&AliceMemory> {
        self.memory.as_ref()
    }

    pub fn target_episodes(&self) -> u64 {
        self.target_episodes
    }

    pub fn selfplay_episodes(&self) -> u64 {
        self.selfplay_episodes
    }

    pub fn running_average(&self) -> f64 {
        self.average.mean()
    }

    pub fn is_finished(&self) -> bool {
        self.target_episodes >= self.cfg.train.total_episodes
    }

    fn wall_time_ms(&self) -> u64 {
        if self.cfg.run.record_wall_time {
            self.elapsed_before_ms + self.started.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    /// Runs the next batch of the schedule and applies its updates.
    pub fn next_batch(&mut self) -> Result<BatchOutput> {
        if self.is_finished() {
            return Ok(BatchOutput::default());
        }
        let kind = self.strategy.batch_kind(self.slot, self.cfg.train.interleave_n);
        let out = match kind {
            BatchKind::Target => self.target_batch()?,
            BatchKind::SelfPlay => self.selfplay_batch()?,
        };
        self.slot += 1;
        Ok(out)
    }

    fn target_batch(&mut self) -> Result<BatchOutput> {
        let remaining = self.cfg.train.total_episodes - self.target_episodes;
        let count = (self.cfg.train.batch_size as u64).min(remaining);
        let first = self.target_episodes;
        let (seed, env_cfg, bob) = (self.seed, &self.cfg.env, &self.bob);
        let episodes = collect(self.pool.as_ref(), first..first + count, |i| {
            let mut env = env_cfg.build()?;
            run_target_episode(bob, env.as_mut(), &mut stream(seed, StreamKind::Target, i))
        })?;

        let mut out = BatchOutput {
            kind: Some(BatchKind::Target),
            ..BatchOutput::default()
        };
        let mut batch = EpisodeBatch::default();
        for (j, ep) in episodes.into_iter().enumerate() {
            let reward = ep.total_reward();
            let running_avg = self.average.push(reward);
            out.metrics.push(MetricsRow {
                episode: first + j as u64 + 1,
                task: BatchKind::Target.as_str(),
                strategy: self.strategy.name().to_string(),
                seed: self.seed,
                reward,
                running_avg,
                wall_time_ms: 0,
            });
            batch.push(ep);
        }
        self.target_episodes += count;
        let context = format!("bob target batch, episodes {}..={}", first + 1, first + count);
        let diag = reinforce_update(&mut self.bob, &mut self.bob_opt, &batch, &self.loss, &context)?;
        out.diagnostics.push(("bob", diag));
        let wall = self.wall_time_ms();
        out.metrics.iter_mut().for_each(|m| m.wall_time_ms = wall);
        Ok(out)
    }

    fn selfplay_batch(&mut self) -> Result<BatchOutput> {
        let count = self.cfg.train.batch_size as u64;
        let first = self.selfplay_episodes;
        let (seed, env_cfg, bob, params) = (self.seed, &self.cfg.env, &self.bob, &self.selfplay);
        let (alice, alice_opt) = self
            .alice
            .as_mut()
            .ok_or_else(|| Error::contract("self-play batch without an Alice"))?;

        let outcomes: Vec<SelfPlayOutcome> = match self.memory.as_mut() {
            // One memory, updated in episode order: no parallelism here.
            Some(memory) => {
                let mut env = env_cfg.build()?;
                (first..first + count)
                    .map(|i| {
                        let mut rng = stream(seed, StreamKind::SelfPlay, i);
                        selfplay_episode(alice, bob, env.as_mut(), Some(&mut *memory), &mut rng, params)
                    })
                    .collect::<Result<_>>()?
            }
            None => {
                let alice = &*alice;
                collect(self.pool.as_ref(), first..first + count, |i| {
                    let mut env = env_cfg.build()?;
                    let mut rng = stream(seed, StreamKind::SelfPlay, i);
                    selfplay_episode(alice, bob, env.as_mut(), None, &mut rng, params)
                })?
            }
        };

        let mut out = BatchOutput {
            kind: Some(BatchKind::SelfPlay),
            ..BatchOutput::default()
        };
        let mut alice_batch = EpisodeBatch::default();
        let mut bob_batch = EpisodeBatch::default();
        for (j, o) in outcomes.into_iter().enumerate() {
            out.segments.push(SegmentRow {
                episode: first + j as u64 + 1,
                seed: self.seed,
                strategy: self.strategy.name().to_string(),
                s0: o.record.s0.clone(),
                s_a: o.record.s_a.clone(),
            });
            out.records.push(o.record);
            alice_batch.push(o.alice);
            bob_batch.push(o.bob);
        }
        self.selfplay_episodes += count;

        let range = format!("episodes {}..={}", first + 1, first + count);
        let diag = reinforce_update(alice, alice_opt, &alice_batch, &self.loss, &format!("alice self-play batch, {range}"))?;
        out.diagnostics.push(("alice", diag));
        // Bob may have nothing to learn from if every task was already solved at step 0.
        if bob_batch.step_count() > 0 {
            let context = format!("bob self-play batch, {range}");
            let diag = reinforce_update(&mut self.bob, &mut self.bob_opt, &bob_batch, &self.loss, &context)?;
            out.diagnostics.push(("bob", diag));
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push_text("config", self.cfg.to_toml());
        c.push_u64(
            "counters",
            vec![
                self.seed,
                self.target_episodes,
                self.selfplay_episodes,
                self.slot,
                self.wall_time_ms(),
            ],
        );
        push_net(&mut c, "bob", &self.bob, &self.bob_opt);
        if let Some((net, opt)) = &self.alice {
            push_net(&mut c, "alice", net, opt);
        }
        if let Some(mem) = &self.memory {
            let (current, prior, last_input, updates) = mem.save_blocks();
            c.push_f64("memory.current", current);
            c.push_f64("memory.prior", prior);
            c.push_f64("memory.last_input", last_input);
            c.push_u64("memory.updates", vec![updates]);
        }
        let (values, sum) = self.average.snapshot();
        c.push_f64("average.values", values);
        c.push_f64("average.sum", vec![sum]);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let cfg = RunConfig::from_toml(c.text("config")?, None)?;
        let counters = c.u64s("counters")?;
        let &[seed, target_episodes, selfplay_episodes, slot, elapsed] = counters else {
            return Err(bad_block("counters", "expected 5 entries"));
        };
        let mut t = Trainer::new(cfg, seed)?;
        load_net(c, "bob", &mut t.bob, &mut t.bob_opt)?;
        match (&mut t.alice, c.has("alice.adam.t")) {
            (Some((net, opt)), true) => load_net(c, "alice", net, opt)?,
            (None, false) => {}
            _ => return Err(bad_block("alice", "presence does not match the strategy")),
        }
        if let Some(mem) = &mut t.memory {
            let updates = c.u64s("memory.updates")?.first().copied().unwrap_or(0);
            mem.load_blocks(
                c.f64s("memory.current")?,
                c.f64s("memory.prior")?,
                c.f64s("memory.last_input")?,
                updates,
            )?;
        }
        let sum = c.f64s("average.sum")?;
        let &[sum] = sum else {
            return Err(bad_block("average.sum", "expected 1 entry"));
        };
        t.average = RunningAverage::restore(t.cfg.train.avg_window, c.f64s("average.values")?, sum);
        t.target_episodes = target_episodes;
        t.selfplay_episodes = selfplay_episodes;
        t.slot = slot;
        t.elapsed_before_ms = elapsed;
        Ok(t)
    }
}

fn bad_block(name: &str, detail: &str) -> Error {
    Error::Checkpoint {
        offset: 0,
        message: format!("block `{name}`: {detail}"),
    }
}

fn push_net<P: Parameters>(c: &mut Checkpoint, prefix: &str, net: &P, opt: &AdamState) {
    for (name, block) in net.blocks() {
        c.push_f64(format!("{prefix}.{name}"), block.to_vec());
    }
    c.push_u64(format!("{prefix}.adam.t"), vec![opt.t]);
    c.push_f64(format!("{prefix}.adam.m"), opt.m.concat());
    c.push_f64(format!("{prefix}.adam.v"), opt.v.concat());
}

fn load_net<P: Parameters>(c: &Checkpoint, prefix: &str, net: &mut P, opt: &mut AdamState) -> Result<()> {
    for (name, block) in net.blocks_mut() {
        let key = format!("{prefix}.{name}");
        let data = c.f64s(&key)?;
        if data.len() != block.len() {
            return Err(bad_block(&key, &format!("expected {} values, found {}", block.len(), data.len())));
        }
        block.copy_from_slice(data);
    }
    let t = c.u64s(&format!("{prefix}.adam.t"))?;
    opt.t = t.first().copied().ok_or_else(|| bad_block(&format!("{prefix}.adam.t"), "empty"))?;
    for (which, moments) in [("m", &mut opt.m), ("v", &mut opt.v)] {
        let key = format!("{prefix}.adam.{which}");
        let flat = c.f64s(&key)?;
        let total: usize = moments.iter().map(Vec::len).sum();
        if flat.len() != total {
            return Err(bad_block(&key, &format!("expected {total} values, found {}", flat.len())));
        }
        let mut offset = 0;
        for m in moments.iter_mut() {
            let n = m.len();
            m.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
    Ok(())
}

/// Runs `f` over `indices`, on `pool` when given. Results keep index order, and
/// each episode's randomness depends only on its index, so the output does not
/// depend on the thread count.
fn collect<T, F>(pool: Option<&rayon::ThreadPool>, indices: std::ops::Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| indices.into_par_iter().map(&f).collect()),
        None => indices.map(f).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seed: u64,
    pub target_episodes: u64,
    pub selfplay_episodes: u64,
    pub final_running_avg: f64,
}

/// Output directory of one seed: `<out>/<strategy>/seed_<seed>`.
pub fn seed_dir(out: &Path, strategy: &str, seed: u64) -> PathBuf {
    out.join(strategy).join(format!("seed_{seed}"))
}

/// Checkpoint written when a run passes `episodes` target episodes; the final
/// state always goes to [`CHECKPOINT_FILE`].
pub fn interval_checkpoint(dir: &Path, episodes: u64) -> PathBuf {
    dir.join(format!("checkpoint_{episodes}.{EXTENSION}"))
}

/// Trains one seed from scratch into `dir`.
pub fn run_to_dir(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunSummary> {
    let trainer = Trainer::new(cfg.clone(), seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let echo = dir.join(CONFIG_ECHO_FILE);
    fs::write(&echo, cfg.to_toml()).map_err(|e| Error::io(&echo, e))?;
    drive(trainer, dir)
}

/// Continues the run whose checkpoint is at `ckpt`; rows written after that
/// checkpoint are discarded and regenerated.
pub fn resume_run(ckpt: &Path) -> Result<RunSummary> {
    let trainer = Trainer::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let dir = ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
    drive(trainer, &dir)
}

fn drive(mut t: Trainer, dir: &Path) -> Result<RunSummary> {
    let obs_dim = t.cfg.env.build()?.spec().obs_dim;
    let mut metrics = CsvAppender::open(&dir.join(METRICS_FILE), METRICS_HEADER, t.target_episodes)?;
    let mut segments = CsvAppender::open(&dir.join(SEGMENTS_FILE), &segments_header(obs_dim), t.selfplay_episodes)?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let every = t.cfg.run.checkpoint_every;

    while !t.is_finished() {
        let before = t.target_episodes;
        let out = t.next_batch()?;
        for row in &out.metrics {
            metrics.write_line(&row.to_csv_line())?;
        }
        for row in &out.segments {
            segments.write_line(&row.to_csv_line())?;
        }
        if every > 0 && t.target_episodes / every > before / every && !t.is_finished() {
            metrics.flush()?;
            segments.flush()?;
            t.to_checkpoint().save(&interval_checkpoint(dir, t.target_episodes))?;
            log::info!(
                "seed {}: checkpoint at {} target episodes, running avg {:.4}",
                t.seed,
                t.target_episodes,
                t.running_average()
            );
        }
    }
    metrics.flush()?;
    segments.flush()?;
    t.to_checkpoint().save(&ckpt_path)?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        seed: t.seed,
        target_episodes: t.target_episodes,
        selfplay_episodes: t.selfplay_episodes,
        final_running_avg: t.running_average(),
    })
}

/// All seeds of `cfg`, `parallel_seeds` at a time. Results follow `cfg.train.seeds`.
pub fn run_all_seeds(cfg: &RunConfig, out: &Path) -> Result<Vec<RunSummary>> {
    let run = |&seed: &u64| run_to_dir(cfg, seed, &seed_dir(out, &cfg.train.strategy, seed));
    if cfg.run.parallel_seeds > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.parallel_seeds)
            .build()
            .map_err(|e| Error::Config(format!("seed thread pool: {e}")))?;
        pool.install(|| cfg.train.seeds.par_iter().map(run).collect())
    } else {
        cfg.train.seeds.iter().map(run).collect()
    }
}
