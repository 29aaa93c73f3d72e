//! Episode memory for Alice: a summary of previous self-play episodes, read as a
//! fixed feature vector while she proposes the next task.
//!
//! Each episode is summarized by its start and end observations. A memory
//! extractor turns `start ⊕ end` into a feature vector which is fed to one of
//! the registered memory variants:
//!
//! * `last_episode` keeps only the newest feature,
//! * `last_k` averages the newest `k` features,
//! * `lstm` runs one LSTM cell step per episode and exposes the hidden state.
//!
//! Gradients are truncated to one update: the state entering the newest update is
//! a constant, and only that update (extractor and, for `lstm`, the cell) is
//! differentiated.

use std::collections::VecDeque;
use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::episodic_tuple;
use crate::error::{ensure_dim, Error, Result};
use crate::nn::params::{prefixed, prefixed_mut};
use crate::nn::{Activation, DenseLayer, DenseTape, LstmCellParams, Parameters};
use crate::registry::Registry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    pub variant: String,
    /// Window for `last_k`.
    pub k: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            variant: "lstm".into(),
            k: 5,
        }
    }
}

pub trait EpisodeMemory: Send + Sync + Debug {
    fn variant(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn needs_lstm(&self) -> bool {
        false
    }
    /// Current memory feature; the zero vector before any update.
    fn read(&self) -> Vec<f64>;
    fn update(&mut self, feature: &[f64], lstm: Option<&LstmCellParams>) -> Result<()>;
    /// Gradient of `read()` after `update(feature)` applied to this state, w.r.t. `feature`
    /// (returned) and the LSTM parameters (accumulated into `d_lstm`). `self` is a constant.
    fn backward_update_read(
        &self,
        feature: &[f64],
        lstm: Option<&LstmCellParams>,
        d_read: &[f64],
        d_lstm: Option<&mut LstmCellParams>,
    ) -> Result<Vec<f64>>;
    fn clone_box(&self) -> Box<dyn EpisodeMemory>;
    /// Flat encoding of the state for checkpoints.
    fn save_state(&self) -> Vec<f64>;
    fn load_state(&mut self, words: &[f64]) -> Result<()>;
}

impl Clone for Box<dyn EpisodeMemory> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

#[derive(Clone, Debug)]
pub struct LastEpisodeMemory {
    dim: usize,
    last: Option<Vec<f64>>,
}

impl LastEpisodeMemory {
    pub fn new(dim: usize) -> Self {
        LastEpisodeMemory { dim, last: None }
    }
}

impl EpisodeMemory for LastEpisodeMemory {
    fn variant(&self) -> &'static str {
        "last_episode"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn read(&self) -> Vec<f64> {
        self.last.clone().unwrap_or_else(|| vec![0.0; self.dim])
    }

    fn update(&mut self, feature: &[f64], _: Option<&LstmCellParams>) -> Result<()> {
        ensure_dim("memory feature", self.dim, feature.len())?;
        self.last = Some(feature.to_vec());
        Ok(())
    }

    fn backward_update_read(
        &self,
        feature: &[f64],
        _: Option<&LstmCellParams>,
        d_read: &[f64],
        _: Option<&mut LstmCellParams>,
    ) -> Result<Vec<f64>> {
        ensure_dim("memory feature", self.dim, feature.len())?;
        ensure_dim("memory read gradient", self.dim, d_read.len())?;
        Ok(d_read.to_vec())
    }

    fn clone_box(&self) -> Box<dyn EpisodeMemory> {
        Box::new(self.clone())
    }

    fn save_state(&self) -> Vec<f64> {
        match &self.last {
            None => vec![0.0],
            Some(v) => std::iter::once(1.0).chain(v.iter().copied()).collect(),
        }
    }

    fn load_state(&mut self, words: &[f64]) -> Result<()> {
        self.last = match words.first() {
            Some(&0.0) if words.len() == 1 => None,
            Some(&1.0) if words.len() == 1 + self.dim => Some(words[1..].to_vec()),
            _ => return Err(Error::contract("bad last_episode memory state")),
        };
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LastKMemory {
    dim: usize,
    k: usize,
    buffer: VecDeque<Vec<f64>>,
}

impl LastKMemory {
    pub fn new(dim: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("last_k memory needs k >= 1".into()));
        }
        Ok(LastKMemory {
            dim,
            k,
            buffer: VecDeque::with_capacity(k),
        })
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}

impl EpisodeMemory for LastKMemory {
    fn variant(&self) -> &'static str {
        "last_k"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn read(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        if self.buffer.is_empty() {
            return mean;
        }
        for entry in &self.buffer {
            mean.iter_mut().zip(entry).for_each(|(m, e)| *m += e);
        }
        let n = self.buffer.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    fn update(&mut self, feature: &[f64], _: Option<&LstmCellParams>) -> Result<()> {
        ensure_dim("memory feature", self.dim, feature.len())?;
        if self.buffer.len() == self.k {
            self.buffer.pop_front();
        }
        self.buffer.push_back(feature.to_vec());
        Ok(())
    }

    fn backward_update_read(
        &self,
        feature: &[f64],
        _: Option<&LstmCellParams>,
        d_read: &[f64],
        _: Option<&mut LstmCellParams>,
    ) -> Result<Vec<f64>> {
        ensure_dim("memory feature", self.dim, feature.len())?;
        ensure_dim("memory read gradient", self.dim, d_read.len())?;
        let n = (self.buffer.len() + 1).min(self.k) as f64;
        Ok(d_read.iter().map(|d| d / n).collect())
    }

    fn clone_box(&self) -> Box<dyn EpisodeMemory> {
        Box::new(self.clone())
    }

    fn save_state(&self) -> Vec<f64> {
        let mut out = vec![self.buffer.len() as f64];
        for e in &self.buffer {
            out.extend_from_slice(e);
        }
        out
    }

    fn load_state(&mut self, words: &[f64]) -> Result<()> {
        let n = words.first().copied().unwrap_or(-1.0);
        if n < 0.0 || n.fract() != 0.0 || n as usize > self.k || words.len() != 1 + n as usize * self.dim {
            return Err(Error::contract("bad last_k memory state"));
        }
        self.buffer = words[1..].chunks(self.dim).map(|c| c.to_vec()).collect();
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LstmMemory {
    dim: usize,
    h: Vec<f64>,
    c: Vec<f64>,
}

impl LstmMemory {
    pub fn new(dim: usize) -> Self {
        LstmMemory {
            dim,
            h: vec![0.0; dim],
            c: vec![0.0; dim],
        }
    }

    pub fn hidden(&self) -> (&[f64], &[f64]) {
        (&self.h, &self.c)
    }

    fn params<'a>(&self, lstm: Option<&'a LstmCellParams>) -> Result<&'a LstmCellParams> {
        let p = lstm.ok_or_else(|| Error::contract("lstm memory needs cell parameters"))?;
        ensure_dim("lstm memory cell width", self.dim, p.h_dim())?;
        Ok(p)
    }
}

impl EpisodeMemory for LstmMemory {
    fn variant(&self) -> &'static str {
        "lstm"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn needs_lstm(&self) -> bool {
        true
    }

    fn read(&self) -> Vec<f64> {
        self.h.clone()
    }

    fn update(&mut self, feature: &[f64], lstm: Option<&LstmCellParams>) -> Result<()> {
        let p = self.params(lstm)?;
        let (h, c) = p.forward(feature, &self.h, &self.c)?;
        if h.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::NumericFault {
                block: "memory.lstm".into(),
                detail: "non-finite hidden state".into(),
            });
        }
        self.h = h;
        self.c = c;
        Ok(())
    }

    fn backward_update_read(
        &self,
        feature: &[f64],
        lstm: Option<&LstmCellParams>,
        d_read: &[f64],
        d_lstm: Option<&mut LstmCellParams>,
    ) -> Result<Vec<f64>> {
        let p = self.params(lstm)?;
        let d_lstm = d_lstm.ok_or_else(|| Error::contract("lstm memory backward needs a gradient buffer"))?;
        let (_, _, tape) = p.forward_taped(feature, &self.h, &self.c)?;
        let zeros = vec![0.0; self.dim];
        Ok(p.backward(&tape, d_read, &zeros, d_lstm)?.dx)
    }

    fn clone_box(&self) -> Box<dyn EpisodeMemory> {
        Box::new(self.clone())
    }

    fn save_state(&self) -> Vec<f64> {
        self.h.iter().chain(&self.c).copied().collect()
    }

    fn load_state(&mut self, words: &[f64]) -> Result<()> {
        if words.len() != 2 * self.dim {
            return Err(Error::contract("bad lstm memory state"));
        }
        self.h = words[..self.dim].to_vec();
        self.c = words[self.dim..].to_vec();
        Ok(())
    }
}

pub type MemoryFactory = fn(&MemoryConfig, usize) -> Result<Box<dyn EpisodeMemory>>;

pub fn memory_registry() -> Registry<MemoryFactory> {
    let mut r: Registry<MemoryFactory> = Registry::new("memory variant");
    r.register("last_episode", |_, dim| Ok(Box::new(LastEpisodeMemory::new(dim))));
    r.register("last_k", |cfg, dim| Ok(Box::new(LastKMemory::new(dim, cfg.k)?)));
    r.register("lstm", |_, dim| Ok(Box::new(LstmMemory::new(dim))));
    r
}

pub fn build_memory(cfg: &MemoryConfig, dim: usize) -> Result<Box<dyn EpisodeMemory>> {
    if dim == 0 {
        return Err(Error::Config("memory_dim must be positive".into()));
    }
    (memory_registry().get(&cfg.variant)?)(cfg, dim)
}

/// Start and end observation of one self-play episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub start_state: Vec<f64>,
    pub end_state: Vec<f64>,
}

impl EpisodeSummary {
    pub fn input(&self) -> Result<Vec<f64>> {
        episodic_tuple(&self.start_state, &self.end_state)
    }
}

/// Trainable part of the memory: the episode-summary extractor and, for the
/// LSTM variant, the cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryNet {
    pub extractor: DenseLayer,
    pub lstm: Option<LstmCellParams>,
}

pub struct MemoryCache {
    extractor: DenseTape,
    feature: Vec<f64>,
}

impl MemoryNet {
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, memory_dim: usize, with_lstm: bool, rng: &mut R) -> Result<Self> {
        Ok(MemoryNet {
            extractor: DenseLayer::init_uniform(2 * obs_dim, memory_dim, rng)?,
            lstm: if with_lstm {
                Some(LstmCellParams::init_uniform(memory_dim, memory_dim, rng)?)
            } else {
                None
            },
        })
    }

    pub fn zeros(obs_dim: usize, memory_dim: usize, with_lstm: bool) -> Result<Self> {
        Ok(MemoryNet {
            extractor: DenseLayer::zeros(2 * obs_dim, memory_dim)?,
            lstm: if with_lstm {
                Some(LstmCellParams::zeros(memory_dim, memory_dim)?)
            } else {
                None
            },
        })
    }

    pub fn summarize_episode(&self, summary: &EpisodeSummary) -> Result<Vec<f64>> {
        summarize_episode(&self.extractor, summary)
    }

    /// Recomputes the memory feature seen during an episode from its tape.
    pub fn read_taped(&self, tape: &MemoryTape) -> Result<(Vec<f64>, Option<MemoryCache>)> {
        let Some(input) = &tape.input else {
            return Ok((tape.prior.read(), None));
        };
        let (feature, extractor) = self.extractor.forward_taped(input, Activation::Relu)?;
        let mut state = tape.prior.clone_box();
        state.update(&feature, self.lstm.as_ref())?;
        Ok((state.read(), Some(MemoryCache { extractor, feature })))
    }

    pub fn backward(&self, tape: &MemoryTape, cache: &MemoryCache, d_read: &[f64], grad: &mut MemoryNet) -> Result<()> {
        let d_feature = tape
            .prior
            .backward_update_read(&cache.feature, self.lstm.as_ref(), d_read, grad.lstm.as_mut())?;
        self.extractor.backward(&cache.extractor, &d_feature, &mut grad.extractor)?;
        Ok(())
    }
}

impl Parameters for MemoryNet {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<_> = prefixed("extractor", self.extractor.blocks()).collect();
        if let Some(l) = &self.lstm {
            out.extend(prefixed("lstm", l.blocks()));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<_> = prefixed_mut("extractor", self.extractor.blocks_mut()).collect();
        if let Some(l) = &mut self.lstm {
            out.extend(prefixed_mut("lstm", l.blocks_mut()));
        }
        out
    }
}

/// `ReLU(extractor · (start ⊕ end))`.
pub fn summarize_episode(extractor: &DenseLayer, summary: &EpisodeSummary) -> Result<Vec<f64>> {
    extractor.forward(&summary.input()?, Activation::Relu)
}

/// What a policy-gradient pass needs to rebuild an episode's memory feature.
#[derive(Clone, Debug)]
pub struct MemoryTape {
    pub prior: Box<dyn EpisodeMemory>,
    /// Summary input of the newest update, `None` before the first one.
    pub input: Option<Vec<f64>>,
}

/// Alice's persistent memory across a training run.
#[derive(Clone, Debug)]
pub struct AliceMemory {
    current: Box<dyn EpisodeMemory>,
    prior: Box<dyn EpisodeMemory>,
    last_input: Option<Vec<f64>>,
    updates: u64,
}

impl AliceMemory {
    pub fn new(cfg: &MemoryConfig, dim: usize) -> Result<Self> {
        let current = build_memory(cfg, dim)?;
        Ok(AliceMemory {
            prior: current.clone_box(),
            current,
            last_input: None,
            updates: 0,
        })
    }

    pub fn variant(&self) -> &'static str {
        self.current.variant()
    }

    pub fn needs_lstm(&self) -> bool {
        self.current.needs_lstm()
    }

    pub fn dim(&self) -> usize {
        self.current.dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn read(&self) -> Vec<f64> {
        self.current.read()
    }

    pub fn state(&self) -> &dyn EpisodeMemory {
        self.current.as_ref()
    }

    /// Folds one finished episode into the memory.
    pub fn record(&mut self, net: &MemoryNet, summary: &EpisodeSummary) -> Result<()> {
        let input = summary.input()?;
        let feature = net.extractor.forward(&input, Activation::Relu)?;
        let mut next = self.current.clone_box();
        next.update(&feature, net.lstm.as_ref())?;
        self.prior = std::mem::replace(&mut self.current, next);
        self.last_input = Some(input);
        self.updates += 1;
        Ok(())
    }

    pub fn tape(&self) -> MemoryTape {
        MemoryTape {
            prior: self.prior.clone_box(),
            input: self.last_input.clone(),
        }
    }

    /// Flat checkpoint blocks: `(current, prior, last_input, updates)`.
    pub fn save_blocks(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, u64) {
        (
            self.current.save_state(),
            self.prior.save_state(),
            self.last_input.clone().unwrap_or_default(),
            self.updates,
        )
    }

    pub fn load_blocks(&mut self, current: &[f64], prior: &[f64], last_input: &[f64], updates: u64) -> Result<()> {
        self.current.load_state(current)?;
        self.prior.load_state(prior)?;
        self.last_input = if last_input.is_empty() {
            None
        } else {
            Some(last_input.to_vec())
        };
        self.updates = updates;
        Ok(())
    }
}
