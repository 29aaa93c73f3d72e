use crate::registry::Registry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BatchKind {
    Target,
    SelfPlay,
}

impl BatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BatchKind::Target => "target",
            BatchKind::SelfPlay => "selfplay",
        }
    }
}

/// A training strategy decides the batch schedule and what Alice looks like.
pub trait Strategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn uses_selfplay(&self) -> bool;

    /// Whether Alice is conditioned on an episode memory.
    fn alice_memory(&self) -> bool;

    /// Kind of the batch at schedule position `slot` (0-based). Self-play
    /// strategies repeat `[self-play, target × interleave_n]`.
    fn batch_kind(&self, slot: u64, interleave_n: usize) -> BatchKind {
        if self.uses_selfplay() && slot % (interleave_n as u64 + 1) == 0 {
            BatchKind::SelfPlay
        } else {
            BatchKind::Target
        }
    }
}

pub struct NoSelfPlay;

impl Strategy for NoSelfPlay {
    fn name(&self) -> &'static str {
        "none"
    }
    fn uses_selfplay(&self) -> bool {
        false
    }
    fn alice_memory(&self) -> bool {
        false
    }
}

pub struct SelfPlay;

impl Strategy for SelfPlay {
    fn name(&self) -> &'static str {
        "selfplay"
    }
    fn uses_selfplay(&self) -> bool {
        true
    }
    fn alice_memory(&self) -> bool {
        false
    }
}

pub struct MemorySelfPlay;

impl Strategy for MemorySelfPlay {
    fn name(&self) -> &'static str {
        "memory_selfplay"
    }
    fn uses_selfplay(&self) -> bool {
        true
    }
    fn alice_memory(&self) -> bool {
        true
    }
}

pub fn strategy_registry() -> Registry<Box<dyn Strategy>> {
    let mut r: Registry<Box<dyn Strategy>> = Registry::new("strategy");
    for s in [
        Box::new(NoSelfPlay) as Box<dyn Strategy>,
        Box::new(SelfPlay),
        Box::new(MemorySelfPlay),
    ] {
        r.register(s.name(), s);
    }
    r
}
