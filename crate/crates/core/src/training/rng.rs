use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Init = 1,
    Target = 2,
    SelfPlay = 3,
    Baseline = 4,
}

/// Counter-keyed generator: the ChaCha key is built directly from
/// `(seed, kind, index)`, so every episode's randomness is fixed by its identity
/// and not by execution order.
pub fn stream(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(kind as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(b"memplay1");
    ChaCha8Rng::from_seed(key)
}
