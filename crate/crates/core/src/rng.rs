use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible stream for `(seed, stage, index)`.
pub fn stream(seed: u64, stage: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(stage) << 32) | u64::from(index));
    rng
}

/// Stage identifiers used when deriving RNG streams.
pub mod stage {
    pub const SELECTION: u32 = 1;
    pub const SAMPLING: u32 = 2;
    pub const HDR_REFERENCE: u32 = 3;
    pub const HISTORICAL: u32 = 4;
}
