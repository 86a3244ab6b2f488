use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default batch size.
pub const DEFAULT_BATCH_SIZE: usize = 24;

/// Shuffles `0..n` with `seed` and cuts it into batches of `batch_size`;
/// the last partial batch is kept.
pub fn make_batches(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::EmptyInput("no samples to batch".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Seed for the shuffle of a given epoch.
pub fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch)
}
