use rand::seq::SliceRandom;

use crate::benchmarks::stream;
use crate::error::{Error, Result};

pub const MIN_DATASET: usize = 10;

/// Disjoint train/validation/test index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into `⌊0.7n⌋`, `⌊0.2n⌋` and the remainder.
pub fn split_dataset(n: usize, seed: u64) -> Result<Split> {
    if n < MIN_DATASET {
        return Err(Error::DatasetTooSmall(n, MIN_DATASET));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, 7));
    let n_train = n * 7 / 10;
    let n_val = n * 2 / 10;
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(Split { train: idx, validation, test })
}
