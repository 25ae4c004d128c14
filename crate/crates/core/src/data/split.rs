use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint patient-level partition of episode ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<u64>,
    pub heldout: Vec<u64>,
    pub test: Vec<u64>,
}

/// Shuffle episode ids with `seed` and cut them into train/heldout/test.
///
/// The result depends only on the id set, not on its input order.
pub fn split_by_episode(ids: &[u64], fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {a}/{b}/{c} must be in [0,1] and sum to 1")));
    }
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = ids.len();
    let n_train = ((n as f64) * a).round() as usize;
    let n_held = (((n as f64) * b).round() as usize).min(n - n_train);
    let test = ids.split_off(n_train + n_held);
    let heldout = ids.split_off(n_train);
    Ok(Splits { train: ids, heldout, test })
}
