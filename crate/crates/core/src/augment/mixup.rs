use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Deserialize;

use crate::data::{DataPoint, Origin};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    /// Both shape parameters of the Beta distribution of the mixing weight.
    pub beta: f64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// Draw from `Beta(beta, beta)` as `g1 / (g1 + g2)` with `g1, g2 ~ Gamma(beta, 1)`.
pub fn sample_beta(beta: f64, rng: &mut impl Rng) -> Result<f64> {
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::Config(format!("Beta({beta}, {beta}): {e}")))?;
    let a = gamma.sample(rng);
    let b = gamma.sample(rng);
    // both draws can underflow to 0 for tiny beta
    Ok(if a + b > 0.0 { a / (a + b) } else { 0.5 })
}

/// Mix embeddings with weight `weight` on `x1`; targets and mask come from
/// `x1` when `weight > 0.5`, otherwise from `x2`.
pub fn mixup_with_weight(x1: &DataPoint, x2: &DataPoint, weight: f64, epoch: usize) -> Result<DataPoint> {
    if x1.e.shape() != x2.e.shape() || x1.y.shape() != x2.y.shape() {
        return Err(Error::Config("MixUp operands differ in shape".into()));
    }
    let mut e = x1.e.clone();
    e.as_mut_slice()
        .iter_mut()
        .zip(x2.e.as_slice())
        .for_each(|(a, b)| *a = weight * *a + (1.0 - weight) * b);
    let dominant = if weight > 0.5 { x1 } else { x2 };
    Ok(DataPoint { e, y: dominant.y.clone(), m: dominant.m.clone(), origin: Origin::Synthetic, created_epoch: epoch })
}

pub fn mixup_generate(
    x1: &DataPoint,
    x2: &DataPoint,
    cfg: &MixupConfig,
    epoch: usize,
    rng: &mut impl Rng,
) -> Result<DataPoint> {
    if !(cfg.beta > 0.0) {
        return Err(Error::Config("MixUp beta must be positive".into()));
    }
    let w = sample_beta(cfg.beta, rng)?;
    mixup_with_weight(x1, x2, w, epoch)
}

/// `count` MixUp points from uniformly drawn distinct pairs of `points`,
/// one fresh weight per pair. Output `i` uses the RNG stream `(seed, i)`.
pub fn mixup_batch(
    points: &[DataPoint],
    count: usize,
    cfg: &MixupConfig,
    epoch: usize,
    seed: u64,
) -> Result<Vec<DataPoint>> {
    if points.len() < 2 {
        return Err(Error::Domain("MixUp needs at least two points".into()));
    }
    par::map_range(count, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(seed, i as u64));
        let a = rng.random_range(0..points.len());
        let mut b = rng.random_range(0..points.len() - 1);
        if b >= a {
            b += 1;
        }
        mixup_generate(&points[a], &points[b], cfg, epoch, &mut rng)
    })
    .into_iter()
    .collect()
}
