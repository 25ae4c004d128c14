//! Sparse synthetic ICU-style episodes driven by a latent AR(1) process.
//!
//! Each stay carries a latent state `z` that evolves hourly as
//! `z[h+1] = ar * z[h] + sqrt(1 - ar^2) * noise`, so it is stationary with
//! unit variance. Variable `f` reads `z` through a fixed random linear map
//! shared by all stays, plus observation noise, and is then mapped to a
//! clinical-looking scale. A few variables are observed almost every hour,
//! the rest rarely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::data::{Episode, Triplet};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_episodes: usize,
    pub n_vars: usize,
    pub latent_dim: usize,
    pub stay_hours_min: usize,
    pub stay_hours_max: usize,
    pub dense_var_count: usize,
    pub dense_rate: f64,
    pub sparse_rate: f64,
    pub ar_coefficient: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_episodes: 1000,
            n_vars: 16,
            latent_dim: 4,
            stay_hours_min: 48,
            stay_hours_max: 120,
            dense_var_count: 2,
            dense_rate: 0.9,
            sparse_rate: 0.02,
            ar_coefficient: 0.95,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if self.n_vars == 0 {
            return bad("n_vars must be positive");
        }
        if self.latent_dim == 0 || self.latent_dim > self.n_vars {
            return bad("latent_dim must be in 1..=n_vars");
        }
        if self.dense_var_count > self.n_vars {
            return bad("dense_var_count exceeds n_vars");
        }
        if !(0.0..=1.0).contains(&self.dense_rate) || !(0.0..=1.0).contains(&self.sparse_rate) {
            return bad("observation rates must lie in [0, 1]");
        }
        if !(self.ar_coefficient > 0.0 && self.ar_coefficient < 1.0) {
            return bad("ar_coefficient must lie in (0, 1)");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0");
        }
        if self.stay_hours_min == 0 || self.stay_hours_min > self.stay_hours_max {
            return bad("stay hours range is empty");
        }
        Ok(())
    }

    pub fn observation_rate(&self, var: usize) -> f64 {
        if var < self.dense_var_count {
            self.dense_rate
        } else {
            self.sparse_rate
        }
    }
}

/// Corpus-wide constants: latent readout and per-variable display scale.
struct Readout {
    weights: Vec<Vec<f64>>,
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl Readout {
    fn draw(cfg: &GeneratorConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(cfg.seed, u64::MAX));
        let w_std = 1.0 / (cfg.latent_dim as f64).sqrt();
        let weights = (0..cfg.n_vars)
            .map(|_| {
                (0..cfg.latent_dim)
                    .map(|_| w_std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let offset = (0..cfg.n_vars).map(|_| rng.random_range(-20.0..120.0)).collect();
        let scale = (0..cfg.n_vars).map(|_| rng.random_range(0.5..15.0)).collect();
        Self { weights, offset, scale }
    }
}

/// Generate `cfg.n_episodes` stays with ids `0..n_episodes`.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<Episode>> {
    cfg.validate()?;
    let readout = Readout::draw(cfg);
    par::map_range(cfg.n_episodes, |i| generate_one(cfg, &readout, i as u64))
        .into_iter()
        .collect()
}

fn generate_one(cfg: &GeneratorConfig, readout: &Readout, id: u64) -> Result<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(cfg.seed, id));
    let hours = rng.random_range(cfg.stay_hours_min..=cfg.stay_hours_max);
    let innovation = (1.0 - cfg.ar_coefficient * cfg.ar_coefficient).sqrt();
    let mut z: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut triplets = Vec::new();
    for h in 0..hours {
        for f in 0..cfg.n_vars {
            // draw unconditionally to keep the stream layout independent of rates
            let u: f64 = rng.random();
            let jitter: f64 = rng.random();
            let eps: f64 = rng.sample(StandardNormal);
            if u < cfg.observation_rate(f) {
                let signal: f64 = readout.weights[f].iter().zip(&z).map(|(w, zi)| w * zi).sum();
                let value = readout.offset[f] + readout.scale[f] * (signal + cfg.noise_std * eps);
                triplets.push(Triplet { t: h as f64 + jitter, var: f, value });
            }
        }
        for zi in z.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *zi = cfg.ar_coefficient * *zi + innovation * n;
        }
    }
    Episode::new(id, triplets, hours as f64)
}

/// Fraction of empty (hour, variable) cells after first-per-hour binning of
/// whole stays.
pub fn binned_missingness(episodes: &[Episode], n_vars: usize) -> f64 {
    let mut cells = 0usize;
    let mut filled = 0usize;
    for ep in episodes {
        let hours = ep.length_hours().floor() as usize;
        let mut seen = vec![false; hours * n_vars];
        for tr in ep.triplets() {
            let h = tr.t.floor() as usize;
            if h < hours {
                seen[h * n_vars + tr.var] = true;
            }
        }
        cells += seen.len();
        filled += seen.iter().filter(|&&b| b).count();
    }
    if cells == 0 {
        return 1.0;
    }
    1.0 - filled as f64 / cells as f64
}
