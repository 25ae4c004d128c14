use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::forward::mmse_gradient;
use super::{Dims, EmbeddingMap, ForecasterParams};
use crate::data::{BinnedWindow, DataPoint};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub hidden_dim: usize,
    /// Embedding width `n`.
    pub embed_dim: usize,
    pub pool_heads: usize,
    pub input_len: usize,
    /// Forecast horizon `T`.
    pub horizon: usize,
    /// Global-norm clip on each plain SGD batch gradient; `inf` disables it.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.2,
            batch_size: 32,
            max_epochs: 60,
            hidden_dim: 32,
            embed_dim: 32,
            pool_heads: 4,
            input_len: 24,
            horizon: 24,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.dims(1)?;
        Ok(())
    }

    pub fn dims(&self, n_vars: usize) -> Result<Dims> {
        let d = Dims {
            n_vars,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            pool_heads: self.pool_heads,
            input_len: self.input_len,
            horizon: self.horizon,
        };
        d.validate()?;
        Ok(d)
    }
}

/// DP-SGD settings: per-sample clipping to `clip_norm`, Gaussian noise with
/// standard deviation `noise_multiplier * clip_norm / batch_size`, and the
/// learning rate multiplied by `lr_scale`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub lr_scale: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self { noise_multiplier: 1.1, clip_norm: 2.0, lr_scale: 100.0 }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_multiplier >= 0.0) || !(self.clip_norm > 0.0) || !(self.lr_scale > 0.0) {
            return Err(Error::Config("DP config needs sigma >= 0, C > 0, lr_scale > 0".into()));
        }
        Ok(())
    }
}

/// Scale `g` by `min(1, clip / ||g||)`; returns the factor used.
pub fn clip_gradient(g: &mut [f64], clip: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let factor = if norm > clip { clip / norm } else { 1.0 };
    if factor < 1.0 {
        g.iter_mut().for_each(|v| *v *= factor);
    }
    factor
}

fn check_gradient(g: &[f64], params: &ForecasterParams) -> Result<()> {
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        let group = params
            .layout()
            .groups(params.dims())
            .into_iter()
            .find(|(_, r, _)| r.contains(&i))
            .map_or("?", |(name, _, _)| name);
        return Err(Error::NonFiniteGradient(format!("coordinate {i} in group `{group}` is {}", g[i])));
    }
    Ok(())
}

fn per_sample(batch: &[&DataPoint], params: &ForecasterParams) -> Result<Vec<(f64, Vec<f64>)>> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    par::map(batch, |x| mmse_gradient(x, params).map(|g| (g.loss, g.params)))
        .into_iter()
        .collect()
}

/// One SGD step on the batch-mean masked MSE. Returns the batch loss
/// measured before the update.
pub fn train_step(batch: &[&DataPoint], params: &mut ForecasterParams, cfg: &TrainConfig) -> Result<f64> {
    let grads = per_sample(batch, params)?;
    let b = grads.len() as f64;
    let mut mean = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in &grads {
        loss += l;
        mean.iter_mut().zip(g).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= b);
    check_gradient(&mean, params)?;
    clip_gradient(&mut mean, cfg.grad_clip);
    params.apply_update(&mean, cfg.learning_rate);
    Ok(loss / b)
}

/// One DP-SGD step: clip each per-sample gradient, average, add Gaussian
/// noise, and step with the scaled learning rate.
pub fn dp_train_step(
    batch: &[&DataPoint],
    params: &mut ForecasterParams,
    cfg: &TrainConfig,
    dp: &DpConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    dp.validate()?;
    let grads = per_sample(batch, params)?;
    let b = grads.len() as f64;
    let mut update = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, mut g) in grads {
        check_gradient(&g, params)?;
        loss += l;
        clip_gradient(&mut g, dp.clip_norm);
        update.iter_mut().zip(&g).for_each(|(u, v)| *u += v);
    }
    let noise_std = dp.noise_multiplier * dp.clip_norm / b;
    for u in update.iter_mut() {
        *u /= b;
        if noise_std > 0.0 {
            *u += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    params.apply_update(&update, cfg.learning_rate * dp.lr_scale);
    Ok(loss / b)
}

/// One shuffled pass over `points`; DP-SGD when `dp` is given. Returns the
/// mean batch loss.
pub fn train_epoch(
    points: &[&DataPoint],
    params: &mut ForecasterParams,
    cfg: &TrainConfig,
    dp: Option<&DpConfig>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&DataPoint> = chunk.iter().map(|&i| points[i]).collect();
        total += match dp {
            Some(dp) => dp_train_step(&batch, params, cfg, dp, rng)?,
            None => train_step(&batch, params, cfg)?,
        };
        batches += 1;
    }
    Ok(if batches > 0 { total / batches as f64 } else { 0.0 })
}

/// Jointly train the embedding map and a fresh forecaster on raw windows for
/// `cfg.max_epochs` epochs. The returned map is the frozen embedding used
/// by every later stage.
pub fn pretrain_embedding(windows: &[BinnedWindow], cfg: &TrainConfig) -> Result<(EmbeddingMap, ForecasterParams)> {
    cfg.validate()?;
    let first = windows.first().ok_or_else(|| Error::Domain("no training windows".into()))?;
    let n_vars = first.values.cols();
    let dims = cfg.dims(n_vars)?;
    let mut emb = EmbeddingMap::init(n_vars, cfg.embed_dim, par::stream_seed(cfg.seed, 1));
    let mut params = ForecasterParams::init(dims, par::stream_seed(cfg.seed, 2))?;
    let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(cfg.seed, 3));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let n = cfg.embed_dim;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let grads: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = par::map(chunk, |&i| {
                let w = &windows[i];
                let x = DataPoint::original(emb.embed(w)?, w.target.clone(), w.mask_out.clone());
                let g = mmse_gradient(&x, &params)?;
                let mut gw = vec![0.0; 2 * n_vars * n];
                let mut gb = vec![0.0; n];
                for h in 0..w.values.rows() {
                    let de = g.embedding.row(h);
                    gb.iter_mut().zip(de).for_each(|(a, b)| *a += b);
                    for f in 0..n_vars {
                        let v = w.values.get(h, f);
                        if v != 0.0 {
                            gw[f * n..(f + 1) * n].iter_mut().zip(de).for_each(|(a, b)| *a += v * b);
                        }
                        if w.mask_in.get(h, f) {
                            gw[(n_vars + f) * n..(n_vars + f + 1) * n].iter_mut().zip(de).for_each(|(a, b)| *a += b);
                        }
                    }
                }
                gw.extend_from_slice(&gb);
                Ok((g.loss, g.params, gw))
            });
            let b = chunk.len() as f64;
            let mut gp = vec![0.0; params.len()];
            let mut ge = vec![0.0; (2 * n_vars + 1) * n];
            for r in grads {
                let (l, p, e) = r?;
                epoch_loss += l;
                gp.iter_mut().zip(&p).for_each(|(a, v)| *a += v / b);
                ge.iter_mut().zip(&e).for_each(|(a, v)| *a += v / b);
            }
            check_gradient(&gp, &params)?;
            if ge.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient("embedding map".into()));
            }
            let norm = gp.iter().chain(&ge).map(|v| v * v).sum::<f64>().sqrt();
            if norm > cfg.grad_clip {
                let f = cfg.grad_clip / norm;
                gp.iter_mut().chain(ge.iter_mut()).for_each(|v| *v *= f);
            }
            params.apply_update(&gp, cfg.learning_rate);
            let (gw, gb) = ge.split_at(2 * n_vars * n);
            emb.weight_mut().iter_mut().zip(gw).for_each(|(w, g)| *w -= cfg.learning_rate * g);
            emb.bias_mut().iter_mut().zip(gb).for_each(|(w, g)| *w -= cfg.learning_rate * g);
        }
        log::debug!("pretrain epoch {epoch}: mean loss {:.5}", epoch_loss / windows.len() as f64);
    }
    Ok((emb, params))
}
