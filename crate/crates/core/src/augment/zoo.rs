use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::PcaBasis;
use crate::data::{DataPoint, Mask, Mat};
use crate::error::{Error, Result};
use crate::metrics::{mmse, pl_from_loss};
use crate::model::ForecasterParams;
use crate::par;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooConfig {
    /// Step size of the embedding update.
    pub lambda: f64,
    /// Perturbation radius.
    pub mu: f64,
    /// Perturbation pairs per step.
    pub k: usize,
    pub steps: usize,
    /// Weight of the loss term against the membership term.
    pub alpha: f64,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self { lambda: 3000.0, mu: 300.0, k: 3, steps: 10, alpha: 0.75 }
    }
}

impl ZooConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.mu > 0.0) || self.k == 0 || !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("ZOO needs lambda, mu > 0, k >= 1 and alpha in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `g = -(alpha * mMSE + (1 - alpha) * PL)`, with PL thresholded at `tau`.
pub fn zoo_objective_g(x: &DataPoint, tau: f64, params: &ForecasterParams, alpha: f64) -> Result<f64> {
    if !tau.is_finite() {
        return Err(Error::Domain(format!("threshold {tau} is not finite")));
    }
    let loss = mmse(x, params)?;
    Ok(-(alpha * loss + (1.0 - alpha) * f64::from(pl_from_loss(loss, tau))))
}

/// Source of unit-norm search directions.
#[derive(Clone, Copy, Debug)]
pub enum Perturbation<'a> {
    /// Standard normal over every embedding entry.
    Gaussian,
    /// Standard normal coefficients over the kept principal components.
    Pca(&'a PcaBasis),
}

impl Perturbation<'_> {
    /// Draw one direction of unit Frobenius norm over `dim` entries.
    pub fn sample(&self, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut u = match self {
            Perturbation::Gaussian => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            Perturbation::Pca(basis) => {
                let mut u = vec![0.0; dim];
                for comp in basis.components() {
                    let c: f64 = rng.sample(StandardNormal);
                    u.iter_mut().zip(comp).for_each(|(a, p)| *a += c * p);
                }
                u
            }
        };
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
        }
        u
    }
}

/// One estimator step with explicit directions:
/// `e - lambda * mean_i[(g(e + mu u_i) - g(e - mu u_i)) / (2 mu) * u_i]`.
///
/// Pairs whose objective is not finite are skipped and the mean runs over
/// the remaining pairs. Returns the new embedding and the number of pairs
/// used; with zero usable pairs the embedding is returned unchanged.
pub fn zoo_update<G>(e: &Mat, g: G, directions: &[Vec<f64>], lambda: f64, mu: f64) -> Result<(Mat, usize)>
where
    G: Fn(&Mat) -> Result<f64>,
{
    let mut step = vec![0.0; e.as_slice().len()];
    let mut used = 0usize;
    for u in directions {
        if u.len() != step.len() {
            return Err(Error::Config("perturbation size differs from embedding size".into()));
        }
        let shifted = |sign: f64| {
            let mut m = e.clone();
            m.as_mut_slice().iter_mut().zip(u).for_each(|(v, d)| *v += sign * mu * d);
            m
        };
        let plus = g(&shifted(1.0))?;
        let minus = g(&shifted(-1.0))?;
        let slope = (plus - minus) / (2.0 * mu);
        if !slope.is_finite() {
            continue;
        }
        used += 1;
        step.iter_mut().zip(u).for_each(|(s, d)| *s += slope * d);
    }
    if used == 0 {
        log::warn!("zeroth-order step skipped: no perturbation pair gave a finite objective");
        return Ok((e.clone(), 0));
    }
    let mut next = e.clone();
    let scale = lambda / used as f64;
    next.as_mut_slice().iter_mut().zip(&step).for_each(|(v, s)| *v -= scale * s);
    Ok((next, used))
}

fn step_with(
    e: &Mat,
    y: &Mat,
    m: &Mask,
    tau: f64,
    params: &ForecasterParams,
    cfg: &ZooConfig,
    perturbation: Perturbation<'_>,
    rng: &mut impl Rng,
) -> Result<(Mat, usize)> {
    let dim = e.as_slice().len();
    let directions: Vec<Vec<f64>> = (0..cfg.k).map(|_| perturbation.sample(dim, rng)).collect();
    let probe = |cand: &Mat| {
        // y and m stay those of the seed; only the embedding moves
        let x = DataPoint::original(cand.clone(), y.clone(), m.clone());
        zoo_objective_g(&x, tau, params, cfg.alpha)
    };
    zoo_update(e, probe, &directions, cfg.lambda, cfg.mu)
}

/// One ZOO step with isotropic Gaussian directions.
pub fn zoo_step(
    e: &Mat,
    y: &Mat,
    m: &Mask,
    tau: f64,
    params: &ForecasterParams,
    cfg: &ZooConfig,
    rng: &mut impl Rng,
) -> Result<Mat> {
    Ok(step_with(e, y, m, tau, params, cfg, Perturbation::Gaussian, rng)?.0)
}

/// One ZOO step with directions confined to the span of `basis`.
#[allow(clippy::too_many_arguments)]
pub fn zoo_pca_step(
    e: &Mat,
    y: &Mat,
    m: &Mask,
    tau: f64,
    params: &ForecasterParams,
    cfg: &ZooConfig,
    basis: &PcaBasis,
    rng: &mut impl Rng,
) -> Result<Mat> {
    if basis.dim() != e.as_slice().len() {
        return Err(Error::Config("PCA basis dimension differs from embedding size".into()));
    }
    Ok(step_with(e, y, m, tau, params, cfg, Perturbation::Pca(basis), rng)?.0)
}

/// Bookkeeping for one generation wave.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ZooStats {
    /// Steps that moved the embedding (at least one usable pair).
    pub steps_executed: usize,
    pub pairs_skipped: usize,
}

/// Run `cfg.steps` ZOO steps from each seed's embedding. Each seed uses its
/// own RNG stream derived from `(seed, index)`.
pub fn zoo_generate(
    seeds: &[DataPoint],
    tau: f64,
    params: &ForecasterParams,
    cfg: &ZooConfig,
    perturbation: Perturbation<'_>,
    epoch: usize,
    seed: u64,
) -> Result<(Vec<DataPoint>, ZooStats)> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Domain("ZOO needs at least one seed point".into()));
    }
    if let Perturbation::Pca(b) = perturbation {
        if b.dim() != seeds[0].e.as_slice().len() {
            return Err(Error::Config("PCA basis dimension differs from embedding size".into()));
        }
    }
    let results = par::map_indexed(seeds, |i, x| -> Result<(DataPoint, ZooStats)> {
        let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(seed, i as u64));
        let mut e = x.e.clone();
        let mut stats = ZooStats::default();
        for _ in 0..cfg.steps {
            let (next, used) = step_with(&e, &x.y, &x.m, tau, params, cfg, perturbation, &mut rng)?;
            stats.pairs_skipped += cfg.k - used;
            if used > 0 {
                stats.steps_executed += 1;
            }
            e = next;
        }
        Ok((x.synthetic_from(e, epoch), stats))
    });
    let mut out = Vec::with_capacity(seeds.len());
    let mut total = ZooStats::default();
    for r in results {
        let (p, s) = r?;
        total.steps_executed += s.steps_executed;
        total.pairs_skipped += s.pairs_skipped;
        out.push(p);
    }
    Ok((out, total))
}
