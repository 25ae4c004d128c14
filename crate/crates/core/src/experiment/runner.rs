use log::{info, warn};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Method, RunConfig};
use super::gate::{evaluate_candidate, gate_metrics, AcceptanceState, GateRecord};
use crate::augment::{mixup_batch, pca_fit, pool_cap, zoo_generate, Perturbation, SyntheticPool};
use crate::data::io::{MetricsRow, ATTACK_EPOCH};
use crate::data::{build_windows, split_by_episode, BinnedWindow, DataPoint, Episode, Splits, Standardizer};
use crate::error::{Error, Result};
use crate::metrics::{attack_report, mse_set, AttackReport, LossTable, Membership};
use crate::model::{
    pretrain_embedding, train_epoch, Checkpoint, DpConfig, EmbeddingMap, ForecasterParams, TrainConfig,
};
use crate::par;

// stream indices under the run seed
const STREAM_GEN: u64 = 10;
const STREAM_MIX: u64 = 11;
const STREAM_SEEDS: u64 = 12;
const STREAM_DP: u64 = 13;

/// Windows of each split, binned with the training-set standardizer.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub splits: Splits,
    pub standardizer: Standardizer,
    pub train: Vec<BinnedWindow>,
    pub heldout: Vec<BinnedWindow>,
    pub test: Vec<BinnedWindow>,
}

/// Split episodes by patient, fit (or reuse) the standardizer on the
/// training episodes, and window every split.
pub fn prepare(episodes: &[Episode], cfg: &RunConfig, standardizer: Option<Standardizer>) -> Result<Prepared> {
    let [a, b, c] = cfg.split;
    let ids: Vec<u64> = episodes.iter().map(|e| e.id).collect();
    let splits = split_by_episode(&ids, (a, b, c), cfg.seed)?;
    let pick = |set: &[u64]| -> Vec<&Episode> {
        let set: std::collections::HashSet<u64> = set.iter().copied().collect();
        episodes.iter().filter(|e| set.contains(&e.id)).collect()
    };
    let (tr, ho, te) = (pick(&splits.train), pick(&splits.heldout), pick(&splits.test));
    let standardizer = match standardizer {
        Some(s) => s,
        None => Standardizer::fit(tr.iter().copied(), cfg.n_vars)?,
    };
    if standardizer.n_vars() != cfg.n_vars {
        return Err(Error::Config(format!(
            "standardizer has {} variables, config says {}",
            standardizer.n_vars(),
            cfg.n_vars
        )));
    }
    let spec = cfg.window_spec();
    let train = build_windows(tr, &spec, &standardizer)?;
    let heldout = build_windows(ho, &spec, &standardizer)?;
    let test = build_windows(te, &spec, &standardizer)?;
    if train.is_empty() || heldout.is_empty() || test.is_empty() {
        return Err(Error::Domain(format!(
            "empty split after windowing (train {}, heldout {}, test {})",
            train.len(),
            heldout.len(),
            test.len()
        )));
    }
    Ok(Prepared { splits, standardizer, train, heldout, test })
}

/// Embedded points of each split.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Vec<DataPoint>,
    pub heldout: Vec<DataPoint>,
    pub test: Vec<DataPoint>,
}

pub fn embed_windows(windows: &[BinnedWindow], emb: &EmbeddingMap) -> Result<Vec<DataPoint>> {
    par::map(windows, |w| Ok(DataPoint::original(emb.embed(w)?, w.target.clone(), w.mask_out.clone())))
        .into_iter()
        .collect()
}

impl Datasets {
    pub fn embed(prep: &Prepared, emb: &EmbeddingMap) -> Result<Self> {
        Ok(Self {
            train: embed_windows(&prep.train, emb)?,
            heldout: embed_windows(&prep.heldout, emb)?,
            test: embed_windows(&prep.test, emb)?,
        })
    }
}

/// Train the embedding and baseline forecaster on the training windows.
pub fn pretrain(prep: &Prepared, cfg: &RunConfig) -> Result<Checkpoint> {
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    let (embedding, params) = pretrain_embedding(&prep.train, &tc)?;
    Ok(Checkpoint { seed: cfg.seed, embedding, params, standardizer: Some(prep.standardizer.clone()) })
}

/// Loss-threshold attack with the threshold at the mean member loss.
pub fn run_attack(params: &ForecasterParams, members: &[DataPoint], nonmembers: &[DataPoint]) -> Result<AttackReport> {
    let m = LossTable::from_points(Membership::Member, members, params)?;
    let n = LossTable::from_points(Membership::NonMember, nonmembers, params)?;
    let tau = m.mean()?;
    attack_report(&m, &n, tau)
}

/// Final-attack metrics row (train vs test) for `params`.
pub fn attack_row(
    run_id: &str,
    method: Method,
    knob: f64,
    params: &ForecasterParams,
    data: &Datasets,
) -> Result<(MetricsRow, AttackReport)> {
    let report = run_attack(params, &data.train, &data.test)?;
    let row = MetricsRow {
        run_id: run_id.to_string(),
        method: method.as_str().to_string(),
        alpha_or_beta: knob,
        epoch: ATTACK_EPOCH,
        mse_test: mse_set(&data.test, params)?,
        mse_heldout: mse_set(&data.heldout, params)?,
        tpr_at_tau: report.tpr,
        fpr_at_tau: report.fpr,
        priv_ratio: report.priv_ratio,
        auroc: report.auroc,
        tau: report.tau,
    };
    Ok((row, report))
}

/// Retraining mixture: every original point plus as many pool points,
/// drawn without replacement when the pool is large enough and topped up
/// with replacement otherwise.
pub fn balanced_mixture<'a>(
    train: &'a [DataPoint],
    pool: &'a SyntheticPool,
    rng: &mut impl Rng,
) -> Vec<&'a DataPoint> {
    let n = train.len();
    let mut out: Vec<&DataPoint> = train.iter().collect();
    if pool.is_empty() {
        return out;
    }
    if pool.len() >= n {
        out.extend(index::sample(rng, pool.len(), n).into_iter().filter_map(|i| pool.get(i)));
    } else {
        out.extend(pool.iter());
        for _ in pool.len()..n {
            out.extend(pool.get(rng.random_range(0..pool.len())));
        }
    }
    out
}

/// Everything an augmentation run produced.
#[derive(Clone, Debug)]
pub struct AugmentOutcome {
    pub rows: Vec<MetricsRow>,
    pub gate_log: Vec<GateRecord>,
    pub params: ForecasterParams,
    pub attack: AttackReport,
    pub accepted_rounds: usize,
}

fn gate_row(cfg: &RunConfig, epoch: usize, g: &super::gate::GateMetrics, mse_test: f64) -> MetricsRow {
    MetricsRow {
        run_id: cfg.run_id(),
        method: cfg.method.as_str().to_string(),
        alpha_or_beta: cfg.knob(),
        epoch: epoch as i64,
        mse_test,
        mse_heldout: g.mse_heldout,
        tpr_at_tau: g.tpr,
        fpr_at_tau: g.fpr,
        priv_ratio: g.priv_ratio,
        auroc: g.auroc,
        tau: g.tau,
    }
}

/// Generate synthetic points each round, retrain a candidate on the
/// original/synthetic mixture, and keep it only if the gate accepts it.
/// Every row is passed to `sink` as soon as it exists.
pub fn run_augmentation(
    cfg: &RunConfig,
    data: &Datasets,
    baseline: &ForecasterParams,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<AugmentOutcome> {
    cfg.validate()?;
    if !matches!(cfg.method, Method::Zoo | Method::ZooPca | Method::Mixup) {
        return Err(Error::Config(format!("`{}` is not an augmentation method", cfg.method.as_str())));
    }
    let run_id = cfg.run_id();
    let n_train = data.train.len();
    let spr = cfg.samples_per_round(n_train);
    if spr == 0 {
        return Err(Error::Domain("training set too small for augmentation".into()));
    }
    let mut pool = SyntheticPool::new(pool_cap(spr, cfg.rounds, n_train));
    let basis = match cfg.method {
        Method::ZooPca => {
            let embs: Vec<_> = data.train.iter().map(|x| x.e.clone()).collect();
            let b = pca_fit(&embs, cfg.pca_ratio)?;
            info!("PCA keeps {} of {} directions", b.rank(), b.dim());
            Some(b)
        }
        _ => None,
    };
    let mut retrain = cfg.train.clone();
    if let Some(lr) = cfg.retrain_learning_rate {
        retrain.learning_rate = lr;
    }

    let mut params = baseline.clone();
    let g0 = gate_metrics(&params, &data.train, &data.heldout, pool.iter())?;
    let mut state = AcceptanceState::new(g0.priv_ratio, g0.mse_heldout, cfg.gate.clone())?;
    let mut rows = Vec::new();
    let row0 = gate_row(cfg, 0, &g0, mse_set(&data.test, &params)?);
    sink(&row0)?;
    rows.push(row0);
    let mut gate_log = vec![GateRecord {
        round: 0,
        accepted: true,
        reason: "baseline".into(),
        priv_ratio: g0.priv_ratio,
        mse_heldout: g0.mse_heldout,
        objective: state.best_objective(),
        priv_best: state.priv_best,
        mse_best: state.mse_best,
        tau: g0.tau,
        pool_size: 0,
        generated: 0,
    }];
    let mut accepted_rounds = 0;

    for round in 1..=cfg.rounds {
        let round_seed = |stream: u64| par::stream_seed(par::stream_seed(cfg.seed, stream), round as u64);
        // reference threshold over the current augmented set
        let reference: Vec<DataPoint> = pool.iter().cloned().collect();
        let ref_losses = crate::metrics::sample_losses(&reference, &params)?;
        let train_losses = crate::metrics::sample_losses(&data.train, &params)?;
        let tau = (ref_losses.iter().sum::<f64>() + train_losses.iter().sum::<f64>())
            / (ref_losses.len() + train_losses.len()) as f64;

        let wave = match cfg.method {
            Method::Mixup => mixup_batch(&data.train, spr, &cfg.mixup, round, round_seed(STREAM_GEN))?,
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(round_seed(STREAM_SEEDS));
                let seeds: Vec<DataPoint> =
                    index::sample(&mut rng, n_train, spr).into_iter().map(|i| data.train[i].clone()).collect();
                let pert = match &basis {
                    Some(b) => Perturbation::Pca(b),
                    None => Perturbation::Gaussian,
                };
                let (pts, stats) = zoo_generate(&seeds, tau, &params, &cfg.zoo, pert, round, round_seed(STREAM_GEN))?;
                if stats.pairs_skipped > 0 {
                    warn!("round {round}: {} ZOO pairs skipped for non-finite objectives", stats.pairs_skipped);
                }
                pts
            }
        };
        let generated = wave.len();
        pool.insert(wave)?;

        let mut rng = ChaCha8Rng::seed_from_u64(round_seed(STREAM_MIX));
        let mixture = balanced_mixture(&data.train, &pool, &mut rng);
        let mut candidate = params.clone();
        for _ in 0..cfg.retrain_epochs {
            train_epoch(&mixture, &mut candidate, &retrain, None, &mut rng)?;
        }

        let (decision, g) = evaluate_candidate(&candidate, &mut state, &data.train, &data.heldout, pool.iter())?;
        let row = gate_row(cfg, round, &g, mse_set(&data.test, &candidate)?);
        sink(&row)?;
        rows.push(row);
        info!(
            "round {round}: priv {:.4} mse {:.5} -> {}",
            g.priv_ratio,
            g.mse_heldout,
            decision.reason()
        );
        gate_log.push(GateRecord {
            round,
            accepted: decision.accepted(),
            reason: decision.reason().into(),
            priv_ratio: g.priv_ratio,
            mse_heldout: g.mse_heldout,
            objective: state.objective(g.priv_ratio, g.mse_heldout),
            priv_best: state.priv_best,
            mse_best: state.mse_best,
            tau,
            pool_size: pool.len(),
            generated,
        });
        if decision.accepted() {
            params = candidate;
            accepted_rounds += 1;
        }
    }

    let (row, attack) = attack_row(&run_id, cfg.method, cfg.knob(), &params, data)?;
    sink(&row)?;
    rows.push(row);
    Ok(AugmentOutcome { rows, gate_log, params, attack, accepted_rounds })
}

/// Train a fresh forecaster on the training points, with DP-SGD when `dp` is given.
pub fn train_from_scratch(
    data: &[DataPoint],
    cfg: &TrainConfig,
    n_vars: usize,
    dp: Option<&DpConfig>,
    epochs: usize,
    seed: u64,
) -> Result<ForecasterParams> {
    let dims = cfg.dims(n_vars)?;
    let mut params = ForecasterParams::init(dims, par::stream_seed(seed, 2))?;
    let mut rng = ChaCha8Rng::seed_from_u64(par::stream_seed(seed, STREAM_DP));
    let refs: Vec<&DataPoint> = data.iter().collect();
    for _ in 0..epochs {
        train_epoch(&refs, &mut params, cfg, dp, &mut rng)?;
    }
    Ok(params)
}

/// DP-SGD from scratch on the frozen embedding for every noise multiplier
/// in `cfg.dp_sigmas`, one attack row each.
pub fn run_dp_sweep(
    cfg: &RunConfig,
    data: &Datasets,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<Vec<(f64, ForecasterParams, AttackReport)>> {
    cfg.validate()?;
    if cfg.dp_sigmas.is_empty() {
        return Err(Error::Config("dp_sigmas is empty".into()));
    }
    let n_vars = data.train[0].y.cols();
    let epochs = cfg.dp_epochs.unwrap_or(cfg.train.max_epochs);
    let mut out = Vec::new();
    for &sigma in &cfg.dp_sigmas {
        let dp = DpConfig { noise_multiplier: sigma, ..cfg.dp.clone() };
        dp.validate()?;
        let params = train_from_scratch(&data.train, &cfg.train, n_vars, Some(&dp), epochs, cfg.seed)?;
        let (row, report) = attack_row(&cfg.run_id(), Method::DpSgd, sigma, &params, data)?;
        info!("sigma {sigma}: priv {:.4} mse_test {:.5}", row.priv_ratio, row.mse_test);
        sink(&row)?;
        out.push((sigma, params, report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Mask, Mat, Origin};

    fn pt(v: f64, synthetic: bool) -> DataPoint {
        let p = DataPoint::original(Mat::from_vec(1, 1, vec![v]).unwrap(), Mat::zeros(1, 1), Mask::zeros(1, 1));
        if synthetic {
            p.synthetic_from(p.e.clone(), 1)
        } else {
            p
        }
    }

    #[test]
    fn mixture_upsamples_small_pool() {
        let train: Vec<DataPoint> = (0..50).map(|i| pt(i as f64, false)).collect();
        let mut pool = SyntheticPool::new(100);
        pool.insert((0..10).map(|i| pt(i as f64, true))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mix = balanced_mixture(&train, &pool, &mut rng);
        let synth = mix.iter().filter(|p| p.origin == Origin::Synthetic).count();
        assert_eq!(mix.len(), 100);
        assert_eq!(synth, 50);
    }

    #[test]
    fn mixture_subsamples_large_pool() {
        let train: Vec<DataPoint> = (0..5).map(|i| pt(i as f64, false)).collect();
        let mut pool = SyntheticPool::new(100);
        pool.insert((0..40).map(|i| pt(i as f64, true))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mix = balanced_mixture(&train, &pool, &mut rng);
        assert_eq!(mix.len(), 10);
        let mut seen: Vec<f64> = mix[5..].iter().map(|p| p.e.get(0, 0)).collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn empty_pool_means_originals_only() {
        let train: Vec<DataPoint> = (0..5).map(|i| pt(i as f64, false)).collect();
        let pool = SyntheticPool::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(balanced_mixture(&train, &pool, &mut rng).len(), 5);
    }
}
