//! Masked losses and the loss-threshold membership inference attack.

use crate::data::{DataPoint, Mask, Mat};
use crate::error::{Error, Result};
use crate::model::{forecast, ForecasterParams};
use crate::par;

/// `(1/|m|) * ||(pred - y) * m||^2`.
pub fn mmse_from_prediction(pred: &Mat, y: &Mat, m: &Mask) -> Result<f64> {
    if pred.shape() != y.shape() || m.shape() != y.shape() {
        return Err(Error::Config("prediction, target and mask shapes differ".into()));
    }
    let count = m.count();
    if count == 0 {
        return Err(Error::Domain("masked MSE of an empty mask".into()));
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .zip(m.bits())
        .filter(|(_, &bit)| bit)
        .map(|((p, t), _)| (p - t) * (p - t))
        .sum();
    Ok(sum / count as f64)
}

pub fn mmse(x: &DataPoint, params: &ForecasterParams) -> Result<f64> {
    if x.m.count() == 0 {
        return Err(Error::Domain("masked MSE of an empty mask".into()));
    }
    mmse_from_prediction(&forecast(&x.e, params)?, &x.y, &x.m)
}

/// Per-sample masked MSE, in input order.
pub fn sample_losses(xs: &[DataPoint], params: &ForecasterParams) -> Result<Vec<f64>> {
    par::map(xs, |x| mmse(x, params)).into_iter().collect()
}

fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("mean over an empty set".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Unweighted mean of per-sample masked MSE over a dataset.
pub fn mse_set(xs: &[DataPoint], params: &ForecasterParams) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Domain("MSE of an empty dataset".into()));
    }
    mean(&sample_losses(xs, params)?)
}

/// Attack threshold: the mean loss of the reference set under the current
/// parameters.
pub fn avg_train_loss_tau(reference: &[DataPoint], params: &ForecasterParams) -> Result<f64> {
    mse_set(reference, params)
}

/// Membership prediction for one loss: 1 iff `loss < tau`.
#[inline]
pub fn pl_from_loss(loss: f64, tau: f64) -> u8 {
    u8::from(loss < tau)
}

pub fn pl(x: &DataPoint, tau: f64, params: &ForecasterParams) -> Result<u8> {
    Ok(pl_from_loss(mmse(x, params)?, tau))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Member,
    NonMember,
}

/// Per-sample losses of one labelled set.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTable {
    pub label: Membership,
    losses: Vec<f64>,
}

impl LossTable {
    pub fn new(label: Membership, losses: Vec<f64>) -> Result<Self> {
        if let Some(bad) = losses.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Validation(format!("loss {bad} is not finite and non-negative")));
        }
        Ok(Self { label, losses })
    }

    pub fn members(losses: Vec<f64>) -> Result<Self> {
        Self::new(Membership::Member, losses)
    }

    pub fn nonmembers(losses: Vec<f64>) -> Result<Self> {
        Self::new(Membership::NonMember, losses)
    }

    pub fn from_points(label: Membership, xs: &[DataPoint], params: &ForecasterParams) -> Result<Self> {
        Self::new(label, sample_losses(xs, params)?)
    }

    /// Loss of sample `id` (its position in the source set).
    pub fn loss(&self, id: usize) -> Option<f64> {
        self.losses.get(id).copied()
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn mean(&self) -> Result<f64> {
        mean(&self.losses)
    }

    /// Fraction of losses strictly below `tau`.
    pub fn rate_below(&self, tau: f64) -> Result<f64> {
        if self.losses.is_empty() {
            return Err(Error::Domain("rate over an empty loss table".into()));
        }
        let hits = self.losses.iter().filter(|&&l| l < tau).count();
        Ok(hits as f64 / self.losses.len() as f64)
    }
}

pub fn tpr_fpr(members: &LossTable, nonmembers: &LossTable, tau: f64) -> Result<(f64, f64)> {
    Ok((members.rate_below(tau)?, nonmembers.rate_below(tau)?))
}

/// `tpr / fpr`; 1 when both are zero, `+inf` when only `fpr` is zero.
pub fn priv_ratio(tpr: f64, fpr: f64) -> f64 {
    if fpr > 0.0 {
        tpr / fpr
    } else if tpr > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

pub fn privacy(members: &LossTable, nonmembers: &LossTable, tau: f64) -> Result<f64> {
    let (tpr, fpr) = tpr_fpr(members, nonmembers, tau)?;
    Ok(priv_ratio(tpr, fpr))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Roc {
    /// In ascending threshold order, starting at `-inf` and ending at `+inf`.
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// Exact empirical ROC: one point per distinct observed loss plus the two
/// infinite endpoints, with the attack calling `loss < threshold` a member.
pub fn roc_curve(members: &LossTable, nonmembers: &LossTable) -> Result<Roc> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::Domain("ROC needs non-empty member and non-member sets".into()));
    }
    let sorted = |t: &LossTable| {
        let mut v = t.losses.clone();
        v.sort_by(f64::total_cmp);
        v
    };
    let mem = sorted(members);
    let non = sorted(nonmembers);
    let mut thresholds: Vec<f64> = mem.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (nm, nn) = (mem.len() as f64, non.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 0.0, tpr: 0.0 });
    for &t in &thresholds {
        let tp = mem.partition_point(|&l| l < t) as f64;
        let fp = non.partition_point(|&l| l < t) as f64;
        points.push(RocPoint { threshold: t, fpr: fp / nn, tpr: tp / nm });
    }
    points.push(RocPoint { threshold: f64::INFINITY, fpr: 1.0, tpr: 1.0 });

    let auroc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum::<f64>();
    Ok(Roc { points, auroc })
}

/// Outcome of the loss-threshold attack on one model and member/non-member pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub tau: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub priv_ratio: f64,
    pub roc: Vec<RocPoint>,
    pub auroc: f64,
}

pub fn attack_report(members: &LossTable, nonmembers: &LossTable, tau: f64) -> Result<AttackReport> {
    if !tau.is_finite() {
        return Err(Error::Domain(format!("attack threshold {tau} is not finite")));
    }
    let (tpr, fpr) = tpr_fpr(members, nonmembers, tau)?;
    let roc = roc_curve(members, nonmembers)?;
    Ok(AttackReport { tau, tpr, fpr, priv_ratio: priv_ratio(tpr, fpr), roc: roc.points, auroc: roc.auroc })
}
