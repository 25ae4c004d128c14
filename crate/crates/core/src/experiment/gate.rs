use std::io::Write;
use std::path::Path;

use super::config::GateConfig;
use crate::data::io::fmt_f64;
use crate::data::DataPoint;
use crate::error::{Error, Result};
use crate::metrics::{attack_report, LossTable, Membership};
use crate::model::ForecasterParams;

/// Best accepted privacy ratio and held-out MSE so far.
#[derive(Clone, Debug, PartialEq)]
pub struct AcceptanceState {
    pub priv_best: f64,
    pub mse_best: f64,
    pub cfg: GateConfig,
}

/// Outcome of one gate check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub privacy_ok: bool,
    pub utility_ok: bool,
    pub combined_ok: bool,
    /// Set when either metric was non-finite.
    pub non_finite: bool,
}

impl Decision {
    pub fn accepted(&self) -> bool {
        !self.non_finite && self.privacy_ok && self.utility_ok && self.combined_ok
    }

    pub fn reason(&self) -> &'static str {
        if self.non_finite {
            "non_finite"
        } else if !self.privacy_ok {
            "privacy"
        } else if !self.utility_ok {
            "utility"
        } else if !self.combined_ok {
            "combined"
        } else {
            "accepted"
        }
    }
}

impl AcceptanceState {
    pub fn new(priv_best: f64, mse_best: f64, cfg: GateConfig) -> Result<Self> {
        if !priv_best.is_finite() || !mse_best.is_finite() {
            return Err(Error::Evaluation(format!(
                "baseline gate metrics must be finite (priv {priv_best}, mse {mse_best})"
            )));
        }
        Ok(Self { priv_best, mse_best, cfg })
    }

    pub fn objective(&self, p: f64, m: f64) -> f64 {
        p + self.cfg.beta * m
    }

    pub fn best_objective(&self) -> f64 {
        self.objective(self.priv_best, self.mse_best)
    }

    /// Check a candidate without touching the state.
    pub fn check(&self, p: f64, m: f64) -> Decision {
        if !p.is_finite() || !m.is_finite() {
            return Decision { privacy_ok: false, utility_ok: false, combined_ok: false, non_finite: true };
        }
        Decision {
            privacy_ok: p <= (1.0 + self.cfg.eps_priv) * self.priv_best,
            utility_ok: m <= (1.0 + self.cfg.eps_mse) * self.mse_best,
            combined_ok: self.objective(p, m) <= self.best_objective(),
            non_finite: false,
        }
    }

    /// Check a candidate and move the bests to it when accepted.
    pub fn evaluate(&mut self, p: f64, m: f64) -> Decision {
        let d = self.check(p, m);
        if d.accepted() {
            self.priv_best = p;
            self.mse_best = m;
        }
        d
    }
}

/// Privacy and utility of a model as seen by the gate.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMetrics {
    pub priv_ratio: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub auroc: f64,
    pub mse_heldout: f64,
    pub mse_train: f64,
    /// Mean loss over training points plus the synthetic pool.
    pub tau: f64,
}

/// Score `params` with training points as members and held-out points as
/// non-members, thresholding at the mean loss of `train ∪ pool`.
pub fn gate_metrics<'a>(
    params: &ForecasterParams,
    train: &[DataPoint],
    heldout: &[DataPoint],
    pool: impl IntoIterator<Item = &'a DataPoint>,
) -> Result<GateMetrics> {
    let members = LossTable::from_points(Membership::Member, train, params)?;
    let nonmembers = LossTable::from_points(Membership::NonMember, heldout, params)?;
    let pool: Vec<DataPoint> = pool.into_iter().cloned().collect();
    let pool_losses = crate::metrics::sample_losses(&pool, params)?;
    let n = members.len() + pool_losses.len();
    if n == 0 {
        return Err(Error::Evaluation("empty reference set".into()));
    }
    let tau = (members.losses().iter().sum::<f64>() + pool_losses.iter().sum::<f64>()) / n as f64;
    let report = attack_report(&members, &nonmembers, tau)?;
    Ok(GateMetrics {
        priv_ratio: report.priv_ratio,
        tpr: report.tpr,
        fpr: report.fpr,
        auroc: report.auroc,
        mse_heldout: nonmembers.mean()?,
        mse_train: members.mean()?,
        tau,
    })
}

/// Gate `params_candidate` against the current bests, updating them on acceptance.
pub fn evaluate_candidate<'a>(
    params_candidate: &ForecasterParams,
    state: &mut AcceptanceState,
    train: &[DataPoint],
    heldout: &[DataPoint],
    pool: impl IntoIterator<Item = &'a DataPoint>,
) -> Result<(Decision, GateMetrics)> {
    let g = gate_metrics(params_candidate, train, heldout, pool)?;
    Ok((state.evaluate(g.priv_ratio, g.mse_heldout), g))
}

/// One line of the gate audit log. Round 0 is the starting model.
#[derive(Clone, Debug, PartialEq)]
pub struct GateRecord {
    pub round: usize,
    pub accepted: bool,
    pub reason: String,
    pub priv_ratio: f64,
    pub mse_heldout: f64,
    pub objective: f64,
    /// Bests after this round's decision.
    pub priv_best: f64,
    pub mse_best: f64,
    pub tau: f64,
    pub pool_size: usize,
    pub generated: usize,
}

pub const GATE_HEADER: &str =
    "round,accepted,reason,priv_ratio,mse_heldout,objective,priv_best,mse_best,tau,pool_size,generated";

pub fn write_gate_log(records: &[GateRecord], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{GATE_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            u8::from(r.accepted),
            r.reason,
            fmt_f64(r.priv_ratio),
            fmt_f64(r.mse_heldout),
            fmt_f64(r.objective),
            fmt_f64(r.priv_best),
            fmt_f64(r.mse_best),
            fmt_f64(r.tau),
            r.pool_size,
            r.generated
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gate_log(path: &Path) -> Result<Vec<GateRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let src = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { path: src.clone(), line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(perr(format!("expected 11 fields, found {}", f.len())));
        }
        let num = |j: usize| -> Result<f64> { f[j].parse().map_err(|_| perr(format!("bad number `{}`", f[j]))) };
        let int = |j: usize| -> Result<usize> { f[j].parse().map_err(|_| perr(format!("bad integer `{}`", f[j]))) };
        out.push(GateRecord {
            round: int(0)?,
            accepted: int(1)? == 1,
            reason: f[2].to_string(),
            priv_ratio: num(3)?,
            mse_heldout: num(4)?,
            objective: num(5)?,
            priv_best: num(6)?,
            mse_best: num(7)?,
            tau: num(8)?,
            pool_size: int(9)?,
            generated: int(10)?,
        });
    }
    Ok(out)
}

/// Re-run the gate over a log: every accepted round must satisfy all three
/// inequalities against the bests before it, every rejected round must fail
/// one, and the best combined objective must never increase.
pub fn replay_gate_log(records: &[GateRecord], cfg: &GateConfig) -> Result<()> {
    let first = records.first().ok_or_else(|| Error::Validation("empty gate log".into()))?;
    let mut state = AcceptanceState::new(first.priv_best, first.mse_best, cfg.clone())?;
    let mut best_obj = state.best_objective();
    for r in &records[1..] {
        let d = state.evaluate(r.priv_ratio, r.mse_heldout);
        if d.accepted() != r.accepted {
            return Err(Error::Validation(format!(
                "round {}: logged accepted={} but replay says {}",
                r.round,
                r.accepted,
                d.reason()
            )));
        }
        if state.priv_best != r.priv_best || state.mse_best != r.mse_best {
            return Err(Error::Validation(format!("round {}: logged bests differ from replay", r.round)));
        }
        let obj = state.best_objective();
        if obj > best_obj {
            return Err(Error::Validation(format!("round {}: combined objective increased", r.round)));
        }
        best_obj = obj;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> AcceptanceState {
        AcceptanceState::new(1.5, 0.2, GateConfig::default()).unwrap()
    }

    #[test]
    fn worked_examples() {
        let s = AcceptanceState::new(2.0, 0.5, GateConfig::default()).unwrap();
        let d = s.check(1.9, 0.502);
        assert!(d.privacy_ok && d.utility_ok && d.combined_ok && d.accepted());
        let d = s.check(2.05, 0.49);
        assert!(!d.privacy_ok && !d.accepted());
        assert_eq!(d.reason(), "privacy");
        // equality on both is accepted
        assert!(s.check(2.0, 0.5).accepted());
    }

    #[test]
    fn accepts_joint_improvement() {
        let mut s = state();
        let d = s.evaluate(1.4, 0.2005);
        assert!(d.accepted());
        assert_eq!((s.priv_best, s.mse_best), (1.4, 0.2005));
    }

    #[test]
    fn rejects_mse_regression() {
        let d = state().check(1.3, 0.25);
        assert!(d.privacy_ok && !d.utility_ok);
        assert!(!d.accepted());
    }

    #[test]
    fn rejects_worse_combined_objective() {
        // both within tolerance, but 1.507 + 0.6012 > 1.5 + 0.6
        let d = state().check(1.507, 0.2004);
        assert!(d.privacy_ok && d.utility_ok && !d.combined_ok);
        assert!(!d.accepted());
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut s = state();
        let d = s.evaluate(f64::INFINITY, 0.1);
        assert!(d.non_finite && !d.accepted());
        assert_eq!(s.priv_best, 1.5);
        assert!(s.check(1.0, f64::NAN).non_finite);
        assert!(AcceptanceState::new(f64::INFINITY, 0.1, GateConfig::default()).is_err());
    }

    #[test]
    fn log_round_trip_and_replay() {
        let mut s = state();
        let mut recs = vec![GateRecord {
            round: 0,
            accepted: true,
            reason: "baseline".into(),
            priv_ratio: 1.5,
            mse_heldout: 0.2,
            objective: s.best_objective(),
            priv_best: 1.5,
            mse_best: 0.2,
            tau: 0.1,
            pool_size: 0,
            generated: 0,
        }];
        for (i, (p, m)) in [(1.4, 0.201), (1.3, 0.25), (1.35, 0.2)].into_iter().enumerate() {
            let d = s.evaluate(p, m);
            recs.push(GateRecord {
                round: i + 1,
                accepted: d.accepted(),
                reason: d.reason().into(),
                priv_ratio: p,
                mse_heldout: m,
                objective: s.objective(p, m),
                priv_best: s.priv_best,
                mse_best: s.mse_best,
                tau: 0.1,
                pool_size: 10,
                generated: 10,
            });
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gate.csv");
        write_gate_log(&recs, &path).unwrap();
        let back = read_gate_log(&path).unwrap();
        assert_eq!(back, recs);
        replay_gate_log(&back, &GateConfig::default()).unwrap();

        let mut forged = back.clone();
        forged[2].accepted = true;
        assert!(replay_gate_log(&forged, &GateConfig::default()).is_err());
    }
}
