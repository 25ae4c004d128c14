use std::io::Write;
use std::path::Path;

use crate::data::io::{fmt_f64, MetricsRow, ATTACK_EPOCH, TRADEOFF_HEADER};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffRow {
    pub method: String,
    pub alpha_or_beta: f64,
    pub mse_test: f64,
    pub priv_ratio: f64,
    pub auroc: f64,
    pub run_id: String,
}

/// One point per `(run_id, alpha_or_beta)` from the final-attack rows; a
/// later row replaces an earlier one. Order of first appearance is kept.
pub fn tradeoff_rows(rows: &[MetricsRow]) -> Vec<TradeoffRow> {
    let mut out: Vec<TradeoffRow> = Vec::new();
    for r in rows.iter().filter(|r| r.epoch == ATTACK_EPOCH) {
        let t = TradeoffRow {
            method: r.method.clone(),
            alpha_or_beta: r.alpha_or_beta,
            mse_test: r.mse_test,
            priv_ratio: r.priv_ratio,
            auroc: r.auroc,
            run_id: r.run_id.clone(),
        };
        match out.iter_mut().find(|o| o.run_id == t.run_id && o.alpha_or_beta == t.alpha_or_beta) {
            Some(o) => *o = t,
            None => out.push(t),
        }
    }
    out
}

pub fn write_tradeoff(rows: &[TradeoffRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TRADEOFF_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method,
            fmt_f64(r.alpha_or_beta),
            fmt_f64(r.mse_test),
            fmt_f64(r.priv_ratio),
            fmt_f64(r.auroc),
            r.run_id
        )?;
    }
    w.flush()?;
    Ok(())
}
