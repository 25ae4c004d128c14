//! CSV formats: triplet input, metrics rows, ROC curves, tradeoff table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Episode, Triplet};
use crate::error::{Error, Result};

pub const TRIPLET_HEADER: &str = "episode_id,t_hours,var_id,value";
pub const METRICS_HEADER: &str =
    "run_id,method,alpha_or_beta,epoch,mse_test,mse_heldout,tpr_at_tau,fpr_at_tau,priv_ratio,auroc,tau";
pub const ROC_HEADER: &str = "threshold,fpr,tpr";
pub const TRADEOFF_HEADER: &str = "method,alpha_or_beta,mse_test,priv_ratio,auroc,run_id";

/// Shortest round-trip formatting; infinities as `inf` / `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

/// Read a triplet CSV into episodes ordered by id, triplets sorted by time.
pub fn load_triplets(path: &Path, n_vars: usize) -> Result<Vec<Episode>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_triplets(BufReader::new(file), &path.display().to_string(), n_vars)
}

pub fn parse_triplets(reader: impl BufRead, source: &str, n_vars: usize) -> Result<Vec<Episode>> {
    let perr = |line: usize, msg: String| Error::Parse { path: source.to_string(), line, msg };
    let mut grouped: BTreeMap<u64, Vec<Triplet>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line_no == 1 && line == TRIPLET_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(perr(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let id: u64 = fields[0].parse().map_err(|_| perr(line_no, format!("bad episode id `{}`", fields[0])))?;
        let t: f64 = fields[1].parse().map_err(|_| perr(line_no, format!("bad time `{}`", fields[1])))?;
        let var: usize = fields[2].parse().map_err(|_| perr(line_no, format!("bad variable `{}`", fields[2])))?;
        let value: f64 = fields[3].parse().map_err(|_| perr(line_no, format!("bad value `{}`", fields[3])))?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(perr(line_no, format!("time must be a finite value >= 0, got {t}")));
        }
        if !value.is_finite() {
            return Err(perr(line_no, "value must be finite".into()));
        }
        if var >= n_vars {
            return Err(Error::Validation(format!(
                "{source}:{line_no}: variable index {var} outside 0..{n_vars}"
            )));
        }
        grouped.entry(id).or_default().push(Triplet { t, var, value });
    }
    grouped.into_iter().map(|(id, trips)| Episode::from_triplets(id, trips)).collect()
}

/// Write episodes in the triplet CSV format, in episode then time order.
pub fn write_triplets(episodes: &[Episode], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_triplets_to(episodes, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_triplets_to(episodes: &[Episode], w: &mut impl Write) -> Result<()> {
    writeln!(w, "{TRIPLET_HEADER}")?;
    for ep in episodes {
        for tr in ep.triplets() {
            writeln!(w, "{},{},{},{}", ep.id, fmt_f64(tr.t), tr.var, fmt_f64(tr.value))?;
        }
    }
    Ok(())
}

/// One line of `metrics.csv`.
///
/// `epoch >= 0` rows are acceptance-gate evaluations (0 is the starting
/// model, `r` the candidate of round `r`): TPR/FPR/priv/AUROC compare the
/// training set against the held-out set and `tau` is the mean loss on the
/// augmented reference set. `epoch = -1` rows are final attack evaluations:
/// members are the training set, non-members the test set, and `tau` is the
/// mean training loss.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: String,
    pub alpha_or_beta: f64,
    pub epoch: i64,
    pub mse_test: f64,
    pub mse_heldout: f64,
    pub tpr_at_tau: f64,
    pub fpr_at_tau: f64,
    pub priv_ratio: f64,
    pub auroc: f64,
    pub tau: f64,
}

pub const ATTACK_EPOCH: i64 = -1;

impl MetricsRow {
    fn to_line(&self) -> String {
        [
            self.run_id.clone(),
            self.method.clone(),
            fmt_f64(self.alpha_or_beta),
            self.epoch.to_string(),
            fmt_f64(self.mse_test),
            fmt_f64(self.mse_heldout),
            fmt_f64(self.tpr_at_tau),
            fmt_f64(self.fpr_at_tau),
            fmt_f64(self.priv_ratio),
            fmt_f64(self.auroc),
            fmt_f64(self.tau),
        ]
        .join(",")
    }

    fn parse(line: &str, source: &str, line_no: usize) -> Result<Self> {
        let perr = |msg: String| Error::Parse { path: source.to_string(), line: line_no, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(perr(format!("expected 11 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> { f[i].parse().map_err(|_| perr(format!("bad number `{}`", f[i]))) };
        Ok(Self {
            run_id: f[0].to_string(),
            method: f[1].to_string(),
            alpha_or_beta: num(2)?,
            epoch: f[3].parse().map_err(|_| perr(format!("bad epoch `{}`", f[3])))?,
            mse_test: num(4)?,
            mse_heldout: num(5)?,
            tpr_at_tau: num(6)?,
            fpr_at_tau: num(7)?,
            priv_ratio: num(8)?,
            auroc: num(9)?,
            tau: num(10)?,
        })
    }
}

/// Append rows to a metrics CSV, writing the header if the file is new or empty.
pub fn append_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{METRICS_HEADER}")?;
    }
    for r in rows {
        writeln!(w, "{}", r.to_line())?;
    }
    w.flush()?;
    Ok(())
}

/// Write rows to a fresh metrics CSV; the "report CSV" of the data layer.
pub fn write_report_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_line())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let source = path.display().to_string();
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line == METRICS_HEADER {
            continue;
        }
        rows.push(MetricsRow::parse(&line, &source, idx + 1)?);
    }
    Ok(rows)
}

/// Write `(threshold, fpr, tpr)` points, which must already be in ascending
/// threshold order.
pub fn write_roc_csv(points: &[(f64, f64, f64)], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{ROC_HEADER}")?;
    for &(t, fpr, tpr) in points {
        writeln!(w, "{},{},{}", fmt_f64(t), fmt_f64(fpr), fmt_f64(tpr))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_a_row() {
        let eps = parse_triplets(Cursor::new("episode_id,t_hours,var_id,value\n7,0.25,3,91.5\n"), "mem", 4).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].id, 7);
        assert_eq!(eps[0].triplets(), &[Triplet { t: 0.25, var: 3, value: 91.5 }]);
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_triplets(Cursor::new(""), "mem", 4).unwrap().is_empty());
        assert!(parse_triplets(Cursor::new(format!("{TRIPLET_HEADER}\n")), "mem", 4).unwrap().is_empty());
    }

    #[test]
    fn negative_time_names_line() {
        let err = parse_triplets(Cursor::new("episode_id,t_hours,var_id,value\n1,0.5,0,1\n1,-2,0,1\n"), "f.csv", 4)
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
        assert!(err_line_in_message("1,abc,0,1\n", 1));
    }

    fn err_line_in_message(body: &str, line: usize) -> bool {
        let e = parse_triplets(Cursor::new(body.to_string()), "f.csv", 4).unwrap_err();
        e.to_string().contains(&format!("f.csv:{line}:"))
    }

    #[test]
    fn unknown_variable_is_validation_error() {
        let e = parse_triplets(Cursor::new("1,0.5,9,1\n"), "f.csv", 4).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn groups_and_sorts() {
        let eps = parse_triplets(Cursor::new("2,5,0,1\n1,3,1,2\n2,1,0,3\n"), "mem", 2).unwrap();
        assert_eq!(eps.iter().map(|e| e.id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(eps[1].triplets()[0].t, 1.0);
    }

    #[test]
    fn metrics_round_trip_with_inf() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let row = MetricsRow {
            run_id: "r".into(),
            method: "zoo".into(),
            alpha_or_beta: 0.75,
            epoch: 3,
            mse_test: 0.5,
            mse_heldout: 0.25,
            tpr_at_tau: 0.3,
            fpr_at_tau: 0.0,
            priv_ratio: f64::INFINITY,
            auroc: 0.6,
            tau: 0.1,
        };
        append_metrics(&[row.clone()], &p).unwrap();
        append_metrics(&[row.clone()], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert!(text.lines().nth(1).unwrap().contains(",inf,"));
        assert_eq!(read_metrics(&p).unwrap(), vec![row.clone(), row]);
    }
}
