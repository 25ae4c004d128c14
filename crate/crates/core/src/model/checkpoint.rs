//! Versioned plain-text checkpoint.
//!
//! ```text
//! tsf-mia-checkpoint 1
//! n_vars <usize>
//! embed_dim <usize>
//! hidden_dim <usize>
//! pool_heads <usize>
//! input_len <usize>
//! horizon <usize>
//! seed <u64>
//! embedding_weight <count>
//! <one f64 per line>...
//! embedding_bias <count>
//! ...
//! forecaster <count>
//! ...
//! standardizer_mean <count>     (count is 0 when absent)
//! ...
//! standardizer_std <count>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a save/load cycle is
//! bit-exact. The forecaster block follows the flat layout of
//! [`Layout`](super::Layout).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dims, EmbeddingMap, ForecasterParams};
use crate::data::io::fmt_f64;
use crate::data::Standardizer;
use crate::error::{Error, Result};

const MAGIC: &str = "tsf-mia-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub embedding: EmbeddingMap,
    pub params: ForecasterParams,
    pub standardizer: Option<Standardizer>,
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let d = ck.params.dims();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC} {VERSION}")?;
    for (k, v) in [
        ("n_vars", d.n_vars),
        ("embed_dim", d.embed_dim),
        ("hidden_dim", d.hidden_dim),
        ("pool_heads", d.pool_heads),
        ("input_len", d.input_len),
        ("horizon", d.horizon),
    ] {
        writeln!(w, "{k} {v}")?;
    }
    writeln!(w, "seed {}", ck.seed)?;
    let (mean, std): (&[f64], &[f64]) = match &ck.standardizer {
        Some(s) => (&s.mean, &s.std),
        None => (&[], &[]),
    };
    for (name, values) in [
        ("embedding_weight", ck.embedding.weight()),
        ("embedding_bias", ck.embedding.bias()),
        ("forecaster", ck.params.as_slice()),
        ("standardizer_mean", mean),
        ("standardizer_std", std),
    ] {
        writeln!(w, "{name} {}", values.len())?;
        for v in values {
            writeln!(w, "{}", fmt_f64(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
    path: String,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse { path: self.path.clone(), line: self.line, msg: msg.to_string() }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(&format!("expected `{key}`")));
        }
        it.next().and_then(|v| v.parse().ok()).ok_or_else(|| self.err(&format!("bad value for `{key}`")))
    }

    fn block(&mut self, key: &str) -> Result<Vec<f64>> {
        let count: usize = self.keyed(key)?;
        (0..count)
            .map(|_| {
                let l = self.next()?;
                l.trim().parse::<f64>().map_err(|_| self.err("bad number"))
            })
            .collect()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut lines = Lines { inner: BufReader::new(file).lines(), line: 0, path: path.display().to_string() };
    let version: u32 = lines.keyed(MAGIC)?;
    if version != VERSION {
        return Err(lines.err(&format!("unsupported checkpoint version {version}")));
    }
    let dims = Dims {
        n_vars: lines.keyed("n_vars")?,
        embed_dim: lines.keyed("embed_dim")?,
        hidden_dim: lines.keyed("hidden_dim")?,
        pool_heads: lines.keyed("pool_heads")?,
        input_len: lines.keyed("input_len")?,
        horizon: lines.keyed("horizon")?,
    };
    let seed: u64 = lines.keyed("seed")?;
    let weight = lines.block("embedding_weight")?;
    let bias = lines.block("embedding_bias")?;
    let params = lines.block("forecaster")?;
    let mean = lines.block("standardizer_mean")?;
    let std = lines.block("standardizer_std")?;
    let standardizer = match (mean.is_empty(), std.is_empty()) {
        (true, true) => None,
        (false, false) if mean.len() == dims.n_vars && std.len() == dims.n_vars => {
            Some(Standardizer { mean, std })
        }
        _ => return Err(lines.err("standardizer blocks do not match n_vars")),
    };
    Ok(Checkpoint {
        seed,
        embedding: EmbeddingMap::new(dims.n_vars, dims.embed_dim, weight, bias)?,
        params: ForecasterParams::from_vec(dims, params)?,
        standardizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let d = Dims { n_vars: 3, embed_dim: 4, hidden_dim: 5, pool_heads: 2, input_len: 6, horizon: 2 };
        let ck = Checkpoint {
            seed: 42,
            embedding: EmbeddingMap::init(3, 4, 9),
            params: ForecasterParams::init(d, 10).unwrap(),
            standardizer: Some(Standardizer { mean: vec![0.1, 1e-300, -7.25], std: vec![1.0, 3.3, 1e20] }),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        save_checkpoint(&ck, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.embedding.fingerprint(), ck.embedding.fingerprint());
    }

    #[test]
    fn rejects_wrong_version_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck");
        std::fs::write(&p, "tsf-mia-checkpoint 99\n").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(Error::MissingFile(_))));
    }
}
