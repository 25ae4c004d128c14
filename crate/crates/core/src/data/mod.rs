//! Irregular triplet series, hourly binning, standardization and dataset splits.

mod binning;
pub mod io;
mod split;

pub use binning::{bin_episode, build_windows, sliding_windows, WindowSpec};
pub use split::{split_by_episode, Splits};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Binary observation mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Config(format!("mask {rows}x{cols} needs {} bits", rows * cols)));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols || r.iter().any(|&b| b > 1)) {
            return Err(Error::Config("mask rows must be equal-length 0/1 vectors".into()));
        }
        let bits = rows.iter().flatten().map(|&b| b == 1).collect();
        Ok(Self { rows: rows.len(), cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, bit: bool) {
        self.bits[r * self.cols + c] = bit;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set bits, `|m|`.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// One measurement: variable `var` had `value` at `t` hours since admission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub t: f64,
    pub var: usize,
    pub value: f64,
}

/// All triplets of one stay, sorted by time.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: u64,
    triplets: Vec<Triplet>,
    length_hours: f64,
}

impl Episode {
    /// Builds an episode; triplets are stably sorted by time so that equal
    /// timestamps keep their ingest order.
    pub fn new(id: u64, mut triplets: Vec<Triplet>, length_hours: f64) -> Result<Self> {
        if !(length_hours > 0.0) || !length_hours.is_finite() {
            return Err(Error::Validation(format!("episode {id}: length must be positive")));
        }
        for tr in &triplets {
            if !(tr.t >= 0.0) || tr.t > length_hours {
                return Err(Error::Validation(format!(
                    "episode {id}: triplet time {} outside [0, {length_hours}]",
                    tr.t
                )));
            }
            if !tr.value.is_finite() {
                return Err(Error::Validation(format!("episode {id}: non-finite value")));
            }
        }
        triplets.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { id, triplets, length_hours })
    }

    /// Builds an episode whose length is the smallest whole number of hours
    /// covering every triplet (at least one hour).
    pub fn from_triplets(id: u64, triplets: Vec<Triplet>) -> Result<Self> {
        let max_t = triplets.iter().map(|t| t.t).fold(0.0_f64, f64::max);
        Self::new(id, triplets, max_t.ceil().max(1.0))
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn length_hours(&self) -> f64 {
        self.length_hours
    }
}

/// Hourly-binned observation window with its forecast target.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedWindow {
    pub episode_id: u64,
    pub window_start: usize,
    /// `input_len x |F|`, standardized and zero-imputed.
    pub values: Mat,
    pub mask_in: Mask,
    /// `horizon x |F|`, standardized.
    pub target: Mat,
    pub mask_out: Mask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Original,
    Synthetic,
}

/// A training/evaluation sample `(e, y, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPoint {
    /// Embedding matrix, `input_len x n`.
    pub e: Mat,
    pub y: Mat,
    pub m: Mask,
    pub origin: Origin,
    pub created_epoch: usize,
}

impl DataPoint {
    pub fn original(e: Mat, y: Mat, m: Mask) -> Self {
        Self { e, y, m, origin: Origin::Original, created_epoch: 0 }
    }

    /// Copy of this point marked synthetic with a replaced embedding.
    pub fn synthetic_from(&self, e: Mat, epoch: usize) -> Self {
        Self { e, y: self.y.clone(), m: self.m.clone(), origin: Origin::Synthetic, created_epoch: epoch }
    }
}

/// Per-variable z-scoring fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n_vars: usize) -> Self {
        Self { mean: vec![0.0; n_vars], std: vec![1.0; n_vars] }
    }

    /// Population mean/std over every raw triplet of the given episodes.
    /// Variables with fewer than two distinct values get `std = 1`.
    pub fn fit<'a>(episodes: impl IntoIterator<Item = &'a Episode>, n_vars: usize) -> Result<Self> {
        let mut count = vec![0usize; n_vars];
        let mut sum = vec![0.0; n_vars];
        let mut sum_sq = vec![0.0; n_vars];
        let mut kept: Vec<&Episode> = Vec::new();
        for ep in episodes {
            for tr in ep.triplets() {
                if tr.var >= n_vars {
                    return Err(Error::Validation(format!(
                        "episode {}: variable {} >= {n_vars}",
                        ep.id, tr.var
                    )));
                }
                count[tr.var] += 1;
                sum[tr.var] += tr.value;
            }
            kept.push(ep);
        }
        let mean: Vec<f64> =
            (0..n_vars).map(|f| if count[f] > 0 { sum[f] / count[f] as f64 } else { 0.0 }).collect();
        // second pass around the mean for numerical stability
        for ep in kept {
            for tr in ep.triplets() {
                let d = tr.value - mean[tr.var];
                sum_sq[tr.var] += d * d;
            }
        }
        let std = (0..n_vars)
            .map(|f| {
                let s = if count[f] > 1 { (sum_sq[f] / count[f] as f64).sqrt() } else { 0.0 };
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn n_vars(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn standardize(&self, var: usize, v: f64) -> f64 {
        (v - self.mean[var]) / self.std[var]
    }

    #[inline]
    pub fn destandardize(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }
}
