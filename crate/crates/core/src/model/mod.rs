//! Frozen embedding map and the compact IMS forecaster.
//!
//! The forecaster maps an `input_len x n` embedding to a `horizon x |F|`
//! forecast:
//!
//! ```text
//! pooled_p = sum_h pool[p, h] * e[h, :]           p = 0..pool_heads
//! s_0      = tanh(W_enc [pooled_0 .. pooled_P] + b_enc)
//! s_t      = tanh(W_s s_{t-1} + W_y yhat_{t-1} + b_s)     yhat_0 = 0
//! yhat_t   = W_o s_t + b_o
//! ```
//!
//! Every decoder step consumes the previous step's own output, at training
//! time as well as at inference.

mod checkpoint;
mod forward;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{forecast, forecast_with_feed, mmse_gradient, SampleGradient};
pub use train::{
    clip_gradient, dp_train_step, pretrain_embedding, train_epoch, train_step, DpConfig, TrainConfig,
};

use std::hash::{Hash, Hasher};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{BinnedWindow, Mask, Mat};
use crate::error::{Error, Result};

/// Shape of the forecaster and its embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_vars: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub pool_heads: usize,
    pub input_len: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if [self.n_vars, self.embed_dim, self.hidden_dim, self.pool_heads, self.input_len, self.horizon]
            .contains(&0)
        {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Offsets of each parameter group inside the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub pool: Range<usize>,
    pub w_enc: Range<usize>,
    pub b_enc: Range<usize>,
    pub w_s: Range<usize>,
    pub w_y: Range<usize>,
    pub b_s: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub len: usize,
}

impl Layout {
    pub fn new(d: &Dims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let pool = take(d.pool_heads * d.input_len);
        let w_enc = take(d.hidden_dim * d.pool_heads * d.embed_dim);
        let b_enc = take(d.hidden_dim);
        let w_s = take(d.hidden_dim * d.hidden_dim);
        let w_y = take(d.hidden_dim * d.n_vars);
        let b_s = take(d.hidden_dim);
        let w_o = take(d.n_vars * d.hidden_dim);
        let b_o = take(d.n_vars);
        Self { pool, w_enc, b_enc, w_s, w_y, b_s, w_o, b_o, len: at }
    }

    /// Named groups with their fan-in, used for initialization and for
    /// per-group gradient checks.
    pub fn groups(&self, d: &Dims) -> [(&'static str, Range<usize>, usize); 8] {
        let rec = d.hidden_dim + d.n_vars;
        [
            ("pool", self.pool.clone(), d.input_len),
            ("w_enc", self.w_enc.clone(), d.pool_heads * d.embed_dim),
            ("b_enc", self.b_enc.clone(), d.pool_heads * d.embed_dim),
            ("w_s", self.w_s.clone(), rec),
            ("w_y", self.w_y.clone(), rec),
            ("b_s", self.b_s.clone(), rec),
            ("w_o", self.w_o.clone(), d.hidden_dim),
            ("b_o", self.b_o.clone(), d.hidden_dim),
        ]
    }
}

/// Trainable forecaster parameters as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecasterParams {
    dims: Dims,
    layout: Layout,
    data: Vec<f64>,
}

impl ForecasterParams {
    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(&dims);
        let data = vec![0.0; layout.len];
        Ok(Self { dims, layout, data })
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per group.
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, range, fan_in) in p.layout.groups(&dims) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p.data[range] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        if data.len() != p.data.len() {
            return Err(Error::Config(format!(
                "expected {} forecaster parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self -= lr * grad`.
    pub fn apply_update(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.data.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }
}

/// Linear per-hour map from `[values, mask]` (length `2|F|`) to `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMap {
    n_vars: usize,
    embed_dim: usize,
    /// `(2|F|) x n`, row-major.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl EmbeddingMap {
    pub fn new(n_vars: usize, embed_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != 2 * n_vars * embed_dim || bias.len() != embed_dim {
            return Err(Error::Config(format!(
                "embedding map for |F|={n_vars}, n={embed_dim} has wrong parameter counts"
            )));
        }
        Ok(Self { n_vars, embed_dim, weight, bias })
    }

    pub fn init(n_vars: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / ((2 * n_vars) as f64).sqrt();
        let weight = (0..2 * n_vars * embed_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        let bias = (0..embed_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { n_vars, embed_dim, weight, bias }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Row `h` of the output is `weight^T [values[h], mask[h]] + bias`.
    pub fn embed(&self, window: &BinnedWindow) -> Result<Mat> {
        self.embed_parts(&window.values, &window.mask_in)
    }

    pub fn embed_parts(&self, values: &Mat, mask: &Mask) -> Result<Mat> {
        if values.cols() != self.n_vars || mask.shape() != values.shape() {
            return Err(Error::Config(format!(
                "window is {}x{} but the embedding expects |F|={}",
                values.rows(),
                values.cols(),
                self.n_vars
            )));
        }
        let n = self.embed_dim;
        let mut out = Mat::zeros(values.rows(), n);
        for h in 0..values.rows() {
            let row = out.row_mut(h);
            row.copy_from_slice(&self.bias);
            for f in 0..self.n_vars {
                let v = values.get(h, f);
                if v != 0.0 {
                    let w = &self.weight[f * n..(f + 1) * n];
                    row.iter_mut().zip(w).for_each(|(o, wi)| *o += v * wi);
                }
                if mask.get(h, f) {
                    let w = &self.weight[(self.n_vars + f) * n..(self.n_vars + f + 1) * n];
                    row.iter_mut().zip(w).for_each(|(o, wi)| *o += wi);
                }
            }
        }
        Ok(out)
    }

    /// Hash of the exact bit patterns of every weight; changes iff any weight changes.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.n_vars.hash(&mut h);
        self.embed_dim.hash(&mut h);
        for v in self.weight.iter().chain(&self.bias) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}
