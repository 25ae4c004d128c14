//! Embedding-space synthesis: zeroth-order search (optionally restricted to
//! a principal subspace), MixUp, and the bounded synthetic pool.

mod mixup;
mod pca;
mod pool;
mod zoo;

pub use mixup::{mixup_batch, mixup_generate, mixup_with_weight, sample_beta, MixupConfig};
pub use pca::{pca_fit, PcaBasis};
pub use pool::{pool_cap, SyntheticPool};
pub use zoo::{
    zoo_generate, zoo_objective_g, zoo_pca_step, zoo_step, zoo_update, Perturbation, ZooConfig, ZooStats,
};
