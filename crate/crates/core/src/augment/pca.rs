use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::Mat;
use crate::error::{Error, Result};

/// Principal subspace of flattened embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    explained_variance_ratio: Vec<f64>,
    variance_threshold: f64,
}

impl PcaBasis {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Kept components, orthonormal, in descending variance order.
    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn variance_threshold(&self) -> f64 {
        self.variance_threshold
    }

    /// Number of kept components.
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    /// Length of the flattened vectors.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Part of `v` orthogonal to the kept subspace.
    pub fn orthogonal_residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for c in &self.components {
            let dot: f64 = r.iter().zip(c).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        r
    }
}

/// Fit PCA on flattened embeddings and keep the shortest prefix of
/// components whose cumulative explained-variance ratio reaches
/// `variance_threshold`.
///
/// Uses the `N x N` Gram matrix when there are fewer samples than
/// dimensions and the `D x D` covariance otherwise; both give the same
/// non-zero spectrum.
pub fn pca_fit(embeddings: &[Mat], variance_threshold: f64) -> Result<PcaBasis> {
    if embeddings.len() < 2 {
        return Err(Error::Domain("PCA needs at least two samples".into()));
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::Config(format!("variance threshold {variance_threshold} outside (0, 1]")));
    }
    let dim = embeddings[0].as_slice().len();
    if embeddings.iter().any(|e| e.as_slice().len() != dim) {
        return Err(Error::Config("embeddings differ in size".into()));
    }
    let n = embeddings.len();
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        mean.iter_mut().zip(e.as_slice()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| embeddings[i].as_slice()[j] - mean[j]);
    let denom = (n - 1) as f64;

    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if n <= dim {
        let gram = (&centered * centered.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .map(|i| {
                let lam = eig.eigenvalues[i].max(0.0);
                let v = centered.transpose() * eig.eigenvectors.column(i);
                let norm = v.norm();
                let v = if norm > 0.0 { v / norm } else { v };
                (lam, v.iter().copied().collect())
            })
            .unzip()
    } else {
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .map(|i| (eig.eigenvalues[i].max(0.0), eig.eigenvectors.column(i).iter().copied().collect()))
            .unzip()
    };

    let total: f64 = values.iter().sum();
    let top = values.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(Error::Domain("embeddings have no variance".into()));
    }
    let rank = values.iter().take_while(|&&l| l > 1e-12 * top).count();
    let mut components = Vec::new();
    let mut ratios = Vec::new();
    let mut cumulative = 0.0;
    for (lam, vec) in values.into_iter().zip(vectors).take(rank) {
        cumulative += lam / total;
        ratios.push(lam / total);
        components.push(vec);
        if cumulative >= variance_threshold - 1e-12 {
            break;
        }
    }
    // re-orthonormalize (Gram route loses a little orthogonality)
    for i in 0..components.len() {
        let (done, rest) = components.split_at_mut(i);
        let c = &mut rest[0];
        for prev in done.iter() {
            let dot: f64 = c.iter().zip(prev).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(PcaBasis { mean, components, explained_variance_ratio: ratios, variance_threshold })
}
