use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal subspace of the centered bank unit vectors; scoring uses the
/// component orthogonal to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub r: f64,
    pub mean: Vec<f64>,
    /// Orthonormal principal directions, strongest first.
    pub basis: Vec<Vec<f64>>,
}

/// Eigen-decomposition of the bank covariance, reusable across ratios.
#[derive(Debug, Clone)]
pub struct PrincipalSpectrum {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl PrincipalSpectrum {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::invalid("principal subspace needs at least one sample"));
        }
        let dim = rows[0].len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (a, v) in mean.iter_mut().zip(r) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m as f64);
        let centered = DMatrix::from_fn(m, dim, |i, c| rows[i][c] - mean[c]);
        let cov = centered.transpose() * &centered / m as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigenvalues = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
        let eigenvectors = order
            .iter()
            .map(|&j| eig.eigenvectors.column(j).iter().copied().collect())
            .collect();
        Ok(Self {
            mean,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Smallest number of leading components explaining at least `r` of the
    /// total variance (zero when the bank has no variance).
    pub fn dimension_for(&self, r: f64) -> usize {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0;
        }
        let mut acc = 0.0;
        for (d, v) in self.eigenvalues.iter().enumerate() {
            acc += v;
            if acc >= r * total * (1.0 - 1e-12) {
                return d + 1;
            }
        }
        self.eigenvalues.len()
    }

    pub fn model(&self, r: f64) -> Result<ResidualModel> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::invalid(format!("explained variance ratio {r} must lie in (0, 1]")));
        }
        let d = self.dimension_for(r);
        Ok(ResidualModel {
            r,
            mean: self.mean.clone(),
            basis: self.eigenvectors[..d].to_vec(),
        })
    }
}

impl ResidualModel {
    pub fn fit(rows: &[Vec<f64>], r: f64) -> Result<Self> {
        PrincipalSpectrum::fit(rows)?.model(r)
    }

    /// Centered input split into (projection onto the basis, residual).
    pub fn decompose(&self, unit: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = unit.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let mut proj = vec![0.0; x.len()];
        for b in &self.basis {
            let a: f64 = x.iter().zip(b).map(|(u, v)| u * v).sum();
            for (p, v) in proj.iter_mut().zip(b) {
                *p += a * v;
            }
        }
        let resid = x.iter().zip(&proj).map(|(u, p)| u - p).collect();
        (proj, resid)
    }

    /// Negative l1 norm of the residual.
    pub fn score(&self, unit: &[f64]) -> f64 {
        let (_, resid) = self.decompose(unit);
        -resid.iter().map(|v| v.abs()).sum::<f64>()
    }
}
