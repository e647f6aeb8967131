//! Gaussian kernels `exp(-gamma D)` over graph distance matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which distance a kernel was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSource {
    LinearFgw,
    Fgw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    values: Array2<f64>,
    gamma: f64,
    source: KernelSource,
}

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Symmetric within `1e-12` relative to the largest magnitude.
fn check_symmetric(d: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if d.nrows() != d.ncols() {
        return Err(Error::Shape(format!("{what} is {:?}, not square", d.dim())));
    }
    let scale = d.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for ((i, j), &v) in d.indexed_iter() {
        if (v - d[[j, i]]).abs() > 1e-12 * scale {
            return Err(Error::Input(format!("{what} is not symmetric at ({i}, {j})")));
        }
    }
    Ok(())
}

/// `K = exp(-gamma D)` elementwise for a symmetric, nonnegative distance
/// matrix with zero diagonal.
pub fn gram_from_distances(d: ArrayView2<'_, f64>, gamma: f64, source: KernelSource) -> Result<GramMatrix> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Usage(format!("gamma must be positive, got {gamma}")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("distance matrix has non-finite entries".into()));
    }
    if let Some(((i, j), v)) = d.indexed_iter().find(|(_, &v)| v < 0.0) {
        return Err(Error::Input(format!("negative distance {v} at ({i}, {j})")));
    }
    check_symmetric(d, "distance matrix")?;
    if let Some(i) = (0..d.nrows()).find(|&i| d[[i, i]] != 0.0) {
        return Err(Error::Input(format!("distance matrix has nonzero diagonal at {i}")));
    }
    Ok(GramMatrix {
        values: d.mapv(|v| (-gamma * v).exp()),
        gamma,
        source,
    })
}

impl GramMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn source(&self) -> KernelSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        eigen_range(&self.values)
    }

    /// `min eig >= -rel_tol * max eig`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        is_psd(&self.values, rel_tol)
    }

    /// The nearest PSD matrix in Frobenius norm: negative eigenvalues zeroed.
    pub fn clipped_psd(&self) -> GramMatrix {
        GramMatrix {
            values: clip_psd(&self.values),
            gamma: self.gamma,
            source: self.source,
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(m: &Array2<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(to_nalgebra(m));
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn is_psd(m: &Array2<f64>, rel_tol: f64) -> bool {
    let (lo, hi) = eigen_range(m);
    lo >= -rel_tol * hi.max(0.0)
}

/// Zero the negative eigenvalues of a symmetric matrix.
pub fn clip_psd(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(to_nalgebra(m));
    let v = &eig.eigenvectors;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|c| v[(i, c)] * lam[c] * v[(j, c)]).sum();
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    out
}
