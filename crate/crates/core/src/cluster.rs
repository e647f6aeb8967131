//! k-means, normalized-cut spectral clustering and clustering scores.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::linear::GraphEmbedding;

/// Restarts used by [`kmeans`] when the caller has no preference.
pub const DEFAULT_RESTARTS: usize = 50;
const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// Cluster of each row, numbered in order of first appearance.
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ndarray::ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = points.outer_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(points: ArrayView2<'_, f64>, mut centroids: Array2<f64>) -> KMeansResult {
    let (n, k) = (points.nrows(), centroids.nrows());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.outer_iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.outer_iter().enumerate() {
            let mut row = sums.row_mut(labels[i]);
            row += &p;
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            } else {
                // reseed an empty cluster at the worst-served point
                let far = (0..n).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                centroids.row_mut(c).assign(&points.row(far));
                dists[far] = 0.0;
            }
        }
    }
    let inertia = points
        .outer_iter()
        .zip(&labels)
        .map(|(p, &c)| sq_dist(p, centroids.row(c)))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// Renumber labels in order of first appearance and reorder centroids to match.
fn canonicalize(mut r: KMeansResult) -> KMeansResult {
    let k = r.centroids.nrows();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &r.labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    for slot in map.iter_mut().filter(|m| **m == usize::MAX) {
        *slot = next;
        next += 1;
    }
    let mut centroids = Array2::zeros(r.centroids.dim());
    for (old, &new) in map.iter().enumerate() {
        centroids.row_mut(new).assign(&r.centroids.row(old));
    }
    r.labels.iter_mut().for_each(|l| *l = map[*l]);
    r.centroids = centroids;
    r
}

/// Lloyd's algorithm from k-means++ seeds; the lowest-inertia run of
/// `restarts` wins (earliest on ties).
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Usage(format!("k = {k} clusters requested for {n} points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("points contain non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, plus_plus_init(points, k, &mut rng));
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(canonicalize(best.expect("at least one restart")))
}

/// k-means on the `sqrt(sigma)`-weighted flat embeddings, so that the
/// clustering geometry is the linearFGW distance itself.
pub fn kmeans_embeddings(embeddings: &[GraphEmbedding], sigma: ArrayView1<'_, f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let first = embeddings.first().ok_or_else(|| Error::Usage("no embeddings to cluster".into()))?;
    if embeddings
        .iter()
        .any(|e| e.reference_id != first.reference_id || e.alpha != first.alpha)
    {
        return Err(Error::Usage("embeddings do not share one reference and alpha".into()));
    }
    let mut points = Array2::zeros((embeddings.len(), first.len()));
    for (mut row, e) in points.outer_iter_mut().zip(embeddings) {
        row.assign(&e.weighted_flat(sigma)?);
    }
    Ok(kmeans(points.view(), k, DEFAULT_RESTARTS, seed)?.labels)
}

/// Normalized-cut spectral clustering on a kernel used as affinity.
///
/// Non-PSD kernels are clipped first (with a warning). The `k` leading
/// eigenvectors of `D^-1/2 W D^-1/2` are row-normalized and clustered with
/// [`kmeans`].
pub fn spectral_clustering(gram: &GramMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = gram.len();
    if k == 0 || k > n {
        return Err(Error::Usage(format!("k = {k} clusters requested for {n} points")));
    }
    let affinity = if gram.is_psd(1e-8) {
        gram.values().clone()
    } else {
        log::warn!("kernel is not positive semi-definite; clipping negative eigenvalues");
        gram.clipped_psd().values().clone()
    };
    let degree = affinity.sum_axis(ndarray::Axis(1));
    if let Some(row) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::DegenerateAffinity { row });
    }
    let inv_sqrt: Array1<f64> = degree.mapv(|d| 1.0 / d.sqrt());
    let normalized = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * affinity[[i, j]] * inv_sqrt[j]);
    let eig = SymmetricEigen::new(normalized);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut rows = Array2::from_shape_fn((n, k), |(i, c)| eig.eigenvectors[(i, order[c])]);
    for mut row in rows.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(kmeans(rows.view(), k, DEFAULT_RESTARTS, seed)?.labels)
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Array2<u64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("label vectors of length {} and {}", a.len(), b.len())));
    }
    let ra = a.iter().max().map_or(0, |m| m + 1);
    let rb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = Array2::zeros((ra, rb));
    for (&x, &y) in a.iter().zip(b) {
        table[[x, y]] += 1;
    }
    Ok(table)
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index; 1 for identical partitions up to relabeling.
pub fn adjusted_rand_index(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let table = contingency(truth, predicted)?;
    let n = truth.len() as u64;
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let rows: f64 = table.rows().into_iter().map(|r| pairs(r.sum())).sum();
    let cols: f64 = table.columns().into_iter().map(|c| pairs(c.sum())).sum();
    let total = pairs(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Accuracy under the best one-to-one matching of clusters to classes.
pub fn best_permutation_accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let table = contingency(predicted, truth)?;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let side = table.nrows().max(table.ncols());
    let weights = Matrix::from_fn(side, side, |(i, j)| {
        if i < table.nrows() && j < table.ncols() {
            table[[i, j]] as i64
        } else {
            0
        }
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_cluster() {
        let pts = array![[0.0, 1.0], [5.0, 2.0], [-3.0, 0.0]];
        let r = kmeans(pts.view(), 1, 5, 0).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
    }

    #[test]
    fn singleton_clusters_have_zero_inertia() {
        let pts = array![[0.0], [1.0], [4.0], [9.0]];
        let r = kmeans(pts.view(), 4, 3, 1).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn too_many_clusters() {
        let pts = array![[0.0], [1.0]];
        assert!(matches!(kmeans(pts.view(), 3, 1, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn ari_is_label_invariant() {
        let a = [0, 0, 1, 1, 2];
        let b = [2, 2, 0, 0, 1];
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((best_permutation_accuracy(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_textbook_value() {
        // contingency [[2,1],[0,2]]: index 2, row pairs 3+1, column pairs 1+3, total 10
        let truth = [0, 0, 0, 1, 1];
        let pred = [0, 0, 1, 1, 1];
        let expected = (2.0 - 4.0 * 4.0 / 10.0) / (4.0 - 1.6);
        assert!((adjusted_rand_index(&truth, &pred).unwrap() - expected).abs() < 1e-12);
        assert!((best_permutation_accuracy(&truth, &pred).unwrap() - 0.8).abs() < 1e-12);
    }
}
