//! K-Means segmentation of the smoothed AB plane.

use super::{CadvConfig, EntropyMap};
use crate::error::Result;
use crate::imaging::{gaussian_blur, LabImage};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_TOL: f64 = 1e-4;

/// Per-pixel cluster assignment over AB space. Duplicate centroids from
/// degenerate images are merged, so `effective_clusters` can be below the
/// configured count; assignments always index `0..effective_clusters`.
#[derive(Debug, Clone)]
pub struct ClusterMap {
    pub assignment: Array2<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub effective_clusters: usize,
    /// Mean entropy per cluster, filled by [`Self::with_mean_entropy`].
    pub mean_entropy: Vec<f64>,
}

impl ClusterMap {
    pub fn single_cluster(h: usize, w: usize) -> Self {
        Self {
            assignment: Array2::zeros((h, w)),
            centroids: vec![[0.0, 0.0]],
            effective_clusters: 1,
            mean_entropy: vec![0.0],
        }
    }

    pub fn from_assignment(assignment: Array2<usize>, effective: usize) -> Self {
        Self {
            assignment,
            centroids: vec![[0.0, 0.0]; effective],
            effective_clusters: effective,
            mean_entropy: vec![0.0; effective],
        }
    }

    /// Fills per-cluster mean entropies from a pixel entropy map.
    pub fn with_mean_entropy(mut self, entropy: &EntropyMap) -> Self {
        let mut sums = vec![0.0; self.effective_clusters];
        let mut counts = vec![0usize; self.effective_clusters];
        for (idx, &c) in self.assignment.iter().enumerate() {
            let (h, w) = self.assignment.dim();
            let _ = (h, w);
            sums[c] += entropy.entropy.as_slice().unwrap()[idx];
            counts[c] += 1;
        }
        self.mean_entropy = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| if n > 0 { s / n as f64 } else { f64::INFINITY })
            .collect();
        self
    }

    /// Indices of the `k` clusters with the lowest mean entropy, ties broken
    /// by cluster index.
    pub fn lowest_entropy_clusters(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.effective_clusters).collect();
        order.sort_by(|&a, &b| {
            self.mean_entropy[a]
                .partial_cmp(&self.mean_entropy[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }

    pub fn member_count(&self, cluster: usize) -> usize {
        self.assignment.iter().filter(|&&c| c == cluster).count()
    }
}

/// K-Means (k-means++ init, fixed seed, ≤300 iterations, tolerance 1e-4)
/// over per-pixel 2-vectors of the σ-blurred AB channels. Deterministic
/// given the seed. Degenerate images with fewer distinct AB values than
/// clusters end up with merged centroids and a reduced effective count.
pub fn cluster_ab(lab: &LabImage, cfg: &CadvConfig) -> Result<ClusterMap> {
    let (h, w) = lab.l().dim();
    let a = lab.ab().index_axis(ndarray::Axis(2), 0).to_owned();
    let b = lab.ab().index_axis(ndarray::Axis(2), 1).to_owned();
    let a = gaussian_blur(&a, cfg.sigma)?;
    let b = gaussian_blur(&b, cfg.sigma)?;

    let n = h * w;
    let points: Vec<[f64; 2]> = (0..n)
        .map(|i| [a.as_slice().unwrap()[i], b.as_slice().unwrap()[i]])
        .collect();

    let k = cfg.n_clusters.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_pp_init(&points, k, &mut rng);

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        for (i, p) in points.iter().enumerate() {
            assignment[i] = nearest(p, &centroids);
        }
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            shift = shift.max(dist2(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignment[i] = nearest(p, &centroids);
    }

    // Merge centroids that collapsed onto each other (or died), keeping
    // first-seen order, and compact the assignment indices.
    let mut kept: Vec<[f64; 2]> = Vec::new();
    let mut remap = vec![usize::MAX; k];
    let mut alive = vec![false; k];
    for &c in &assignment {
        alive[c] = true;
    }
    for c in 0..k {
        if !alive[c] {
            continue;
        }
        let dup = kept.iter().position(|kc| dist2(kc, &centroids[c]) < 1e-12);
        remap[c] = match dup {
            Some(j) => j,
            None => {
                kept.push(centroids[c]);
                kept.len() - 1
            }
        };
    }
    let assignment =
        Array2::from_shape_vec((h, w), assignment.iter().map(|&c| remap[c]).collect()).unwrap();
    let effective = kept.len();
    Ok(ClusterMap {
        assignment,
        centroids: kept,
        effective_clusters: effective,
        mean_entropy: vec![0.0; effective],
    })
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cent) in centroids.iter().enumerate() {
        let d = dist2(p, cent);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn kmeans_pp_init(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining distances are zero (degenerate data); duplicate
            // the first point and let the merge step collapse it later.
            points[0]
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            points[pick]
        };
        centroids.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &next));
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn lab_from_ab(ab: Array3<f64>) -> LabImage {
        let (h, w, _) = ab.dim();
        LabImage::new(Array2::from_elem((h, w), 50.0), ab).unwrap()
    }

    #[test]
    fn constant_image_collapses_to_one_cluster() {
        let ab = Array3::from_elem((8, 8, 2), 25.0);
        let lab = lab_from_ab(ab);
        let cfg = CadvConfig::default();
        let map = cluster_ab(&lab, &cfg).unwrap();
        assert_eq!(map.effective_clusters, 1);
        assert!(map.assignment.iter().all(|&c| c == 0));
        assert_eq!(map.member_count(0), 64);
    }

    // Two well-separated point masses in AB space partition exactly. The
    // tiny σ keeps the blur from creating intermediate values.
    #[test]
    fn two_tone_image_gives_two_exact_clusters() {
        let mut ab = Array3::zeros((8, 8, 2));
        for y in 0..8 {
            for x in 0..8 {
                if x < 4 {
                    ab[[y, x, 0]] = 60.0; // reddish
                    ab[[y, x, 1]] = 40.0;
                } else {
                    ab[[y, x, 0]] = -40.0; // bluish
                    ab[[y, x, 1]] = -60.0;
                }
            }
        }
        let lab = lab_from_ab(ab);
        let cfg = CadvConfig { sigma: 0.01, ..Default::default() };
        let map = cluster_ab(&lab, &cfg).unwrap();
        assert_eq!(map.effective_clusters, 2);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(
                    map.assignment[[y, x]] == map.assignment[[y, 0]],
                    x < 4,
                    "pixel ({y},{x}) crossed the half boundary"
                );
            }
        }
    }

    #[test]
    fn clustering_is_deterministic() {
        let mut ab = Array3::zeros((10, 10, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        ab.mapv_inplace(|_| rng.random::<f64>() * 80.0 - 40.0);
        let lab = lab_from_ab(ab);
        let cfg = CadvConfig { seed: 5, ..Default::default() };
        let a = cluster_ab(&lab, &cfg).unwrap();
        let b = cluster_ab(&lab, &cfg).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.effective_clusters, b.effective_clusters);
    }

    #[test]
    fn noisy_image_fills_all_clusters() {
        let mut ab = Array3::zeros((16, 16, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        ab.mapv_inplace(|_| rng.random::<f64>() * 100.0 - 50.0);
        let lab = lab_from_ab(ab);
        let cfg = CadvConfig { sigma: 0.5, ..Default::default() };
        let map = cluster_ab(&lab, &cfg).unwrap();
        assert_eq!(map.effective_clusters, 8);
    }
}
