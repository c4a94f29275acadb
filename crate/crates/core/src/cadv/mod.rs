//! The colorization attack: entropy-guided cluster analysis of the AB
//! plane, hint sampling from low-entropy clusters, and adversarial
//! optimization of the hint/mask fields (or of a copy of the colorizer's
//! weights) until the victim classifier outputs the target class.

mod attack;
#[cfg(test)]
mod attack_tests;
mod cluster;

pub use attack::{attack_hints_mask, attack_network_weights, mean_ab_distance, run_cadv};
pub use cluster::{cluster_ab, ClusterMap};

use crate::error::{Error, Result};
use crate::imaging::LabImage;
use ndarray::{Array2, Array3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-pixel Shannon entropy of the colorizer's predicted distribution over
/// `q_bins` quantized color bins; low entropy means the color is
/// unambiguous.
#[derive(Debug, Clone)]
pub struct EntropyMap {
    pub entropy: Array2<f64>,
    pub q_bins: usize,
}

impl EntropyMap {
    pub fn max_entropy(&self) -> f64 {
        (self.q_bins as f64).ln()
    }
}

/// Dense AB hint field plus mask, sparsely initialized: the mask is 1
/// exactly at the sampled positions and the hint values there are copied
/// from the ground truth. Optimization later relaxes both to real values.
#[derive(Debug, Clone)]
pub struct HintSet {
    /// H×W×2, AB units.
    pub hint_ab: Array3<f64>,
    /// H×W; binary at initialization, real-valued under attack.
    pub mask: Array2<f64>,
    /// Initially sampled (row, col) positions.
    pub positions: Vec<(usize, usize)>,
}

impl HintSet {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            hint_ab: Array3::zeros((height, width, 2)),
            mask: Array2::zeros((height, width)),
            positions: Vec::new(),
        }
    }
}

/// Knobs of the colorization attack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CadvConfig {
    /// Number of lowest-entropy clusters hints are sampled from.
    pub k: usize,
    /// Number of hints.
    pub n_hints: usize,
    /// Adam learning rate on the normalized hint/mask fields.
    pub lr: f64,
    /// Stopping threshold on the change of target-class confidence between
    /// consecutive iterations.
    pub conf_delta: f64,
    /// Iteration safety cap.
    pub max_iters: usize,
    /// Gaussian σ applied to the AB channels before clustering.
    pub sigma: f64,
    /// K-Means cluster count.
    pub n_clusters: usize,
    pub seed: u64,
}

impl Default for CadvConfig {
    fn default() -> Self {
        Self {
            k: 4,
            n_hints: 50,
            lr: 1e-4,
            conf_delta: 0.05,
            max_iters: 500,
            sigma: 3.0,
            n_clusters: 8,
            seed: 0,
        }
    }
}

impl CadvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n_clusters {
            return Err(Error::InvalidArgument(format!(
                "k must lie in [1, {}], got {}",
                self.n_clusters, self.k
            )));
        }
        if self.lr <= 0.0 || self.conf_delta <= 0.0 || self.sigma <= 0.0 {
            return Err(Error::InvalidArgument(
                "lr, conf_delta and sigma must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Shannon entropy (natural log) of each pixel's color-bin distribution.
/// Every pixel vector must be nonnegative and sum to 1 within 1e-4.
pub fn compute_entropy_map(dist: &Array3<f64>) -> Result<EntropyMap> {
    let (h, w, q) = dist.dim();
    let mut entropy = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut acc = 0.0;
            for b in 0..q {
                let p = dist[[y, x, b]];
                if p < 0.0 {
                    return Err(Error::NotNormalized { row: y, col: x, sum: p });
                }
                sum += p;
                if p > 0.0 {
                    acc -= p * p.ln();
                }
            }
            if (sum - 1.0).abs() > 1e-4 {
                return Err(Error::NotNormalized { row: y, col: x, sum });
            }
            entropy[[y, x]] = acc.max(0.0);
        }
    }
    Ok(EntropyMap { entropy, q_bins: q })
}

/// Samples `cfg.n_hints` positions uniformly (seeded) from the union of the
/// `cfg.k` lowest-mean-entropy clusters; hint values are copied from the
/// ground-truth AB channels and the mask set to 1 there.
pub fn sample_hints(
    clusters: &ClusterMap,
    entropy: &EntropyMap,
    gt_ab: &Array3<f64>,
    cfg: &CadvConfig,
) -> Result<HintSet> {
    cfg.validate()?;
    let (h, w, _) = gt_ab.dim();
    if clusters.assignment.dim() != (h, w) || entropy.entropy.dim() != (h, w) {
        return Err(Error::DimensionMismatch(
            "sample_hints: cluster/entropy/ab dims differ".into(),
        ));
    }
    if cfg.k > clusters.effective_clusters {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds effective cluster count {}",
            cfg.k, clusters.effective_clusters
        )));
    }

    let chosen = clusters.lowest_entropy_clusters(cfg.k);
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if chosen.contains(&clusters.assignment[[y, x]]) {
                pool.push((y, x));
            }
        }
    }
    if cfg.n_hints > pool.len() {
        return Err(Error::HintShortfall {
            requested: cfg.n_hints,
            available: pool.len(),
            k: cfg.k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hints = HintSet::empty(h, w);
    // Partial Fisher-Yates: the first n_hints entries become the sample.
    for i in 0..cfg.n_hints {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
        let (y, x) = pool[i];
        hints.mask[[y, x]] = 1.0;
        hints.hint_ab[[y, x, 0]] = gt_ab[[y, x, 0]];
        hints.hint_ab[[y, x, 1]] = gt_ab[[y, x, 1]];
        hints.positions.push((y, x));
    }
    Ok(hints)
}

/// Convenience wrapper: clusters the image's AB plane and samples hints
/// from the `k` lowest-entropy clusters.
pub fn prepare_hints(
    lab: &LabImage,
    entropy: &EntropyMap,
    cfg: &CadvConfig,
) -> Result<(ClusterMap, HintSet)> {
    let clusters = cluster_ab(lab, cfg)?;
    let clusters = clusters.with_mean_entropy(entropy);
    let hints = sample_hints(&clusters, entropy, lab.ab(), cfg)?;
    Ok((clusters, hints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn entropy_of_one_hot_is_zero() {
        let mut dist = Array3::zeros((2, 2, 5));
        for y in 0..2 {
            for x in 0..2 {
                dist[[y, x, 3]] = 1.0;
            }
        }
        let e = compute_entropy_map(&dist).unwrap();
        for v in e.entropy.iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn entropy_of_uniform_is_ln_q() {
        let q = 7;
        let dist = Array3::from_elem((3, 3, q), 1.0 / q as f64);
        let e = compute_entropy_map(&dist).unwrap();
        for v in e.entropy.iter() {
            assert!((v - (q as f64).ln()).abs() < 1e-12);
        }
    }

    // Direct formula evaluation: p = (0.5, 0.5, 0, ...) has entropy ln 2.
    #[test]
    fn entropy_half_half() {
        let mut dist = Array3::zeros((1, 1, 6));
        dist[[0, 0, 0]] = 0.5;
        dist[[0, 0, 1]] = 0.5;
        let e = compute_entropy_map(&dist).unwrap();
        assert!((e.entropy[[0, 0]] - 2.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn entropy_rejects_unnormalized() {
        let dist = Array3::from_elem((1, 1, 4), 0.3);
        assert!(matches!(
            compute_entropy_map(&dist),
            Err(Error::NotNormalized { .. })
        ));
        let mut neg = Array3::from_elem((1, 1, 2), 0.75);
        neg[[0, 0, 1]] = -0.25;
        assert!(compute_entropy_map(&neg).is_err());
    }

    #[test]
    fn entropy_bounds_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let q = 9;
        let mut dist = Array3::zeros((5, 5, q));
        for y in 0..5 {
            for x in 0..5 {
                let mut sum = 0.0;
                for b in 0..q {
                    let v = rng.random::<f64>();
                    dist[[y, x, b]] = v;
                    sum += v;
                }
                for b in 0..q {
                    dist[[y, x, b]] /= sum;
                }
            }
        }
        let e = compute_entropy_map(&dist).unwrap();
        for v in e.entropy.iter() {
            assert!(*v >= 0.0 && *v <= (q as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn zero_hints_gives_empty_mask() {
        let clusters = ClusterMap::single_cluster(4, 4);
        let entropy = EntropyMap { entropy: Array2::zeros((4, 4)), q_bins: 4 };
        let gt = Array3::zeros((4, 4, 2));
        let cfg = CadvConfig { n_hints: 0, k: 1, ..Default::default() };
        let hints = sample_hints(&clusters, &entropy, &gt, &cfg).unwrap();
        assert!(hints.positions.is_empty());
        assert_eq!(hints.mask.sum(), 0.0);
    }

    #[test]
    fn hints_come_from_lowest_entropy_cluster() {
        // Two clusters split by column; cluster 0 has mean entropy 0.1,
        // cluster 1 has 2.0 (ranking computed by hand).
        let mut assignment = Array2::zeros((4, 4));
        let mut entropy = Array2::zeros((4, 4));
        for y in 0..4 {
            for x in 0..4 {
                if x >= 2 {
                    assignment[[y, x]] = 1;
                    entropy[[y, x]] = 2.0;
                } else {
                    entropy[[y, x]] = 0.1;
                }
            }
        }
        let clusters = ClusterMap::from_assignment(assignment, 2)
            .with_mean_entropy(&EntropyMap { entropy: entropy.clone(), q_bins: 8 });
        let gt = Array3::from_elem((4, 4, 2), 7.0);
        let cfg = CadvConfig { n_hints: 5, k: 1, seed: 9, ..Default::default() };
        let hints =
            sample_hints(&clusters, &EntropyMap { entropy, q_bins: 8 }, &gt, &cfg).unwrap();
        assert_eq!(hints.positions.len(), 5);
        for &(y, x) in &hints.positions {
            assert!(x < 2, "hint at ({y},{x}) not in the low-entropy cluster");
            assert_eq!(hints.mask[[y, x]], 1.0);
            assert_eq!(hints.hint_ab[[y, x, 0]], 7.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let clusters = ClusterMap::single_cluster(6, 6);
        let entropy = EntropyMap { entropy: Array2::zeros((6, 6)), q_bins: 4 };
        let gt = Array3::from_elem((6, 6, 2), 1.0);
        let cfg = CadvConfig { n_hints: 10, k: 1, seed: 42, ..Default::default() };
        let a = sample_hints(&clusters, &entropy, &gt, &cfg).unwrap();
        let b = sample_hints(&clusters, &entropy, &gt, &cfg).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn shortfall_is_reported() {
        let clusters = ClusterMap::single_cluster(2, 2);
        let entropy = EntropyMap { entropy: Array2::zeros((2, 2)), q_bins: 4 };
        let gt = Array3::zeros((2, 2, 2));
        let cfg = CadvConfig { n_hints: 10, k: 1, ..Default::default() };
        match sample_hints(&clusters, &entropy, &gt, &cfg) {
            Err(Error::HintShortfall { requested, available, k }) => {
                assert_eq!((requested, available, k), (10, 4, 1));
            }
            other => panic!("expected shortfall, got {other:?}"),
        }
    }

    // Entropy log base rescales all entropies by a constant, so the k
    // lowest-entropy clusters are invariant to the base.
    #[test]
    fn cluster_ranking_invariant_to_log_base() {
        let mut assignment = Array2::zeros((4, 6));
        let mut entropy = Array2::zeros((4, 6));
        for y in 0..4 {
            for x in 0..6 {
                let c = x / 2;
                assignment[[y, x]] = c;
                entropy[[y, x]] = [1.3, 0.2, 0.8][c] + 0.01 * y as f64;
            }
        }
        let nat = ClusterMap::from_assignment(assignment.clone(), 3)
            .with_mean_entropy(&EntropyMap { entropy: entropy.clone(), q_bins: 8 });
        let log2 = ClusterMap::from_assignment(assignment, 3).with_mean_entropy(&EntropyMap {
            entropy: entropy.mapv(|v| v / std::f64::consts::LN_2),
            q_bins: 8,
        });
        for k in 1..=3 {
            assert_eq!(
                nat.lowest_entropy_clusters(k),
                log2.lowest_entropy_clusters(k)
            );
        }
    }
}
