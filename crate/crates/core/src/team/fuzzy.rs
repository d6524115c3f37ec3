//! Local distance scaling and the fuzzy union of k-NN memberships.

use super::knn::NeighborGraph;
use crate::par;

/// Smallest bandwidth returned by [`smooth_knn`].
pub const SIGMA_FLOOR: f64 = 1e-3;
const SIGMA_TOLERANCE: f64 = 1e-5;
const SIGMA_MAX_ITER: usize = 64;

/// Returns `(rho, sigma)` for one row of neighbor distances: `rho` is the
/// nearest-neighbor distance and `sigma` solves
/// `sum_i exp(-max(0, d_i - rho) / sigma) = log2(k)` by bisection. When the
/// target is unreachable the search collapses and `sigma` is floored.
pub fn smooth_knn(distances: &[f64], k: usize) -> (f64, f64) {
    let rho = distances.first().copied().unwrap_or(0.0);
    let target = (k as f64).log2();
    // as sigma -> 0 the sum falls to the number of neighbors at distance rho
    let at_rho = distances.iter().filter(|&&d| d <= rho).count() as f64;
    if at_rho >= target {
        return (rho, SIGMA_FLOOR);
    }
    let membership_sum =
        |sigma: f64| -> f64 { distances.iter().map(|&d| (-(d - rho).max(0.0) / sigma).exp()).sum() };

    let (mut lo, mut hi, mut mid) = (0.0_f64, f64::INFINITY, 1.0_f64);
    for _ in 0..SIGMA_MAX_ITER {
        let s = membership_sum(mid);
        if (s - target).abs() < SIGMA_TOLERANCE {
            break;
        }
        // the sum grows with sigma
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    (rho, mid.max(SIGMA_FLOOR))
}

/// Probabilistic t-conorm used to symmetrize memberships.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    (a + b - a * b).clamp(a.max(b), 1.0)
}

/// Symmetric sparse graph with weights in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map(|pos| self.edges[pos].2)
            .unwrap_or(0.0)
    }
}

/// Directional membership of each k-NN edge followed by fuzzy union.
pub fn fuzzy_simplicial_set(g: &NeighborGraph) -> FuzzyGraph {
    let scales = par::map_slice(&g.distances, |row| smooth_knn(row, g.k));
    let mut directed: Vec<(usize, usize, f64)> = Vec::with_capacity(g.len() * g.k);
    for (i, ((row_idx, row_d), &(rho, sigma))) in g.indices.iter().zip(&g.distances).zip(&scales).enumerate() {
        for (&j, &d) in row_idx.iter().zip(row_d) {
            let w = (-(d - rho).max(0.0) / sigma).exp();
            if w > 0.0 {
                directed.push((i.min(j), i.max(j), w));
            }
        }
    }
    directed.sort_by_key(|a| (a.0, a.1));
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(directed.len());
    for (i, j, w) in directed {
        match edges.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 = fuzzy_union(last.2, w),
            _ => edges.push((i, j, w)),
        }
    }
    FuzzyGraph { n: g.len(), edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::team::knn::knn_graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_distances_floor_sigma() {
        let (rho, sigma) = smooth_knn(&[1.0, 1.0, 1.0, 1.0], 4);
        assert_eq!(rho, 1.0);
        assert_eq!(sigma, SIGMA_FLOOR);
        let (rho, sigma) = smooth_knn(&[0.0, 0.0, 0.0], 3);
        assert_eq!((rho, sigma), (0.0, SIGMA_FLOOR));
    }

    #[test]
    fn unreachable_target_two_neighbors() {
        // exp(0) + exp(-1/sigma) > 1 = log2(2) for every sigma > 0
        let (rho, sigma) = smooth_knn(&[1.0, 2.0], 2);
        assert_eq!(rho, 1.0);
        assert_eq!(sigma, SIGMA_FLOOR);
    }

    #[test]
    fn solved_sigma_hits_target() {
        let d = [0.5, 0.9, 1.3, 1.4, 2.0, 2.2, 3.1, 3.3];
        let (rho, sigma) = smooth_knn(&d, d.len());
        let s: f64 = d.iter().map(|&x| (-(x - rho).max(0.0_f64) / sigma).exp()).sum();
        assert!((s - 3.0).abs() < 1e-5);
    }

    #[test]
    fn scale_equivariance() {
        let d = [0.5, 0.9, 1.3, 1.4, 2.0, 2.2, 3.1, 3.3];
        let (rho, sigma) = smooth_knn(&d, d.len());
        for c in [0.1, 3.0, 250.0] {
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let (rho_c, sigma_c) = smooth_knn(&scaled, d.len());
            assert!((rho_c - c * rho).abs() < 1e-12 * c);
            assert!((sigma_c / (c * sigma) - 1.0).abs() < 1e-4, "c={c}: {sigma_c} vs {}", c * sigma);
        }
    }

    #[test]
    fn union_examples() {
        assert_eq!(fuzzy_union(1.0, 0.0), 1.0);
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
    }

    #[test]
    fn graph_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..60).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let knn = knn_graph(&pts, 6).unwrap();
        let fg = fuzzy_simplicial_set(&knn);
        assert!(fg.edges.iter().all(|&(i, j, w)| i < j && w > 0.0 && w <= 1.0));
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(fg.weight(i, j), fg.weight(j, i));
            }
            // nearest neighbor membership is exactly 1, and union keeps it 1
            assert_eq!(fg.weight(i, knn.indices[i][0]), 1.0);
        }
    }
}
