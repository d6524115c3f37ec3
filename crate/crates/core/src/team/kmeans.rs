use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus_init<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].as_ref().to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next].as_ref().to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// K-means with k-means++ seeding and Lloyd iterations.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            found: points.len(),
        });
    }
    let dim = points[0].as_ref().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0; points.len()];
    let mut inertia_trace = Vec::new();

    for _ in 0..MAX_ITER {
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, d) = nearest(p.as_ref(), &centroids);
            *l = c;
            inertia += d;
        }

        // repair empty clusters with the farthest point of the largest one
        loop {
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).expect("k > 0");
            let (far, far_d) = labels
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l == largest)
                .map(|(i, _)| (i, sq_dist(points[i].as_ref(), &centroids[largest])))
                .fold((usize::MAX, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            labels[far] = empty;
            centroids[empty] = points[far].as_ref().to_vec();
            inertia -= far_d;
        }
        inertia_trace.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p.as_ref()) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        inertia_trace,
    })
}
