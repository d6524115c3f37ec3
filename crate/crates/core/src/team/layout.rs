//! Stochastic layout of a fuzzy graph in three dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fuzzy::FuzzyGraph;
use crate::error::{Error, Result};

pub const N_COMPONENTS: usize = 3;
const SPREAD: f64 = 1.0;
const INIT_RANGE: f64 = 10.0;
const GRAD_CLIP: f64 = 4.0;
const REPULSION: f64 = 1.0;
/// Consecutive epochs with non-finite coordinates tolerated before giving up.
const MAX_NON_FINITE_EPOCHS: usize = 3;

pub type Point3 = [f64; N_COMPONENTS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            n_components: N_COMPONENTS,
            min_dist: 0.1,
            epochs: 200,
            negative_sample_rate: 5,
            seed: 42,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components != N_COMPONENTS {
            return Err(Error::InvalidConfig(format!(
                "n_components must be {N_COMPONENTS}, got {}",
                self.n_components
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.n_neighbors < 2 {
            return Err(Error::InvalidConfig("n_neighbors must be at least 2".into()));
        }
        if !(self.min_dist >= 0.0 && self.min_dist < SPREAD) {
            return Err(Error::InvalidConfig(format!(
                "min_dist {} outside [0, {SPREAD})",
                self.min_dist
            )));
        }
        Ok(())
    }
}

/// Fits `(a, b)` of `1 / (1 + a x^(2b))` to the target membership curve
/// (1 below `min_dist`, exponential decay above) by Levenberg-Marquardt
/// least squares on 300 evenly spaced points in `[0, 3 * spread]`.
pub fn fit_curve(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();

    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
        let det = m00 * m11 - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * ga - jab * gb) / det;
        let step_b = -(m00 * gb - jab * ga) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let new_cost = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
        if new_cost < cost {
            let converged = (cost - new_cost) < 1e-15 * cost.max(1e-30);
            a = na;
            b = nb;
            cost = new_cost;
            lambda *= 0.3;
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

fn dist_sq(a: &Point3, b: &Point3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded SGD layout. Edges are sampled in proportion to their weight,
/// each attractive step followed by `negative_sample_rate` repulsive steps
/// against uniformly drawn points; the learning rate decays linearly from 1.
pub fn optimize_layout(fg: &FuzzyGraph, cfg: &UmapConfig) -> Result<Vec<Point3>> {
    cfg.validate()?;
    let n = fg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut emb: Vec<Point3> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-INIT_RANGE..INIT_RANGE)))
        .collect();
    if n < 2 || fg.edges.is_empty() {
        return Ok(emb);
    }

    let (a, b) = fit_curve(cfg.min_dist, SPREAD);
    let n_epochs = cfg.epochs as f64;

    // both directions of every undirected edge; edges too weak to be sampled
    // even once are dropped
    let max_w = fg.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut epochs_per_sample = Vec::new();
    for &(i, j, w) in &fg.edges {
        if w < max_w / n_epochs {
            continue;
        }
        for (h, t) in [(i, j), (j, i)] {
            heads.push(h);
            tails.push(t);
            epochs_per_sample.push(max_w / w);
        }
    }
    let neg_rate = cfg.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate.max(1e-12)).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut bad_epochs = 0;
    for epoch in 0..cfg.epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs;
        let e = epoch as f64;
        for edge in 0..heads.len() {
            if next_sample[edge] > e {
                continue;
            }
            let (j, k) = (heads[edge], tails[edge]);
            let d2 = dist_sq(&emb[j], &emb[k]);
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..N_COMPONENTS {
                let g = clip(coeff * (emb[j][d] - emb[k][d]));
                emb[j][d] += g * alpha;
                emb[k][d] -= g * alpha;
            }
            next_sample[edge] += epochs_per_sample[edge];

            if cfg.negative_sample_rate > 0 {
                let n_neg = ((e - next_negative[edge]) / epochs_per_negative[edge]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let k = rng.random_range(0..n);
                    if k == j {
                        continue;
                    }
                    let d2 = dist_sq(&emb[j], &emb[k]);
                    let coeff = if d2 > 0.0 {
                        2.0 * REPULSION * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                    } else {
                        0.0
                    };
                    for d in 0..N_COMPONENTS {
                        let g = if coeff > 0.0 { clip(coeff * (emb[j][d] - emb[k][d])) } else { GRAD_CLIP };
                        emb[j][d] += g * alpha;
                    }
                }
                next_negative[edge] += n_neg as f64 * epochs_per_negative[edge];
            }
        }

        let mut saw_non_finite = false;
        for p in emb.iter_mut() {
            for c in p.iter_mut() {
                if !c.is_finite() {
                    saw_non_finite = true;
                    *c = if c.is_nan() { 0.0 } else { c.clamp(-INIT_RANGE, INIT_RANGE) };
                }
            }
        }
        if saw_non_finite {
            bad_epochs += 1;
            if bad_epochs > MAX_NON_FINITE_EPOCHS {
                return Err(Error::Diverged(format!("non-finite coordinates for {bad_epochs} consecutive epochs")));
            }
        } else {
            bad_epochs = 0;
        }
    }
    Ok(emb)
}
