use crate::error::{Error, Result};
use crate::par;

/// Exact k nearest neighbors of every point, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    /// `indices[i]` are the neighbors of point `i`, nearest first.
    pub indices: Vec<Vec<usize>>,
    /// Euclidean distances matching `indices`, non-decreasing per row.
    pub distances: Vec<Vec<f64>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Brute-force Euclidean k-NN. Ties go to the lower index.
pub fn knn_graph<P: AsRef<[f64]> + Sync>(points: &[P], k: usize) -> Result<NeighborGraph> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if points.len() < k + 1 {
        return Err(Error::InsufficientData {
            needed: k + 1,
            found: points.len(),
        });
    }
    let rows = par::map_range(points.len(), |i| {
        let p = points[i].as_ref();
        let mut row: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, q)| (euclidean(p, q.as_ref()), j))
            .collect();
        row.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        row.truncate(k);
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        row
    });
    let (indices, distances) = rows
        .into_iter()
        .map(|row| (row.iter().map(|r| r.1).collect(), row.iter().map(|r| r.0).collect()))
        .unzip();
    Ok(NeighborGraph { k, indices, distances })
}
