use crate::error::{Error, Result};
use crate::rng::StreamRng;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Centroids of a k-means partition; each point belongs to its nearest
/// centroid (lowest index on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squares after seeding and after each Lloyd step.
    pub objective_history: Vec<f64>,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

impl Partition {
    pub fn n_cells(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn assign(&self, point: ArrayView1<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centroids.rows().into_iter().enumerate() {
            let d = squared_distance(point, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    }

    pub fn assign_all(&self, points: ArrayView2<f64>) -> Vec<usize> {
        points.rows().into_iter().map(|p| self.assign(p)).collect()
    }

    fn objective(&self, points: ArrayView2<f64>, labels: &[usize]) -> f64 {
        points.rows().into_iter().zip(labels).map(|(p, &l)| squared_distance(p, self.centroids.row(l))).sum()
    }
}

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or `max_iter` steps have run. Empty clusters are reseeded at the
/// point farthest from its centroid.
pub fn kmeans_pp(points: ArrayView2<f64>, clusters: usize, rng: &mut StreamRng, max_iter: usize) -> Result<Partition> {
    let n = points.nrows();
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidConfig(format!("cannot form {clusters} clusters from {n} points")));
    }
    let dim = points.ncols();
    let mut centroids = Array2::zeros((clusters, dim));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = points.rows().into_iter().map(|p| squared_distance(p, centroids.row(0))).collect();
    for c in 1..clusters {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
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
        for (i, p) in points.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, centroids.row(c)));
        }
    }
    let mut partition = Partition { centroids, objective_history: Vec::new() };
    let mut labels = partition.assign_all(points);
    partition.objective_history.push(partition.objective(points, &labels));
    for _ in 0..max_iter {
        let mut sums = Array2::<f64>::zeros((clusters, dim));
        let mut counts = vec![0usize; clusters];
        for (p, &l) in points.rows().into_iter().zip(&labels) {
            sums.row_mut(l).scaled_add(1.0, &p);
            counts[l] += 1;
        }
        for c in 0..clusters {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
                partition.centroids.row_mut(c).assign(&mean);
            }
        }
        for c in 0..clusters {
            if counts[c] == 0 {
                let far = points
                    .rows()
                    .into_iter()
                    .zip(&labels)
                    .map(|(p, &l)| squared_distance(p, partition.centroids.row(l)))
                    .enumerate()
                    .fold((0, -1.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
                partition.centroids.row_mut(c).assign(&points.row(far.0));
                labels[far.0] = c;
            }
        }
        let next = partition.assign_all(points);
        let changed = next != labels;
        labels = next;
        partition.objective_history.push(partition.objective(points, &labels));
        if !changed {
            break;
        }
    }
    Ok(partition)
}
