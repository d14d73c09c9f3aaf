//! Mini-batch k-means over dataset states, plus the empirical
//! cluster-transition matrix used by dynamics-aware contrastive sampling.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::SeededRng;

/// Clustering result: centroids in state space and one assignment per pool
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Full within-cluster squared-distance objective after each epoch.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties break toward the lower index.
pub fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Total within-cluster squared distance for given centroids under nearest
/// assignment.
pub fn kmeans_objective(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| sq_dist(p, &centroids[nearest_centroid(p, centroids)]))
        .sum()
}

/// k-means++ style seeding: first centroid uniform, the rest drawn with
/// probability proportional to squared distance from the chosen set.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.below(points.len())].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.below(points.len())
        } else {
            let mut target = rng.uniform() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Mini-batch k-means: per epoch, one pass over a shuffled partition of the
/// pool in batches, per-center counts giving the running-mean step size.
/// Epochs whose full objective would increase are rolled back, so the traced
/// objective is non-increasing; training stops there or after `max_epochs`.
pub fn build_clusters(
    points: &[Vec<f64>],
    k: usize,
    batch_size: usize,
    max_epochs: usize,
    rng: &mut SeededRng,
) -> Result<Clustering> {
    if k == 0 {
        return Err(CoreError::Config("cluster count must be >= 1".into()));
    }
    if points.len() < k {
        return Err(CoreError::Config(format!(
            "{} clusters requested but pool has only {} states",
            k,
            points.len()
        )));
    }
    let batch_size = batch_size.max(1);
    let mut centroids = seed_centroids(points, k, rng);
    let mut counts = alloc::vec![0u64; k];
    let mut objective_trace = alloc::vec![kmeans_objective(points, &centroids)];

    for _ in 0..max_epochs {
        let snapshot = centroids.clone();
        let order = rng.permutation(points.len());
        for chunk in order.chunks(batch_size) {
            // assign the whole batch against current centroids, then update
            let assigned: Vec<usize> = chunk
                .iter()
                .map(|i| nearest_centroid(&points[*i], &centroids))
                .collect();
            for (pos, i) in chunk.iter().enumerate() {
                let c = assigned[pos];
                counts[c] += 1;
                let lr = 1.0 / counts[c] as f64;
                let centroid = &mut centroids[c];
                for (cv, pv) in centroid.iter_mut().zip(&points[*i]) {
                    *cv += lr * (pv - *cv);
                }
            }
        }
        let objective = kmeans_objective(points, &centroids);
        let prev = *objective_trace.last().unwrap();
        if objective > prev {
            centroids = snapshot;
            break;
        }
        objective_trace.push(objective);
        if prev - objective < 1e-12 {
            break;
        }
    }

    let assignments = points
        .iter()
        .map(|p| nearest_centroid(p, &centroids))
        .collect();
    Ok(Clustering {
        centroids,
        assignments,
        objective_trace,
    })
}

/// Row-stochastic cluster-transition matrix from consecutive in-episode state
/// pairs. Rows with no outgoing pairs become uniform and are reported.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub rows: Vec<Vec<f64>>,
    pub uniform_rows: Vec<usize>,
}

/// `episode_assignments` holds the cluster id of each in-episode state, one
/// inner vector per episode, in step order.
pub fn cluster_transitions(episode_assignments: &[Vec<usize>], k: usize) -> TransitionMatrix {
    let mut counts = alloc::vec![alloc::vec![0u64; k]; k];
    for ep in episode_assignments {
        for pair in ep.windows(2) {
            counts[pair[0]][pair[1]] += 1;
        }
    }
    let mut rows = Vec::with_capacity(k);
    let mut uniform_rows = Vec::new();
    for (a, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            uniform_rows.push(a);
            rows.push(alloc::vec![1.0 / k as f64; k]);
        } else {
            rows.push(row.iter().map(|c| *c as f64 / total as f64).collect());
        }
    }
    TransitionMatrix { rows, uniform_rows }
}
