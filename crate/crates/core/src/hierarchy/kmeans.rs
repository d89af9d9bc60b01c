use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::squared_distance;
use crate::{par, Error, Result};

/// Independent K-means runs per call; the lowest inertia wins.
pub const RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
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
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn recompute(points: &[Vec<f64>], assignment: &[usize], centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        }
    }
    counts
}

/// Moves the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster.
fn fill_empty(points: &[Vec<f64>], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    loop {
        let counts = recompute(points, assignment, centroids);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assignment[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[assignment[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("n >= k guarantees a cluster with two members");
        assignment[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    fill_empty(points, &mut assignment, &mut centroids);
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        fill_empty(points, &mut assignment, &mut centroids);
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    KMeans {
        assignment,
        centroids,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding, best of [`RESTARTS`] runs.
/// No cluster is left empty. Deterministic for a given seed; restarts may run
/// in parallel and ties in inertia go to the lower restart index.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            found: points.len(),
        });
    }
    let runs = par::map_range(RESTARTS, |restart| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        lloyd(points, k, &mut rng)
    });
    let mut best = None::<KMeans>;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Mean silhouette coefficient with Euclidean distance. Points in singleton
/// clusters score 0, as do points whose intra and nearest-cluster distances
/// are both zero.
pub fn silhouette(points: &[Vec<f64>], assignment: &[usize]) -> Result<f64> {
    if points.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: assignment.len(),
        });
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidConfig("silhouette: empty cluster".into()));
    }
    let scores = par::map_range(points.len(), |i| {
        let own = assignment[i];
        if sizes[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        for (j, p) in points.iter().enumerate() {
            if j != i {
                sums[assignment[j]] += squared_distance(&points[i], p).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            (b - a) / denom
        } else {
            0.0
        }
    });
    Ok(scores.iter().sum::<f64>() / points.len() as f64)
}

/// Outcome of [`choose_k`].
#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub silhouette: f64,
    pub clustering: KMeans,
}

/// Picks the K in `k_min..=k_max` whose K-means clustering has the highest
/// silhouette; ties go to the smaller K. `k_max` is clipped to the number of
/// points.
pub fn choose_k(points: &[Vec<f64>], k_min: usize, k_max: usize, seed: u64) -> Result<KSelection> {
    if k_min < 2 || k_max < k_min {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= k_min <= k_max, got {k_min}..={k_max}"
        )));
    }
    let k_max = k_max.min(points.len());
    if k_max < k_min {
        return Err(Error::TooFewPoints {
            needed: k_min,
            found: points.len(),
        });
    }
    let mut best: Option<KSelection> = None;
    for k in k_min..=k_max {
        let clustering = kmeans(points, k, seed)?;
        let s = silhouette(points, &clustering.assignment)?;
        if best.as_ref().is_none_or(|b| s > b.silhouette) {
            best = Some(KSelection {
                k,
                silhouette: s,
                clustering,
            });
        }
    }
    Ok(best.unwrap())
}
