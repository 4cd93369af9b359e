use rand::Rng;
use serde::Serialize;

use super::synth::LoadProfile;
use crate::streams::{stream_rng, Purpose};
use crate::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Index of the largest cluster, lowest index on ties.
    pub fn largest(&self) -> usize {
        let sizes = self.sizes();
        (0..sizes.len()).fold(0, |best, k| if sizes[k] > sizes[best] { k } else { best })
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bd), (k, c)| {
            let d = dist_sq(point, c);
            if d < bd {
                (k, d)
            } else {
                (bi, bd)
            }
        })
}

/// Lloyd's algorithm from a seeded farthest-point start: the first centre is
/// a random point, each further centre is the point farthest from those
/// already chosen. Runs until the assignment stops changing or
/// [`MAX_LLOYD_ITERATIONS`]. An empty cluster keeps its previous centre.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let mut rng = stream_rng(seed, Purpose::Init, 0);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let far = (0..points.len()).fold(0, |b, i| if closest[i] > closest[b] { i } else { b });
        centroids.push(points[far].clone());
        for (c, p) in closest.iter_mut().zip(points) {
            *c = c.min(dist_sq(p, &points[far]));
        }
    }

    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assignments || iterations == MAX_LLOYD_ITERATIONS {
            break;
        }
        assignments = next;
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        history.push(inertia(points, &assignments, &centroids));
    }
    Ok(Clustering {
        inertia: inertia(points, &assignments, &centroids),
        assignments,
        centroids,
        iterations,
        inertia_history: history,
    })
}

fn inertia(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| dist_sq(p, &centroids[a]))
        .sum()
}

/// Clusters households by their daily-average load curve.
pub fn kmeans_profiles(profiles: &[LoadProfile], k: usize, seed: u64) -> Result<Clustering> {
    let features: Vec<Vec<f64>> = profiles.iter().map(LoadProfile::daily_average).collect();
    kmeans(&features, k, seed)
}

/// `count` point indices: members of the largest cluster closest to its
/// centre first, then the remaining points closest to that centre.
pub fn select_from_largest(
    points: &[Vec<f64>],
    clustering: &Clustering,
    count: usize,
) -> Result<Vec<usize>> {
    if count > points.len() {
        return Err(Error::invalid(format!(
            "cannot select {count} of {} points",
            points.len()
        )));
    }
    let target = clustering.largest();
    let centre = &clustering.centroids[target];
    let mut order: Vec<usize> = (0..points.len()).collect();
    let key = |i: usize| {
        (
            clustering.assignments[i] != target,
            dist_sq(&points[i], centre),
        )
    };
    order.sort_by(|&a, &b| {
        key(a)
            .partial_cmp(&key(b))
            .expect("finite distances")
            .then(a.cmp(&b))
    });
    order.truncate(count);
    Ok(order)
}
