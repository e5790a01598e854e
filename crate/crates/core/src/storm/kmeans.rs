//! Lloyd's K-means with k-means++ seeding, and elbow selection of K.

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 100;
pub const RESTARTS: usize = 10;
/// Relative SSE drop below which adding a cluster is not worth it.
pub const DEFAULT_ELBOW_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<const D: usize> {
    pub k: usize,
    /// Zero-based cluster index per feature vector.
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; D]>,
    pub sse: f64,
    /// SSE after every Lloyd iteration of the winning restart.
    pub sse_history: Vec<f64>,
}

impl<const D: usize> ClusterAssignment<D> {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == cluster)
            .map(|(i, _)| i)
    }
}

fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(k, c)| (k, dist2(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn sse<const D: usize>(features: &[[f64; D]], labels: &[usize], centroids: &[[f64; D]]) -> f64 {
    features
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, &centroids[l]))
        .sum()
}

fn seed_plus_plus<const D: usize, R: Rng + ?Sized>(features: &[[f64; D]], k: usize, rng: &mut R) -> Vec<[f64; D]> {
    let mut centroids = vec![features[rng.random_range(0..features.len())]];
    let mut d2: Vec<f64> = features.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = features.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..features.len())
        };
        let c = features[pick];
        for (d, p) in d2.iter_mut().zip(features) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd<const D: usize>(features: &[[f64; D]], mut centroids: Vec<[f64; D]>) -> Result<ClusterAssignment<D>> {
    let k = centroids.len();
    let mut labels: Vec<usize> = features.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        // update step
        let mut sums = vec![[0.0; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in features.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].map(|s| s / counts[c] as f64);
            }
        }
        // an empty cluster takes the point farthest from its centroid
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = features
                .iter()
                .zip(&labels)
                .enumerate()
                .filter(|(_, (_, &l))| counts[l] > 1)
                .map(|(i, (p, &l))| (i, dist2(p, &centroids[l])))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                centroids[c] = features[i];
                // refresh the remaining means after the move
                for d in 0..k {
                    if d == c || counts[d] == 0 {
                        continue;
                    }
                    let mut s = [0.0; D];
                    for (p, _) in features.iter().zip(&labels).filter(|(_, &l)| l == d) {
                        for (acc, v) in s.iter_mut().zip(p) {
                            *acc += v;
                        }
                    }
                    centroids[d] = s.map(|v| v / counts[d] as f64);
                }
            }
        }
        let current = sse(features, &labels, &centroids);
        if let Some(&prev) = history.last() {
            if current > prev + 1e-9 * prev.max(1e-300) {
                return Err(Error::Internal(format!(
                    "K-means SSE increased from {prev} to {current}"
                )));
            }
        }
        history.push(current);

        // assignment step
        let next: Vec<usize> = features.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(ClusterAssignment {
        k,
        sse: sse(features, &labels, &centroids),
        labels,
        centroids,
        sse_history: history,
    })
}

/// Best of [`RESTARTS`] seeded Lloyd runs.
pub fn kmeans<const D: usize, R: Rng + ?Sized>(
    features: &[[f64; D]],
    k: usize,
    rng: &mut R,
) -> Result<ClusterAssignment<D>> {
    if features.is_empty() {
        return Err(Error::Domain("K-means needs at least one feature vector".into()));
    }
    if k == 0 || k > features.len() {
        return Err(Error::Domain(format!(
            "K = {k} clusters requested for {} points",
            features.len()
        )));
    }
    let mut best: Option<ClusterAssignment<D>> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(features, seed_plus_plus(features, k, rng))?;
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// SSE of the best clustering for K = 1..=k_max.
pub fn sse_curve<const D: usize, R: Rng + ?Sized>(
    features: &[[f64; D]],
    k_max: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    (1..=k_max.min(features.len()))
        .map(|k| kmeans(features, k, rng).map(|a| a.sse))
        .collect()
}

/// Elbow rule: the smallest K whose step to K + 1 reduces the SSE by less
/// than the fraction `threshold`.
pub fn select_k_with<const D: usize, R: Rng + ?Sized>(
    features: &[[f64; D]],
    k_max: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<usize> {
    let limit = k_max.min(features.len()).max(1);
    if features.len() <= 1 {
        return Ok(1);
    }
    let curve = sse_curve(features, (limit + 1).min(features.len()), rng)?;
    for k in 1..limit {
        let (here, next) = (curve[k - 1], curve[k]);
        if here <= 0.0 || (here - next) / here < threshold {
            return Ok(k);
        }
    }
    Ok(limit)
}

pub fn select_k<const D: usize, R: Rng + ?Sized>(features: &[[f64; D]], k_max: usize, rng: &mut R) -> Result<usize> {
    select_k_with(features, k_max, DEFAULT_ELBOW_THRESHOLD, rng)
}
