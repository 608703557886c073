//! Seeded k-means used to shrink the instance pool to representatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Instance, InstancePool};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after every update step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, smallest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cent) in centroids.iter().enumerate() {
        let d = sq_dist(p, cent);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

/// Lloyd's algorithm from a seeded k-means++ start. An empty cluster is
/// re-seeded at the point farthest from its assigned centroid.
pub fn kmeans(points: &[&[f64]], k: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    if k < 1 {
        return Err(invalid("k", "must be at least 1"));
    }
    if points.is_empty() {
        return Err(invalid("points", "no points to cluster"));
    }
    let k = k.min(points.len());
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut inertia_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        let changed = assigned.iter().zip(&assignment).any(|((c, _), old)| c != old);
        for (a, (c, _)) in assignment.iter_mut().zip(&assigned) {
            *a = *c;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignment[i]])))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                centroids[c] = points[far].to_vec();
            }
        }
        let inertia: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &c)| sq_dist(p, &centroids[c]))
            .sum();
        inertia_trace.push(inertia);
        if !changed && counts.iter().all(|&n| n > 0) {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignment,
        inertia_trace,
        iterations,
    })
}

/// Reduce a pool to `k` centroids. Each centroid's provenance is that of
/// the nearest original instance. Returns the pool unchanged if `k ≥ |pool|`.
pub fn kmeans_representatives(pool: &InstancePool, k: usize, seed: u64, max_iters: usize) -> Result<InstancePool> {
    if k < 1 {
        return Err(invalid("k", "must be at least 1"));
    }
    if k >= pool.len() {
        return Ok(pool.clone());
    }
    let points: Vec<&[f64]> = pool.instances().iter().map(Instance::values).collect();
    let km = kmeans(&points, k, seed, max_iters)?;
    let origin = km
        .centroids
        .iter()
        .map(|c| pool.origin()[nearest_point(c, &points)])
        .collect();
    InstancePool::from_parts(km.centroids.into_iter().map(Instance::new).collect(), origin)
}

fn nearest_point(c: &[f64], points: &[&[f64]]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Origin;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn pool_of(rows: Vec<Vec<f64>>) -> InstancePool {
        let n = rows.len();
        InstancePool::from_parts(
            rows.into_iter().map(Instance::new).collect(),
            (0..n)
                .map(|k| Origin {
                    bag: k / 3,
                    offset: k % 3,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_centroid_is_mean() {
        let pool = pool_of(vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]]);
        let r = kmeans_representatives(&pool, 1, 7, 20).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get(0).values(), &[2.0, 1.0]);
    }

    #[test]
    fn k_at_least_pool_is_identity() {
        let pool = pool_of(vec![vec![0.0], vec![1.0]]);
        assert_eq!(kmeans_representatives(&pool, 2, 0, 10).unwrap(), pool);
        assert_eq!(kmeans_representatives(&pool, 5, 0, 10).unwrap(), pool);
        assert!(kmeans_representatives(&pool, 0, 0, 10).is_err());
    }

    #[test]
    fn separated_clusters_recover_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rows = Vec::new();
        for center in [[-50.0, 0.0], [50.0, 10.0]] {
            for _ in 0..10 {
                rows.push(vec![
                    center[0] + noise.sample(&mut rng),
                    center[1] + noise.sample(&mut rng),
                ]);
            }
        }
        let mean = |lo: usize| -> Vec<f64> {
            (0..2)
                .map(|j| rows[lo..lo + 10].iter().map(|r| r[j]).sum::<f64>() / 10.0)
                .collect()
        };
        let (m0, m1) = (mean(0), mean(10));
        let pool = pool_of(rows.clone());
        let r = kmeans_representatives(&pool, 2, 11, 100).unwrap();
        let mut cents: Vec<Vec<f64>> = r.instances().iter().map(|i| i.values().to_vec()).collect();
        cents.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        for (c, m) in cents.iter().zip([&m0, &m1]) {
            for j in 0..2 {
                assert!((c[j] - m[j]).abs() <= 1e-9);
            }
        }
        // provenance points into the matching cluster
        assert!(r.origin().iter().all(|o| o.bag * 3 + o.offset < 20));
    }

    #[test]
    fn same_seed_same_pool() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).sqrt()])
            .collect();
        let pool = pool_of(rows);
        let a = kmeans_representatives(&pool, 5, 42, 50).unwrap();
        let b = kmeans_representatives(&pool, 5, 42, 50).unwrap();
        let bits = |p: &InstancePool| -> Vec<u64> {
            p.instances()
                .iter()
                .flat_map(|i| i.values().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    proptest! {
        #[test]
        fn inertia_non_increasing(
            raw in prop::collection::vec(-5.0f64..5.0, 6..80),
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            let pts: Vec<&[f64]> = raw.chunks_exact(2).collect();
            let km = kmeans(&pts, k, seed, 100).unwrap();
            for w in km.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0]), "{:?}", km.inertia_trace);
            }
        }
    }
}
