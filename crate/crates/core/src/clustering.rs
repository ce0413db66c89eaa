//! Capacity-bounded K-means user association.
//!
//! Lloyd iterations from `U` randomly chosen users (best of several
//! restarts), then a repair pass that moves the farthest member of any
//! over-full cluster to the nearest cluster with spare room. The final clusters are matched to UAVs so that the summed
//! horizontal UAV-to-centroid distance is minimal.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::world::UavState;

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    /// Member user ids of each cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    pub centroids: Vec<Point>,
}

impl ClusterAssignment {
    /// Cluster index of every user.
    pub fn labels(&self, num_users: usize) -> Vec<usize> {
        let mut labels = vec![usize::MAX; num_users];
        for (c, members) in self.clusters.iter().enumerate() {
            for &k in members {
                labels[k] = c;
            }
        }
        labels
    }

    pub fn sse(&self, points: &[Point]) -> f64 {
        sse(points, &self.clusters, &self.centroids)
    }
}

/// Outcome of the unbounded Lloyd phase.
#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub assignment: ClusterAssignment,
    /// SSE after each completed iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn dist2(a: Point, b: Point) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

pub fn centroid(points: &[Point], members: &[usize]) -> Point {
    let n = members.len() as f64;
    let (sx, sy) = members
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &k| (sx + points[k].0, sy + points[k].1));
    (sx / n, sy / n)
}

pub fn sse(points: &[Point], clusters: &[Vec<usize>], centroids: &[Point]) -> f64 {
    clusters
        .iter()
        .zip(centroids)
        .map(|(members, &mu)| members.iter().map(|&k| dist2(points[k], mu)).sum::<f64>())
        .sum()
}

fn nearest(p: Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    for (i, &c) in centroids.iter().enumerate().skip(1) {
        if dist2(p, c) < dist2(p, centroids[best]) {
            best = i;
        }
    }
    best
}

fn group(labels: &[usize], clusters: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); clusters];
    for (k, &c) in labels.iter().enumerate() {
        out[c].push(k);
    }
    out
}

/// Number of random restarts; the run with the lowest final SSE is kept.
pub const RESTARTS: usize = 10;

/// Lloyd's algorithm from several random seedings, keeping the best run.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Point],
    num_clusters: usize,
    max_iters: usize,
    rng: &mut R,
) -> KmeansRun {
    let mut best: Option<(f64, KmeansRun)> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, num_clusters, max_iters, rng);
        let score = run.assignment.sse(points);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, run));
        }
    }
    best.expect("at least one restart").1
}

/// One Lloyd run seeded with `num_clusters` distinct random users.
///
/// An empty cluster is reseeded with the user farthest from its own centroid.
pub fn lloyd<R: Rng + ?Sized>(
    points: &[Point],
    num_clusters: usize,
    max_iters: usize,
    rng: &mut R,
) -> KmeansRun {
    assert!(
        num_clusters >= 1 && points.len() >= num_clusters,
        "need K ≥ U ≥ 1"
    );
    let mut centroids: Vec<Point> = sample(rng, points.len(), num_clusters)
        .into_iter()
        .map(|k| points[k])
        .collect();
    let mut labels = vec![0usize; points.len()];
    let mut sse_history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        for (k, &p) in points.iter().enumerate() {
            labels[k] = nearest(p, &centroids);
        }
        let mut clusters = group(&labels, num_clusters);
        while let Some(empty) = clusters.iter().position(Vec::is_empty) {
            let farthest = (0..points.len())
                .filter(|&k| clusters[labels[k]].len() > 1)
                .max_by(|&a, &b| {
                    dist2(points[a], centroids[labels[a]])
                        .total_cmp(&dist2(points[b], centroids[labels[b]]))
                        .then(b.cmp(&a))
                })
                .expect("K ≥ U guarantees a donor cluster");
            labels[farthest] = empty;
            clusters = group(&labels, num_clusters);
        }
        let updated: Vec<Point> = clusters.iter().map(|m| centroid(points, m)).collect();
        sse_history.push(sse(points, &clusters, &updated));
        let converged = updated == centroids;
        centroids = updated;
        if converged {
            break;
        }
    }

    KmeansRun {
        assignment: ClusterAssignment {
            clusters: group(&labels, num_clusters),
            centroids,
        },
        sse_history,
        iterations,
    }
}

/// Move members out of over-full clusters until every cluster holds at most
/// `max_load` users.
///
/// The evicted user is the one farthest from its centroid; among equally far
/// candidates the one closest to a cluster with spare room goes first.
pub fn enforce_capacity(points: &[Point], assignment: &ClusterAssignment, max_load: usize) -> ClusterAssignment {
    let n_clusters = assignment.clusters.len();
    assert!(
        max_load * n_clusters >= points.len(),
        "η·U < K: capacity repair cannot terminate"
    );
    let mut clusters = assignment.clusters.clone();
    let mut centroids = assignment.centroids.clone();

    while let Some(over) = clusters.iter().position(|m| m.len() > max_load) {
        let mu = centroids[over];
        let destination = |k: usize| {
            (0..n_clusters)
                .filter(|&c| c != over && clusters[c].len() < max_load)
                .min_by(|&a, &b| {
                    dist2(points[k], centroids[a])
                        .total_cmp(&dist2(points[k], centroids[b]))
                        .then(a.cmp(&b))
                })
                .expect("spare capacity exists while η·U ≥ K")
        };
        let far = clusters[over]
            .iter()
            .map(|&k| dist2(points[k], mu))
            .fold(f64::NEG_INFINITY, f64::max);
        let (user, target) = clusters[over]
            .iter()
            .copied()
            .filter(|&k| dist2(points[k], mu) >= far * (1.0 - 1e-12))
            .map(|k| (k, destination(k)))
            .min_by(|a, b| {
                dist2(points[a.0], centroids[a.1])
                    .total_cmp(&dist2(points[b.0], centroids[b.1]))
                    .then(a.0.cmp(&b.0))
            })
            .expect("over-full cluster is non-empty");

        clusters[over].retain(|&k| k != user);
        clusters[target].push(user);
        clusters[target].sort_unstable();
        centroids[over] = centroid(points, &clusters[over]);
        centroids[target] = centroid(points, &clusters[target]);
    }

    ClusterAssignment { clusters, centroids }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Reorder clusters so that cluster `u` is served by UAV `u`, minimising the
/// summed horizontal centroid distance. Exhaustive for up to five UAVs,
/// greedy beyond.
pub fn match_to_uavs(assignment: &ClusterAssignment, uavs: &[UavState]) -> ClusterAssignment {
    let n = uavs.len();
    assert_eq!(assignment.clusters.len(), n);
    let cost = |u: usize, c: usize| {
        let (cx, cy) = assignment.centroids[c];
        uavs[u].pos.horizontal_distance(cx, cy)
    };
    let mapping: Vec<usize> = if n <= 5 {
        permutations(n)
            .into_iter()
            .map(|perm| {
                let total: f64 = perm.iter().enumerate().map(|(u, &c)| cost(u, c)).sum();
                (total, perm)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            .map(|(_, perm)| perm)
            .expect("at least one UAV")
    } else {
        let mut taken = vec![false; n];
        (0..n)
            .map(|u| {
                let c = (0..n)
                    .filter(|&c| !taken[c])
                    .min_by(|&a, &b| cost(u, a).total_cmp(&cost(u, b)).then(a.cmp(&b)))
                    .expect("clusters remain");
                taken[c] = true;
                c
            })
            .collect()
    };
    ClusterAssignment {
        clusters: mapping.iter().map(|&c| assignment.clusters[c].clone()).collect(),
        centroids: mapping.iter().map(|&c| assignment.centroids[c]).collect(),
    }
}

/// Full re-clustering: K-means, capacity repair, then UAV matching.
pub fn recluster<R: Rng + ?Sized>(
    points: &[Point],
    uavs: &[UavState],
    max_load: usize,
    max_iters: usize,
    rng: &mut R,
) -> ClusterAssignment {
    let run = kmeans(points, uavs.len(), max_iters, rng);
    let bounded = enforce_capacity(points, &run.assignment, max_load);
    match_to_uavs(&bounded, uavs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Position3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uav_at(id: usize, x: f64, y: f64) -> UavState {
        UavState {
            id,
            pos: Position3::new(x, y, 100.0),
            power_profile: vec![],
        }
    }

    fn is_partition(a: &ClusterAssignment, k: usize) -> bool {
        let mut seen = vec![0; k];
        for m in &a.clusters {
            for &u in m {
                seen[u] += 1;
            }
        }
        seen.iter().all(|&c| c == 1)
    }

    #[test]
    fn symmetric_split() {
        let pts = [(0.0, 0.0), (0.0, 10.0), (100.0, 0.0), (100.0, 10.0)];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = kmeans(&pts, 2, 50, &mut rng);
            let mut clusters = run.assignment.clusters.clone();
            clusters.sort();
            assert_eq!(clusters, vec![vec![0, 1], vec![2, 3]], "seed {seed}");
            let mut c = run.assignment.centroids.clone();
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert_eq!(c, vec![(0.0, 5.0), (100.0, 5.0)]);
        }
    }

    #[test]
    fn one_user_per_cluster_has_zero_sse() {
        let pts = [(3.0, 4.0), (100.0, 7.0), (50.0, 400.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = kmeans(&pts, 3, 50, &mut rng);
        assert_eq!(run.assignment.sse(&pts), 0.0);
        assert!(run.assignment.clusters.iter().all(|m| m.len() == 1));
    }

    #[test]
    fn kmeans_beats_random_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let pts: Vec<Point> = (0..10)
            .map(|_| (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0))
            .collect();
        let run = kmeans(&pts, 3, 50, &mut rng);
        let ours = run.assignment.sse(&pts);
        for _ in 0..1000 {
            // random partition with every cluster non-empty
            let labels: Vec<usize> = loop {
                let l: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
                if (0..3).all(|c| l.contains(&c)) {
                    break l;
                }
            };
            let clusters = group(&labels, 3);
            let cents: Vec<Point> = clusters.iter().map(|m| centroid(&pts, m)).collect();
            assert!(ours <= sse(&pts, &clusters, &cents) + 1e-9);
        }
    }

    #[test]
    fn capacity_moves_the_right_user() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (100.0, 0.0)];
        let before = ClusterAssignment {
            clusters: vec![vec![0, 1, 2], vec![3]],
            centroids: vec![(1.0, 0.0), (100.0, 0.0)],
        };
        let after = enforce_capacity(&pts, &before, 2);
        assert_eq!(after.clusters, vec![vec![0, 1], vec![2, 3]]);

        // Brute force over which member to evict: (2,0) leaves the smallest SSE.
        let best = (0..3)
            .map(|evict| {
                let left: Vec<usize> = (0..3).filter(|&k| k != evict).collect();
                let mut right = vec![3, evict];
                right.sort();
                let cl = vec![left, right];
                let ce: Vec<Point> = cl.iter().map(|m| centroid(&pts, m)).collect();
                (sse(&pts, &cl, &ce), evict)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert_eq!(best.1, 2);
        assert!(after.clusters[1].contains(&best.1));
        assert_eq!(after.centroids, vec![(0.5, 0.0), (51.0, 0.0)]);
    }

    #[test]
    fn capacity_is_identity_when_within_bounds() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (100.0, 0.0)];
        let a = ClusterAssignment {
            clusters: vec![vec![0, 1], vec![2]],
            centroids: vec![(0.5, 0.0), (100.0, 0.0)],
        };
        assert_eq!(enforce_capacity(&pts, &a, 2), a);
        let single = ClusterAssignment {
            clusters: vec![vec![0], vec![1], vec![2]],
            centroids: vec![pts[0], pts[1], pts[2]],
        };
        assert_eq!(enforce_capacity(&pts, &single, 1), single);
    }

    #[test]
    fn recluster_is_stable_for_static_users() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point> = (0..6)
            .map(|_| (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0))
            .collect();
        let uavs = vec![uav_at(0, 0.0, 83.0), uav_at(1, 0.0, 250.0), uav_at(2, 0.0, 416.0)];
        let a = recluster(&pts, &uavs, 2, 50, &mut ChaCha8Rng::seed_from_u64(5));
        let b = recluster(&pts, &uavs, 2, 50, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        // rerun from the clustered state converges to the same partition
        let c = recluster(&pts, &uavs, 2, 50, &mut ChaCha8Rng::seed_from_u64(6));
        let mut sa = a.clusters.clone();
        let mut sc = c.clusters.clone();
        sa.sort();
        sc.sort();
        assert_eq!(sa, sc);
    }

    #[test]
    fn single_uav_takes_everyone() {
        let pts = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        let uavs = vec![uav_at(0, 0.0, 0.0)];
        let a = recluster(&pts, &uavs, 3, 50, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn matching_minimises_total_distance() {
        let a = ClusterAssignment {
            clusters: vec![vec![0], vec![1]],
            centroids: vec![(400.0, 0.0), (0.0, 0.0)],
        };
        let uavs = vec![uav_at(0, 10.0, 0.0), uav_at(1, 390.0, 0.0)];
        let m = match_to_uavs(&a, &uavs);
        assert_eq!(m.clusters, vec![vec![1], vec![0]]);
    }

    proptest! {
        #[test]
        fn recluster_output_is_a_bounded_partition(
            seed in any::<u64>(),
            k in 3usize..=12,
            u in 1usize..=4,
        ) {
            let u = u.min(k);
            let eta = k.div_ceil(u);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..k)
                .map(|_| (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0))
                .collect();
            let uavs: Vec<UavState> = (0..u).map(|i| uav_at(i, 0.0, 100.0 * i as f64)).collect();
            let a = recluster(&pts, &uavs, eta, 50, &mut rng);
            prop_assert!(is_partition(&a, k));
            prop_assert!(a.clusters.iter().all(|m| m.len() <= eta && !m.is_empty()));
            for (m, c) in a.clusters.iter().zip(&a.centroids) {
                let mu = centroid(&pts, m);
                prop_assert!((mu.0 - c.0).abs() < 1e-9 && (mu.1 - c.1).abs() < 1e-9);
            }
        }

        #[test]
        fn lloyd_sse_never_increases(seed in any::<u64>(), k in 4usize..=20, u in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point> = (0..k)
                .map(|_| (rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0))
                .collect();
            let run = lloyd(&pts, u, 50, &mut rng);
            for w in run.sse_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9);
            }
            prop_assert!(is_partition(&run.assignment, k));
        }
    }
}
