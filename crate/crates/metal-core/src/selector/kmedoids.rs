//! Seeded k-medoids clustering by alternation: assign each point to its
//! nearest medoid, then recompute each medoid as the member minimizing the
//! within-cluster distance sum, until a fixed point (or 100 iterations).
//! Initialization is a distance-squared weighted seeding over actual points.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMedoidsOutcome {
    /// Point indices of the final medoids, in cluster order.
    pub medoids: Vec<usize>,
    /// Cluster index per point.
    pub assignment: Vec<usize>,
    /// Final sum of distances to assigned medoids.
    pub cost: f64,
    /// Cost after initialization and after every alternation step;
    /// non-increasing by construction.
    pub cost_trace: Vec<f64>,
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = math::euclidean_distance(&points[i], &points[j]);
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// Seeding over data points: first medoid uniform, the rest weighted by
/// squared distance to the nearest already-chosen medoid. Falls back to a
/// uniform draw over the remaining points when every candidate coincides
/// with a chosen medoid.
fn seed_medoids(dist: &[f64], n: usize, k: usize, rng: &mut impl RngCore) -> Vec<usize> {
    let mut medoids = Vec::with_capacity(k);
    medoids.push(rng::gen_index(rng, n));
    let mut nearest = vec![f64::INFINITY; n];
    while medoids.len() < k {
        let last = *medoids.last().expect("at least one medoid");
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = math::fmin(*near, dist[last * n + i]);
        }
        let weights: Vec<f64> = nearest.iter().map(|d| d * d).collect();
        let next = if weights.iter().sum::<f64>() > 0.0 {
            rng::sample_weighted(rng, &weights)
        } else {
            // All points coincide with chosen medoids; pick any unchosen one.
            (0..n)
                .find(|i| !medoids.contains(i))
                .expect("k <= n leaves an unchosen point")
        };
        medoids.push(next);
    }
    medoids
}

fn assign(dist: &[f64], n: usize, medoids: &[usize], assignment: &mut [usize]) -> f64 {
    let mut cost = 0.0;
    for (i, slot) in assignment.iter_mut().enumerate() {
        // A medoid belongs to its own cluster (distance 0, ties included);
        // this keeps every cluster non-empty even with duplicated points.
        if let Some(own) = medoids.iter().position(|&m| m == i) {
            *slot = own;
            continue;
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &m) in medoids.iter().enumerate() {
            let d = dist[i * n + m];
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *slot = best;
        cost += best_d;
    }
    cost
}

/// Alternation from explicit starting medoids; used by both the public
/// entry point and the exhaustive-restart tests.
pub fn cluster_from(points: &[Vec<f64>], initial: &[usize]) -> Result<KMedoidsOutcome> {
    let n = points.len();
    let k = initial.len();
    if k == 0 || k > n {
        return Err(Error::InvalidBudget {
            budget: k,
            pool_size: n,
        });
    }
    {
        let mut sorted = initial.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k || sorted.iter().any(|&m| m >= n) {
            return Err(Error::EmptyCollection(
                "kmedoids: initial medoids must be distinct in-range indices",
            ));
        }
    }
    let dist = distance_matrix(points);
    let mut medoids = initial.to_vec();
    let mut assignment = vec![0usize; n];
    let mut cost = assign(&dist, n, &medoids, &mut assignment);
    let mut cost_trace = vec![cost];

    for _ in 0..MAX_ITERATIONS {
        // Recompute each cluster's medoid as its cost minimizer; empty
        // clusters (possible only with duplicated points) keep their medoid.
        let mut next = medoids.clone();
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut best = next[c];
            let mut best_cost = f64::INFINITY;
            for &candidate in &members {
                let total: f64 = members.iter().map(|&m| dist[candidate * n + m]).sum();
                if total < best_cost {
                    best_cost = total;
                    best = candidate;
                }
            }
            next[c] = best;
        }
        let next_cost = assign(&dist, n, &next, &mut assignment);
        if next == medoids {
            break;
        }
        medoids = next;
        cost = next_cost;
        cost_trace.push(cost);
    }
    // Final assignment for the settled medoids.
    cost = assign(&dist, n, &medoids, &mut assignment);
    Ok(KMedoidsOutcome {
        medoids,
        assignment,
        cost,
        cost_trace,
    })
}

/// Seeded k-medoids over the given points.
pub fn cluster(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMedoidsOutcome> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidBudget {
            budget: k,
            pool_size: n,
        });
    }
    let dist = distance_matrix(points);
    let mut rng = rng::rng_from_seed(seed);
    let initial = seed_medoids(&dist, n, k, &mut rng);
    cluster_from(points, &initial)
}
