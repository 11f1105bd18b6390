//! Empirical angular measure and spherical k-means of extremal angles.

use std::collections::{BTreeMap, HashSet};

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::faces::{Face, FaceMethod, FaceSet};
use crate::ingest::{ExceedanceSet, Norm};
use crate::matrix_serde;
use crate::rng;

/// Weighted sample of angles, each row of unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularCloud {
    #[serde(with = "matrix_serde::rows")]
    angles: DMatrix<f64>,
    norm: Norm,
    weights: Vec<f64>,
}

const UNIT_TOL: f64 = 1e-12;

impl AngularCloud {
    pub fn new(angles: DMatrix<f64>, norm: Norm, weights: Vec<f64>) -> Result<Self> {
        let k = angles.nrows();
        if k == 0 {
            return Err(Error::InvalidData("angular cloud is empty".into()));
        }
        if weights.len() != k {
            return Err(invalid("weights", format!("{} weights for {k} angles", weights.len())));
        }
        for i in 0..k {
            if angles.row(i).iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
                return Err(Error::InvalidData(format!("angle {i} has a negative or non-finite entry")));
            }
            let r = norm.of_row(&angles, i);
            if (r - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidData(format!("angle {i} has {norm} norm {r}")));
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights", "must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > UNIT_TOL {
            return Err(invalid("weights", format!("sum to {total}, not 1")));
        }
        Ok(AngularCloud { angles, norm, weights })
    }

    /// Equal weights `1/k`.
    pub fn uniform(angles: DMatrix<f64>, norm: Norm) -> Result<Self> {
        let k = angles.nrows();
        Self::new(angles, norm, vec![1.0 / k as f64; k])
    }

    /// Normalizes each nonzero row of `points` and weighs them equally.
    pub fn from_points(points: &DMatrix<f64>, norm: Norm) -> Result<Self> {
        let mut angles = points.clone();
        for i in 0..angles.nrows() {
            let r = norm.of_row(points, i);
            if !(r > 0.0) {
                return Err(Error::InvalidData(format!("point {i} is zero")));
            }
            angles.row_mut(i).iter_mut().for_each(|a| *a /= r);
        }
        Self::uniform(angles, norm)
    }

    /// The empirical angular distribution `Ĥ` of a set of exceedances.
    pub fn from_exceedances(exc: &ExceedanceSet) -> Result<Self> {
        Self::uniform(exc.angles.clone(), exc.norm)
    }

    pub fn len(&self) -> usize {
        self.angles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d(&self) -> usize {
        self.angles.ncols()
    }

    pub fn angles(&self) -> &DMatrix<f64> {
        &self.angles
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.angles.row(i).iter().copied().collect()
    }

    fn distinct_rows(&self) -> usize {
        (0..self.len())
            .map(|i| self.angles.row(i).iter().map(|a| a.to_bits()).collect::<Vec<_>>())
            .collect::<HashSet<_>>()
            .len()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn l2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn rho(x: &[f64], y: &[f64]) -> f64 {
    (1.0 - dot(x, y) / (l2(x) * l2(y))).clamp(0.0, 1.0)
}

/// `ϱ(x, y) = 1 - cos(x, y)` for nonnegative, nonzero vectors.
pub fn angular_dissimilarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid("y", format!("length {} vs {}", y.len(), x.len())));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(invalid(name, "entries must be nonnegative"));
        }
        if !(l2(v) > 0.0) {
            return Err(invalid(name, "zero vector"));
        }
    }
    Ok(rho(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster centers, normalized in the cloud's norm.
    #[serde(with = "matrix_serde::rows")]
    pub centers: DMatrix<f64>,
    /// Zero-based cluster index of each angle.
    pub assignment: Vec<usize>,
    /// Weighted mean dissimilarity to the assigned center.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after every assignment step of the winning restart.
    pub cost_trace: Vec<f64>,
    pub restart: usize,
}

impl ClusterResult {
    pub fn p(&self) -> usize {
        self.centers.nrows()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.p()];
        for &a in &self.assignment {
            c[a] += 1;
        }
        c
    }

    /// Angular mass per cluster (sums to one).
    pub fn masses(&self, cloud: &AngularCloud) -> Vec<f64> {
        let mut m = vec![0.0; self.p()];
        for (&a, &w) in self.assignment.iter().zip(cloud.weights()) {
            m[a] += w;
        }
        m
    }
}

pub const DEFAULT_RESTARTS: usize = 25;
pub const MAX_ITERATIONS: usize = 100;

fn weighted_pick(rng: &mut ChaCha20Rng, scores: &[f64]) -> Option<usize> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 {
            if u < s {
                return Some(i);
            }
            u -= s;
        }
    }
    scores.iter().rposition(|&s| s > 0.0)
}

/// k-means++ seeding with `ϱ` in place of squared distance.
fn seed_centers(cloud: &AngularCloud, rows: &[Vec<f64>], p: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let w = cloud.weights();
    let first = weighted_pick(rng, w).unwrap_or(0);
    let mut centers = vec![rows[first].clone()];
    let mut dist: Vec<f64> = rows.iter().map(|x| rho(x, &rows[first])).collect();
    while centers.len() < p {
        let scores: Vec<f64> = dist.iter().zip(w).map(|(d, w)| d * w).collect();
        let next = weighted_pick(rng, &scores).unwrap_or_else(|| {
            // only zero-weight points remain uncovered
            (0..rows.len()).max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a))).unwrap()
        });
        centers.push(rows[next].clone());
        for (i, x) in rows.iter().enumerate() {
            dist[i] = dist[i].min(rho(x, &rows[next]));
        }
    }
    centers
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let r = rho(x, center);
        if r < best.1 {
            best = (c, r);
        }
    }
    best
}

struct Run {
    centers: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    cost: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn assign(rows: &[Vec<f64>], w: &[f64], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut assignment = Vec::with_capacity(rows.len());
    let mut dist = Vec::with_capacity(rows.len());
    for x in rows {
        let (c, r) = nearest(x, centers);
        assignment.push(c);
        dist.push(r);
    }
    let cost = dist.iter().zip(w).map(|(r, w)| r * w).sum();
    (assignment, dist, cost)
}

/// Moves the point farthest from its own center into each empty cluster.
fn fill_empty(assignment: &mut [usize], dist: &mut [f64], centers: &mut [Vec<f64>], rows: &[Vec<f64>]) {
    let p = centers.len();
    loop {
        let mut counts = vec![0usize; p];
        assignment.iter().for_each(|&a| counts[a] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..rows.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("p does not exceed the number of points");
        centers[empty] = rows[far].clone();
        assignment[far] = empty;
        dist[far] = 0.0;
    }
}

fn update_centers(cloud: &AngularCloud, rows: &[Vec<f64>], assignment: &[usize], centers: &mut [Vec<f64>]) {
    let d = cloud.d();
    let w = cloud.weights();
    for (c, center) in centers.iter_mut().enumerate() {
        let members: Vec<usize> = (0..rows.len()).filter(|&i| assignment[i] == c).collect();
        let mut s = vec![0.0; d];
        let use_weights = members.iter().any(|&i| w[i] > 0.0);
        for &i in &members {
            let wi = if use_weights { w[i] } else { 1.0 };
            let n = l2(&rows[i]);
            s.iter_mut().zip(&rows[i]).for_each(|(a, x)| *a += wi * x / n);
        }
        let r = cloud.norm().of(&s);
        if r > 0.0 {
            *center = s.iter().map(|a| a / r).collect();
        }
    }
}

fn lloyd(cloud: &AngularCloud, rows: &[Vec<f64>], p: usize, rng: &mut ChaCha20Rng) -> Run {
    let w = cloud.weights();
    let mut centers = seed_centers(cloud, rows, p, rng);
    let (mut assignment, mut dist, _) = assign(rows, w, &centers);
    fill_empty(&mut assignment, &mut dist, &mut centers, rows);
    let mut cost: f64 = dist.iter().zip(w).map(|(r, w)| r * w).sum();
    let mut trace = vec![cost];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        update_centers(cloud, rows, &assignment, &mut centers);
        let (mut next, mut nd, _) = assign(rows, w, &centers);
        fill_empty(&mut next, &mut nd, &mut centers, rows);
        let next_cost: f64 = nd.iter().zip(w).map(|(r, w)| r * w).sum();
        debug_assert!(next_cost <= cost + 1e-12, "cost rose from {cost} to {next_cost}");
        trace.push(next_cost);
        cost = next_cost;
        let unchanged = next == assignment;
        assignment = next;
        if unchanged {
            break;
        }
    }
    Run {
        centers,
        assignment,
        cost,
        iterations,
        trace,
    }
}

/// Spherical k-means: Lloyd iterations under `ϱ` from `restarts` k-means++
/// initializations; the cheapest run wins, ties going to the earliest restart.
pub fn spherical_kmeans(cloud: &AngularCloud, p: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    if p == 0 {
        return Err(invalid("p", "need at least one cluster"));
    }
    if restarts == 0 {
        return Err(invalid("restarts", "need at least one restart"));
    }
    let distinct = cloud.distinct_rows();
    if p > distinct {
        return Err(invalid("p", format!("{p} clusters but only {distinct} distinct angles")));
    }
    let rows: Vec<Vec<f64>> = (0..cloud.len()).map(|i| cloud.row(i)).collect();
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(cloud, &rows, p, &mut rng::stream(seed, r as u64)))
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.cost.total_cmp(&b.cost).then(ia.cmp(ib)))
        .expect("restarts >= 1");
    let d = cloud.d();
    Ok(ClusterResult {
        centers: DMatrix::from_fn(p, d, |c, j| best.centers[c][j]),
        assignment: best.assignment,
        cost: best.cost,
        iterations: best.iterations,
        cost_trace: best.trace,
        restart,
    })
}

pub const DEFAULT_CUT: f64 = 0.02;

/// One face per center, `{i : c_i > cut}`, weighted by the cluster's share of
/// angular mass. Centers giving the same face are merged.
pub fn centers_to_faces(result: &ClusterResult, cloud: &AngularCloud, cut: f64) -> Result<FaceSet> {
    if !(cut > 0.0 && cut < 1.0) {
        return Err(invalid("cut", format!("must lie in (0, 1), got {cut}")));
    }
    let counts = result.counts();
    let masses = result.masses(cloud);
    let mut merged: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
    for c in 0..result.p() {
        let face: Vec<usize> = (0..result.centers.ncols())
            .filter(|&j| result.centers[(c, j)] > cut)
            .collect();
        if face.is_empty() {
            warn!("center {c} has no coordinate above {cut}; dropped");
            continue;
        }
        let e = merged.entry(face).or_insert((0.0, 0));
        e.0 += masses[c];
        e.1 += counts[c];
    }
    if merged.is_empty() {
        return Err(invalid("cut", format!("{cut} leaves every face empty")));
    }
    let faces = merged
        .into_iter()
        .map(|(indices, (mass, count))| Face { indices, mass, count })
        .collect();
    Ok(FaceSet::new(
        faces,
        FaceMethod::Cluster,
        serde_json::json!({ "p": result.p(), "cut": cut }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn cloud(rows: &[Vec<f64>], norm: Norm) -> AngularCloud {
        let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        AngularCloud::from_points(&m, norm).unwrap()
    }

    #[test]
    fn dissimilarity_examples() {
        assert!(angular_dissimilarity(&[0.3, 0.7], &[0.3, 0.7]).unwrap().abs() < 1e-15);
        assert_eq!(angular_dissimilarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let s = 0.5f64.sqrt();
        let v = angular_dissimilarity(&[s, s, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - (1.0 - s)).abs() < 1e-15);
        assert!(angular_dissimilarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(angular_dissimilarity(&[-1.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cloud_validation() {
        let bad = DMatrix::from_row_slice(1, 2, &[0.5, 0.6]);
        assert!(AngularCloud::uniform(bad, Norm::L1).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.0]);
        assert!(AngularCloud::new(ok.clone(), Norm::L1, vec![0.5, 0.6]).is_err());
        assert!(AngularCloud::new(ok, Norm::L1, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn identical_angles_single_cluster() {
        let c = cloud(&vec![vec![0.2, 0.3, 0.5]; 8], Norm::L1);
        let r = spherical_kmeans(&c, 1, 0, 3).unwrap();
        assert!(r.cost.abs() < 1e-15);
        for j in 0..3 {
            assert!((r.centers[(0, j)] - [0.2, 0.3, 0.5][j]).abs() < 1e-12);
        }
        assert!(spherical_kmeans(&c, 2, 0, 3).is_err());
    }

    fn brute_force_cost(rows: &[Vec<f64>], p: usize) -> f64 {
        // every assignment into p labels; optimal center is the normalized sum
        let k = rows.len();
        let mut best = f64::INFINITY;
        let total = p.pow(k as u32);
        for code in 0..total {
            let labels: Vec<usize> = (0..k).map(|i| code / p.pow(i as u32) % p).collect();
            let mut cost = 0.0;
            for c in 0..p {
                let mut s = vec![0.0; rows[0].len()];
                for i in (0..k).filter(|&i| labels[i] == c) {
                    let n = l2(&rows[i]);
                    s.iter_mut().zip(&rows[i]).for_each(|(a, x)| *a += x / n);
                }
                let n = l2(&s);
                if n == 0.0 {
                    continue;
                }
                cost += (0..k)
                    .filter(|&i| labels[i] == c)
                    .map(|i| 1.0 - dot(&rows[i], &s) / (l2(&rows[i]) * n))
                    .sum::<f64>();
            }
            best = best.min(cost / k as f64);
        }
        best
    }

    #[test]
    fn two_groups_match_brute_force() {
        let rows = vec![
            vec![0.95, 0.05],
            vec![0.9, 0.1],
            vec![0.99, 0.01],
            vec![0.1, 0.9],
            vec![0.02, 0.98],
            vec![0.15, 0.85],
        ];
        let c = cloud(&rows, Norm::L1);
        let r = spherical_kmeans(&c, 2, 7, DEFAULT_RESTARTS).unwrap();
        assert!((r.cost - brute_force_cost(&rows, 2)).abs() < 1e-12);
        assert_eq!(r.assignment[0], r.assignment[1]);
        assert_eq!(r.assignment[0], r.assignment[2]);
        assert_eq!(r.assignment[3], r.assignment[4]);
        assert_ne!(r.assignment[0], r.assignment[3]);
        let e1 = r.assignment[0];
        assert!(r.centers[(e1, 0)] > 0.9 && r.centers[(1 - e1, 1)] > 0.85);
    }

    fn random_cloud(k: usize, d: usize, seed: u64) -> AngularCloud {
        let mut g = rng::stream(seed, 0);
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| g.random::<f64>().powi(4)).collect())
            .collect();
        cloud(&rows, Norm::L1)
    }

    #[test]
    fn counts_partition_the_exceedances() {
        let c = random_cloud(202, 6, 1);
        let r = spherical_kmeans(&c, 10, 3, DEFAULT_RESTARTS).unwrap();
        let counts = r.counts();
        assert_eq!(counts.iter().sum::<usize>(), 202);
        assert!(counts.iter().all(|&n| n > 0));
        let masses: f64 = r.masses(&c).iter().sum();
        assert!((masses - 1.0).abs() < 1e-12);
        for i in 0..10 {
            assert!((Norm::L1.of_row(&r.centers, i) - 1.0).abs() < 1e-12);
        }
        assert_eq!(r, spherical_kmeans(&c, 10, 3, DEFAULT_RESTARTS).unwrap());
    }

    #[test]
    fn faces_from_centers() {
        let r = ClusterResult {
            centers: DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.5, 0.49, 0.01, 0.995, 0.005, 0.0]),
            assignment: vec![0, 1, 1, 2],
            cost: 0.0,
            iterations: 1,
            cost_trace: vec![0.0],
            restart: 0,
        };
        let c = AngularCloud::uniform(DMatrix::from_element(4, 3, 1.0 / 3.0), Norm::L1).unwrap();
        let f = centers_to_faces(&r, &c, DEFAULT_CUT).unwrap();
        assert_eq!(f.faces.len(), 2);
        assert_eq!(f.faces[0].indices, vec![0]);
        assert_eq!(f.faces[0].count, 1);
        assert!((f.faces[0].mass - 0.25).abs() < 1e-15);
        assert_eq!(f.faces[1].indices, vec![0, 1]);
        assert_eq!(f.faces[1].count, 3);

        let one_hot = ClusterResult {
            centers: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            assignment: vec![0; 4],
            ..r.clone()
        };
        assert_eq!(centers_to_faces(&one_hot, &c, DEFAULT_CUT).unwrap().faces[0].indices, vec![0]);
        assert!(centers_to_faces(&r, &c, 0.999).is_err());
        assert!(centers_to_faces(&r, &c, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cost_trace_never_increases(seed in 0u64..500, p in 1usize..6) {
            let c = random_cloud(60, 4, seed);
            let r = spherical_kmeans(&c, p, seed, 4).unwrap();
            for w in r.cost_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            prop_assert!((r.cost - r.cost_trace.last().unwrap()).abs() < 1e-15);
            prop_assert!(r.counts().iter().all(|&n| n > 0));
        }

        #[test]
        fn one_cluster_per_distinct_row_costs_nothing(seed in 0u64..500, k in 2usize..12) {
            let c = random_cloud(k, 3, seed);
            let r = spherical_kmeans(&c, k, seed, 1).unwrap();
            prop_assert!(r.cost < 1e-12);
        }

        #[test]
        fn dissimilarity_ignores_scaling_and_norm(
            x in proptest::collection::vec(0.01f64..1.0, 4),
            y in proptest::collection::vec(0.01f64..1.0, 4),
            a in 0.1f64..10.0,
        ) {
            let base = angular_dissimilarity(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
            prop_assert!((angular_dissimilarity(&xs, &y).unwrap() - base).abs() < 1e-12);
            let xl1: Vec<f64> = x.iter().map(|v| v / Norm::L1.of(&x)).collect();
            let yinf: Vec<f64> = y.iter().map(|v| v / Norm::Linf.of(&y)).collect();
            prop_assert!((angular_dissimilarity(&xl1, &yinf).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn relabeling_rows_keeps_separated_partition(seed in 0u64..200) {
            let mut g = rng::stream(seed, 1);
            let mut rows = Vec::new();
            for c in 0..3 {
                for _ in 0..10 {
                    let mut v = vec![0.02 * g.random::<f64>(); 3];
                    v[c] += 1.0;
                    rows.push(v);
                }
            }
            let a = spherical_kmeans(&cloud(&rows, Norm::L2), 3, 5, 5).unwrap();
            let perm: Vec<usize> = (0..30).rev().collect();
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let b = spherical_kmeans(&cloud(&permuted, Norm::L2), 3, 5, 5).unwrap();
            prop_assert!((a.cost - b.cost).abs() < 1e-12);
            for i in 0..30 {
                for j in 0..30 {
                    let same_a = a.assignment[perm[i]] == a.assignment[perm[j]];
                    let same_b = b.assignment[i] == b.assignment[j];
                    prop_assert_eq!(same_a, same_b);
                }
            }
        }
    }
}
