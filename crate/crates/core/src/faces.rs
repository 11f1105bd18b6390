//! Detection of faces `E_I` carrying extremal mass: groups of variables that
//! can be large together while the rest stay moderate.

use std::collections::{BTreeMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::coefficients::{chi_value, check_subset, eta_hill, joint_exceedance_count};
use crate::error::{invalid, Error, Result};
use crate::ingest::{k_from_quantile, ExceedanceSet, Norm, StandardizedSample};

/// A group of variables with its estimated mass and supporting count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    /// Zero-based, sorted.
    pub indices: Vec<usize>,
    pub mass: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceMethod {
    Goix,
    Simpson,
    Meyer,
    Apriori,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSet {
    pub faces: Vec<Face>,
    pub method: FaceMethod,
    /// Parameters that produced the set, for provenance.
    pub params: serde_json::Value,
}

impl FaceSet {
    /// Sorts faces by index set; repeated index sets are merged by summing
    /// masses and counts. Empty index sets are dropped.
    pub fn new(faces: Vec<Face>, method: FaceMethod, params: serde_json::Value) -> Self {
        let mut merged: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
        for mut f in faces {
            f.indices.sort_unstable();
            f.indices.dedup();
            if f.indices.is_empty() {
                continue;
            }
            let e = merged.entry(f.indices).or_insert((0.0, 0));
            e.0 += f.mass;
            e.1 += f.count;
        }
        FaceSet {
            faces: merged
                .into_iter()
                .map(|(indices, (mass, count))| Face { indices, mass, count })
                .collect(),
            method,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn index_sets(&self) -> Vec<Vec<usize>> {
        self.faces.iter().map(|f| f.indices.clone()).collect()
    }

    /// Faces not strictly contained in another face of the set.
    pub fn maximal(&self) -> Vec<Vec<usize>> {
        maximal_sets(&self.index_sets())
    }

    pub fn total_mass(&self) -> f64 {
        self.faces.iter().map(|f| f.mass).sum()
    }
}

fn contains_all(big: &[usize], small: &[usize]) -> bool {
    small.iter().all(|x| big.contains(x))
}

/// Members of `sets` not strictly contained in another member, sorted.
pub fn maximal_sets(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = sets
        .iter()
        .filter(|s| !sets.iter().any(|t| t.len() > s.len() && contains_all(t, s)))
        .cloned()
        .collect();
    out.sort();
    out.dedup();
    out
}

fn patterns_to_faces(patterns: impl Iterator<Item = Vec<usize>>, k: usize, u: f64) -> Vec<Face> {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for p in patterns {
        *counts.entry(p).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(indices, count)| Face {
            indices,
            mass: count as f64 / k as f64,
            count,
        })
        .filter(|f| f.mass > u)
        .collect()
}

/// The face `{i : x_i > ε}` of each sup-norm exceedance `x = X / t`.
pub fn goix_assignments(exc: &ExceedanceSet, epsilon: f64) -> Result<Vec<Vec<usize>>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    if exc.norm != Norm::Linf {
        return Err(invalid("exceedances", format!("need linf exceedances, got {}", exc.norm)));
    }
    Ok((0..exc.k)
        .map(|r| {
            let x = exc.scaled(r);
            (0..x.len()).filter(|&i| x[i] > epsilon).collect()
        })
        .collect())
}

/// ε-thickened rectangles: exceedances are grouped by the coordinates above
/// `ε` after scaling by the threshold; faces with mass `count/k > u` are kept.
pub fn goix_faces(exc: &ExceedanceSet, epsilon: f64, u: f64) -> Result<FaceSet> {
    if !(u > 0.0) {
        return Err(invalid("u", format!("must be positive, got {u}")));
    }
    let assignments = goix_assignments(exc, epsilon)?;
    let faces = patterns_to_faces(assignments.into_iter(), exc.k, u);
    debug_assert!(faces.len() <= exc.k);
    Ok(FaceSet::new(
        faces,
        FaceMethod::Goix,
        serde_json::json!({ "epsilon": epsilon, "u": u, "k": exc.k }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMass {
    pub subset: Vec<usize>,
    /// Qualifying rows divided by `k`.
    pub mass: f64,
    pub count: usize,
    /// Hill estimate of the tail index of `min_I X` over the qualifying rows;
    /// absent when no row qualifies.
    pub rv_index: Option<f64>,
}

fn region_rows(sample: &StandardizedSample, subset: &[usize], delta: f64, t: f64) -> Vec<f64> {
    let p = sample.pareto();
    let d = sample.d();
    (0..sample.n())
        .filter_map(|r| {
            let lo = subset.iter().map(|&i| p[(r, i)]).fold(f64::INFINITY, f64::min);
            if lo <= t {
                return None;
            }
            // max_{i∉I} X_i/t <= t^(δ-1) (lo/t)^δ  <=>  max_{i∉I} X_i <= lo^δ
            let bound = lo.powf(delta);
            let ok = (0..d).filter(|j| !subset.contains(j)).all(|j| p[(r, j)] <= bound);
            ok.then_some(lo)
        })
        .collect()
}

/// Empirical mass of the region where the variables in `I` exceed
/// `t = n/k` and the others stay below `(min_I X)^δ`, with a Hill diagnostic
/// of the tail index of `min_I X` there. An index near one indicates a face
/// with positive mass.
pub fn simpson_region_mass(
    sample: &StandardizedSample,
    subset: &[usize],
    delta: f64,
    k: usize,
) -> Result<RegionMass> {
    let subset = check_subset(subset, sample.d(), 1)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
    }
    let n = sample.n();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    let t = n as f64 / k as f64;
    let lows = region_rows(sample, &subset, delta, t);
    let count = lows.len();
    let rv_index = (count > 0).then(|| lows.iter().map(|s| (s / t).ln()).sum::<f64>() / count as f64);
    Ok(RegionMass {
        subset,
        mass: count as f64 / k as f64,
        count,
        rv_index,
    })
}

/// Candidate faces: for every row, each set of its top-`j` coordinates that
/// satisfies the region constraint at `t = n/k`. Regions with mass above `u`
/// and a tail index within `rv_tol` of one are returned.
pub fn simpson_faces(sample: &StandardizedSample, delta: f64, k: usize, u: f64, rv_tol: f64) -> Result<FaceSet> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("must lie in [0, 1), got {delta}")));
    }
    let n = sample.n();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    let t = n as f64 / k as f64;
    let p = sample.pareto();
    let d = sample.d();
    let mut candidates: HashSet<Vec<usize>> = HashSet::new();
    for r in 0..n {
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| p[(r, b)].total_cmp(&p[(r, a)]).then(a.cmp(&b)));
        for j in 1..=d {
            let lo = p[(r, order[j - 1])];
            if lo <= t {
                break;
            }
            let rest_max = order[j..].iter().map(|&i| p[(r, i)]).fold(0.0, f64::max);
            if rest_max <= lo.powf(delta) {
                let mut s = order[..j].to_vec();
                s.sort_unstable();
                candidates.insert(s);
            }
        }
    }
    let mut candidates: Vec<Vec<usize>> = candidates.into_iter().collect();
    candidates.sort();
    let mut faces = Vec::new();
    let mut indices = Vec::new();
    for s in candidates {
        let m = simpson_region_mass(sample, &s, delta, k)?;
        if let Some(rv) = m.rv_index {
            if m.mass > u && (rv - 1.0).abs() <= rv_tol {
                indices.push(serde_json::json!({ "indices": s, "rv_index": rv }));
                faces.push(Face {
                    indices: s,
                    mass: m.mass,
                    count: m.count,
                });
            }
        }
    }
    Ok(FaceSet::new(
        faces,
        FaceMethod::Simpson,
        serde_json::json!({ "delta": delta, "k": k, "u": u, "rv_tol": rv_tol, "rv_index": indices }),
    ))
}

/// Euclidean projection onto the unit simplex `{y >= 0, Σ y = 1}` by sorting
/// and thresholding.
pub fn euclid_simplex_projection(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(invalid("x", "entries must be nonnegative and finite"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(invalid("x", "zero vector"));
    }
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let cand = (cum - 1.0) / (j + 1) as f64;
        if uj - cand > 0.0 {
            tau = cand;
        }
    }
    Ok(x.iter().map(|&v| (v - tau).max(0.0)).collect())
}

/// Support of the simplex projection of each `l1` exceedance `X / t`.
pub fn meyer_assignments(exc: &ExceedanceSet) -> Result<Vec<Vec<usize>>> {
    if exc.norm != Norm::L1 {
        return Err(invalid("exceedances", format!("need l1 exceedances, got {}", exc.norm)));
    }
    (0..exc.k)
        .map(|r| {
            let y = euclid_simplex_projection(&exc.scaled(r))?;
            Ok((0..y.len()).filter(|&i| y[i] > 0.0).collect())
        })
        .collect()
}

/// Faces from Euclidean projections onto the simplex; faces with relative
/// frequency above `u` are returned. [`FaceSet::maximal`] gives the maximal
/// groups, which are the robust part of this estimate.
pub fn meyer_faces(exc: &ExceedanceSet, u: f64) -> Result<FaceSet> {
    if !(u >= 0.0) {
        return Err(invalid("u", format!("must be nonnegative, got {u}")));
    }
    let assignments = meyer_assignments(exc)?;
    let faces = patterns_to_faces(assignments.into_iter(), exc.k, u);
    debug_assert!(faces.len() <= exc.k);
    Ok(FaceSet::new(
        faces,
        FaceMethod::Meyer,
        serde_json::json!({ "u": u, "k": exc.k }),
    ))
}

/// Test applied when growing a group by one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum AprioriCriterion {
    /// Keep `J` if `χ̂_J / χ̂_{J∖j} > threshold` for every `j ∈ J`.
    CondChi { threshold: f64 },
    /// Keep `J` unless `η_J = 1` is rejected: `η̂ + z·se >= 1`.
    EtaTest { z: f64 },
}

impl AprioriCriterion {
    /// One-sided 5% test.
    pub const DEFAULT_Z: f64 = 1.645;
}

pub const DEFAULT_FRONTIER_CAP: usize = 100_000;

/// Bottom-up lattice search for maximal groups of jointly extreme variables,
/// at level `q = 1 - k/n`.
///
/// Level `L+1` candidates are the sets whose `L`-subsets all survived
/// (Apriori pruning). The search stops with [`Error::FrontierCap`] as soon as
/// a candidate level would exceed `cap` sets.
pub fn apriori_faces(
    sample: &StandardizedSample,
    k: usize,
    criterion: AprioriCriterion,
    cap: usize,
) -> Result<FaceSet> {
    let n = sample.n();
    let d = sample.d();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    match criterion {
        AprioriCriterion::CondChi { threshold } if !(threshold >= 0.0) => {
            return Err(invalid("threshold", format!("must be nonnegative, got {threshold}")));
        }
        AprioriCriterion::EtaTest { z } if !z.is_finite() => {
            return Err(invalid("z", "must be finite"));
        }
        _ => {}
    }
    let q = 1.0 - k as f64 / n as f64;
    let mut chi_cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut chi = |s: &[usize]| -> f64 {
        *chi_cache
            .entry(s.to_vec())
            .or_insert_with(|| chi_value(sample, s, q))
    };

    let mut level: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
    let mut survivors: Vec<Vec<usize>> = level.clone();
    let mut size = 1;
    while !level.is_empty() && size < d {
        let alive: HashSet<&Vec<usize>> = level.iter().collect();
        let mut candidates = Vec::new();
        for s in &level {
            let last = *s.last().unwrap();
            for j in last + 1..d {
                let mut c = s.clone();
                c.push(j);
                let all_parents = (0..c.len() - 1).all(|drop| {
                    let mut p = c.clone();
                    p.remove(drop);
                    alive.contains(&p)
                });
                if all_parents {
                    candidates.push(c);
                    if candidates.len() > cap {
                        return Err(Error::FrontierCap {
                            level: size + 1,
                            size: candidates.len(),
                            cap,
                        });
                    }
                }
            }
        }
        let mut next = Vec::new();
        for c in candidates {
            let keep = match criterion {
                AprioriCriterion::CondChi { threshold } => {
                    let v = chi(&c);
                    (0..c.len()).all(|drop| {
                        let mut p = c.clone();
                        p.remove(drop);
                        let parent = chi(&p);
                        parent > 0.0 && v / parent > threshold
                    })
                }
                AprioriCriterion::EtaTest { z } => match eta_hill(sample, &c, k) {
                    Ok(e) => e.value + z * e.std_err.unwrap_or(0.0) >= 1.0,
                    Err(_) => false,
                },
            };
            if keep {
                next.push(c);
            }
        }
        survivors.extend(next.iter().cloned());
        level = next;
        size += 1;
    }
    let faces = maximal_sets(&survivors)
        .into_iter()
        .map(|s| Face {
            mass: chi(&s),
            count: joint_exceedance_count(sample, &s, q),
            indices: s,
        })
        .collect();
    Ok(FaceSet::new(
        faces,
        FaceMethod::Apriori,
        serde_json::json!({ "k": k, "level": q, "criterion": criterion, "cap": cap }),
    ))
}

/// When a greedy move is worth taking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyCriterion {
    /// Remove a variable if `χ̂` grows by at least this relative amount.
    pub min_gain: f64,
    /// Add a variable if `χ̂` keeps at least this fraction of its value.
    pub min_retain: f64,
}

impl Default for GreedyCriterion {
    fn default() -> Self {
        GreedyCriterion {
            min_gain: 0.2,
            min_retain: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreedyMove {
    Start,
    Remove,
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub action: GreedyMove,
    pub element: Option<usize>,
    pub face: Vec<usize>,
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub face: Vec<usize>,
    pub trace: Vec<GreedyStep>,
}

/// Hill-climbs on `χ̂_I` at level `1 - k/n`: removes the variable whose
/// removal raises `χ̂` most (if by at least `min_gain`), otherwise adds the
/// variable that keeps `χ̂` highest (if above `min_retain`). Removed variables
/// are never re-added, and groups are not pruned below two variables.
pub fn greedy_adjust_face(
    sample: &StandardizedSample,
    seed_face: &[usize],
    k: usize,
    criterion: GreedyCriterion,
) -> Result<GreedyResult> {
    let mut face = check_subset(seed_face, sample.d(), 1)?;
    let n = sample.n();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    if !(criterion.min_gain >= 0.0 && criterion.min_retain > 0.0) {
        return Err(invalid("criterion", "min_gain must be >= 0 and min_retain > 0"));
    }
    let q = 1.0 - k as f64 / n as f64;
    let d = sample.d();
    let mut current = chi_value(sample, &face, q);
    let mut trace = vec![GreedyStep {
        action: GreedyMove::Start,
        element: None,
        face: face.clone(),
        chi: current,
    }];
    let mut tabu: HashSet<usize> = HashSet::new();
    // each variable is removed at most once and added at most once
    for _ in 0..2 * d {
        let mut best_remove: Option<(usize, f64)> = None;
        if face.len() > 2 {
            for &j in &face {
                let s: Vec<usize> = face.iter().copied().filter(|&x| x != j).collect();
                let v = chi_value(sample, &s, q);
                if best_remove.is_none_or(|(_, b)| v > b) {
                    best_remove = Some((j, v));
                }
            }
        }
        if let Some((j, v)) = best_remove {
            let gain = if current > 0.0 { v >= (1.0 + criterion.min_gain) * current } else { v > 0.0 };
            if gain {
                face.retain(|&x| x != j);
                tabu.insert(j);
                current = v;
                trace.push(GreedyStep {
                    action: GreedyMove::Remove,
                    element: Some(j),
                    face: face.clone(),
                    chi: v,
                });
                continue;
            }
        }
        let mut best_add: Option<(usize, f64)> = None;
        for j in (0..d).filter(|j| !face.contains(j) && !tabu.contains(j)) {
            let mut s = face.clone();
            s.push(j);
            s.sort_unstable();
            let v = chi_value(sample, &s, q);
            if best_add.is_none_or(|(_, b)| v > b) {
                best_add = Some((j, v));
            }
        }
        match best_add {
            Some((j, v)) if current > 0.0 && v >= criterion.min_retain * current => {
                face.push(j);
                face.sort_unstable();
                tabu.insert(j);
                current = v;
                trace.push(GreedyStep {
                    action: GreedyMove::Add,
                    element: Some(j),
                    face: face.clone(),
                    chi: v,
                });
            }
            _ => break,
        }
    }
    if trace.len() == 1 {
        log::debug!("seed face {seed_face:?} is locally optimal");
    }
    Ok(GreedyResult { face, trace })
}

/// `k` for a face search at an empirical quantile level.
pub fn k_for_level(sample: &StandardizedSample, q: f64) -> Result<usize> {
    let k = k_from_quantile(sample.n(), q)?;
    if k < 10 {
        warn!("only {k} exceedances at level {q}");
    }
    Ok(k)
}
