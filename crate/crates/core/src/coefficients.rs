//! Empirical tail dependence summaries: `χ̂`, Hill-type `η̂`, the empirical
//! exponent measure, and a checker for the constraints a family of
//! coefficients must satisfy.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ingest::StandardizedSample;
use crate::rng;

/// Zero-based column indices, kept sorted.
pub type Subset = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiEstimate {
    pub subset: Subset,
    pub level: f64,
    pub value: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub subset: Subset,
    pub k_used: usize,
    pub value: f64,
    pub std_err: Option<f64>,
}

pub(crate) fn check_subset(subset: &[usize], d: usize, min_len: usize) -> Result<Subset> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != subset.len() {
        return Err(invalid("subset", format!("{subset:?} has repeated indices")));
    }
    if s.len() < min_len {
        return Err(invalid("subset", format!("need at least {min_len} indices, got {subset:?}")));
    }
    if let Some(&j) = s.iter().find(|&&j| j >= d) {
        return Err(invalid("subset", format!("index {j} out of range for d = {d}")));
    }
    Ok(s)
}

/// Number of rows whose empirical distribution function exceeds `q` in every
/// coordinate of `subset`.
pub fn joint_exceedance_count(sample: &StandardizedSample, subset: &[usize], q: f64) -> usize {
    (0..sample.n())
        .filter(|&r| subset.iter().all(|&i| sample.ecdf(r, i) > q))
        .count()
}

/// `(1 - q) n`, snapped to the nearest integer when it is one up to rounding,
/// so that `q = 1 - k/n` gives exactly `k`.
fn expected_count(n: usize, q: f64) -> f64 {
    let m = (1.0 - q) * n as f64;
    let r = m.round();
    if (m - r).abs() <= 1e-9 * n as f64 {
        r
    } else {
        m
    }
}

/// Unchecked `χ̂` for any nonempty subset; used by the lattice searches where
/// singletons act as roots.
pub(crate) fn chi_value(sample: &StandardizedSample, subset: &[usize], q: f64) -> f64 {
    let joint = joint_exceedance_count(sample, subset, q) as f64;
    (joint / expected_count(sample.n(), q)).clamp(0.0, 1.0)
}

fn check_level(n: usize, q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("level", format!("must lie in (0, 1), got {q}")));
    }
    if expected_count(n, q) < 1.0 {
        return Err(invalid("level", format!("(1 - q) n < 1 for q = {q}, n = {n}")));
    }
    Ok(())
}

/// `χ̂_I(q)`: joint exceedances of the level `q` divided by `(1 - q) n`,
/// clipped to `[0, 1]`.
pub fn chi_hat(sample: &StandardizedSample, subset: &[usize], q: f64) -> Result<ChiEstimate> {
    let subset = check_subset(subset, sample.d(), 2)?;
    check_level(sample.n(), q)?;
    // ecdf values are at most n/(n+1)
    if q >= sample.n() as f64 / (sample.n() as f64 + 1.0) {
        warn!("level {q} leaves no marginal exceedances; chi is 0");
    }
    let value = chi_value(sample, &subset, q);
    Ok(ChiEstimate {
        subset,
        level: q,
        value,
        ci_lower: None,
        ci_upper: None,
    })
}

/// Pairwise `χ̂_ij(q)` with unit diagonal.
pub fn chi_matrix(sample: &StandardizedSample, q: f64) -> Result<DMatrix<f64>> {
    check_level(sample.n(), q)?;
    let d = sample.d();
    let mut m = DMatrix::identity(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let v = chi_value(sample, &[i, j], q);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `χ̂_ij(q)` over a grid of levels, with 95% row-bootstrap percentile
/// intervals when `n_boot > 0`.
///
/// Replicate `b` draws from sub-stream `b` of `seed`, so the bands do not
/// depend on the number of worker threads.
pub fn chi_curve(
    sample: &StandardizedSample,
    i: usize,
    j: usize,
    q_grid: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<ChiEstimate>> {
    if q_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("q_grid", "levels must be strictly increasing"));
    }
    let mut curve = q_grid
        .iter()
        .map(|&q| chi_hat(sample, &[i, j], q))
        .collect::<Result<Vec<_>>>()?;
    if n_boot == 0 {
        return Ok(curve);
    }
    let n = sample.n();
    let pair = [i.min(j), i.max(j)];
    let reps: Vec<Vec<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut g = rng::stream(seed, b as u64);
            let rows: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
            let boot = sample.resample(&rows);
            q_grid.iter().map(|&q| chi_value(&boot, &pair, q)).collect()
        })
        .collect();
    for (g, est) in curve.iter_mut().enumerate() {
        let mut vals: Vec<f64> = reps.iter().map(|r| r[g]).collect();
        vals.sort_by(f64::total_cmp);
        // percentile bands need not cover the point estimate; widen so they do
        est.ci_lower = Some(percentile(&vals, 0.025).min(est.value));
        est.ci_upper = Some(percentile(&vals, 0.975).max(est.value));
    }
    Ok(curve)
}

/// Hill estimate of `η_I` from the structure variable `T = min_{i∈I} X_i`
/// on the Pareto scale, using the `k` largest values.
pub fn eta_hill(sample: &StandardizedSample, subset: &[usize], k: usize) -> Result<EtaEstimate> {
    let subset = check_subset(subset, sample.d(), 2)?;
    let n = sample.n();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    let p = sample.pareto();
    let mut t: Vec<f64> = (0..n)
        .map(|r| subset.iter().map(|&i| p[(r, i)]).fold(f64::INFINITY, f64::min))
        .collect();
    t.sort_by(f64::total_cmp);
    let base = t[n - k - 1];
    let value = t[n - k..].iter().map(|x| (x / base).ln()).sum::<f64>() / k as f64;
    if value <= 0.0 {
        return Err(Error::InvalidData(format!(
            "the {} largest values of min over {subset:?} are tied",
            k + 1
        )));
    }
    Ok(EtaEstimate {
        subset,
        k_used: k,
        value,
        std_err: Some(value / (k as f64).sqrt()),
    })
}

/// Number of rows with `F̂_j > 1 - k / (n z_j)` for at least one `j`.
pub fn union_exceedance_count(sample: &StandardizedSample, z: &[f64], k: usize) -> usize {
    let n = sample.n() as f64;
    let levels: Vec<f64> = z.iter().map(|&zj| 1.0 - k as f64 / (n * zj)).collect();
    (0..sample.n())
        .filter(|&r| levels.iter().enumerate().any(|(j, &l)| sample.ecdf(r, j) > l))
        .count()
}

/// `Λ̂_z`: the empirical exponent measure of the complement of `[0, z]`.
pub fn empirical_exponent_measure(sample: &StandardizedSample, z: &[f64], k: usize) -> Result<f64> {
    let n = sample.n();
    if z.len() != sample.d() {
        return Err(invalid("z", format!("length {} but d = {}", z.len(), sample.d())));
    }
    if z.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("z", "entries must be positive and finite"));
    }
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    for (j, &zj) in z.iter().enumerate() {
        if k as f64 / (n as f64 * zj) >= 1.0 {
            warn!("margin {j}: k/(n z) >= 1, every row qualifies");
        }
    }
    Ok(union_exceedance_count(sample, z, k) as f64 / k as f64)
}

/// A constraint broken by a family of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `Σ_{J ⊇ I} (-1)^{|J \ I|} χ_J` is negative.
    InclusionExclusion { subset: Subset, value: f64 },
    ChiMonotonicity { subset: Subset, superset: Subset },
    EtaMonotonicity { subset: Subset, superset: Subset },
}

fn is_strict_subset(a: &[usize], b: &[usize]) -> bool {
    a.len() < b.len() && a.iter().all(|x| b.contains(x))
}

fn check_family(name: &'static str, map: &BTreeMap<Subset, f64>) -> Result<()> {
    for key in map.keys() {
        if key.is_empty() || key.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(name, format!("{key:?} is not a sorted nonempty set")));
        }
        if key.len() > 2 {
            for drop in 0..key.len() {
                let mut sub = key.clone();
                sub.remove(drop);
                if !map.contains_key(&sub) {
                    return Err(invalid(
                        name,
                        format!("family is not downward closed: {key:?} present, {sub:?} missing"),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Checks a family of `χ` and `η` values for inclusion–exclusion positivity
/// and monotonicity under set inclusion.
///
/// The inclusion–exclusion sum for `I` is only evaluated when every superset
/// of `I` inside the family's variable set is present.
pub fn consistency_check(
    chis: &BTreeMap<Subset, f64>,
    etas: &BTreeMap<Subset, f64>,
    tol: f64,
) -> Result<Vec<Violation>> {
    check_family("chis", chis)?;
    check_family("etas", etas)?;
    let mut out = Vec::new();

    let universe: Vec<usize> = chis
        .keys()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for subset in chis.keys().filter(|s| s.len() >= 2) {
        let rest: Vec<usize> = universe.iter().copied().filter(|j| !subset.contains(j)).collect();
        let mut sum = 0.0;
        let mut complete = true;
        for mask in 0u64..(1u64 << rest.len()) {
            let mut sup: Subset = subset.clone();
            sup.extend(rest.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| j));
            sup.sort_unstable();
            match chis.get(&sup) {
                Some(v) => {
                    let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    sum += sign * v;
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete && sum < -tol {
            out.push(Violation::InclusionExclusion {
                subset: subset.clone(),
                value: sum,
            });
        }
    }

    for (i, vi) in chis {
        for (j, vj) in chis {
            if is_strict_subset(i, j) && *vj > vi + tol {
                out.push(Violation::ChiMonotonicity {
                    subset: i.clone(),
                    superset: j.clone(),
                });
            }
        }
    }
    for (i, vi) in etas {
        for (j, vj) in etas {
            if is_strict_subset(i, j) && *vj > vi + tol {
                out.push(Violation::EtaMonotonicity {
                    subset: i.clone(),
                    superset: j.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// `χ̂_I(q)` for every subset of size at least two, for use with
/// [`consistency_check`]. Only sensible for small `d`.
pub fn chi_family(sample: &StandardizedSample, q: f64) -> Result<BTreeMap<Subset, f64>> {
    check_level(sample.n(), q)?;
    let d = sample.d();
    if d > 20 {
        return Err(invalid("d", format!("{d} variables give too many subsets")));
    }
    let mut out = BTreeMap::new();
    for mask in 1u64..(1u64 << d) {
        if mask.count_ones() < 2 {
            continue;
        }
        let s: Subset = (0..d).filter(|j| mask >> j & 1 == 1).collect();
        let v = chi_value(sample, &s, q);
        out.insert(s, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{rank_transform, ObservationMatrix};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn sample(cols: &[Vec<f64>]) -> StandardizedSample {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        rank_transform(&ObservationMatrix::with_default_labels(m).unwrap())
    }

    fn uniform_cols(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut g = rng::stream(seed, 0);
        (0..d).map(|_| (0..n).map(|_| g.random::<f64>()).collect()).collect()
    }

    fn comonotone(n: usize, d: usize) -> StandardizedSample {
        let base: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64).collect();
        sample(&vec![base; d])
    }

    #[test]
    fn hand_count_example() {
        let s = sample(&[vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 1.0, 4.0, 3.0]]);
        assert_eq!(joint_exceedance_count(&s, &[0, 1], 0.5), 2);
        assert_eq!(chi_hat(&s, &[0, 1], 0.5).unwrap().value, 1.0);
    }

    #[test]
    fn comonotone_and_antithetic() {
        let s = comonotone(500, 3);
        assert_eq!(chi_hat(&s, &[0, 1, 2], 0.9).unwrap().value, 1.0);
        let up: Vec<f64> = (0..1000).map(f64::from).collect();
        let down: Vec<f64> = up.iter().map(|x| -x).collect();
        let s = sample(&[up, down]);
        assert_eq!(chi_hat(&s, &[0, 1], 0.9).unwrap().value, 0.0);
    }

    #[test]
    fn chi_rejects_bad_inputs() {
        let s = comonotone(10, 2);
        assert!(chi_hat(&s, &[0], 0.5).is_err());
        assert!(chi_hat(&s, &[0, 0], 0.5).is_err());
        assert!(chi_hat(&s, &[0, 2], 0.5).is_err());
        assert!(chi_hat(&s, &[0, 1], 0.95).is_err());
        assert!(chi_hat(&s, &[0, 1], 0.9).is_ok());
    }

    #[test]
    fn curve_without_and_with_bootstrap() {
        let s = comonotone(400, 2);
        let grid = [0.8, 0.9, 0.95];
        let plain = chi_curve(&s, 0, 1, &grid, 0, 1).unwrap();
        assert!(plain.iter().all(|e| e.ci_lower.is_none() && e.ci_upper.is_none()));
        let boot = chi_curve(&s, 0, 1, &grid, 50, 1).unwrap();
        for e in &boot {
            assert_eq!(e.value, 1.0);
            assert_eq!((e.ci_lower, e.ci_upper), (Some(1.0), Some(1.0)));
        }
        assert!(chi_curve(&s, 0, 1, &[0.9, 0.8], 0, 1).is_err());
    }

    #[test]
    fn bootstrap_is_reproducible_and_brackets_value() {
        let s = sample(&uniform_cols(2000, 2, 3));
        let a = chi_curve(&s, 0, 1, &[0.9], 100, 42).unwrap();
        let b = chi_curve(&s, 0, 1, &[0.9], 100, 42).unwrap();
        assert_eq!(a, b);
        let e = &a[0];
        assert!(e.ci_lower.unwrap() <= e.value && e.value <= e.ci_upper.unwrap());
        assert!(e.ci_upper.unwrap() > e.ci_lower.unwrap());
    }

    #[test]
    fn independent_chi_near_one_minus_q() {
        // exact independence: P(U1 > q, U2 > q) / (1 - q) = 1 - q
        let s = sample(&uniform_cols(100_000, 2, 11));
        let v = chi_hat(&s, &[0, 1], 0.95).unwrap().value;
        assert!((v - 0.05).abs() < 0.02, "{v}");
    }

    #[test]
    fn eta_limits() {
        let s = comonotone(10_000, 2);
        let e = eta_hill(&s, &[0, 1], 200).unwrap();
        assert!((e.value - 1.0).abs() < 0.1, "{}", e.value);
        assert_eq!(e.std_err, Some(e.value / 200f64.sqrt()));

        let s = sample(&uniform_cols(100_000, 2, 5));
        let e = eta_hill(&s, &[0, 1], 500).unwrap();
        assert!((e.value - 0.5).abs() < 0.1, "{}", e.value);
    }

    #[test]
    fn eta_single_term() {
        let s = sample(&uniform_cols(300, 2, 9));
        let p = s.pareto();
        let mut t: Vec<f64> = (0..300).map(|r| p[(r, 0)].min(p[(r, 1)])).collect();
        t.sort_by(f64::total_cmp);
        let e = eta_hill(&s, &[0, 1], 1).unwrap();
        assert!((e.value - (t[299] / t[298]).ln()).abs() < 1e-15);
        assert!(eta_hill(&s, &[0, 1], 300).is_err());
    }

    #[test]
    fn exponent_measure_comonotone_and_monotone() {
        let s = comonotone(1000, 3);
        assert_eq!(empirical_exponent_measure(&s, &[1.0; 3], 50).unwrap(), 1.0);

        let s = sample(&uniform_cols(2000, 3, 2));
        let mut prev = f64::INFINITY;
        for c in [0.5, 1.0, 2.0, 4.0, 16.0, 1e6] {
            let v = empirical_exponent_measure(&s, &[c; 3], 100).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn pair_chi_equals_two_minus_exponent_measure() {
        for seed in 0..5 {
            let s = sample(&uniform_cols(777, 2, seed));
            let k = 61;
            let q = 1.0 - k as f64 / 777.0;
            let joint = joint_exceedance_count(&s, &[0, 1], q);
            let union = union_exceedance_count(&s, &[1.0, 1.0], k);
            assert_eq!(joint, 2 * k - union);
            let chi = chi_hat(&s, &[0, 1], q).unwrap().value;
            let lam = empirical_exponent_measure(&s, &[1.0, 1.0], k).unwrap();
            assert!((chi - (2.0 - lam)).abs() <= 1e-15);
        }
    }

    fn family(entries: &[(&[usize], f64)]) -> BTreeMap<Subset, f64> {
        entries.iter().map(|(s, v)| (s.to_vec(), *v)).collect()
    }

    #[test]
    fn consistency_examples() {
        let chis = family(&[(&[0, 1], 0.5), (&[0, 2], 0.5), (&[1, 2], 0.5), (&[0, 1, 2], 0.6)]);
        let v = consistency_check(&chis, &BTreeMap::new(), 1e-9).unwrap();
        assert!(v.contains(&Violation::ChiMonotonicity {
            subset: vec![0, 1],
            superset: vec![0, 1, 2]
        }));
        assert!(v.contains(&Violation::InclusionExclusion {
            subset: vec![0, 1],
            value: 0.5 - 0.6
        }));

        let ones = family(&[(&[0, 1], 1.0), (&[0, 2], 1.0), (&[1, 2], 1.0), (&[0, 1, 2], 1.0)]);
        assert!(consistency_check(&ones, &ones, 1e-9).unwrap().is_empty());

        let etas = family(&[(&[0, 1], 0.5), (&[0, 2], 0.5), (&[1, 2], 0.5), (&[0, 1, 2], 0.7)]);
        let v = consistency_check(&BTreeMap::new(), &etas, 1e-9).unwrap();
        assert_eq!(v.len(), 3);
        assert!(matches!(v[0], Violation::EtaMonotonicity { .. }));
    }

    #[test]
    fn incomplete_family_rejected() {
        let chis = family(&[(&[0, 1], 0.5), (&[0, 1, 2], 0.4)]);
        assert!(consistency_check(&chis, &BTreeMap::new(), 1e-9).is_err());
    }

    fn brute_force_monotone_violations(s: &StandardizedSample, q: f64) -> usize {
        let f = chi_family(s, q).unwrap();
        let mut bad = 0;
        for (i, vi) in &f {
            for (j, vj) in &f {
                if is_strict_subset(i, j) && vj > vi {
                    bad += 1;
                }
            }
        }
        bad
    }

    #[test]
    fn empirical_family_is_consistent() {
        for seed in 0..10 {
            let s = sample(&uniform_cols(300, 4, 100 + seed));
            let chis = chi_family(&s, 0.8).unwrap();
            let v = consistency_check(&chis, &BTreeMap::new(), 1e-9).unwrap();
            assert!(v.iter().all(|x| !matches!(x, Violation::ChiMonotonicity { .. })));
            assert_eq!(brute_force_monotone_violations(&s, 0.8), 0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn nested_subsets_have_smaller_chi(seed in 0u64..1000, q in 0.5f64..0.95) {
            let s = sample(&uniform_cols(200, 4, seed));
            let small = chi_hat(&s, &[0, 2], q).unwrap().value;
            let big = chi_hat(&s, &[0, 2, 3], q).unwrap().value;
            prop_assert!(big <= small);
        }

        #[test]
        fn chi_invariant_under_monotone_maps(seed in 0u64..1000, q in 0.5f64..0.95) {
            let cols = uniform_cols(150, 3, seed);
            let mapped: Vec<Vec<f64>> = vec![
                cols[0].iter().map(|x| x.exp()).collect(),
                cols[1].iter().map(|x| 3.0 * x - 7.0).collect(),
                cols[2].iter().map(|x| x.powi(3)).collect(),
            ];
            let a = chi_hat(&sample(&cols), &[0, 1, 2], q).unwrap().value;
            let b = chi_hat(&sample(&mapped), &[0, 1, 2], q).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn exponent_measure_nonincreasing_in_each_coordinate(
            seed in 0u64..1000, j in 0usize..3, c in 1.0f64..5.0,
        ) {
            let s = sample(&uniform_cols(200, 3, seed));
            let z = [1.0, 1.5, 0.8];
            let mut z2 = z;
            z2[j] *= c;
            let a = empirical_exponent_measure(&s, &z, 20).unwrap();
            let b = empirical_exponent_measure(&s, &z2, 20).unwrap();
            prop_assert!(b <= a);
        }
    }
}
