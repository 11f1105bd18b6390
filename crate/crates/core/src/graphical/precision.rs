use nalgebra::DMatrix;
use serde::Serialize;

use super::graph::ExtremalGraph;
use crate::error::{invalid, Error, Result};
use crate::models::husler_reiss::cholesky;
use crate::models::HuslerReissModel;

/// `K^(m) = (Σ^(m))^{-1}`, indexed over the variables other than `m`.
pub fn hr_precision(model: &HuslerReissModel, m: usize) -> Result<DMatrix<f64>> {
    let d = model.d();
    if m >= d {
        return Err(invalid("m", format!("anchor {m} out of range for d = {d}")));
    }
    let k = cholesky(&model.sigma(m), "Σ^(m)")?.inverse();
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("Σ^(m) is numerically singular".into()));
    }
    Ok(k)
}

/// `d x d` matrix whose `(i, j)` entry is `K^(m)_ij` when neither index is
/// `m` and `-Σ_{l≠m} K^(m)_il` when `j = m`. Its off-diagonal zeros are the
/// extremal conditional independences and do not depend on `m`.
pub fn anchored_precision(model: &HuslerReissModel, m: usize) -> Result<DMatrix<f64>> {
    let d = model.d();
    let k = hr_precision(model, m)?;
    let pos = |i: usize| if i < m { i } else { i - 1 };
    let row_sum = |i: usize| k.row(pos(i)).sum();
    Ok(DMatrix::from_fn(d, d, |i, j| match (i == m, j == m) {
        (false, false) => k[(pos(i), pos(j))],
        (false, true) => -row_sum(i),
        (true, false) => -row_sum(j),
        (true, true) => k.sum(),
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CiPattern {
    pub anchor: usize,
    pub cross_anchor: usize,
    /// Pairs `(i, j)`, `i < j`, with `Y_i ⊥_e Y_j | Y_rest` at `anchor`.
    pub non_edges: Vec<(usize, usize)>,
    /// Pairs classified differently under `cross_anchor`.
    pub mismatches: Vec<(usize, usize)>,
}

impl CiPattern {
    /// Complement of the non-edges.
    pub fn dependence_graph(&self, d: usize) -> Result<ExtremalGraph> {
        let edges = (0..d)
            .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
            .filter(|e| self.non_edges.binary_search(e).is_err());
        ExtremalGraph::new(d, edges)
    }
}

fn zero_pairs(theta: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let d = theta.nrows();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let scale = (theta[(i, i)] * theta[(j, j)]).abs().sqrt();
            if theta[(i, j)].abs() <= tol * scale {
                out.push((i, j));
            }
        }
    }
    out
}

/// Conditional independence pattern read off `K^(anchor)`: a pair is a
/// non-edge when its entry (or, for pairs containing the anchor, the
/// negated row sum) is within `tol` relative to the diagonal scale. The
/// classification is repeated with a second anchor and disagreements are
/// reported and logged.
pub fn ci_pattern(model: &HuslerReissModel, tol: f64, anchor: usize) -> Result<CiPattern> {
    if !(tol >= 0.0) {
        return Err(invalid("tol", format!("must be nonnegative, got {tol}")));
    }
    let d = model.d();
    let cross_anchor = if anchor == d - 1 { 0 } else { d - 1 };
    let non_edges = zero_pairs(&anchored_precision(model, anchor)?, tol);
    let other = zero_pairs(&anchored_precision(model, cross_anchor)?, tol);
    let mut mismatches: Vec<(usize, usize)> = non_edges
        .iter()
        .filter(|e| !other.contains(e))
        .chain(other.iter().filter(|e| !non_edges.contains(e)))
        .copied()
        .collect();
    mismatches.sort_unstable();
    if !mismatches.is_empty() {
        log::warn!(
            "conditional independence pattern differs between anchors {anchor} and {cross_anchor} on {} pairs; Σ^(m) may be ill-conditioned",
            mismatches.len()
        );
    }
    Ok(CiPattern {
        anchor,
        cross_anchor,
        non_edges,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::tree_gamma;
    use crate::rng;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand::Rng;

    fn chain() -> HuslerReissModel {
        HuslerReissModel::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0])).unwrap()
    }

    /// `Γ_ij = ‖u_i - u_j‖²` for random points in the plane or space.
    fn random_gamma(d: usize, seed: u64) -> DMatrix<f64> {
        let mut g = rng::stream(seed, 1);
        let pts: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| g.random::<f64>()).collect()).collect();
        DMatrix::from_fn(d, d, |i, j| pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum())
    }

    #[test]
    fn precision_examples() {
        let k = hr_precision(&HuslerReissModel::bivariate(0.7).unwrap(), 1).unwrap();
        assert!((k[(0, 0)] - 1.0 / 0.7).abs() < 1e-14);

        let m = chain();
        let k = hr_precision(&m, 0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        assert!((&k - &want).abs().max() < 1e-10);
        assert!((&k * m.sigma(0) - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        assert!(hr_precision(&m, 3).is_err());
    }

    #[test]
    fn chain_pattern() {
        let p = ci_pattern(&chain(), 1e-10, 0).unwrap();
        assert_eq!(p.non_edges, vec![(0, 2)]);
        assert!(p.mismatches.is_empty());
        assert_eq!(p.dependence_graph(3).unwrap().edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn dense_gamma_is_complete() {
        for seed in 0..10 {
            let m = HuslerReissModel::new(random_gamma(5, seed)).unwrap();
            let p = ci_pattern(&m, 1e-8, 0).unwrap();
            assert!(p.non_edges.is_empty(), "seed {seed}: {:?}", p.non_edges);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pattern_is_anchor_free(seed in 0u64..1_000, d in 3usize..7) {
            let m = HuslerReissModel::new(random_gamma(d, seed)).unwrap();
            let base = ci_pattern(&m, 1e-8, 0).unwrap().non_edges;
            for a in 1..d {
                prop_assert_eq!(&ci_pattern(&m, 1e-8, a).unwrap().non_edges, &base);
            }
        }

        #[test]
        fn tree_gamma_gives_tree_pattern(seed in 0u64..1_000, d in 3usize..8) {
            let mut g = rng::stream(seed, 2);
            let edges: Vec<(usize, usize)> = (1..d).map(|v| (g.random_range(0..v), v)).collect();
            let tree = ExtremalGraph::new(d, edges).unwrap();
            let w: Vec<f64> = (1..d).map(|_| g.random_range(0.2..3.0)).collect();
            let m = HuslerReissModel::new(tree_gamma(&tree, &w).unwrap()).unwrap();
            for a in 0..d {
                let p = ci_pattern(&m, 1e-8, a).unwrap();
                prop_assert!(p.mismatches.is_empty());
                let dep = p.dependence_graph(d).unwrap();
                prop_assert_eq!(dep.edges(), tree.edges());
            }
        }
    }
}
