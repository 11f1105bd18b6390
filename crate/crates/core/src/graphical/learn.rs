use nalgebra::DMatrix;

use super::graph::ExtremalGraph;
use crate::coefficients::chi_matrix;
use crate::error::{invalid, Error, Result};
use crate::ingest::StandardizedSample;

/// Minimum spanning tree by Kruskal's algorithm. Ties are broken by the
/// lexicographic order of `(i, j)`, `i < j`; `+∞` marks a forbidden edge.
pub fn mst_learn(weights: &DMatrix<f64>) -> Result<ExtremalGraph> {
    let d = weights.nrows();
    if weights.ncols() != d || d < 2 {
        return Err(invalid("weights", format!("shape {}x{}", d, weights.ncols())));
    }
    let mut cand = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        if weights[(i, i)] != 0.0 {
            return Err(invalid("weights", format!("diagonal entry {i} is {}", weights[(i, i)])));
        }
        for j in i + 1..d {
            let w = weights[(i, j)];
            if w != weights[(j, i)] && !(w.is_nan() && weights[(j, i)].is_nan()) {
                return Err(invalid("weights", format!("not symmetric at ({i}, {j})")));
            }
            if w.is_nan() || w == f64::NEG_INFINITY {
                return Err(invalid("weights", format!("entry ({i}, {j}) = {w}")));
            }
            if w < f64::INFINITY {
                cand.push((w, i, j));
            }
        }
    }
    // stable sort keeps the lexicographic order among equal weights
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut edges = Vec::with_capacity(d - 1);
    for (_, i, j) in cand {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            edges.push((i, j));
            if edges.len() == d - 1 {
                break;
            }
        }
    }
    if edges.len() < d - 1 {
        return Err(Error::Graph(format!(
            "graph of allowed edges is disconnected ({} of {} tree edges found)",
            edges.len(),
            d - 1
        )));
    }
    ExtremalGraph::new(d, edges)
}

/// Edge weights `-log χ̂_ij` at level `q`; pairs with `χ̂ = 0` get `+∞`.
pub fn chi_weights(sample: &StandardizedSample, q: f64) -> Result<DMatrix<f64>> {
    let chi = chi_matrix(sample, q)?;
    Ok(chi.map(|c| if c > 0.0 { -c.ln() } else { f64::INFINITY }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::GraphKind;
    use crate::rng;
    use proptest::prelude::{prop_assert_eq, proptest, ProptestConfig};
    use rand::Rng;

    fn from_chi(c12: f64, c23: f64, c13: f64) -> DMatrix<f64> {
        let chi = DMatrix::from_row_slice(3, 3, &[1.0, c12, c13, c12, 1.0, c23, c13, c23, 1.0]);
        chi.map(|c| -c.ln())
    }

    /// Brute force over all labelled trees via Prüfer sequences.
    fn brute_force(w: &DMatrix<f64>) -> Vec<(usize, usize)> {
        let d = w.nrows();
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        let total = d.pow((d - 2) as u32);
        for code in 0..total {
            let mut seq = Vec::new();
            let mut c = code;
            for _ in 0..d - 2 {
                seq.push(c % d);
                c /= d;
            }
            let mut degree = vec![1; d];
            for &s in &seq {
                degree[s] += 1;
            }
            let mut edges = Vec::new();
            for &s in &seq {
                let leaf = (0..d).find(|&v| degree[v] == 1).unwrap();
                edges.push((leaf.min(s), leaf.max(s)));
                degree[leaf] -= 1;
                degree[s] -= 1;
            }
            let rest: Vec<usize> = (0..d).filter(|&v| degree[v] == 1).collect();
            edges.push((rest[0], rest[1]));
            edges.sort_unstable();
            let cost: f64 = edges.iter().map(|&(i, j)| w[(i, j)]).sum();
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, edges));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn three_variable_example() {
        let w = from_chi(0.5, 0.4, 0.2);
        let t = mst_learn(&w).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(t.kind(), GraphKind::Tree);
        assert_eq!(brute_force(&w), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn ties_and_forbidden_edges() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(mst_learn(&w).unwrap().edges(), &[(0, 1), (0, 2)]);
        let inf = f64::INFINITY;
        let w = DMatrix::from_row_slice(3, 3, &[0.0, inf, 1.0, inf, 0.0, inf, 1.0, inf, 0.0]);
        assert!(matches!(mst_learn(&w), Err(Error::Graph(_))));
        let w = DMatrix::from_row_slice(2, 2, &[0.0, f64::NAN, f64::NAN, 0.0]);
        assert!(mst_learn(&w).is_err());
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(mst_learn(&w).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force_and_is_order_invariant(seed in 0u64..10_000, d in 3usize..7) {
            let mut g = rng::stream(seed, 0);
            let mut w = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in i + 1..d {
                    let v: f64 = g.random_range(0.01..5.0);
                    w[(i, j)] = v;
                    w[(j, i)] = v;
                }
            }
            let t = mst_learn(&w).unwrap();
            let bf = brute_force(&w);
            prop_assert_eq!(t.edges(), bf.as_slice());
            // strictly increasing transformations keep the tree
            let t2 = mst_learn(&w.map(|v| v.powi(3) + (v + 1.0).ln())).unwrap();
            prop_assert_eq!(t2.edges(), t.edges());
            let t3 = mst_learn(&w.map(|v| if v == 0.0 { 0.0 } else { 7.0 - (-v).exp() })).unwrap();
            prop_assert_eq!(t3.edges(), t.edges());
        }
    }
}
