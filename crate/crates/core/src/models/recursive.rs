use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::maxlinear::MaxLinearModel;
use crate::error::{invalid, Error, Result};
use crate::ingest::ObservationMatrix;
use crate::rng;

/// Directed edge `from → to` with coefficient `β_{to,from}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub beta: f64,
}

/// `Z_i = max(max_{j∈pa(i)} β_ij Z_j, β_ii ε_i)` on a DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecursiveRaw", into = "RecursiveRaw")]
pub struct RecursiveMLModel {
    diag: Vec<f64>,
    edges: Vec<Edge>,
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RecursiveRaw {
    diag: Vec<f64>,
    edges: Vec<Edge>,
}

impl TryFrom<RecursiveRaw> for RecursiveMLModel {
    type Error = Error;
    fn try_from(r: RecursiveRaw) -> Result<Self> {
        RecursiveMLModel::new(r.diag, r.edges)
    }
}

impl From<RecursiveMLModel> for RecursiveRaw {
    fn from(m: RecursiveMLModel) -> Self {
        RecursiveRaw {
            diag: m.diag,
            edges: m.edges,
        }
    }
}

impl RecursiveMLModel {
    /// `diag[i] = β_ii`. Rejects cycles, self-loops, repeated edges and
    /// non-positive coefficients.
    pub fn new(diag: Vec<f64>, edges: Vec<Edge>) -> Result<Self> {
        let d = diag.len();
        if d < 2 {
            return Err(invalid("diag", "need at least two variables"));
        }
        if diag.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(invalid("diag", "every β_ii must be positive"));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.from >= d || e.to >= d {
                return Err(Error::Graph(format!("edge {}→{} outside 0..{d}", e.from, e.to)));
            }
            if e.from == e.to {
                return Err(Error::Graph(format!("self-loop at {}", e.from)));
            }
            if !(e.beta > 0.0 && e.beta.is_finite()) {
                return Err(invalid("beta", format!("edge {}→{} has β = {}", e.from, e.to, e.beta)));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::Graph(format!("edge {}→{} repeated", e.from, e.to)));
            }
        }
        // Kahn's algorithm, smallest ready vertex first
        let mut indeg = vec![0usize; d];
        edges.iter().for_each(|e| indeg[e.to] += 1);
        let mut ready: BTreeSet<usize> = (0..d).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for e in edges.iter().filter(|e| e.from == v) {
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    ready.insert(e.to);
                }
            }
        }
        if order.len() < d {
            return Err(Error::Graph("the directed graph has a cycle".into()));
        }
        Ok(RecursiveMLModel { diag, edges, order })
    }

    pub fn d(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    fn parents(&self, i: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.to == i)
    }

    /// Coefficients before row normalization: the maximum over directed paths
    /// `j ⇝ i` of `β_jj` times the edge coefficients along the path.
    pub fn path_coefficients(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut a = DMatrix::zeros(d, d);
        for &i in &self.order {
            a[(i, i)] = self.diag[i];
            for e in self.parents(i) {
                for j in 0..d {
                    a[(i, j)] = f64::max(a[(i, j)], e.beta * a[(e.from, j)]);
                }
            }
        }
        a
    }
}

/// Evaluates the recursion in topological order with standard Fréchet noise.
pub fn simulate_recursive_ml(model: &RecursiveMLModel, n: usize, seed: u64) -> Result<ObservationMatrix> {
    let d = model.d();
    let parents: Vec<Vec<Edge>> = (0..d).map(|i| model.parents(i).copied().collect()).collect();
    let values = super::simulate_rows(n, d, seed, |g, row| {
        let eps: Vec<f64> = (0..d).map(|_| rng::frechet(g)).collect();
        for &i in &model.order {
            let mut z = model.diag[i] * eps[i];
            for e in &parents[i] {
                z = z.max(e.beta * row[e.from]);
            }
            row[i] = z;
        }
        Ok(())
    })?;
    ObservationMatrix::with_default_labels(values)
}

/// The equivalent max-linear model with `d` factors. Rows are rescaled to
/// unit sums, which changes only the marginal scales.
pub fn recursive_to_max_linear(model: &RecursiveMLModel) -> Result<MaxLinearModel> {
    MaxLinearModel::normalized(model.path_coefficients())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::chi_hat;
    use crate::ingest::rank_transform;
    use crate::stats::ks_test;

    fn edge(from: usize, to: usize, beta: f64) -> Edge {
        Edge { from, to, beta }
    }

    #[test]
    fn construction_checks() {
        assert!(RecursiveMLModel::new(vec![1.0, 1.0], vec![edge(0, 1, 1.0), edge(1, 0, 1.0)]).is_err());
        assert!(RecursiveMLModel::new(vec![1.0, 1.0], vec![edge(0, 0, 1.0)]).is_err());
        assert!(RecursiveMLModel::new(vec![1.0, 0.0], vec![]).is_err());
        assert!(RecursiveMLModel::new(vec![1.0, 1.0], vec![edge(0, 1, 1.0), edge(0, 1, 2.0)]).is_err());
        let m = RecursiveMLModel::new(vec![1.0; 3], vec![edge(2, 0, 1.0), edge(0, 1, 1.0)]).unwrap();
        assert_eq!(m.topological_order(), &[2, 0, 1]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<RecursiveMLModel>(&json).unwrap(), m);
    }

    #[test]
    fn empty_dag_is_identity() {
        let m = RecursiveMLModel::new(vec![2.0, 0.5, 3.0], vec![]).unwrap();
        assert_eq!(recursive_to_max_linear(&m).unwrap().a(), &DMatrix::identity(3, 3));
        let z = simulate_recursive_ml(&m, 10_000, 4).unwrap();
        for (j, &b) in m.diag().iter().enumerate() {
            let col: Vec<f64> = z.values().column(j).iter().copied().collect();
            let (_, p) = ks_test(&col, |x| if x > 0.0 { (-b / x).exp() } else { 0.0 });
            assert!(p > 0.01);
        }
    }

    #[test]
    fn chain_unrolls_once() {
        let (b11, b22, b21) = (0.7, 0.4, 1.9);
        let m = RecursiveMLModel::new(vec![b11, b22], vec![edge(0, 1, b21)]).unwrap();
        let a = m.path_coefficients();
        assert_eq!(a[(1, 0)], b21 * b11);
        assert_eq!(a[(1, 1)], b22);
        assert_eq!(a[(0, 1)], 0.0);
    }

    #[test]
    fn longest_product_path_wins() {
        // 0→1→2 and 0→2 directly; the two-step path has the larger product
        let m = RecursiveMLModel::new(
            vec![1.0; 3],
            vec![edge(0, 1, 2.0), edge(1, 2, 3.0), edge(0, 2, 1.5)],
        )
        .unwrap();
        assert_eq!(m.path_coefficients()[(2, 0)], 6.0);
    }

    #[test]
    fn strong_edge_gives_strong_dependence() {
        let m = RecursiveMLModel::new(vec![1.0, 1.0], vec![edge(0, 1, 20.0)]).unwrap();
        let s = rank_transform(&simulate_recursive_ml(&m, 50_000, 2).unwrap());
        assert!(chi_hat(&s, &[0, 1], 0.98).unwrap().value > 0.9);
    }
}
