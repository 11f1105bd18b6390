use std::collections::HashMap;

use nalgebra::DMatrix;

use super::graph::{ExtremalGraph, GraphKind};
use crate::error::{invalid, Error, Result};

/// Path-sum completion: `Γ_kl` is the sum of `weight(i, j)` over the edges
/// of the shortest path between `k` and `l`.
fn complete(graph: &ExtremalGraph, weight: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let d = graph.d();
    let mut gamma = DMatrix::zeros(d, d);
    for k in 0..d {
        let parent = graph.bfs_parents(k);
        // BFS order guarantees parents are filled first when walking by distance
        let mut order: Vec<usize> = (0..d).collect();
        let depth = |mut v: usize| {
            let mut n = 0;
            while let Some(p) = parent[v] {
                v = p;
                n += 1;
            }
            n
        };
        order.sort_by_key(|&v| depth(v));
        for v in order {
            if let Some(p) = parent[v] {
                gamma[(k, v)] = gamma[(k, p)] + weight(p, v);
            }
        }
    }
    gamma
}

/// Full variogram of a tree model from its edge values (in the order of
/// `tree.edges()`), summing along the unique path between each pair.
pub fn tree_gamma(tree: &ExtremalGraph, edge_gammas: &[f64]) -> Result<DMatrix<f64>> {
    if tree.kind() != GraphKind::Tree {
        return Err(Error::Graph("tree_gamma needs a connected tree".into()));
    }
    if edge_gammas.len() != tree.edges().len() {
        return Err(invalid(
            "edge_gammas",
            format!("{} values for {} edges", edge_gammas.len(), tree.edges().len()),
        ));
    }
    if let Some(v) = edge_gammas.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(invalid("edge_gammas", format!("entries must be positive and finite, got {v}")));
    }
    let w: HashMap<(usize, usize), f64> = tree.edges().iter().copied().zip(edge_gammas.iter().copied()).collect();
    Ok(complete(tree, |a, b| w[&(a.min(b), a.max(b))]))
}

/// Completion on a block graph from one variogram block per clique (in the
/// order of `graph.cliques()`): entries inside a clique are copied, all
/// others are sums along the path through the separating vertices.
pub fn block_gamma(graph: &ExtremalGraph, clique_blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if graph.kind() == GraphKind::General {
        return Err(Error::Graph("block_gamma needs a connected block graph".into()));
    }
    if clique_blocks.len() != graph.cliques().len() {
        return Err(invalid(
            "clique_blocks",
            format!("{} blocks for {} cliques", clique_blocks.len(), graph.cliques().len()),
        ));
    }
    let mut w = HashMap::new();
    for (c, b) in graph.cliques().iter().zip(clique_blocks) {
        if b.nrows() != c.len() || b.ncols() != c.len() {
            return Err(invalid("clique_blocks", format!("block for {c:?} has shape {}x{}", b.nrows(), b.ncols())));
        }
        for (x, &i) in c.iter().enumerate() {
            for (y, &j) in c.iter().enumerate().skip(x + 1) {
                let v = b[(x, y)];
                if !(v > 0.0 && v.is_finite()) || (v - b[(y, x)]).abs() > 1e-12 * v {
                    return Err(invalid("clique_blocks", format!("entry for ({i}, {j}) is {v}")));
                }
                w.insert((i, j), v);
            }
        }
    }
    Ok(complete(graph, |a, b| w[&(a.min(b), a.max(b))]))
}
