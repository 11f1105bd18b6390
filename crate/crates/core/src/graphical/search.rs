use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::censored::{fit_clique_data, fit_clique_path, margin_loglik, CliqueData, CliqueFit};
use super::completion::block_gamma;
use super::graph::ExtremalGraph;
use super::learn::{chi_weights, mst_learn};
use crate::error::{invalid, Error, Result};
use crate::ingest::StandardizedSample;
use crate::matrix_serde;
use crate::models::{chi_oracle_hr, HuslerReissModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    #[default]
    Aic,
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_clique: usize,
    pub score: Score,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_clique: 3,
            score: Score::Aic,
        }
    }
}

/// Comparison of a fitted triangle with its best tree sub-model on the same
/// observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleTest {
    pub clique: Vec<usize>,
    /// Edge with the largest fitted `Γ`, replaced by the path through the
    /// third vertex in the sub-model.
    pub dropped: (usize, usize),
    pub restricted_loglik: f64,
    /// `max(loglik_triangle - loglik_restricted, 0)`.
    pub gain: f64,
}

/// Hüsler–Reiss model on a block graph, fitted clique by clique.
///
/// `loglik` is the censored log-likelihood of the spanning tree obtained by
/// dropping the weakest edge of every triangle (pair cliques minus one
/// standard Pareto margin term per separator), plus, for every triangle, the
/// likelihood-ratio gain of the triangle over that tree on the triangle's
/// own observations. On trees it equals `composite_loglik`, the plain sum
/// over cliques minus separators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub graph: ExtremalGraph,
    #[serde(with = "matrix_serde::rows")]
    pub gamma: DMatrix<f64>,
    pub clique_params: Vec<CliqueFit>,
    pub triangle_tests: Vec<TriangleTest>,
    pub loglik: f64,
    pub composite_loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    /// Rows with at least one coordinate above the threshold.
    pub n_obs: usize,
}

impl FittedModel {
    pub fn score(&self, s: Score) -> f64 {
        match s {
            Score::Aic => self.aic,
            Score::Bic => self.bic,
        }
    }

    pub fn model(&self) -> Result<HuslerReissModel> {
        HuslerReissModel::new(self.gamma.clone())
    }
}

#[derive(Debug, Clone)]
struct CliqueEntry {
    fit: CliqueFit,
    test: Option<TriangleTest>,
}

type CliqueCache = BTreeMap<Vec<usize>, CliqueEntry>;

fn fit_entry(pareto: &DMatrix<f64>, threshold: f64, c: &[usize]) -> Result<CliqueEntry> {
    let data = CliqueData::new(pareto, c, threshold)?;
    let mut fit = fit_clique_data(&data, None)?;
    if c.len() == 2 {
        return Ok(CliqueEntry { fit, test: None });
    }
    let g = &fit.gamma_block;
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let (a, b) = pairs
        .into_iter()
        .reduce(|x, y| if g[y] > g[x] { y } else { x })
        .expect("three pairs");
    let middle = 3 - a - b;
    let restricted = fit_clique_path(&data, middle, Some(g))?;
    if restricted.loglik > fit.loglik {
        // the sub-model is nested: restart the full fit from its optimum
        if let Ok(again) = fit_clique_data(&data, Some(&restricted.gamma_block)) {
            if again.loglik > fit.loglik {
                fit = again;
            }
        }
    }
    let test = TriangleTest {
        clique: c.to_vec(),
        dropped: (c[a], c[b]),
        restricted_loglik: restricted.loglik,
        gain: (fit.loglik - restricted.loglik).max(0.0),
    };
    Ok(CliqueEntry { fit, test: Some(test) })
}

fn fit_missing(pareto: &DMatrix<f64>, threshold: f64, cliques: &[Vec<usize>], cache: &mut CliqueCache) -> Result<()> {
    let mut todo: Vec<Vec<usize>> = cliques.iter().filter(|c| !cache.contains_key(*c)).cloned().collect();
    todo.sort();
    todo.dedup();
    let fits: Vec<CliqueEntry> = todo
        .par_iter()
        .map(|c| fit_entry(pareto, threshold, c))
        .collect::<Result<_>>()?;
    for f in fits {
        cache.insert(f.fit.clique.clone(), f);
    }
    // pair cliques of the spanning trees behind the triangles
    let pairs: Vec<Vec<usize>> = cliques.iter().filter_map(|c| cache[c].test.as_ref()).flat_map(kept_edges).collect();
    if pairs.iter().any(|p| !cache.contains_key(p)) {
        fit_missing(pareto, threshold, &pairs, cache)?;
    }
    Ok(())
}

fn kept_edges(t: &TriangleTest) -> Vec<Vec<usize>> {
    let c = &t.clique;
    (0..3)
        .flat_map(|i| (i + 1..3).map(move |j| vec![c[i], c[j]]))
        .filter(|e| (e[0], e[1]) != t.dropped)
        .collect()
}

fn assemble(pareto: &DMatrix<f64>, threshold: f64, graph: &ExtremalGraph, cache: &CliqueCache) -> Result<FittedModel> {
    graph.validate_block(3)?;
    let entries: Vec<&CliqueEntry> = graph.cliques().iter().map(|c| &cache[c]).collect();
    let fits: Vec<CliqueFit> = entries.iter().map(|e| e.fit.clone()).collect();
    let blocks: Vec<DMatrix<f64>> = fits.iter().map(|f| f.gamma_block.clone()).collect();
    let gamma = block_gamma(graph, &blocks)?;
    let n_params: usize = fits.iter().map(|f| f.clique.len() * (f.clique.len() - 1) / 2).sum();
    if n_params != graph.edges().len() {
        return Err(Error::Graph(format!(
            "parameter count {n_params} differs from the edge count {}",
            graph.edges().len()
        )));
    }
    let margin: Vec<f64> = (0..graph.d()).map(|v| margin_loglik(pareto, v, threshold)).collect();
    let composite_loglik =
        fits.iter().map(|f| f.loglik).sum::<f64>() - graph.separators().iter().map(|s| margin[s[0]]).sum::<f64>();

    let triangle_tests: Vec<TriangleTest> = entries.iter().filter_map(|e| e.test.clone()).collect();
    let mut tree_edges: Vec<Vec<usize>> = graph.cliques().iter().filter(|c| c.len() == 2).cloned().collect();
    tree_edges.extend(triangle_tests.iter().flat_map(kept_edges));
    let mut degree = vec![0usize; graph.d()];
    for e in &tree_edges {
        degree[e[0]] += 1;
        degree[e[1]] += 1;
    }
    let loglik = tree_edges.iter().map(|e| cache[e].fit.loglik).sum::<f64>()
        - (0..graph.d()).map(|v| degree[v].saturating_sub(1) as f64 * margin[v]).sum::<f64>()
        + triangle_tests.iter().map(|t| t.gain).sum::<f64>();

    let n_obs = (0..pareto.nrows())
        .filter(|&r| pareto.row(r).iter().any(|&x| x > threshold))
        .count();
    Ok(FittedModel {
        graph: graph.clone(),
        gamma,
        clique_params: fits,
        triangle_tests,
        loglik,
        composite_loglik,
        n_params,
        aic: 2.0 * n_params as f64 - 2.0 * loglik,
        bic: (n_obs.max(1) as f64).ln() * n_params as f64 - 2.0 * loglik,
        n_obs,
    })
}

/// Fits every clique of a block graph (cliques of size 2 or 3) at the
/// Pareto-scale `threshold` and completes `Γ` along separator paths.
pub fn fit_graph(pareto: &DMatrix<f64>, threshold: f64, graph: &ExtremalGraph) -> Result<FittedModel> {
    graph.validate_block(3)?;
    let mut cache = CliqueCache::new();
    fit_missing(pareto, threshold, graph.cliques(), &mut cache)?;
    assemble(pareto, threshold, graph, &cache)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchStep {
    /// Edge added at this step; `None` for the starting tree.
    pub added: Option<(usize, usize)>,
    pub model: FittedModel,
    /// Admissible edges that were scored at this step.
    pub candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub path: Vec<SearchStep>,
    /// Index into `path` of the model with the smallest score.
    pub best: usize,
    pub options: SearchOptions,
}

impl SearchResult {
    pub fn best_model(&self) -> &FittedModel {
        &self.path[self.best].model
    }

    pub fn added_edges(&self) -> usize {
        self.best
    }
}

/// Greedy forward selection over block graphs.
///
/// Starts from the minimum spanning tree of `-log χ̂` at level `q`, with
/// censoring threshold `1 / (1 - q)` on the Pareto scale. Each step scores
/// every edge whose addition keeps a block graph with cliques of at most
/// `max_clique` vertices, refitting only the new clique, and adds the best
/// one (ties go to the lexicographically smallest edge) while the score
/// improves.
pub fn greedy_block_search(sample: &StandardizedSample, q: f64, options: SearchOptions) -> Result<SearchResult> {
    let tree = mst_learn(&chi_weights(sample, q)?)?;
    greedy_block_search_from(sample.pareto(), 1.0 / (1.0 - q), tree, options)
}

/// [`greedy_block_search`] from a given starting tree.
pub fn greedy_block_search_from(
    pareto: &DMatrix<f64>,
    threshold: f64,
    start: ExtremalGraph,
    options: SearchOptions,
) -> Result<SearchResult> {
    if !(2..=3).contains(&options.max_clique) {
        return Err(invalid("max_clique", format!("must be 2 or 3, got {}", options.max_clique)));
    }
    start.validate_block(options.max_clique)?;
    let d = start.d();
    let mut cache = CliqueCache::new();
    fit_missing(pareto, threshold, start.cliques(), &mut cache)?;
    let first = assemble(pareto, threshold, &start, &cache)?;
    let mut path = vec![SearchStep {
        added: None,
        model: first,
        candidates: 0,
    }];
    loop {
        let current = &path.last().expect("non-empty").model;
        let graph = current.graph.clone();
        let mut candidates = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if graph.has_edge(i, j) {
                    continue;
                }
                let g = graph.with_edge(i, j)?;
                if g.validate_block(options.max_clique).is_ok() {
                    candidates.push(((i, j), g));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let needed: Vec<Vec<usize>> = candidates.iter().flat_map(|(_, g)| g.cliques().to_vec()).collect();
        fit_missing(pareto, threshold, &needed, &mut cache)?;
        let scored: Vec<((usize, usize), FittedModel)> = candidates
            .par_iter()
            .map(|(e, g)| assemble(pareto, threshold, g, &cache).map(|m| (*e, m)))
            .collect::<Result<_>>()?;
        let n_cand = scored.len();
        // candidates are in lexicographic order, so the first minimum wins ties
        let (edge, model) = scored
            .into_iter()
            .reduce(|a, b| if b.1.score(options.score) < a.1.score(options.score) { b } else { a })
            .expect("non-empty");
        if model.score(options.score) >= current.score(options.score) {
            path.last_mut().expect("non-empty").candidates = n_cand;
            break;
        }
        model.graph.validate_block(options.max_clique)?;
        path.last_mut().expect("non-empty").candidates = n_cand;
        path.push(SearchStep {
            added: Some(edge),
            model,
            candidates: 0,
        });
    }
    let best = (0..path.len())
        .min_by(|&a, &b| path[a].model.score(options.score).total_cmp(&path[b].model.score(options.score)))
        .expect("non-empty");
    Ok(SearchResult { path, best, options })
}

/// Pairwise `χ_ij = 2 - 2Φ(√Γ_ij / 2)` implied by the fitted variogram.
pub fn model_chi_matrix(fitted: &FittedModel) -> Result<DMatrix<f64>> {
    gamma_chi_matrix(&fitted.gamma)
}

pub(crate) fn gamma_chi_matrix(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = gamma.nrows();
    let mut chi = DMatrix::from_element(d, d, 1.0);
    for i in 0..d {
        for j in i + 1..d {
            let c = chi_oracle_hr(gamma[(i, j)])?;
            chi[(i, j)] = c;
            chi[(j, i)] = c;
        }
    }
    Ok(chi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::tree_gamma;

    #[test]
    fn chi_declines_with_distance() {
        let chain = ExtremalGraph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let g = tree_gamma(&chain, &[1.0, 1.0, 1.0]).unwrap();
        let chi = gamma_chi_matrix(&g).unwrap();
        assert!(chi[(0, 1)] > chi[(0, 2)] && chi[(0, 2)] > chi[(0, 3)]);
        assert!((chi[(0, 1)] - chi_oracle_hr(1.0).unwrap()).abs() < 1e-15);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(gamma_chi_matrix(&zero).unwrap()[(0, 1)], 1.0);
    }
}
