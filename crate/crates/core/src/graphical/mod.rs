//! Extremal graphical models for Hüsler–Reiss and tree-structured Pareto
//! distributions: conditional independence from precision matrices, tree and
//! block-graph constructions, minimum spanning tree learning, censored
//! clique likelihoods and greedy block-graph search.

mod censored;
mod completion;
mod density;
mod graph;
mod learn;
mod precision;
mod search;

pub use censored::{
    censored_clique_loglik, fit_clique, fit_clique_data, fit_clique_path, loglik as clique_loglik, margin_loglik, CliqueData, CliqueFit,
    FIT_SEED, GAMMA_MAX, GAMMA_MIN, MAX_ITERATIONS as FIT_MAX_ITERATIONS, REL_TOL as FIT_REL_TOL,
};
pub use completion::{block_gamma, tree_gamma};
pub use density::{tree_density, EdgeDensity, TreeDensity};
pub use graph::{ExtremalGraph, GraphKind};
pub use learn::{chi_weights, mst_learn};
pub use precision::{anchored_precision, ci_pattern, hr_precision, CiPattern};
pub use search::{fit_graph, greedy_block_search, greedy_block_search_from, model_chi_matrix, FittedModel, Score, SearchOptions, SearchResult, SearchStep, TriangleTest};
