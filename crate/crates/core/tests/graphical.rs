use nalgebra::DMatrix;

use extremal_core::graphical::{
    block_gamma, censored_clique_loglik, fit_clique, fit_graph, greedy_block_search, model_chi_matrix, tree_gamma, EdgeDensity,
    ExtremalGraph, GraphKind, SearchOptions, TreeDensity,
};
use extremal_core::ingest::{rank_transform, ObservationMatrix, StandardizedSample};
use extremal_core::models::{chi_oracle_hr, simulate_hr_pareto, HuslerReissModel};

const Q: f64 = 0.95;

fn threshold() -> f64 {
    1.0 / (1.0 - Q)
}

fn sample(model: &HuslerReissModel, n: usize, seed: u64) -> StandardizedSample {
    rank_transform(&ObservationMatrix::with_default_labels(simulate_hr_pareto(model, n, seed).unwrap()).unwrap())
}

#[test]
fn bivariate_fit_and_profile() {
    let s = sample(&HuslerReissModel::bivariate(1.0).unwrap(), 10_000, 31);
    let fit = fit_clique(s.pareto(), &[0, 1], threshold(), None).unwrap();
    let g = fit.gamma_block[(0, 1)];
    assert!((0.8..=1.2).contains(&g), "Γ̂ = {g}");
    assert!(fit.converged && !fit.at_bound);

    let grid: Vec<f64> = (0..=56).map(|i| 0.2 + 0.05 * i as f64).collect();
    let ll: Vec<f64> = grid
        .iter()
        .map(|&v| censored_clique_loglik(s.pareto(), &[0, 1], &DMatrix::from_row_slice(2, 2, &[0.0, v, v, 0.0]), threshold()).unwrap())
        .collect();
    let arg = grid[(0..grid.len()).max_by(|&a, &b| ll[a].total_cmp(&ll[b])).unwrap()];
    assert!((arg - 1.0).abs() <= 0.2, "profile argmax {arg}");
    assert!(fit.loglik >= ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 1e-6);
}

#[test]
fn fitted_model_invariants() {
    let graph = ExtremalGraph::new(5, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]).unwrap();
    let tri = DMatrix::from_row_slice(3, 3, &[0.0, 0.8, 1.0, 0.8, 0.0, 1.2, 1.0, 1.2, 0.0]);
    let pair = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let truth = block_gamma(&graph, &[tri, pair.clone(), pair]).unwrap();
    let s = sample(&HuslerReissModel::new(truth).unwrap(), 10_000, 32);
    let m = fit_graph(s.pareto(), threshold(), &graph).unwrap();

    assert_eq!(m.graph.kind(), GraphKind::Block);
    assert!((m.aic - (2.0 * m.n_params as f64 - 2.0 * m.loglik)).abs() < 1e-9);
    // independent parameter count: free variogram entries per clique
    let count: usize = graph.cliques().iter().map(|c| c.len() * (c.len() - 1) / 2).sum();
    assert_eq!(m.n_params, count);
    assert_eq!(m.n_params, 5);
    for f in &m.clique_params {
        for (a, &i) in f.clique.iter().enumerate() {
            for (b, &j) in f.clique.iter().enumerate() {
                assert_eq!(m.gamma[(i, j)], f.gamma_block[(a, b)]);
            }
        }
    }
    // completion through separators
    assert!((m.gamma[(0, 4)] - (m.gamma[(0, 2)] + m.gamma[(2, 3)] + m.gamma[(3, 4)])).abs() < 1e-12);
    m.model().unwrap();
    assert_eq!(m.triangle_tests.len(), 1);

    let chi = model_chi_matrix(&m).unwrap();
    for i in 0..5 {
        assert_eq!(chi[(i, i)], 1.0);
        for j in 0..5 {
            if i != j {
                assert!((chi[(i, j)] - chi_oracle_hr(m.gamma[(i, j)]).unwrap()).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn tree_fit_is_path_sum() {
    let tree = ExtremalGraph::new(4, [(0, 1), (1, 2), (1, 3)]).unwrap();
    let s = sample(&HuslerReissModel::new(tree_gamma(&tree, &[1.0, 0.5, 2.0]).unwrap()).unwrap(), 10_000, 33);
    let m = fit_graph(s.pareto(), threshold(), &tree).unwrap();
    let edges: Vec<f64> = tree.edges().iter().map(|&(i, j)| m.gamma[(i, j)]).collect();
    assert_eq!(m.gamma, tree_gamma(&tree, &edges).unwrap());
    assert_eq!(m.loglik, m.composite_loglik);
    for (e, want) in edges.iter().zip([1.0, 0.5, 2.0]) {
        assert!((e - want).abs() < 0.25 * want, "{edges:?}");
    }
}

#[test]
fn greedy_search_finds_planted_triangle() {
    let graph = ExtremalGraph::new(5, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]).unwrap();
    let tri = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
    let pair = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let truth = block_gamma(&graph, &[tri, pair.clone(), pair]).unwrap();
    let s = sample(&HuslerReissModel::new(truth).unwrap(), 10_000, 34);
    let r = greedy_block_search(&s, Q, SearchOptions::default()).unwrap();

    assert!(r.path[0].added.is_none());
    assert_eq!(r.path[0].model.graph.kind(), GraphKind::Tree);
    for (step, next) in r.path.iter().zip(r.path.iter().skip(1)) {
        assert!(next.model.aic < step.model.aic);
        assert_eq!(next.model.n_params, step.model.n_params + 1);
    }
    let best = r.best_model();
    let min = r.path.iter().map(|p| p.model.aic).fold(f64::INFINITY, f64::min);
    assert_eq!(best.aic, min);
    assert_eq!(best.graph, graph);
    best.graph.validate_block(3).unwrap();

    let json = serde_json::to_string(&r).unwrap();
    let back: extremal_core::graphical::SearchResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back.best, r.best);
}

#[test]
fn max_clique_two_keeps_the_tree() {
    let tree = ExtremalGraph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
    let s = sample(&HuslerReissModel::new(tree_gamma(&tree, &[1.0; 3]).unwrap()).unwrap(), 5_000, 35);
    let r = greedy_block_search(&s, Q, SearchOptions { max_clique: 2, ..Default::default() }).unwrap();
    assert_eq!(r.path.len(), 1);
    assert!(greedy_block_search(&s, Q, SearchOptions { max_clique: 4, ..Default::default() }).is_err());
}

#[test]
fn lattice_normalizer_for_larger_trees() {
    // for HR edges the normalizer is the closed-form Λ of the path-sum model
    let tree = ExtremalGraph::new(5, [(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
    let w = [0.5, 1.0, 1.5, 0.8];
    let edges: Vec<EdgeDensity> = w.iter().map(|&gamma| EdgeDensity::HuslerReiss { gamma }).collect();
    let td = TreeDensity::new(&tree, &edges).unwrap();
    let want = HuslerReissModel::new(tree_gamma(&tree, &w).unwrap()).unwrap().exponent_measure_unit().unwrap();
    let got = td.normalizer();
    assert!(got.error < 1e-4 * got.value, "{got:?}");
    assert!((got.value - want.value).abs() <= 3.0 * (got.error + want.error) + 1e-3, "{got:?} vs {want:?}");
}
