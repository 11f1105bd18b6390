use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Tree,
    Block,
    General,
}

/// Undirected graph on `0..d` with its block decomposition.
///
/// `cliques` are the biconnected components (the cliques of the junction
/// tree when the graph is a block graph) and `separators` holds one `{v}` for
/// every junction between two blocks, so a cut vertex shared by `b` blocks
/// appears `b - 1` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRaw")]
pub struct ExtremalGraph {
    d: usize,
    edges: Vec<(usize, usize)>,
    kind: GraphKind,
    cliques: Vec<Vec<usize>>,
    separators: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct GraphRaw {
    d: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphRaw> for ExtremalGraph {
    type Error = Error;
    fn try_from(r: GraphRaw) -> Result<Self> {
        ExtremalGraph::new(r.d, r.edges)
    }
}

impl ExtremalGraph {
    pub fn new(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if d < 2 {
            return Err(Error::Graph(format!("need at least two vertices, got {d}")));
        }
        let mut es = Vec::new();
        for (a, b) in edges {
            if a == b || a >= d || b >= d {
                return Err(Error::Graph(format!("invalid edge ({a}, {b}) for d = {d}")));
            }
            es.push((a.min(b), a.max(b)));
        }
        es.sort_unstable();
        es.dedup();
        let adj = adjacency(d, &es);
        let cliques = blocks(&adj);
        let connected = is_connected(&adj);
        let complete_blocks = cliques.iter().all(|c| {
            let inside = es.iter().filter(|(a, b)| c.contains(a) && c.contains(b)).count();
            inside == c.len() * (c.len() - 1) / 2
        });
        let kind = if connected && es.len() == d - 1 {
            GraphKind::Tree
        } else if connected && complete_blocks {
            GraphKind::Block
        } else {
            GraphKind::General
        };
        let mut separators = Vec::new();
        for v in 0..d {
            let b = cliques.iter().filter(|c| c.contains(&v)).count();
            for _ in 1..b {
                separators.push(vec![v]);
            }
        }
        Ok(ExtremalGraph {
            d,
            edges: es,
            kind,
            cliques,
            separators,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn separators(&self) -> &[Vec<usize>] {
        &self.separators
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn max_clique_size(&self) -> usize {
        self.cliques.iter().map(Vec::len).max().unwrap_or(1)
    }

    /// Errors unless the graph is a connected block graph (a tree counts)
    /// whose cliques have at most `max_clique` vertices.
    pub fn validate_block(&self, max_clique: usize) -> Result<()> {
        if self.kind == GraphKind::General {
            return Err(Error::Graph("not a connected block graph".into()));
        }
        if self.max_clique_size() > max_clique {
            return Err(Error::Graph(format!(
                "clique of size {} exceeds the limit {max_clique}",
                self.max_clique_size()
            )));
        }
        if self.separators.len() + 1 != self.cliques.len() || self.separators.iter().any(|s| s.len() != 1) {
            return Err(Error::Graph("separators are not singletons of a junction tree".into()));
        }
        Ok(())
    }

    /// The same graph with one more edge.
    pub fn with_edge(&self, i: usize, j: usize) -> Result<Self> {
        let mut es = self.edges.clone();
        es.push((i, j));
        Self::new(self.d, es)
    }

    /// Breadth-first parents from `root`, visiting neighbors in increasing
    /// order. On block graphs the geodesics are unique, so following the
    /// parents gives the unique shortest path.
    pub fn bfs_parents(&self, root: usize) -> Vec<Option<usize>> {
        let adj = adjacency(self.d, &self.edges);
        let mut parent = vec![None; self.d];
        let mut seen = vec![false; self.d];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    /// Vertices on the shortest path from `k` to `l`, both included.
    pub fn shortest_path(&self, k: usize, l: usize) -> Option<Vec<usize>> {
        let parent = self.bfs_parents(k);
        let mut path = vec![l];
        let mut v = l;
        while v != k {
            v = parent[v]?;
            path.push(v);
        }
        path.reverse();
        Some(path)
    }
}

fn adjacency(d: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); d];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for n in &mut adj {
        n.sort_unstable();
    }
    adj
}

fn is_connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Biconnected components (Hopcroft–Tarjan); isolated vertices form
/// singleton blocks. Each block is sorted and the list is sorted.
fn blocks(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        disc: Vec<usize>,
        low: Vec<usize>,
        time: usize,
        stack: Vec<(usize, usize)>,
        out: Vec<Vec<usize>>,
    }
    fn visit(s: &mut State, u: usize, parent: Option<usize>) {
        s.time += 1;
        s.disc[u] = s.time;
        s.low[u] = s.time;
        for idx in 0..s.adj[u].len() {
            let v = s.adj[u][idx];
            if s.disc[v] == 0 {
                s.stack.push((u, v));
                visit(s, v, Some(u));
                s.low[u] = s.low[u].min(s.low[v]);
                if s.low[v] >= s.disc[u] {
                    let mut block = Vec::new();
                    while let Some((a, b)) = s.stack.pop() {
                        block.push(a);
                        block.push(b);
                        if (a, b) == (u, v) {
                            break;
                        }
                    }
                    block.sort_unstable();
                    block.dedup();
                    s.out.push(block);
                }
            } else if Some(v) != parent && s.disc[v] < s.disc[u] {
                s.stack.push((u, v));
                s.low[u] = s.low[u].min(s.disc[v]);
            }
        }
    }
    let d = adj.len();
    let mut s = State {
        adj,
        disc: vec![0; d],
        low: vec![0; d],
        time: 0,
        stack: Vec::new(),
        out: Vec::new(),
    };
    for u in 0..d {
        if s.disc[u] == 0 {
            if adj[u].is_empty() {
                s.disc[u] = usize::MAX;
                s.out.push(vec![u]);
            } else {
                visit(&mut s, u, None);
            }
        }
    }
    s.out.sort();
    s.out
}
