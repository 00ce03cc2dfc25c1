//! Random 3-regular graphs and local tree structure.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEGREE: usize = 3;
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Read-only neighbor access, so the ball and tree checks also run on
/// hand-built fixtures that are not 3-regular.
pub trait Neighbors {
    fn n_nodes(&self) -> usize;
    fn neighbors(&self, i: usize) -> &[u32];
}

/// Simple connected 3-regular graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<[u32; DEGREE]>,
    seed: Option<u64>,
    attempts: usize,
}

impl Neighbors for Graph {
    fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    fn neighbors(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }
}

/// Plain adjacency lists, for fixtures.
#[derive(Clone, Debug, Default)]
pub struct AdjacencyList(pub Vec<Vec<u32>>);

impl AdjacencyList {
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        AdjacencyList(adj)
    }
}

impl Neighbors for AdjacencyList {
    fn n_nodes(&self) -> usize {
        self.0.len()
    }

    fn neighbors(&self, i: usize) -> &[u32] {
        &self.0[i]
    }
}

impl Graph {
    /// Build from explicit adjacency, validating every invariant.
    pub fn from_adjacency(adjacency: Vec<[u32; DEGREE]>, seed: Option<u64>) -> Result<Self> {
        let g = Graph {
            adjacency,
            seed,
            attempts: 0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Pairings drawn before an accepted sample.
    pub fn attempts(&self) -> usize {
        self.attempts
    }

    pub fn neighbors(&self, i: usize) -> &[u32; DEGREE] {
        &self.adjacency[i]
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.n_nodes() * DEGREE / 2);
        for (u, nb) in self.adjacency.iter().enumerate() {
            for &v in nb {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }

    /// Degree 3, no loops or multi-edges, symmetric, connected.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if n < 4 || n % 2 == 1 {
            return Err(Error::Format(format!(
                "3-regular graph needs even n >= 4, got {n}"
            )));
        }
        for (u, nb) in self.adjacency.iter().enumerate() {
            for (k, &v) in nb.iter().enumerate() {
                let v = v as usize;
                if v >= n {
                    return Err(Error::Format(format!("node {u}: neighbor {v} out of range")));
                }
                if v == u {
                    return Err(Error::Format(format!("self-loop at {u}")));
                }
                if nb[..k].contains(&(v as u32)) {
                    return Err(Error::Format(format!("parallel edge {u}-{v}")));
                }
                if !self.adjacency[v].contains(&(u as u32)) {
                    return Err(Error::Format(format!("asymmetric edge {u}-{v}")));
                }
            }
        }
        if !is_connected(self) {
            return Err(Error::Format("graph is not connected".into()));
        }
        Ok(())
    }

    /// Edge-list text: header `n=<N> d=3 seed=<seed>`, then one `u v` per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(w, "n={} d={} seed={}", self.n_nodes(), DEGREE, seed)?;
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty edge list".into()))??;
        let mut n = None;
        let mut seed = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                Some(("d", v)) if v != "3" => return Err(Error::Format(format!("unsupported degree {v}"))),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                _ => {}
            }
        }
        let n = n.ok_or_else(|| Error::Format(format!("bad header: {header}")))?;
        let mut lists: Vec<Vec<u32>> = vec![Vec::with_capacity(DEGREE); n];
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(|t| t.parse::<u32>());
            let (u, v) = match (it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v))) => (u, v),
                _ => return Err(Error::Format(format!("bad edge line: {line}"))),
            };
            if u as usize >= n || v as usize >= n {
                return Err(Error::Format(format!("edge {u} {v} out of range")));
            }
            lists[u as usize].push(v);
            lists[v as usize].push(u);
        }
        let mut adjacency = Vec::with_capacity(n);
        for (u, l) in lists.into_iter().enumerate() {
            let arr: [u32; DEGREE] = l
                .try_into()
                .map_err(|l: Vec<u32>| Error::Format(format!("node {u} has degree {}", l.len())))?;
            adjacency.push(arr);
        }
        Graph::from_adjacency(adjacency, seed)
    }
}

fn is_connected<G: Neighbors>(g: &G) -> bool {
    let n = g.n_nodes();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in g.neighbors(u) {
            let v = v as usize;
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Pair `3n` half-edges uniformly at random; `None` if the result has a
/// self-loop or a parallel edge.
fn try_pairing(n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<[u32; DEGREE]>> {
    let mut stubs: Vec<u32> = (0..n as u32).flat_map(|u| [u; DEGREE]).collect();
    stubs.shuffle(rng);
    let mut adj = vec![[u32::MAX; DEGREE]; n];
    let mut fill = vec![0u8; n];
    for pair in stubs.chunks_exact(2) {
        let (u, v) = (pair[0], pair[1]);
        if u == v {
            return None;
        }
        let (ui, vi) = (u as usize, v as usize);
        if adj[ui][..fill[ui] as usize].contains(&v) {
            return None;
        }
        adj[ui][fill[ui] as usize] = v;
        fill[ui] += 1;
        adj[vi][fill[vi] as usize] = u;
        fill[vi] += 1;
    }
    Some(adj)
}

/// Uniform simple connected 3-regular graph on `n` nodes via the
/// configuration model with rejection.
pub fn generate_3_regular(n: usize, seed: u64) -> Result<Graph> {
    generate_3_regular_with_budget(n, seed, DEFAULT_MAX_ATTEMPTS)
}

pub fn generate_3_regular_with_budget(n: usize, seed: u64, max_attempts: usize) -> Result<Graph> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::Parameter(format!(
            "3-regular graph needs an even number of nodes >= 4, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=max_attempts {
        if let Some(adjacency) = try_pairing(n, &mut rng) {
            let g = Graph {
                adjacency,
                seed: Some(seed),
                attempts: attempt,
            };
            if is_connected(&g) {
                return Ok(g);
            }
        }
    }
    Err(Error::RetryBudget {
        attempts: max_attempts,
        what: format!("simple connected 3-regular graph on {n} nodes"),
    })
}

/// Nodes within graph distance `radius` of `i`, in BFS order.
pub fn ball<G: Neighbors>(g: &G, i: usize, radius: usize) -> Result<Vec<usize>> {
    if i >= g.n_nodes() {
        return Err(Error::Parameter(format!(
            "node {i} out of range for {} nodes",
            g.n_nodes()
        )));
    }
    let mut dist = std::collections::HashMap::new();
    dist.insert(i, 0usize);
    let mut order = vec![i];
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du == radius {
            continue;
        }
        for &v in g.neighbors(u) {
            let v = v as usize;
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(du + 1);
                order.push(v);
                queue.push_back(v);
            }
        }
    }
    Ok(order)
}

/// Whether the subgraph induced by the radius-`radius` ball around `i` is a
/// tree. Exploration stops at the first collision.
pub fn ball_is_tree<G: Neighbors>(g: &G, i: usize, radius: usize, scratch: &mut TreeScratch) -> bool {
    scratch.reset(g.n_nodes());
    let TreeScratch {
        depth,
        parent,
        touched,
        queue,
    } = scratch;
    depth[i] = 0;
    parent[i] = u32::MAX;
    touched.push(i);
    queue.clear();
    queue.push_back(i);
    while let Some(u) = queue.pop_front() {
        let du = depth[u];
        for &v in g.neighbors(u) {
            let v = v as usize;
            if v as u32 == parent[u] {
                continue;
            }
            if depth[v] != u32::MAX {
                // an edge between two ball nodes that is not a tree edge
                return false;
            }
            if du as usize == radius {
                continue;
            }
            depth[v] = du + 1;
            parent[v] = u as u32;
            touched.push(v);
            queue.push_back(v);
        }
    }
    true
}

/// Reusable buffers for [`ball_is_tree`].
#[derive(Debug, Default)]
pub struct TreeScratch {
    depth: Vec<u32>,
    parent: Vec<u32>,
    touched: Vec<usize>,
    queue: VecDeque<usize>,
}

impl TreeScratch {
    fn reset(&mut self, n: usize) {
        if self.depth.len() != n {
            self.depth = vec![u32::MAX; n];
            self.parent = vec![u32::MAX; n];
            self.touched.clear();
        } else {
            for &t in &self.touched {
                self.depth[t] = u32::MAX;
                self.parent[t] = u32::MAX;
            }
            self.touched.clear();
        }
    }
}

/// Fraction of nodes whose radius-`radius` ball is cycle-free.
pub fn local_tree_fraction<G: Neighbors>(g: &G, radius: usize) -> f64 {
    let n = g.n_nodes();
    if n == 0 {
        return 0.0;
    }
    let mut scratch = TreeScratch::default();
    let good = (0..n)
        .filter(|&i| ball_is_tree(g, i, radius, &mut scratch))
        .count();
    good as f64 / n as f64
}
