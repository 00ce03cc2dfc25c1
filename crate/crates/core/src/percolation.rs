//! Cluster labeling of occupied sites and 3-tree cluster statistics.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_density, Result};
use crate::graph::Graph;
use crate::torus::Torus;

/// Where the sites live.
#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    Rrg(Arc<Graph>),
    Torus(Torus),
}

impl Topology {
    pub fn n_sites(&self) -> usize {
        match self {
            Topology::Rrg(g) => g.n_nodes(),
            Topology::Torus(t) => t.n_sites(),
        }
    }

    /// Calls `f(u, v)` once per undirected edge.
    pub fn for_each_edge(&self, mut f: impl FnMut(usize, usize)) {
        match self {
            Topology::Rrg(g) => {
                for u in 0..g.n_nodes() {
                    for &v in g.neighbors(u) {
                        if (u as u32) < v {
                            f(u, v as usize);
                        }
                    }
                }
            }
            Topology::Torus(t) => {
                for u in 0..t.n_sites() {
                    for a in 0..t.dim() {
                        let v = t.step(u, a, true);
                        // side 2 gives the same neighbor both ways
                        if t.side() > 2 || u < v {
                            f(u, v);
                        }
                    }
                }
            }
        }
    }

    pub fn for_each_neighbor(&self, u: usize, mut f: impl FnMut(usize)) {
        match self {
            Topology::Rrg(g) => g.neighbors(u).iter().for_each(|&v| f(v as usize)),
            Topology::Torus(t) => t.neighbors(u).for_each(f),
        }
    }
}

/// Occupied/vacant state of every site.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyField {
    pub topology: Topology,
    pub occupied: Vec<bool>,
}

impl OccupancyField {
    pub fn empty(topology: Topology) -> Self {
        let n = topology.n_sites();
        OccupancyField {
            topology,
            occupied: vec![false; n],
        }
    }

    pub fn full(topology: Topology) -> Self {
        let n = topology.n_sites();
        OccupancyField {
            topology,
            occupied: vec![true; n],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.occupied.len()
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.n_sites() as f64
    }
}

/// Disjoint sets with union by size and path halving.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    #[inline]
    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let gp = self.parent[self.parent[x] as usize];
            self.parent[x] = gp;
            x = gp as usize;
        }
        x
    }

    #[inline]
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

pub const VACANT: u32 = u32::MAX;

/// Connected components of the occupied subgraph.
///
/// Clusters are numbered densely in order of their smallest site; that site
/// is the cluster's label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabeling {
    site_cluster: Vec<u32>,
    representative: Vec<u32>,
    sizes: Vec<u32>,
}

impl ClusterLabeling {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    /// Label (smallest member site) of the cluster containing `i`.
    pub fn label(&self, i: usize) -> Option<u32> {
        match self.site_cluster[i] {
            VACANT => None,
            c => Some(self.representative[c as usize]),
        }
    }

    /// Dense cluster index of site `i`.
    #[inline]
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        match self.site_cluster[i] {
            VACANT => None,
            c => Some(c as usize),
        }
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn representatives(&self) -> &[u32] {
        &self.representative
    }

    pub fn n_sites(&self) -> usize {
        self.site_cluster.len()
    }
}

pub fn label_clusters(field: &OccupancyField) -> ClusterLabeling {
    let n = field.n_sites();
    let occ = &field.occupied;
    let mut uf = UnionFind::new(n);
    field.topology.for_each_edge(|u, v| {
        if occ[u] && occ[v] {
            uf.union(u, v);
        }
    });
    let mut root_cluster = vec![VACANT; n];
    let mut site_cluster = vec![VACANT; n];
    let mut representative = Vec::new();
    let mut sizes: Vec<u32> = Vec::new();
    for i in 0..n {
        if !occ[i] {
            continue;
        }
        let r = uf.find(i);
        let c = match root_cluster[r] {
            VACANT => {
                let c = representative.len() as u32;
                root_cluster[r] = c;
                representative.push(i as u32);
                sizes.push(0);
                c
            }
            c => c,
        };
        site_cluster[i] = c;
        sizes[c as usize] += 1;
    }
    ClusterLabeling {
        site_cluster,
        representative,
        sizes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterStats {
    /// size → number of clusters of that size
    pub histogram: BTreeMap<u32, u64>,
    pub max_size: u32,
    /// Mean size of the cluster containing a uniformly chosen occupied site.
    pub mean_size: f64,
    pub occupied: u64,
}

impl ClusterStats {
    /// `size,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "size,count")?;
        for (s, c) in &self.histogram {
            writeln!(w, "{s},{c}")?;
        }
        Ok(())
    }
}

pub fn cluster_stats(labeling: &ClusterLabeling) -> ClusterStats {
    let mut histogram = BTreeMap::new();
    let mut occupied = 0u64;
    let mut sq = 0f64;
    for &s in labeling.sizes() {
        *histogram.entry(s).or_insert(0u64) += 1;
        occupied += s as u64;
        sq += (s as f64) * (s as f64);
    }
    ClusterStats {
        max_size: labeling.sizes().iter().copied().max().unwrap_or(0),
        mean_size: if occupied > 0 { sq / occupied as f64 } else { 0.0 },
        histogram,
        occupied,
    }
}

/// Exact probability that the origin's occupied cluster on the infinite
/// 3-tree has graph diameter at most `k` (a vacant origin counts as
/// diameter `≤ k`).
///
/// Each neighbor of the origin roots an independent binary branch. For a
/// branch, `mass[m + 1]` is the probability that its cluster has height
/// exactly `m` below the branch root (`m = -1` for an empty branch) and
/// internal diameter at most `k`; the heights combine through the origin.
pub fn tree_diameter_cdf(p: f64, k: usize) -> Result<f64> {
    check_density(p, "p")?;
    let q = 1.0 - p;
    // cumulative[j + 1] = P(branch empty, or height <= j and diameter <= k), j = -1..=k-1
    let mut mass = vec![0.0f64; k + 1];
    mass[0] = q;
    for j in 0..k {
        // height exactly j: both sub-branches of height <= j - 1 (one of them = j - 1),
        // and through-root path (m1 + 1) + (m2 + 1) <= k.
        let mut total = 0.0;
        for m1 in 0..=j {
            // index m1 ↔ height m1 - 1
            let a = mass[m1];
            if a == 0.0 {
                continue;
            }
            for m2 in 0..=j {
                if m1.max(m2) != j {
                    continue;
                }
                if m1 + m2 > k {
                    continue;
                }
                total += a * mass[m2];
            }
        }
        mass[j + 1] = p * total;
    }
    // Origin: three branches; heights from the origin are the indices.
    let mut occupied_ok = 0.0;
    for h1 in 0..=k {
        let a = mass[h1];
        if a == 0.0 {
            continue;
        }
        for h2 in 0..=k {
            let b = mass[h2];
            if b == 0.0 || h1 + h2 > k {
                continue;
            }
            for h3 in 0..=k {
                if h1 + h3 > k || h2 + h3 > k {
                    continue;
                }
                occupied_ok += a * b * mass[h3];
            }
        }
    }
    Ok((q + p * occupied_ok).min(1.0))
}
