//! The growth/epidemic particle system.
//!
//! Each step is a growing season followed by an epidemic. Offspring are
//! Poisson, so after uniform placement the occupancy of a site is Bernoulli
//! `1 - exp(-β·ρ)` (global) or `1 - exp(-β·d(i))` (local window), and that
//! thinned form is sampled directly.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_density, Error, Result};
use crate::graph::generate_3_regular;
use crate::percolation::{label_clusters, OccupancyField, Topology};
use crate::rng::{Purpose, Stream};
use crate::torus::Torus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologySpec {
    /// Random 3-regular graph on `n` sites.
    Rrg {
        n: usize,
    },
    Torus {
        dim: usize,
        side: usize,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Offspring {
    #[default]
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Dispersal {
    /// Offspring land uniformly on all sites.
    Global,
    /// Offspring land uniformly on `0 < ‖y - x‖∞ ≤ r` (torus only).
    Radius { r: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub topology: TopologySpec,
    pub beta: f64,
    #[serde(default)]
    pub offspring: Offspring,
    pub dispersal: Dispersal,
    /// Probability that an infection lands on a given site per epidemic.
    pub alpha: f64,
    /// Ignore infections arriving from farther than this graph distance.
    #[serde(default)]
    pub epidemic_range_cap: Option<usize>,
    pub seed: u64,
    /// Also record the density right after each growing season.
    #[serde(default)]
    pub record_half: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        match (self.topology, self.dispersal) {
            (TopologySpec::Rrg { n }, d) => {
                if let Dispersal::Radius { .. } = d {
                    return Err(Error::Config("radius dispersal requires a torus".into()));
                }
                if n < 4 || n % 2 == 1 {
                    return Err(Error::Config(format!("rrg needs an even n >= 4, got {n}")));
                }
            }
            (TopologySpec::Torus { dim, side }, d) => {
                Torus::new(dim, side).map_err(|e| Error::Config(e.to_string()))?;
                if let Dispersal::Radius { r } = d {
                    check_radius(r, side)?;
                }
            }
        }
        Ok(())
    }

    /// Build the sites. The random graph is drawn from the config seed.
    pub fn build_topology(&self) -> Result<Topology> {
        self.validate()?;
        Ok(match self.topology {
            TopologySpec::Rrg { n } => Topology::Rrg(Arc::new(generate_3_regular(n, self.seed)?)),
            TopologySpec::Torus { dim, side } => Topology::Torus(Torus::new(dim, side)?),
        })
    }

    fn check_topology(&self, topology: &Topology) -> Result<()> {
        let ok = match (self.topology, topology) {
            (TopologySpec::Rrg { n }, Topology::Rrg(g)) => g.n_nodes() == n,
            (TopologySpec::Torus { dim, side }, Topology::Torus(t)) => t.dim() == dim && t.side() == side,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "state topology does not match config {:?}",
                self.topology
            )))
        }
    }
}

fn check_radius(r: usize, side: usize) -> Result<()> {
    if r == 0 || 2 * r >= side {
        return Err(Error::Config(format!(
            "radius must satisfy 1 <= r < N/2, got r={r} N={side}"
        )));
    }
    Ok(())
}

fn require_torus(topology: &Topology) -> Result<Torus> {
    match topology {
        Topology::Torus(t) => Ok(*t),
        Topology::Rrg(_) => Err(Error::Config("operation requires a torus".into())),
    }
}

/// Occupied counts over the cyclic box `‖j - i‖∞ ≤ r`, by one sliding-window
/// pass per axis.
pub fn window_counts(torus: &Torus, occupied: &[bool], r: usize) -> Result<Vec<u32>> {
    check_radius(r, torus.side())?;
    let n = torus.side();
    let mut cur: Vec<u32> = occupied.iter().map(|&o| o as u32).collect();
    let mut next = vec![0u32; cur.len()];
    let mut line = vec![0u32; n];
    for axis in 0..torus.dim() {
        let s = torus.stride(axis);
        for base in 0..cur.len() {
            if (base / s) % n != 0 {
                continue;
            }
            for (x, v) in line.iter_mut().enumerate() {
                *v = cur[base + x * s];
            }
            let mut sum: u32 = (0..=2 * r).map(|j| line[(j + n - r) % n]).sum();
            for x in 0..n {
                next[base + x * s] = sum;
                sum += line[(x + r + 1) % n];
                sum -= line[(x + n - r) % n];
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Local densities `d(i) = (1/V) Σ_{‖j-i‖∞ ≤ r} η(j)`, `V = (2r+1)^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub torus: Torus,
    pub r: usize,
    pub values: Vec<f64>,
}

pub fn density_field(state: &OccupancyField, r: usize) -> Result<DensityField> {
    let torus = require_torus(&state.topology)?;
    let counts = window_counts(&torus, &state.occupied, r)?;
    let v = ((2 * r + 1) as f64).powi(torus.dim() as i32);
    Ok(DensityField {
        torus,
        r,
        values: counts.into_iter().map(|c| c as f64 / v).collect(),
    })
}

/// Fraction of sites with `|d(i) - target| < eps`.
pub fn good_site_fraction(field: &DensityField, target: f64, eps: f64) -> f64 {
    let good = field.values.iter().filter(|&&d| (d - target).abs() < eps).count();
    good as f64 / field.values.len() as f64
}

pub fn initial_state(topology: Topology, p0: f64, seed: u64) -> Result<OccupancyField> {
    check_density(p0, "p0")?;
    let stream = Stream::new(seed, Purpose::Init, 0);
    let occupied = (0..topology.n_sites() as u64)
        .into_par_iter()
        .map(|i| stream.bernoulli(i, p0))
        .collect();
    Ok(OccupancyField { topology, occupied })
}

/// Growing season `k`: every parent dies, and each site is occupied by
/// offspring independently.
pub fn growth_step(state: &OccupancyField, config: &ModelConfig, k: u64) -> Result<OccupancyField> {
    config.check_topology(&state.topology)?;
    let stream = Stream::new(config.seed, Purpose::Growth, k);
    let beta = config.beta;
    let occupied: Vec<bool> = match config.dispersal {
        Dispersal::Global => {
            let p = -(-beta * state.density()).exp_m1();
            (0..state.n_sites() as u64)
                .into_par_iter()
                .map(|i| stream.bernoulli(i, p))
                .collect()
        }
        Dispersal::Radius { r } => {
            let torus = require_torus(&state.topology)?;
            let counts = window_counts(&torus, &state.occupied, r)?;
            let v = (2 * r + 1).pow(torus.dim() as u32);
            let punctured = (v - 1) as f64;
            let prob: Vec<f64> = (0..=v)
                .map(|c| -(-beta * c as f64 / punctured).exp_m1())
                .collect();
            counts
                .par_iter()
                .zip(state.occupied.par_iter())
                .enumerate()
                .map(|(i, (&c, &o))| stream.bernoulli(i as u64, prob[c as usize - o as usize]))
                .collect()
        }
    };
    Ok(OccupancyField {
        topology: state.topology.clone(),
        occupied,
    })
}

/// Probability that at least one of `size` sites receives an infection.
pub fn cluster_kill_probability(alpha: f64, size: u32) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    -(size as f64 * (-alpha).ln_1p()).exp_m1()
}

/// Epidemic `k`. Without a range cap a cluster is wiped out at once with
/// probability `1 - (1 - α)^size`; with a cap, landings are sampled per site
/// and only cluster members within the cap of some landing die.
pub fn epidemic_step(state: &OccupancyField, config: &ModelConfig, k: u64) -> Result<OccupancyField> {
    config.check_topology(&state.topology)?;
    if config.alpha == 0.0 {
        return Ok(state.clone());
    }
    match config.epidemic_range_cap {
        None => {
            let stream = Stream::new(config.seed, Purpose::Epidemic, k);
            Ok(cluster_epidemic(state, config.alpha, &stream))
        }
        Some(cap) => {
            let stream = Stream::new(config.seed, Purpose::Landing, k);
            Ok(landing_epidemic(state, config.alpha, Some(cap), &stream))
        }
    }
}

/// Cluster-level epidemic; the draw for a cluster is keyed by its smallest
/// site.
pub fn cluster_epidemic(state: &OccupancyField, alpha: f64, stream: &Stream) -> OccupancyField {
    let labels = label_clusters(state);
    let dies: Vec<bool> = labels
        .sizes()
        .iter()
        .zip(labels.representatives())
        .map(|(&s, &rep)| stream.bernoulli(rep as u64, cluster_kill_probability(alpha, s)))
        .collect();
    let occupied = (0..state.n_sites())
        .map(|i| match labels.cluster_of(i) {
            Some(c) => !dies[c],
            None => false,
        })
        .collect();
    OccupancyField {
        topology: state.topology.clone(),
        occupied,
    }
}

/// Per-site landings, each spreading through occupied neighbors up to `cap`
/// steps (unbounded if `None`).
pub fn landing_epidemic(
    state: &OccupancyField,
    alpha: f64,
    cap: Option<usize>,
    stream: &Stream,
) -> OccupancyField {
    let n = state.n_sites();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if state.occupied[i] && stream.bernoulli(i as u64, alpha) {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    let cap = cap.map_or(u32::MAX, |c| c.min(u32::MAX as usize - 1) as u32);
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        if du >= cap {
            continue;
        }
        state.topology.for_each_neighbor(u, |v| {
            if state.occupied[v] && dist[v] == u32::MAX {
                dist[v] = du + 1;
                queue.push_back(v);
            }
        });
    }
    OccupancyField {
        topology: state.topology.clone(),
        occupied: (0..n).map(|i| state.occupied[i] && dist[i] == u32::MAX).collect(),
    }
}

/// Densities `ρ_0, ρ_1, …, ρ_kmax` of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub config: ModelConfig,
    pub p0: f64,
    pub densities: Vec<f64>,
    /// `ρ_{k+1/2}` for `k = 0..kmax`, if requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_densities: Option<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn k_max(&self) -> usize {
        self.densities.len() - 1
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.half_densities {
            None => {
                writeln!(w, "k,rho")?;
                for (k, r) in self.densities.iter().enumerate() {
                    writeln!(w, "{k},{r}")?;
                }
            }
            Some(h) => {
                writeln!(w, "k,rho,rho_half")?;
                for (k, r) in self.densities.iter().enumerate() {
                    match h.get(k) {
                        Some(x) => writeln!(w, "{k},{r},{x}")?,
                        None => writeln!(w, "{k},{r},")?,
                    }
                }
            }
        }
        Ok(())
    }

    /// Sidecar with the full config, seed and initial density.
    pub fn metadata_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Meta<'a> {
            config: &'a ModelConfig,
            seed: u64,
            p0: f64,
            k_max: usize,
        }
        Ok(serde_json::to_string_pretty(&Meta {
            config: &self.config,
            seed: self.config.seed,
            p0: self.p0,
            k_max: self.k_max(),
        })?)
    }
}

/// A configured system with its sites built once.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub config: ModelConfig,
    pub topology: Topology,
}

impl Simulation {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let topology = config.build_topology()?;
        Ok(Simulation { config, topology })
    }

    pub fn with_topology(config: ModelConfig, topology: Topology) -> Result<Self> {
        config.validate()?;
        config.check_topology(&topology)?;
        Ok(Simulation { config, topology })
    }

    pub fn run(&self, p0: f64, k_max: usize) -> Result<TrajectoryRecord> {
        self.run_observed(p0, k_max, |_, _| {})
    }

    /// Like `run`, calling `observe(k, state)` at `k = 0` and after every
    /// full step.
    pub fn run_observed(
        &self,
        p0: f64,
        k_max: usize,
        mut observe: impl FnMut(usize, &OccupancyField),
    ) -> Result<TrajectoryRecord> {
        let cfg = &self.config;
        let mut state = initial_state(self.topology.clone(), p0, cfg.seed)?;
        let mut densities = Vec::with_capacity(k_max + 1);
        let mut half = cfg.record_half.then(|| Vec::with_capacity(k_max));
        densities.push(state.density());
        observe(0, &state);
        for k in 0..k_max {
            if state.count() == 0 {
                densities.push(0.0);
                if let Some(h) = half.as_mut() {
                    h.push(0.0);
                }
                observe(k + 1, &state);
                continue;
            }
            let grown = growth_step(&state, cfg, k as u64)?;
            if let Some(h) = half.as_mut() {
                h.push(grown.density());
            }
            state = epidemic_step(&grown, cfg, k as u64)?;
            densities.push(state.density());
            observe(k + 1, &state);
        }
        Ok(TrajectoryRecord {
            config: cfg.clone(),
            p0,
            densities,
            half_densities: half,
        })
    }
}

pub fn run(config: &ModelConfig, p0: f64, k_max: usize) -> Result<TrajectoryRecord> {
    Simulation::new(config.clone())?.run(p0, k_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Pgm,
    Rle,
}

impl std::str::FromStr for SnapshotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(SnapshotFormat::Pgm),
            "rle" => Ok(SnapshotFormat::Rle),
            other => Err(Error::Parameter(format!("unknown snapshot format '{other}'"))),
        }
    }
}

/// Occupancy grid of a 2-d torus, row `y` holding sites `(0..N, y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub side: usize,
    pub cells: Vec<bool>,
}

pub fn snapshot(state: &OccupancyField) -> Result<Snapshot> {
    let torus = require_torus(&state.topology)?;
    if torus.dim() != 2 {
        return Err(Error::Parameter(format!(
            "snapshot needs a 2-d torus, got dimension {}",
            torus.dim()
        )));
    }
    Ok(Snapshot {
        side: torus.side(),
        cells: state.occupied.clone(),
    })
}

impl Snapshot {
    pub fn row(&self, y: usize) -> &[bool] {
        &self.cells[y * self.side..(y + 1) * self.side]
    }

    /// Plain PGM with maxval 1.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "P2\n{} {}\n1", self.side, self.side)?;
        for y in 0..self.side {
            let line: Vec<&str> = self.row(y).iter().map(|&c| if c { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// One line per row of `<count><b|o>` runs, `b` vacant and `o` occupied.
    pub fn write_rle<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x = {}, y = {}", self.side, self.side)?;
        for y in 0..self.side {
            let row = self.row(y);
            let mut line = String::new();
            let mut x = 0;
            while x < row.len() {
                let c = row[x];
                let run = row[x..].iter().take_while(|&&v| v == c).count();
                line.push_str(&format!("{run}{}", if c { 'o' } else { 'b' }));
                x += run;
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, format: SnapshotFormat, w: W) -> Result<()> {
        match format {
            SnapshotFormat::Pgm => self.write_pgm(w),
            SnapshotFormat::Rle => self.write_rle(w),
        }
    }

    /// Densities of the `block × block` tiles (side must be divisible).
    pub fn block_densities(&self, block: usize) -> Result<Vec<f64>> {
        if block == 0 || self.side % block != 0 {
            return Err(Error::Parameter(format!(
                "block {block} does not tile side {}",
                self.side
            )));
        }
        let m = self.side / block;
        let mut counts = vec![0u32; m * m];
        for y in 0..self.side {
            for (x, &c) in self.row(y).iter().enumerate() {
                counts[(y / block) * m + x / block] += c as u32;
            }
        }
        let area = (block * block) as f64;
        Ok(counts.into_iter().map(|c| c as f64 / area).collect())
    }
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
