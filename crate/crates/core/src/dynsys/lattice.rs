//! The lattice limiting map `h_L = g_L ∘ f`, with the percolation
//! probability `θ_L` tabulated by Monte Carlo on finite boxes.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::growth_raw;
use super::IntervalMap;
use crate::error::{check_density, Error, Result};
use crate::rng::{mix64, Purpose, Stream};
use crate::torus::Torus;

/// Site percolation threshold of the square lattice.
pub const P_C_SQUARE: f64 = 0.5927;

/// Finite-size proxy for "the origin's cluster is infinite".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// The cluster winds around the torus in some coordinate. Estimated as
    /// `p` times the fraction of open sites lying in wrapping clusters.
    Wrapping,
    /// The cluster of the center site of a box touches the box boundary.
    Boundary,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wrapping" => Ok(Criterion::Wrapping),
            "boundary" => Ok(Criterion::Boundary),
            other => Err(Error::Parameter(format!(
                "criterion must be 'wrapping' or 'boundary', got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Wrapping => "wrapping",
            Criterion::Boundary => "boundary",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta_hat: f64,
    pub std_err: f64,
    pub n_samples: u64,
}

/// Sites of `torus` lying in a cluster that wraps around it.
pub fn wrapping_mask(torus: &Torus, occupied: &[bool]) -> Vec<bool> {
    let n = torus.n_sites();
    let d = torus.dim();
    let mut cluster = vec![u32::MAX; n];
    let mut offset = vec![0i32; n * d];
    let mut wraps = vec![false; n];
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    let mut next_id = 0u32;
    for s in 0..n {
        if !occupied[s] || cluster[s] != u32::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        cluster[s] = id;
        offset[s * d..s * d + d].fill(0);
        queue.push_back(s);
        members.clear();
        let mut wrapping = false;
        while let Some(u) = queue.pop_front() {
            members.push(u);
            for a in 0..d {
                for forward in [true, false] {
                    let v = torus.step(u, a, forward);
                    if !occupied[v] {
                        continue;
                    }
                    let delta = if forward { 1 } else { -1 };
                    if cluster[v] == id {
                        if !wrapping {
                            let same = (0..d).all(|b| {
                                let want = offset[u * d + b] + if b == a { delta } else { 0 };
                                offset[v * d + b] == want
                            });
                            wrapping = !same;
                        }
                    } else {
                        cluster[v] = id;
                        for b in 0..d {
                            offset[v * d + b] = offset[u * d + b] + if b == a { delta } else { 0 };
                        }
                        queue.push_back(v);
                    }
                }
            }
        }
        if wrapping {
            for &m in &members {
                wraps[m] = true;
            }
        }
    }
    wraps
}

fn wrapping_sample(torus: &Torus, p: f64, stream: &Stream) -> f64 {
    let n = torus.n_sites();
    let occupied: Vec<bool> = (0..n as u64).map(|i| stream.bernoulli(i, p)).collect();
    let open = occupied.iter().filter(|&&o| o).count();
    if open == 0 {
        return 0.0;
    }
    let wrapping = wrapping_mask(torus, &occupied).iter().filter(|&&w| w).count();
    p * wrapping as f64 / open as f64
}

/// Whether the cluster of the center of a box of side `side` touches the
/// box boundary. Site states are keyed by offset from the center, so boxes
/// of different sizes sampled from one stream are nested.
fn boundary_sample(dim: usize, side: usize, p: f64, stream: &Stream, stamp: &mut [bool]) -> bool {
    let torus = Torus::new(dim, side).expect("validated box");
    let center_c = side / 2;
    let center = torus.index(&vec![center_c; dim]);
    let state = |i: usize| -> bool {
        let mut key = 0x243f_6a88_85a3_08d3u64;
        for a in 0..dim {
            let rel = torus.coord(i, a) as i64 - center_c as i64;
            key = mix64(key ^ (rel as u64).wrapping_add(a as u64 * 0x1000_0000_0000));
        }
        stream.bernoulli(key, p)
    };
    if !state(center) {
        return false;
    }
    let on_boundary = |i: usize| {
        (0..dim).any(|a| {
            let x = torus.coord(i, a);
            x == 0 || x == side - 1
        })
    };
    let mut touched = vec![center];
    stamp[center] = true;
    let mut queue = VecDeque::from([center]);
    let mut hit = false;
    'bfs: while let Some(u) = queue.pop_front() {
        if on_boundary(u) {
            hit = true;
            break;
        }
        for a in 0..dim {
            for forward in [true, false] {
                let v = torus.step(u, a, forward);
                if stamp[v] {
                    continue;
                }
                stamp[v] = true;
                touched.push(v);
                if state(v) {
                    if on_boundary(v) {
                        hit = true;
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
    }
    for t in touched {
        stamp[t] = false;
    }
    hit
}

/// Monte Carlo estimate of `θ_L(p)` under a finite-size proxy.
///
/// Wrapping: per-sample `p · (open sites in wrapping clusters) / (open sites)`
/// on a torus of side `box_side`, standard error from the spread across
/// samples.
/// Boundary: indicator per sample, binomial standard error.
pub fn estimate_theta(
    p: f64,
    dimension: usize,
    box_side: usize,
    n_samples: u64,
    criterion: Criterion,
    seed: u64,
) -> Result<ThetaEstimate> {
    check_density(p, "p")?;
    if dimension < 2 {
        return Err(Error::Parameter(format!(
            "dimension must be >= 2, got {dimension}"
        )));
    }
    if box_side < 8 {
        return Err(Error::Parameter(format!("box_side must be >= 8, got {box_side}")));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be >= 1".into()));
    }
    let torus = Torus::new(dimension, box_side)?;
    // p is part of the stream key so grid points are independent
    let base = Stream::new(seed, Purpose::Percolation, p.to_bits());
    match criterion {
        Criterion::Wrapping => {
            let fractions: Vec<f64> = (0..n_samples)
                .into_par_iter()
                .map(|s| wrapping_sample(&torus, p, &base.substream(s)))
                .collect();
            let n = n_samples as f64;
            let mean = fractions.iter().sum::<f64>() / n;
            let std_err = if n_samples > 1 {
                let var = fractions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                (mean * (1.0 - mean)).max(0.0).sqrt()
            };
            Ok(ThetaEstimate {
                theta_hat: mean,
                std_err,
                n_samples,
            })
        }
        Criterion::Boundary => {
            let base = Stream::new(seed, Purpose::Boundary, p.to_bits());
            let chunk = 256u64;
            let hits: u64 = (0..n_samples.div_ceil(chunk))
                .into_par_iter()
                .map(|c| {
                    let mut stamp = vec![false; torus.n_sites()];
                    (c * chunk..((c + 1) * chunk).min(n_samples))
                        .filter(|&s| boundary_sample(dimension, box_side, p, &base.substream(s), &mut stamp))
                        .count() as u64
                })
                .sum();
            let n = n_samples as f64;
            let mean = hits as f64 / n;
            Ok(ThetaEstimate {
                theta_hat: mean,
                std_err: (mean * (1.0 - mean) / n).sqrt(),
                n_samples,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub p: f64,
    pub theta_hat: f64,
    pub std_err: f64,
    pub n_samples: u64,
}

/// Metadata stored in the JSON sidecar of a table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub dimension: usize,
    pub box_side: usize,
    pub criterion: Criterion,
    pub seed: u64,
    pub n_samples: u64,
    pub grid: Vec<f64>,
    /// How "infinite cluster" is approximated on a finite box.
    pub finite_size_proxy: String,
}

/// Monotone table `p → θ̂_L(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaTable {
    meta: TableMeta,
    entries: Vec<ThetaEntry>,
    /// Isotonic (pool-adjacent-violators) repair of `theta_hat`, clamped to `[0, 1]`.
    repaired: Vec<f64>,
}

fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let (v2, w2, c2) = blocks.pop().unwrap();
            let (v1, w1, c1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, c)| std::iter::repeat(v.clamp(0.0, 1.0)).take(c))
        .collect()
}

impl ThetaTable {
    pub fn new(meta: TableMeta, entries: Vec<ThetaEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Table("table has no entries".into()));
        }
        for w in entries.windows(2) {
            if !(w[0].p < w[1].p) {
                return Err(Error::Table(format!(
                    "entries must be strictly sorted by p ({} then {})",
                    w[0].p, w[1].p
                )));
            }
        }
        for e in &entries {
            if !(0.0..=1.0).contains(&e.p) || !(0.0..=1.0).contains(&e.theta_hat) {
                return Err(Error::Table(format!("entry out of range: {e:?}")));
            }
            if !(e.std_err >= 0.0) {
                return Err(Error::Table(format!("negative std_err: {e:?}")));
            }
        }
        let values: Vec<f64> = entries.iter().map(|e| e.theta_hat).collect();
        let weights: Vec<f64> = entries.iter().map(|e| e.n_samples.max(1) as f64).collect();
        let repaired = isotonic(&values, &weights);
        Ok(ThetaTable {
            meta,
            entries,
            repaired,
        })
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn entries(&self) -> &[ThetaEntry] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.meta.dimension
    }

    /// Piecewise-linear interpolation of the repaired column.
    pub fn theta(&self, p: f64) -> f64 {
        interpolate(
            self.entries
                .iter()
                .map(|e| e.p)
                .zip(self.repaired.iter().copied()),
            p,
        )
    }

    /// Knots used above a threshold `p_c`: `(p_c, 0)` followed by the
    /// repaired entries strictly above it.
    fn knots_above(&self, p_c: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        std::iter::once((p_c, 0.0)).chain(
            self.entries
                .iter()
                .zip(&self.repaired)
                .filter(move |(e, _)| e.p > p_c)
                .map(|(e, &v)| (e.p, v)),
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p,theta_hat,std_err,n_samples")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{}", e.p, e.theta_hat, e.std_err, e.n_samples)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, meta: TableMeta) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))??;
        if header.trim() != "p,theta_hat,std_err,n_samples" {
            return Err(Error::Format(format!("unexpected header: {header}")));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Format(format!("bad row: {line}")));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number '{s}' in row: {line}")))
            };
            entries.push(ThetaEntry {
                p: num(f[0])?,
                theta_hat: num(f[1])?,
                std_err: num(f[2])?,
                n_samples: f[3]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad count in row: {line}")))?,
            });
        }
        ThetaTable::new(meta, entries)
    }

    /// Write `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut f = fs::File::create(csv_path)?;
        self.write_csv(&mut f)?;
        fs::write(
            sidecar_path(csv_path),
            serde_json::to_string_pretty(&self.meta)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta: TableMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
        ThetaTable::read_csv(BufReader::new(fs::File::open(csv_path)?), meta)
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn interpolate(knots: impl Iterator<Item = (f64, f64)>, p: f64) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for (x, y) in knots {
        if p <= x {
            return match prev {
                None => y,
                Some((x0, y0)) if x > x0 => y0 + (y - y0) * (p - x0) / (x - x0),
                Some(_) => y,
            };
        }
        prev = Some((x, y));
    }
    prev.map_or(0.0, |(_, y)| y)
}

/// Parameters of a table build; also the cache key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub dimension: usize,
    pub box_side: usize,
    pub grid: Vec<f64>,
    pub n_samples: u64,
    pub criterion: Criterion,
    pub seed: u64,
}

impl TableSpec {
    /// 64 points: 12 below `p_c`, 21 at step 0.005 on `[p_c, p_c + 0.1]`,
    /// 31 up to 1.
    pub fn default_grid(p_c: f64) -> Vec<f64> {
        let mut g: Vec<f64> = (0..12).map(|i| p_c * i as f64 / 12.0).collect();
        g.extend((0..=20).map(|i| p_c + 0.005 * i as f64));
        let top = p_c + 0.1;
        g.extend((1..=31).map(|i| {
            if i == 31 {
                1.0
            } else {
                top + (1.0 - top) * i as f64 / 31.0
            }
        }));
        g
    }

    pub fn new_default(dimension: usize, box_side: usize, n_samples: u64, seed: u64) -> Self {
        TableSpec {
            dimension,
            box_side,
            grid: Self::default_grid(P_C_SQUARE),
            n_samples,
            criterion: Criterion::Wrapping,
            seed,
        }
    }

    /// Stable 64-bit FNV-1a digest of the canonical JSON form.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_string(self).expect("serializable");
        json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    pub fn cache_file_name(&self) -> String {
        format!(
            "theta_d{}_L{}_{}_n{}_s{}_{:016x}.csv",
            self.dimension,
            self.box_side,
            self.criterion,
            self.n_samples,
            self.seed,
            self.digest()
        )
    }

    pub fn meta(&self) -> TableMeta {
        TableMeta {
            dimension: self.dimension,
            box_side: self.box_side,
            criterion: self.criterion,
            seed: self.seed,
            n_samples: self.n_samples,
            grid: self.grid.clone(),
            finite_size_proxy: match self.criterion {
                Criterion::Wrapping => format!(
                    "p times the fraction of open sites in wrapping clusters, torus of side {}",
                    self.box_side
                ),
                Criterion::Boundary => format!(
                    "center cluster touches the boundary of a box of side {}",
                    self.box_side
                ),
            },
        }
    }

    pub fn build(&self) -> Result<ThetaTable> {
        self.build_with_progress(|_, _| {})
    }

    pub fn build_with_progress(&self, progress: impl Fn(usize, usize)) -> Result<ThetaTable> {
        let mut grid = self.grid.clone();
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup();
        let mut entries = Vec::with_capacity(grid.len());
        for (i, &p) in grid.iter().enumerate() {
            let est = estimate_theta(
                p,
                self.dimension,
                self.box_side,
                self.n_samples,
                self.criterion,
                self.seed,
            )?;
            entries.push(ThetaEntry {
                p,
                theta_hat: est.theta_hat,
                std_err: est.std_err,
                n_samples: est.n_samples,
            });
            progress(i + 1, grid.len());
        }
        ThetaTable::new(self.meta(), entries)
    }

    /// Load from `cache_dir` if a table for this exact spec exists there,
    /// otherwise build and store it.
    pub fn load_or_build(&self, cache_dir: &Path) -> Result<ThetaTable> {
        let path = cache_dir.join(self.cache_file_name());
        if path.exists() && sidecar_path(&path).exists() {
            if let Ok(t) = ThetaTable::load(&path) {
                if t.meta == self.meta() {
                    return Ok(t);
                }
            }
        }
        fs::create_dir_all(cache_dir)?;
        let t = self.build()?;
        t.save(&path)?;
        Ok(t)
    }
}

/// `g_L(p) = p - θ̂_L(p)`, with `g_L(p) = p` enforced for `p ≤ p_c`.
pub fn g_lattice(p: f64, table: &ThetaTable, p_c: f64) -> Result<f64> {
    check_density(p, "p")?;
    if p <= p_c {
        return Ok(p);
    }
    let theta = interpolate(table.knots_above(p_c), p).clamp(0.0, p);
    Ok(p - theta)
}

/// `β_c = log(1/(1 - p_c)) / p_c`: the `β` at which the growth fixed point
/// reaches `p_c`.
pub fn beta_c_lattice(p_c: f64) -> f64 {
    (1.0 / (1.0 - p_c)).ln() / p_c
}

/// The map `h_L` at fixed `β`.
#[derive(Clone, Debug)]
pub struct LatticeMap {
    pub beta: f64,
    pub table: Arc<ThetaTable>,
    pub p_c: f64,
}

impl LatticeMap {
    pub fn new(beta: f64, table: Arc<ThetaTable>, p_c: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        check_density(p_c, "p_c")?;
        if table.dimension() == 2 && !(0.58..=0.61).contains(&p_c) {
            return Err(Error::Parameter(format!(
                "p_c estimate {p_c} outside [0.58, 0.61] for d = 2"
            )));
        }
        Ok(LatticeMap { beta, table, p_c })
    }

    pub fn beta_c(&self) -> f64 {
        beta_c_lattice(self.p_c)
    }

    pub fn g(&self, p: f64) -> Result<f64> {
        g_lattice(p, &self.table, self.p_c)
    }
}

pub fn h_lattice(p: f64, map: &LatticeMap) -> Result<f64> {
    check_density(p, "p")?;
    map.g(growth_raw(p, map.beta))
}

impl IntervalMap<f64> for LatticeMap {
    fn apply(&self, p: f64) -> Result<f64> {
        h_lattice(p, self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeDiagnostic {
    /// `(p_left, p_right, (θ̂(p_right) - θ̂(p_left)) / (p_right - p_left))`,
    /// for consecutive entries above `p_c`.
    pub slopes: Vec<(f64, f64, f64)>,
    /// The slope nearest `p_c` exceeds the farthest one.
    pub steeper_near_pc: bool,
    /// Slopes are nonincreasing in `p` throughout.
    pub monotone: bool,
}

/// Forward finite-difference slopes of `θ̂` above `p_c`, a consistency check
/// for `θ_L'(p) → ∞` as `p ↓ p_c`.
pub fn theta_slope_diagnostic(table: &ThetaTable, p_c_estimate: f64) -> Result<SlopeDiagnostic> {
    let above: Vec<&ThetaEntry> = table.entries().iter().filter(|e| e.p > p_c_estimate).collect();
    if above.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 entries above p_c = {p_c_estimate}, have {}",
            above.len()
        )));
    }
    let slopes: Vec<(f64, f64, f64)> = above
        .windows(2)
        .map(|w| {
            (
                w[0].p,
                w[1].p,
                (w[1].theta_hat - w[0].theta_hat) / (w[1].p - w[0].p),
            )
        })
        .collect();
    let tol = 1e-9;
    let monotone = slopes.windows(2).all(|w| w[1].2 <= w[0].2 + tol);
    let steeper_near_pc = slopes.first().unwrap().2 > slopes.last().unwrap().2 + tol;
    Ok(SlopeDiagnostic {
        slopes,
        steeper_near_pc,
        monotone,
    })
}
