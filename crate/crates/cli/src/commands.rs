use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use epichaos::dynsys::certify::{certify_expansion_with_progress, scan_expansion, CERTIFIED_BETA_MAX};
use epichaos::dynsys::lattice::{Criterion, LatticeMap, TableSpec, ThetaTable};
use epichaos::dynsys::tree::{check_li_yorke_witness, landmarks, verify_phi_inequality};
use epichaos::dynsys::{bifurcation_scan, linear_grid, orbit};
use epichaos::sim::{
    density_field, snapshot, Dispersal, ModelConfig, Offspring, Simulation, SnapshotFormat, TopologySpec,
};
use epichaos::{Error, Result, TreeMap};

use crate::{Cli, Command, DispersalKind, FormatKind, LatticeArgs, MapKind, SimArgs, TopologyKind};

/// Grid points × samples × box sites above which a θ table needs `--long`.
const LONG_TABLE_WORK: f64 = 4e8;

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    parameters: &'a Cli,
    seed: u64,
    outputs: Vec<String>,
    tool_version: &'static str,
    wall_clock_seconds: f64,
    command_line: Vec<String>,
}

/// `<stem><suffix>` next to `out`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Write the main output to `--out` or stdout.
fn emit(
    out: &Option<PathBuf>,
    written: &mut Vec<PathBuf>,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            f(&mut w)?;
            w.flush()?;
            written.push(path.clone());
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn require_out<'a>(cli: &'a Cli, what: &str) -> Result<&'a PathBuf> {
    cli.out
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{what} needs --out")))
}

pub fn execute(cli: &Cli, command_line: Vec<String>) -> Result<u8> {
    let start = Instant::now();
    let mut written = Vec::new();
    let code = match &cli.command {
        Command::Orbit(a) => {
            let values = match a.map {
                MapKind::Tree => orbit(&TreeMap::new(a.beta)?, a.p0, a.k_max)?,
                MapKind::Lattice => orbit(&lattice_map(cli, a.beta, &a.lattice)?, a.p0, a.k_max)?,
            };
            emit(&cli.out, &mut written, |w| {
                writeln!(w, "k,value")?;
                for (k, v) in values.iter().enumerate() {
                    writeln!(w, "{k},{v}")?;
                }
                Ok(())
            })?;
            0
        }
        Command::Bifurcate(a) => {
            if !(a.beta_min > 0.0) || a.beta_max < a.beta_min || a.n_betas == 0 {
                return Err(Error::Parameter(format!(
                    "need 0 < beta_min <= beta_max and n_betas >= 1, got [{}, {}] x {}",
                    a.beta_min, a.beta_max, a.n_betas
                )));
            }
            let grid = linear_grid(a.beta_min, a.beta_max, a.n_betas);
            let points = match a.map {
                MapKind::Tree => bifurcation_scan(&grid, a.p0, a.burn_in, a.keep, TreeMap::new)?,
                MapKind::Lattice => {
                    let table = load_table(cli, &a.lattice)?;
                    bifurcation_scan(&grid, a.p0, a.burn_in, a.keep, |b| {
                        LatticeMap::new(b, table.clone(), a.lattice.p_c)
                    })?
                }
            };
            emit(&cli.out, &mut written, |w| {
                writeln!(w, "beta,value")?;
                for (b, v) in &points {
                    writeln!(w, "{b},{v}")?;
                }
                Ok(())
            })?;
            0
        }
        Command::Certify(a) => {
            let lo = a.beta_lo.unwrap_or(2.0 * std::f64::consts::LN_2 + 1e-3);
            if a.step < 1e-3 && !cli.long {
                return Err(Error::Parameter(format!(
                    "step {} is a long job; pass --long to run it",
                    a.step
                )));
            }
            let progress = |done: usize, total: usize| eprintln!("certify: {done}/{total} beta values");
            let report = if a.beta_hi > CERTIFIED_BETA_MAX {
                scan_expansion(lo, a.beta_hi, a.step)?
            } else {
                let cb: Option<&(dyn Fn(usize, usize) + Sync)> =
                    if cli.long { Some(&progress) } else { None };
                certify_expansion_with_progress(lo, a.beta_hi, a.step, cb)?
            };
            emit(&cli.out, &mut written, |w| {
                writeln!(w, "{}", report.to_json()?)?;
                Ok(())
            })?;
            match report.certified {
                Some(false) if a.strict => {
                    eprintln!(
                        "certificate does not hold: min infimum {} - {} x {} = {} <= 1",
                        report.min_infimum, report.lipschitz_bound, report.grid_step, report.margin
                    );
                    2
                }
                _ => 0,
            }
        }
        Command::Liyorke(a) => {
            let value = json!({
                "beta": a.beta,
                "landmarks": landmarks(a.beta)?,
                "witness": check_li_yorke_witness(a.beta)?,
                "phi": verify_phi_inequality(a.beta)?,
            });
            emit(&cli.out, &mut written, |w| {
                writeln!(w, "{}", serde_json::to_string_pretty(&value)?)?;
                Ok(())
            })?;
            0
        }
        Command::ThetaTable(a) => {
            let out = require_out(cli, "theta-table")?;
            let criterion: Criterion = a.criterion.parse()?;
            let grid = parse_grid(&a.grid, a.p_c)?;
            let spec = TableSpec {
                dimension: a.dimension,
                box_side: a.box_side,
                grid,
                n_samples: a.n_samples,
                criterion,
                seed: cli.seed,
            };
            let work =
                spec.grid.len() as f64 * a.n_samples as f64 * (a.box_side as f64).powi(a.dimension as i32);
            if work > LONG_TABLE_WORK && !cli.long {
                return Err(Error::Parameter(format!(
                    "table needs about {work:.1e} site visits; pass --long to run it"
                )));
            }
            let table = if cli.long {
                spec.build_with_progress(|d, t| eprintln!("theta-table: {d}/{t} grid points"))?
            } else {
                spec.build()?
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            table.save(out)?;
            written.push(out.clone());
            written.push(epichaos::dynsys::lattice::sidecar_path(out));
            0
        }
        Command::Sim(a) => {
            let sim = Simulation::new(model_config(&a.sim, cli.seed, a.record_half)?)?;
            if (a.scatter || a.field_radius.is_some()) && cli.out.is_none() {
                return Err(Error::Config("--scatter and --field-radius need --out".into()));
            }
            let mut field_rows = Vec::new();
            let mut field_err = None;
            let record = sim.run_observed(a.sim.p0, a.k_max, |k, s| {
                if let Some(r) = a.field_radius {
                    match density_field(s, r) {
                        Ok(f) => {
                            let n = f.values.len() as f64;
                            let mean = f.values.iter().sum::<f64>() / n;
                            let var = f.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                            let min = f.values.iter().copied().fold(f64::INFINITY, f64::min);
                            let max = f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            field_rows.push(format!("{k},{mean},{var},{min},{max}"));
                        }
                        Err(e) => field_err = field_err.take().or(Some(e)),
                    }
                }
            })?;
            if let Some(e) = field_err {
                return Err(e);
            }
            emit(&cli.out, &mut written, |w| record.write_csv(w))?;
            if let Some(out) = &cli.out {
                let meta = sibling(out, ".json");
                std::fs::write(&meta, record.metadata_json()? + "\n")?;
                written.push(meta);
                if a.scatter {
                    let path = sibling(out, ".scatter.csv");
                    let mut w = create(&path)?;
                    writeln!(w, "k,rho_k,rho_k1")?;
                    for (k, pair) in record.densities.windows(2).enumerate() {
                        writeln!(w, "{k},{},{}", pair[0], pair[1])?;
                    }
                    w.flush()?;
                    written.push(path);
                }
                if a.field_radius.is_some() {
                    let path = sibling(out, ".field.csv");
                    let mut w = create(&path)?;
                    writeln!(w, "k,field_mean,field_var,field_min,field_max")?;
                    for row in &field_rows {
                        writeln!(w, "{row}")?;
                    }
                    w.flush()?;
                    written.push(path);
                }
            }
            0
        }
        Command::Snapshot(a) => {
            let sim = Simulation::new(model_config(&a.sim, cli.seed, false)?)?;
            if let TopologySpec::Torus { dim, .. } = sim.config.topology {
                if dim != 2 {
                    return Err(Error::Parameter(format!("snapshot needs dim = 2, got {dim}")));
                }
            } else {
                return Err(Error::Parameter("snapshot needs a torus".into()));
            }
            let mut shot = None;
            let mut shot_err = None;
            sim.run_observed(a.sim.p0, a.at, |k, s| {
                if k == a.at {
                    match snapshot(s) {
                        Ok(x) => shot = Some(x),
                        Err(e) => shot_err = Some(e),
                    }
                }
            })?;
            if let Some(e) = shot_err {
                return Err(e);
            }
            let shot = shot.expect("observer runs at the final step");
            let format = match a.format {
                FormatKind::Pgm => SnapshotFormat::Pgm,
                FormatKind::Rle => SnapshotFormat::Rle,
            };
            emit(&cli.out, &mut written, |w| shot.write(format, w))?;
            0
        }
    };
    if let Some(out) = &cli.out {
        let manifest = RunManifest {
            subcommand: cli.command.name(),
            parameters: cli,
            seed: cli.seed,
            outputs: written.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            command_line,
        };
        let path = sibling(out, ".manifest.json");
        std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    Ok(code)
}

fn load_table(cli: &Cli, a: &LatticeArgs) -> Result<Arc<ThetaTable>> {
    if let Some(path) = &a.table {
        return Ok(Arc::new(ThetaTable::load(path)?));
    }
    let spec = TableSpec {
        grid: TableSpec::default_grid(a.p_c),
        ..TableSpec::new_default(2, a.box_side, a.table_samples, cli.seed)
    };
    Ok(Arc::new(spec.load_or_build(&a.cache_dir)?))
}

fn lattice_map(cli: &Cli, beta: f64, a: &LatticeArgs) -> Result<LatticeMap> {
    LatticeMap::new(beta, load_table(cli, a)?, a.p_c)
}

fn parse_grid(spec: &str, p_c: f64) -> Result<Vec<f64>> {
    let bad = || {
        Error::Parameter(format!(
            "grid must be 'default', 'lo:hi:n' or a list, got '{spec}'"
        ))
    };
    if spec == "default" {
        return Ok(TableSpec::default_grid(p_c));
    }
    if let [lo, hi, n] = spec.split(':').collect::<Vec<_>>()[..] {
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 || hi < lo {
            return Err(bad());
        }
        return Ok(linear_grid(lo, hi, n));
    }
    spec.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn model_config(a: &SimArgs, seed: u64, record_half: bool) -> Result<ModelConfig> {
    let config = ModelConfig {
        topology: match a.topology {
            TopologyKind::Rrg => TopologySpec::Rrg { n: a.n },
            TopologyKind::Torus => TopologySpec::Torus {
                dim: a.dim,
                side: a.side,
            },
        },
        beta: a.beta,
        offspring: Offspring::Poisson,
        dispersal: match a.dispersal {
            DispersalKind::Global => Dispersal::Global,
            DispersalKind::Radius => Dispersal::Radius { r: a.r },
        },
        alpha: a.alpha,
        epidemic_range_cap: a.range_cap,
        seed,
        record_half,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("default", 0.5927).unwrap().len(), 64);
        assert_eq!(
            parse_grid("0:1:5", 0.5927).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(parse_grid("0.1, 0.2", 0.5927).unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("0:1", 0.5927).is_err());
        assert!(parse_grid("a,b", 0.5927).is_err());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(
            sibling(Path::new("out/traj.csv"), ".json"),
            PathBuf::from("out/traj.json")
        );
        assert_eq!(
            sibling(Path::new("r"), ".manifest.json"),
            PathBuf::from("r.manifest.json")
        );
    }
}
