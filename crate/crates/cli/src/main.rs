//! `epichaos`: orbits, bifurcation scans, expansion certificates, θ tables
//! and particle-system runs, written as CSV/JSON with a run manifest.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use epichaos::Error;

const AFTER_HELP: &str = "\
Output schemas (see SCHEMAS.md):
  orbit        CSV k,value
  bifurcate    CSV beta,value
  certify      JSON certification report
  liyorke      JSON landmarks, witness chain and phi checks
  theta-table  CSV p,theta_hat,std_err,n_samples + JSON sidecar
  sim          CSV k,rho[,rho_half] + JSON sidecar; optional scatter and field CSVs
  snapshot     PGM (P2, 0/1) or run-length text grid
Every file written with --out gets a <stem>.manifest.json next to it.

Exit codes: 0 success, 1 usage error, 2 numerical or certification failure, 3 I/O error.";

#[derive(Parser, Debug, Serialize)]
#[command(name = "epichaos", version, about, after_help = AFTER_HELP, args_override_self = true)]
pub struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value file; every key is a flag name, command-line flags override.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Allow long jobs (fine certification grids, large θ tables).
    #[arg(long, global = true)]
    pub long: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Orbit p0, h(p0), …, h^k(p0) of the tree or lattice map.
    #[command(args_override_self = true)]
    Orbit(OrbitArgs),
    /// Orbit tails over a β grid.
    #[command(args_override_self = true)]
    Bifurcate(BifurcateArgs),
    /// Infimum of |(h_T^3)'| over a β grid, with the Lipschitz certificate.
    #[command(args_override_self = true)]
    Certify(CertifyArgs),
    /// Li–Yorke witness and φ checks at one β.
    #[command(args_override_self = true)]
    Liyorke(LiyorkeArgs),
    /// Monte Carlo table of the lattice percolation probability.
    #[command(args_override_self = true)]
    ThetaTable(ThetaTableArgs),
    /// Run the particle system and write its density trajectory.
    #[command(args_override_self = true)]
    Sim(SimCmdArgs),
    /// Run the particle system and write the occupancy grid at one time.
    #[command(args_override_self = true)]
    Snapshot(SnapshotArgs),
}

impl Command {
    pub const NAMES: [&'static str; 7] = [
        "orbit",
        "bifurcate",
        "certify",
        "liyorke",
        "theta-table",
        "sim",
        "snapshot",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Orbit(_) => "orbit",
            Command::Bifurcate(_) => "bifurcate",
            Command::Certify(_) => "certify",
            Command::Liyorke(_) => "liyorke",
            Command::ThetaTable(_) => "theta-table",
            Command::Sim(_) => "sim",
            Command::Snapshot(_) => "snapshot",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Tree,
    Lattice,
}

/// Where the lattice map's θ table comes from.
#[derive(Args, Debug, Serialize)]
pub struct LatticeArgs {
    /// Existing θ table CSV (with its JSON sidecar).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Otherwise build (or reuse) a default-grid table with these settings.
    #[arg(long, default_value_t = 256)]
    pub box_side: usize,
    #[arg(long, default_value_t = 32)]
    pub table_samples: u64,
    #[arg(long, default_value = ".epichaos-cache")]
    pub cache_dir: PathBuf,
    #[arg(long, default_value_t = epichaos::dynsys::lattice::P_C_SQUARE)]
    pub p_c: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct OrbitArgs {
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p0: f64,
    #[arg(long, default_value_t = 550)]
    pub k_max: usize,
    #[arg(long, value_enum, default_value_t = MapKind::Tree)]
    pub map: MapKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub lattice: LatticeArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct BifurcateArgs {
    #[arg(long, default_value_t = 1.0)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 401)]
    pub n_betas: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p0: f64,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 50)]
    pub keep: usize,
    #[arg(long, value_enum, default_value_t = MapKind::Tree)]
    pub map: MapKind,
    #[command(flatten)]
    #[serde(flatten)]
    pub lattice: LatticeArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyArgs {
    /// Defaults to 2·log 2 + 1e-3.
    #[arg(long)]
    pub beta_lo: Option<f64>,
    /// Above 2.48 the sweep runs in scan-only mode with no certificate.
    #[arg(long, default_value_t = 2.48)]
    pub beta_hi: f64,
    /// Steps below 1e-3 need --long.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Exit with status 2 unless the certificate holds.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct LiyorkeArgs {
    #[arg(long)]
    pub beta: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ThetaTableArgs {
    #[arg(long, default_value_t = 2)]
    pub dimension: usize,
    #[arg(long, default_value_t = 256)]
    pub box_side: usize,
    #[arg(long, default_value_t = 32)]
    pub n_samples: u64,
    #[arg(long, default_value = "wrapping")]
    pub criterion: String,
    /// `default`, `lo:hi:n`, or a comma-separated list of densities.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Threshold around which the default grid is refined.
    #[arg(long, default_value_t = epichaos::dynsys::lattice::P_C_SQUARE)]
    pub p_c: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Rrg,
    Torus,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DispersalKind {
    Global,
    Radius,
}

#[derive(Args, Debug, Serialize)]
pub struct SimArgs {
    #[arg(long, value_enum, default_value_t = TopologyKind::Torus)]
    pub topology: TopologyKind,
    /// Number of sites of the random 3-regular graph.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 500)]
    pub side: usize,
    #[arg(long, default_value_t = 2.25)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = DispersalKind::Radius)]
    pub dispersal: DispersalKind,
    /// Dispersal radius (sup norm).
    #[arg(long, default_value_t = 50)]
    pub r: usize,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Ignore infections arriving from farther than this graph distance.
    #[arg(long)]
    pub range_cap: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub p0: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct SimCmdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Also record the density after each growing season.
    #[arg(long)]
    pub record_half: bool,
    /// Write (rho_k, rho_k+1) pairs to <stem>.scatter.csv.
    #[arg(long)]
    pub scatter: bool,
    /// Write local-density statistics over this radius to <stem>.field.csv.
    #[arg(long)]
    pub field_radius: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    Pgm,
    Rle,
}

#[derive(Args, Debug, Serialize)]
pub struct SnapshotArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    /// Time step of the snapshot.
    #[arg(long, default_value_t = 200)]
    pub at: usize,
    #[arg(long, value_enum, default_value_t = FormatKind::Pgm)]
    pub format: FormatKind,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Parameter(_) | Error::Config(_) => 1,
        Error::Numerical(_) | Error::Table(_) | Error::InsufficientData(_) | Error::RetryBudget { .. } => 2,
        Error::Io(_) | Error::Json(_) | Error::Format(_) => 3,
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::merge(argv, &Command::NAMES) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if matches!(e, Error::Io(_)) { 3 } else { 1 });
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let recorded: Vec<String> = strip_config(&argv)
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match commands::execute(&cli, recorded) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The effective command line without `--config`, whose entries are
/// already inlined.
fn strip_config(argv: &[OsString]) -> Vec<OsString> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
            continue;
        }
        let s = a.to_string_lossy();
        if s == "--config" {
            skip = true;
            continue;
        }
        if s.starts_with("--config=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}
