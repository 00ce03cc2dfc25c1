use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epichaos"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    fs::remove_dir_all(&dir).ok();
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn csv(text: &str) -> (String, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|x| x.parse::<f64>().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

fn stdout_csv(args: &[&str]) -> (String, Vec<Vec<f64>>) {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    csv(&String::from_utf8(o.stdout).unwrap())
}

#[test]
fn orbit_stays_in_trapping_interval() {
    let beta = format!("{}", 2.0 * 3f64.ln());
    let (header, rows) = stdout_csv(&["orbit", "--beta", &beta, "--p0", "0.1", "--k-max", "550"]);
    assert_eq!(header, "k,value");
    assert_eq!(rows.len(), 551);
    for r in &rows[501..] {
        assert!(r[1] >= 1.0 / 12.0 - 1e-12 && r[1] <= 0.5 + 1e-12, "{r:?}");
    }
}

#[test]
fn subcritical_orbit_decreases() {
    let (_, rows) = stdout_csv(&["orbit", "--beta", "0.9", "--p0", "0.5", "--k-max", "40"]);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
}

#[test]
fn zero_beta_is_a_usage_error() {
    let o = run(&["orbit", "--beta", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert!(o.stdout.is_empty());
}

#[test]
fn bifurcate_columns() {
    let (header, rows) = stdout_csv(&[
        "bifurcate",
        "--beta-min",
        "1.1",
        "--beta-max",
        "1.3",
        "--n-betas",
        "5",
    ]);
    assert_eq!(header, "beta,value");
    assert_eq!(rows.len(), 250);
    for col in rows.chunks(50) {
        let lo = col.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
        let hi = col.iter().map(|r| r[1]).fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-6, "beta {}: {}", col[0][0], hi - lo);
    }
    let bc = format!("{}", 2.0 * 2f64.ln());
    let (_, rows) = stdout_csv(&[
        "bifurcate",
        "--beta-min",
        &bc,
        "--beta-max",
        &bc,
        "--n-betas",
        "1",
    ]);
    assert!(rows.iter().all(|r| r[1] <= 0.5 + 1e-9));
    assert_eq!(
        run(&["bifurcate", "--beta-min", "2", "--beta-max", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn certify_desk_run() {
    let dir = scratch("certify");
    let out = dir.join("cert.json");
    let o = run(&["certify", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    // at step 1e-3 the Lipschitz margin cannot close
    assert_eq!(report["certified"], Value::Bool(false));
    assert_eq!(run(&["certify", "--strict"]).status.code(), Some(2));
    let per_beta = report["per_beta"].as_array().unwrap();
    assert!(per_beta.len() > 700);
    assert!(per_beta.iter().all(|b| b["infimum"].as_f64().unwrap() > 1.002));
    assert!(dir.join("cert.manifest.json").exists());
}

#[test]
fn certify_scan_mode_has_no_certificate() {
    let o = run(&[
        "certify",
        "--beta-lo",
        "2.5",
        "--beta-hi",
        "2.6",
        "--step",
        "0.01",
        "--strict",
    ]);
    assert!(o.status.success());
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.get("certified").is_none());
    assert_eq!(run(&["certify", "--step", "1e-4"]).status.code(), Some(1));
}

#[test]
fn liyorke_report() {
    let o = run(&["liyorke", "--beta", "2.25"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["landmarks", "witness", "phi"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn theta_table_endpoints_and_monotonicity() {
    let dir = scratch("theta");
    let out = dir.join("theta.csv");
    let o = run(&[
        "theta-table",
        "--box-side",
        "64",
        "--n-samples",
        "8",
        "--grid",
        "0,0.3,0.55,0.62,0.7,0.8,0.9,1",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&fs::read_to_string(&out).unwrap());
    assert_eq!(header, "p,theta_hat,std_err,n_samples");
    assert_eq!(rows[0][1], 0.0);
    assert!((rows.last().unwrap()[1] - 1.0).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    assert!(rows[2][1] < 0.05);
    assert!(rows.iter().all(|r| r[1] <= r[0] + 1e-12));
    assert!(dir.join("theta.json").exists());
    assert_eq!(run(&["theta-table"]).status.code(), Some(1));
    assert_eq!(
        run(&[
            "theta-table",
            "--box-side",
            "4096",
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = scratch("config");
    let conf = dir.join("o.conf");
    fs::write(&conf, "# orbit settings\nbeta = 2.25\nk-max = 7\np0 = 0.2\n").unwrap();
    let (_, rows) = stdout_csv(&["orbit", "--config", conf.to_str().unwrap(), "--k-max", "3"]);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], 0.2);
    fs::write(&conf, "beta\n").unwrap();
    assert_eq!(
        run(&["orbit", "--config", conf.to_str().unwrap()]).status.code(),
        Some(1)
    );
    let missing = dir.join("missing.conf");
    assert_eq!(
        run(&["orbit", "--beta", "2", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

fn rerun_from_manifest(manifest: &Path) -> Output {
    let m: Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    let argv: Vec<String> = m["command_line"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap().to_string())
        .collect();
    bin().args(&argv[1..]).output().unwrap()
}

#[test]
fn manifest_reruns_bit_exactly() {
    let dir = scratch("manifest");
    let out = dir.join("traj.csv");
    let o = run(&[
        "--seed",
        "11",
        "sim",
        "--side",
        "60",
        "--r",
        "3",
        "--alpha",
        "0.01",
        "--k-max",
        "6",
        "--record-half",
        "--scatter",
        "--field-radius",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest_path = dir.join("traj.manifest.json");
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "sim");
    assert_eq!(m["seed"], 11);
    let outputs: Vec<PathBuf> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| PathBuf::from(p.as_str().unwrap()))
        .collect();
    assert_eq!(outputs.len(), 4);
    let before: Vec<Vec<u8>> = outputs.iter().map(|p| fs::read(p).unwrap()).collect();

    let (header, rows) = csv(&String::from_utf8(before[0].clone()).unwrap());
    assert_eq!(header, "k,rho,rho_half");
    assert_eq!(rows.len(), 7);
    let (header, scatter) = csv(&fs::read_to_string(dir.join("traj.scatter.csv")).unwrap());
    assert_eq!(header, "k,rho_k,rho_k1");
    assert_eq!(scatter.len(), 6);
    assert_eq!(scatter[2][2], rows[3][1]);

    let o = rerun_from_manifest(&manifest_path);
    assert!(o.status.success());
    let after: Vec<Vec<u8>> = outputs.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn sim_seeds_differ_and_thread_count_does_not_matter() {
    let base = [
        "sim",
        "--topology",
        "rrg",
        "--n",
        "3000",
        "--dispersal",
        "global",
        "--k-max",
        "5",
    ];
    let a = run(&[&["--seed", "1", "--threads", "1"], &base[..]].concat());
    let b = run(&[&["--seed", "1", "--threads", "4"], &base[..]].concat());
    let c = run(&[&["--seed", "2"], &base[..]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn snapshot_formats() {
    let o = run(&[
        "snapshot", "--side", "40", "--r", "2", "--at", "3", "--format", "pgm",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P2"));
    assert_eq!(lines.next(), Some("40 40"));
    assert_eq!(lines.next(), Some("1"));
    let cells: Vec<&str> = lines.flat_map(|l| l.split_whitespace()).collect();
    assert_eq!(cells.len(), 1600);
    assert!(cells.iter().all(|c| *c == "0" || *c == "1"));

    let o = run(&[
        "snapshot", "--side", "40", "--r", "2", "--at", "3", "--format", "rle",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("x = 40, y = 40"));
    let o = run(&["snapshot", "--dim", "3", "--side", "10", "--r", "2", "--at", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn orbit_csv_round_trips_through_f64() {
    let (_, rows) = stdout_csv(&["orbit", "--beta", "2.25", "--k-max", "30"]);
    for w in rows.windows(2) {
        let q = 1.0 - (-2.25 * w[0][1]).exp();
        let g = if q <= 0.5 { q } else { (1.0 - q).powi(3) / (q * q) };
        assert!((w[1][1] - g).abs() < 1e-12, "{} vs {g}", w[1][1]);
    }
}
