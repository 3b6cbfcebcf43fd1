use std::path::Path;
use std::process::{Command, Output};

use crystalflow_harness::output::{read_snapshot, Manifest};

fn crystalflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crystalflow")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const CONSTANT_PDE: &str = r#"
scenario = "pde"
[parameters]
n_g = 32
epsilon = 1e-3
alpha = 0.5
t_final = 0.01
sample_dt = 0.002
initial = { kind = "constant", value = 0.8 }
control = { kind = "fixed", dt = 1e-4 }
"#;

#[test]
fn constant_pde_has_zero_dissipation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pde.toml", CONSTANT_PDE);
    let out = dir.path().join("out");
    let o = crystalflow(&["pde", "run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut reader = csv::Reader::from_path(out.join("report.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let e_col = headers.iter().position(|h| h == "E").unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert_eq!(row[e_col].parse::<f64>().unwrap(), 0.0);
    }

    let (u, t) = read_snapshot(&out.join("snapshots/u_00005.f64")).unwrap();
    assert_eq!(t, 0.01);
    // The flow starts from u0 + epsilon.
    let (u0, _) = read_snapshot(&out.join("snapshots/u_00000.f64")).unwrap();
    assert!(u0.values().iter().all(|&v| (v - 0.801).abs() <= 1e-12));
    assert!(u.values().iter().zip(u0.values()).all(|(a, b)| (a - b).abs() <= 1e-12 * b));
    let meta = std::fs::read_to_string(out.join("snapshots/u_00005.json")).unwrap();
    assert!(meta.contains("\"N_g\": 32"));

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.scenario, "pde");
    assert_eq!(manifest.config_hash.len(), 64);
    assert!(manifest.outputs.iter().any(|f| f.path == "report.csv"));
    // Atomic writes leave no temporaries behind.
    for entry in std::fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(!name.starts_with(".tmp"), "{name}");
    }
}

const KMC: &str = r#"
scenario = "kmc"
seed = 11
[parameters]
n = 16
beta = 0.5
t_final = 5.0
n_reps = 3
sample_dt = 1.0
rho_evap = 0.05
tau_dep_inv = 0.05
initial = { kind = "cosine", amplitude = 2.0 }
"#;

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "kmc.toml", KMC);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = crystalflow(&["kmc", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b, c) = (run("a", "5"), run("b", "5"), run("c", "6"));
    for file in ["events.ndjson", "snapshots.ndjson", "ensemble.csv"] {
        let fa = std::fs::read(a.join(file)).unwrap();
        assert!(!fa.is_empty());
        assert_eq!(fa, std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_ne!(std::fs::read(a.join("events.ndjson")).unwrap(), std::fs::read(c.join("events.ndjson")).unwrap());
    let first = std::fs::read_to_string(a.join("events.ndjson")).unwrap();
    let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(line["t"].as_f64().unwrap() > 0.0);
    assert!(line["event_kind"].is_string() && line["site"].is_u64());
}

#[test]
fn h_equation_run_feeds_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "h.toml",
        r#"
scenario = "h_equation"
[parameters]
n_g = 64
t_final = 0.002
sample_dt = 0.0001
initial = { kind = "cosine", amplitude = 0.0005 }
control = { kind = "adaptive", tol = 1e-9 }
"#,
    );
    let traj = dir.path().join("traj");
    assert!(crystalflow(&["h-equation", "--config", &cfg, "--out", traj.to_str().unwrap()]).status.success());
    let o = crystalflow(&["spectral", "audit", "--traj", traj.to_str().unwrap(), "--s1", "0", "--s2", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let audit: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(audit["lyapunov"]["binding"], true);
    assert_eq!(audit["lyapunov"]["inequality_holds"], true);
    assert_eq!(audit["lyapunov"]["norm2_nonincreasing"], true);
    assert_eq!(audit["decay"]["envelope_holds"], true);
}

#[test]
fn threshold_prints_twelve_digits() {
    let o = crystalflow(&["spectral", "threshold", "--s", "-1"]);
    assert_eq!(stdout(&o).trim(), "0.693147180560");
    let o = crystalflow(&["spectral", "threshold", "--s", "2"]);
    assert_eq!(stdout(&o).trim(), "0.104835667585");
}

#[test]
fn statmech_table_prints_csv() {
    let o = crystalflow(&["statmech", "table", "--steps", "5", "--u-min", "-0.5", "--u-max", "0.5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u,eta_star,sigma_D,kappa_scaled");
    assert_eq!(lines.len(), 6);
    assert!(lines[3].starts_with("0.0,0.0,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(crystalflow(&["pde", "run"]).status.code(), Some(2));

    let bad = write(dir.path(), "bad.toml", &CONSTANT_PDE.replace("alpha = 0.5", "alpha = 0.5\nwobble = 1"));
    let o = crystalflow(&["pde", "run", "--config", &bad, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wobble"));

    let wrong = write(dir.path(), "wrong.toml", CONSTANT_PDE);
    assert_eq!(crystalflow(&["meso", "run", "--config", &wrong]).status.code(), Some(3));

    let missing = dir.path().join("absent.toml");
    assert_eq!(crystalflow(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(4));

    assert_eq!(crystalflow(&["spectral", "threshold", "--s", "-3"]).status.code(), Some(5));
}
