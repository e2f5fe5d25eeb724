use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
name = "small-blocks"
seed = 3

[kernels]
V = "log"
W = "reglog(0.2)"

[initial]
kind = "blocks"
n = 20
placement = "random"

[[initial.blocks]]
charge = 1
lo = -1.0
hi = 0.0
mass = 0.5
profile = "uniform"

[[initial.blocks]]
charge = -1
lo = 0.0
hi = 1.0
mass = 0.5
profile = "uniform"

[sim]
T = 0.2
record_every = 0.05

[converge]
n_list = [8, 16, 32, 64]
"#;

fn annihilate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_annihilate")).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_trajectory_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let out = dir.path().join("run");
    let res = annihilate(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header = traj.lines().next().unwrap();
    assert!(header.starts_with("t,"), "{header}");
    assert!(traj.lines().count() > 1);
    for f in ["events.json", "measures.csv", "distances.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
}

#[test]
fn converge_writes_one_row_per_particle_count() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let out = dir.path().join("conv");
    let res = annihilate(&["converge", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut rdr = csv::Reader::from_path(out.join("convergence.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().get(0), Some("n"));
    let ns: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(ns, ["8", "16", "32", "64"]);
}

#[test]
fn same_seed_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let res = annihilate(&["run", "--scenario", &sc, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(res.status.success());
        fs::read(out.join("trajectory.csv")).unwrap()
    };
    let a = read("a", "5");
    let b = read("b", "5");
    let c = read("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn validate_and_bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    assert!(annihilate(&["validate", "--scenario", &sc]).status.success());
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("reglog(0.2)", "log")).unwrap();
    let res = annihilate(&["validate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn continuum_writes_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let out = dir.path().join("cont");
    let res = annihilate(&["continuum", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("continuum_0000.csv").exists());
    let rows = csv::Reader::from_path(out.join("continuum_summary.csv")).unwrap().records().count();
    assert!(rows >= 2);
}
