use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use annealctl::commands;
use annealctl::compare::{grid, resample, sup_norm};
use annealctl::output::read_csv;
use annealctl::ExperimentConfig;

const BIN: &str = env!("CARGO_BIN_EXE_annealctl");

fn base(extra: &str) -> String {
    format!(
        "model.N = 100\nmodel.T = 0.5\nmodel.gamma = 0.5\nmodel.h = 0.5\nmodel.J0 = 1\nmodel.tau = 1/M^2\n\
         run.t_end = 1\nrun.record_dt = 0.05\nrun.m0 = 0.0\nrun.seeds = 1\nrun.M_list = 3\n{extra}"
    )
}

fn annealctl(dir: &Path, cfg: &str, args: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, cfg).unwrap();
    Command::new(BIN).arg(args[0]).arg("--config").arg(&path).args(&args[1..]).output().unwrap()
}

fn config(dir: &Path, text: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(text, Path::new("test.cfg")).unwrap();
    c.set("output.dir", &dir.to_string_lossy()).unwrap();
    c
}

#[test]
fn smoke_simulate_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let start = Instant::now();
    let o = annealctl(dir.path(), &base(""), &["simulate", "--out", out.to_str().unwrap()]);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elapsed < 1.0, "smoke run took {elapsed} s");
    let (header, cols) = read_csv(&out.join("sim_M3_seed1.csv")).unwrap();
    assert_eq!(header.join(","), "t,m,E,eps");
    assert_eq!(cols[0].len(), 21);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    let run = &manifest["runs"][0];
    assert_eq!(run["attempts"], 100 * 27);
    assert_eq!(run["init"]["mode"], "slice_replicated");
    assert!(run["wall_time_s"].as_f64().is_some());
}

#[test]
fn missing_m0_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = annealctl(dir.path(), &base("").replace("run.m0 = 0.0\n", ""), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.m0"));
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = annealctl(dir.path(), &base("run.tend = 3\n"), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":12: unknown key 'run.tend'"));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    let o = annealctl(dir.path(), &base(""), &["statics", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn manifest_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = base("run.M_list = 3,4\n").replace("run.M_list = 3\n", "");
    let o = annealctl(dir.path(), &cfg, &["simulate", "--out", a.to_str().unwrap(), "--seeds", "7,9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(BIN)
        .args(["simulate", "--json-config", "--config"])
        .arg(a.join("simulate.json"))
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut n = 0;
    for m in [3, 4] {
        for seed in [7, 9] {
            let name = format!("sim_M{m}_seed{seed}.csv");
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
            n += 1;
        }
    }
    assert_eq!(n, 4);
}

#[test]
fn truncation_exits_numerical_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = annealctl(dir.path(), &base("run.max_attempts = 1000\n"), &["simulate", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, cols) = read_csv(&out.join("sim_M3_seed1.csv")).unwrap();
    assert!(cols[0].len() < 21 && !cols[0].is_empty());
    let manifest = fs::read_to_string(out.join("simulate.json")).unwrap();
    assert!(manifest.contains("\"failure\""));
}

#[test]
fn infeasible_flow_start_fails_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let cfg = base("run.eps0 = -0.5\nrun.init = magnetized\n").replace("run.m0 = 0.0", "run.m0 = 0.9");
    let o = annealctl(dir.path(), &cfg, &["drt", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, _) = read_csv(&out.join("drt_ferro_M3.csv")).unwrap();
    assert_eq!(header.join(","), "t,m,E,eps,x,y,C,u,branch_count,residual");
    assert!(fs::read_to_string(out.join("drt.json")).unwrap().contains("\"failure\""));
}

#[test]
fn slowflow_reaches_statics_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &base("").replace("run.t_end = 1", "run.t_end = 20").replace("run.record_dt = 0.05", "run.record_dt = 1"));
    let flows = commands::slowflow(&cfg, true).unwrap();
    let root = commands::statics(&cfg).unwrap().m;
    assert!((root - 0.940475).abs() < 1e-6);
    let slow = flows[0].magnetization();
    assert!((slow.last().unwrap() - root).abs() < 1e-6);
    assert!(slow.windows(2).all(|w| w[1] >= w[0]));
    let (header, _) = read_csv(&dir.path().join("slowflow_approx_M3.csv")).unwrap();
    assert_eq!(header.len(), 10);
}

#[test]
fn drt_approaches_slowflow_with_m() {
    let dir = tempfile::tempdir().unwrap();
    let text = base("").replace("run.M_list = 3", "run.M_list = 12,48");
    let cfg = config(dir.path(), &text);
    let drt = commands::drt(&cfg).unwrap();
    let slow = commands::slowflow(&cfg, false).unwrap();
    let g = grid(1.0, 0.05);
    let on_grid = |t: &sqa_core::FlowTrajectory| resample(&t.times(), &t.magnetization(), &g);
    let d12 = sup_norm(&on_grid(&drt[0]), &on_grid(&slow[0]));
    let d48 = sup_norm(&on_grid(&drt[1]), &on_grid(&slow[1]));
    // O(1/M): the gap shrinks by roughly the ratio of M
    assert!(d12 < 1.0 / 12.0 * 2.0, "d12 = {d12}");
    assert!(d48 < d12 / 2.0, "d12 = {d12}, d48 = {d48}");
}

#[test]
fn statics_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &base(""));
    let r = commands::statics(&cfg).unwrap();
    assert_eq!(r.roots.len(), 1);
    assert!(r.slices[0].symmetric_stable);

    let free = config(dir.path(), &base("").replace("model.J0 = 1", "model.J0 = 0"));
    let r = commands::statics(&free).unwrap();
    let closed = r.closed_form_m.unwrap();
    assert!((closed - r.m).abs() < 1e-10);
    let expect = 0.5 / 0.5f64.hypot(0.5) * (2.0 * 0.5f64.hypot(0.5)).tanh();
    assert!((closed - expect).abs() < 1e-15);
}

#[test]
fn root_count_transition_in_gamma() {
    // h = 0, beta = 2, J0 = 1: ordered while tanh(2 gamma)/gamma > 1, i.e. gamma < ~0.9575
    let dir = tempfile::tempdir().unwrap();
    let count = |gamma: f64| {
        let text = base("").replace("model.h = 0.5", "model.h = 0").replace("model.gamma = 0.5", &format!("model.gamma = {gamma}"));
        let r = commands::statics(&config(dir.path(), &text)).unwrap();
        r.roots.len()
    };
    assert_eq!(count(0.5), 3);
    assert_eq!(count(0.9), 3);
    assert_eq!(count(1.0), 1);
    assert_eq!(count(1.5), 1);
}
