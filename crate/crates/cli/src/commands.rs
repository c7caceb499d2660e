use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sqa_core::flow::integrate_recorded;
use sqa_core::statics::{finite_m_magnetization, solve_m, toeplitz_spectrum, EquilibriumRoot};
use sqa_core::{run, AvgObservables, Error as CoreError, FlowKind, FlowTrajectory, InitSpec, ModelParams, SimSpec, Trajectory};

use crate::compare;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{columns_csv, flow_csv, sim_csv, write_json, write_text};

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'static str,
    config: Value,
    runs: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    runs: T,
    failure: Option<String>,
) -> Result<PathBuf> {
    let path = dir.join(format!("{command}.json"));
    let manifest = Manifest { command, version: env!("CARGO_PKG_VERSION"), config: cfg.to_json(), runs, failure };
    write_json(&path, &manifest)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRecord {
    #[serde(rename = "M")]
    pub slices: usize,
    pub seed: u64,
    pub files: Vec<String>,
    pub params: ModelParams,
    pub init: InitSpec,
    pub initial: AvgObservables,
    pub attempts: u64,
    pub accepted: u64,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct SimRun {
    pub record: SimRecord,
    pub trajectory: Trajectory,
}

fn sim_spec(cfg: &ExperimentConfig, slices: usize, seed: u64) -> Result<SimSpec> {
    let mut spec = SimSpec::new(cfg.params(slices)?, cfg.run.t_end, cfg.record_dt(), seed, cfg.init_spec()?);
    spec.max_attempts = cfg.run.max_attempts;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

type Outcome = (std::result::Result<Trajectory, CoreError>, f64);

fn run_one(spec: &SimSpec) -> Outcome {
    let start = Instant::now();
    let out = run(spec);
    (out, start.elapsed().as_secs_f64())
}

/// Runs every `(M, seed)` pair on a pool of worker threads, then writes one
/// trajectory file per pair and the `simulate.json` manifest.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<SimRun>> {
    if cfg.run.seeds.is_empty() {
        return Err(CliError::Config("run.seeds must list at least one seed for simulate".into()));
    }
    let mut specs = Vec::new();
    for &m in &cfg.run.m_list {
        for &seed in &cfg.run.seeds {
            specs.push(sim_spec(cfg, m, seed)?);
        }
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(specs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..specs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(i) else { break };
                let out = run_one(spec);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let dir = &cfg.output.dir;
    let mut runs = Vec::new();
    let mut failure = None;
    for (spec, slot) in specs.iter().zip(results.into_inner().unwrap()) {
        let (result, wall) = slot.expect("every job ran");
        let (traj, error) = match result {
            Ok(t) => (t, None),
            Err(CoreError::Truncated { partial, .. }) => {
                let msg = format!("truncated after {} attempts (run.max_attempts)", partial.meta.attempts);
                (*partial, Some(msg))
            }
            Err(e) => return Err(e.into()),
        };
        let stem = format!("sim_M{}_seed{}", spec.params.slices, spec.seed);
        let mut files = Vec::new();
        if cfg.output.format.csv() {
            files.push(format!("{stem}.csv"));
            write_text(&dir.join(&files[files.len() - 1]), &sim_csv(&traj))?;
        }
        if cfg.output.format.json() {
            files.push(format!("{stem}.json"));
            write_json(&dir.join(&files[files.len() - 1]), &traj)?;
        }
        if let Some(msg) = &error {
            failure.get_or_insert_with(|| format!("M = {}, seed = {}: {msg}", spec.params.slices, spec.seed));
        }
        let record = SimRecord {
            slices: spec.params.slices,
            seed: spec.seed,
            files,
            params: spec.params.clone(),
            init: spec.init,
            initial: traj.meta.initial,
            attempts: traj.meta.attempts,
            accepted: traj.meta.accepted,
            wall_time_s: wall,
            error,
        };
        runs.push(SimRun { record, trajectory: traj });
    }
    let records: Vec<&SimRecord> = runs.iter().map(|r| &r.record).collect();
    write_manifest(dir, "simulate", cfg, &records, failure.clone())?;
    match failure {
        Some(msg) => Err(CliError::Incomplete(msg)),
        None => Ok(runs),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRecordInfo {
    #[serde(rename = "M")]
    pub slices: usize,
    pub kind: FlowKind,
    pub file: String,
    pub params: ModelParams,
    pub initial_state: Vec<f64>,
    pub dt: f64,
    pub steps_recorded: usize,
    pub advisories: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn initial_vector(cfg: &ExperimentConfig, kind: FlowKind, slices: usize) -> Result<Vec<f64>> {
    let (m, eps) = cfg.initial_state()?;
    Ok(match kind.dim(slices) {
        1 => vec![m],
        2 => vec![m, eps],
        _ => {
            let mut v = vec![m; slices];
            v.extend(std::iter::repeat_n(eps, slices));
            v
        }
    })
}

fn run_flows(cfg: &ExperimentConfig, command: &str, kinds: &[FlowKind]) -> Result<Vec<FlowTrajectory>> {
    let dir = &cfg.output.dir;
    let mut infos = Vec::new();
    let mut trajs = Vec::new();
    let mut failure: Option<CliError> = None;
    'outer: for &slices in &cfg.run.m_list {
        let params = cfg.params(slices)?;
        for &kind in kinds {
            let y0 = initial_vector(cfg, kind, slices)?;
            let dt = cfg.flow_dt(kind, slices);
            let stem = if command == "drt" {
                format!("drt_{}_M{slices}", kind.name())
            } else {
                format!("{}_M{slices}", kind.name().replace("slow", "slowflow"))
            };
            let file = format!("{stem}.csv");
            let (traj, error) = match integrate_recorded(kind, &y0, &params, cfg.run.t_end, dt, Some(cfg.record_dt())) {
                Ok(t) => (t, None),
                Err(CoreError::Flow { t, partial, source }) => {
                    let msg = format!("closure failure at t = {t}: {source}");
                    (*partial, Some((msg, *source)))
                }
                Err(e) => return Err(e.into()),
            };
            write_text(&dir.join(&file), &flow_csv(&traj))?;
            if cfg.output.format.json() {
                write_json(&dir.join(format!("{stem}.json")), &traj)?;
            }
            infos.push(FlowRecordInfo {
                slices,
                kind,
                file,
                params: params.clone(),
                initial_state: y0,
                dt: traj.dt,
                steps_recorded: traj.records.len(),
                advisories: traj.advisories.clone(),
                error: error.as_ref().map(|(m, _)| m.clone()),
            });
            trajs.push(traj);
            if let Some((_, e)) = error {
                failure = Some(CliError::Numerical(e));
                break 'outer;
            }
        }
    }
    let msg = failure.as_ref().map(|e| e.to_string());
    write_manifest(dir, command, cfg, &infos, msg)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(trajs),
    }
}

/// Integrates `run.flow` (default `ferro`) for each M.
pub fn drt(cfg: &ExperimentConfig) -> Result<Vec<FlowTrajectory>> {
    run_flows(cfg, "drt", &[cfg.run.flow])
}

/// Integrates the slow flow for each M, and its approximate variant when
/// `approx` is set.
pub fn slowflow(cfg: &ExperimentConfig, approx: bool) -> Result<Vec<FlowTrajectory>> {
    let kinds: &[FlowKind] = if approx { &[FlowKind::Slow, FlowKind::SlowApprox] } else { &[FlowKind::Slow] };
    run_flows(cfg, "slowflow", kinds)
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticsAtM {
    #[serde(rename = "M")]
    pub slices: usize,
    pub finite_m_magnetization: f64,
    pub max_criterion: f64,
    pub symmetric_stable: bool,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticsReport {
    pub beta: f64,
    pub gamma: f64,
    pub h: f64,
    pub j0: f64,
    pub roots: Vec<EquilibriumRoot>,
    pub physical: usize,
    pub m: f64,
    pub f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_m: Option<f64>,
    pub slices: Vec<StaticsAtM>,
}

pub fn statics(cfg: &ExperimentConfig) -> Result<StaticsReport> {
    let base = cfg.params(cfg.run.m_list[0])?;
    let eq = solve_m(&base);
    let closed_form_m = (base.j0 == 0.0).then(|| {
        let r = base.h.hypot(base.gamma);
        if r == 0.0 {
            0.0
        } else {
            base.h / r * (base.beta * r).tanh()
        }
    });
    let mut slices = Vec::new();
    for &m in &cfg.run.m_list {
        let p = cfg.params(m)?;
        let bif = toeplitz_spectrum(&p, eq.m());
        slices.push(StaticsAtM {
            slices: m,
            finite_m_magnetization: finite_m_magnetization(&p, eq.m()),
            max_criterion: bif.max_criterion,
            symmetric_stable: bif.symmetric_stable,
            a: bif.a,
        });
    }
    let report = StaticsReport {
        beta: base.beta,
        gamma: base.gamma,
        h: base.h,
        j0: base.j0,
        roots: eq.roots.clone(),
        physical: eq.physical,
        m: eq.m(),
        f: eq.f(),
        closed_form_m,
        slices,
    };
    write_manifest(&cfg.output.dir, "statics", cfg, &report, None)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareAtM {
    #[serde(rename = "M")]
    pub slices: usize,
    pub seeds: usize,
    pub sup_theory: f64,
    pub sup_approx: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub per_m: Vec<CompareAtM>,
    pub collapse: f64,
    pub notes: Vec<String>,
    pub grid: Vec<f64>,
    pub sim_mean: Vec<Vec<f64>>,
    pub theory: Vec<Vec<f64>>,
    pub approx: Vec<Vec<f64>>,
}

/// Simulation ensemble means against the slow flow and its approximation,
/// all resampled to the `record_dt` grid.
pub fn compare(cfg: &ExperimentConfig) -> Result<CompareSummary> {
    let runs = simulate(cfg)?;
    let flows = slowflow(cfg, true)?;
    let grid = compare::grid(cfg.run.t_end, cfg.record_dt());
    let mut notes = Vec::new();
    let mut summary =
        CompareSummary { per_m: Vec::new(), collapse: 0.0, notes: Vec::new(), grid: grid.clone(), sim_mean: Vec::new(), theory: Vec::new(), approx: Vec::new() };
    for &slices in &cfg.run.m_list {
        let mut curves = Vec::new();
        for r in runs.iter().filter(|r| r.record.slices == slices) {
            let t = &r.trajectory.times;
            let mismatch = compare::grid_mismatch(t, &grid);
            if mismatch > 1e-9 {
                notes.push(format!(
                    "M = {slices}, seed = {}: sample times off-grid by up to {mismatch:.3e} of record_dt; resampled",
                    r.record.seed
                ));
            }
            let m: Vec<f64> = r.trajectory.states.iter().map(|o| o.m).collect();
            curves.push(compare::resample(t, &m, &grid));
        }
        let mean = compare::ensemble_mean(&curves);
        let curve = |kind: FlowKind| {
            let f = flows.iter().find(|f| f.kind == kind && f.params.slices == slices).expect("flow was integrated");
            compare::resample(&f.times(), &f.magnetization(), &grid)
        };
        let (theory, approx) = (curve(FlowKind::Slow), curve(FlowKind::SlowApprox));
        summary.per_m.push(CompareAtM {
            slices,
            seeds: curves.len(),
            sup_theory: compare::sup_norm(&mean, &theory),
            sup_approx: compare::sup_norm(&mean, &approx),
        });
        summary.sim_mean.push(mean);
        summary.theory.push(theory);
        summary.approx.push(approx);
    }
    summary.collapse = compare::collapse(&summary.sim_mean);
    summary.notes = notes;

    let mut header = vec!["t".to_string()];
    let mut columns = vec![grid];
    for (prefix, set) in [("sim", &summary.sim_mean), ("theory", &summary.theory), ("approx", &summary.approx)] {
        for (m, col) in cfg.run.m_list.iter().zip(set) {
            header.push(format!("{prefix}_M{m}"));
            columns.push(col.clone());
        }
    }
    write_text(&cfg.output.dir.join("compare.csv"), &columns_csv(&header, &columns))?;
    #[derive(Serialize)]
    struct Brief<'a> {
        per_m: &'a [CompareAtM],
        collapse: f64,
        notes: &'a [String],
    }
    let brief = Brief { per_m: &summary.per_m, collapse: summary.collapse, notes: &summary.notes };
    write_manifest(&cfg.output.dir, "compare_summary", cfg, &brief, None)?;
    Ok(summary)
}
