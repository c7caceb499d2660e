//! Random-sequential Glauber dynamics on the Trotter lattice.
//!
//! Each attempt picks `(i, k)` uniformly among the `N*M` spins and flips it
//! with probability `1/2 [1 - s tanh(beta h_ik)]`; time advances by
//! `tau / (N*M)` per attempt.

use rand::Rng;
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{glauber_rate, local_field_from_counts, AvgObservables, SliceObservables, TrotterConfig};
use crate::params::ModelParams;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "m0", rename_all = "snake_case")]
pub enum InitSpec {
    UniformUp,
    Magnetized(f64),
    SliceReplicated(f64),
    Random,
}

impl InitSpec {
    fn target(&self) -> Option<f64> {
        match *self {
            InitSpec::Magnetized(m0) | InitSpec::SliceReplicated(m0) => Some(m0),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.target() {
            Some(m0) if !(m0.abs() <= 1.0) => Err(Error::invalid(format!("initial magnetization {m0} outside [-1, 1]"))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub params: ModelParams,
    pub t_end: f64,
    pub record_dt: f64,
    pub seed: u64,
    pub init: InitSpec,
    /// Hard cap on flip attempts; exceeding it yields [`Error::Truncated`].
    #[serde(default)]
    pub max_attempts: Option<u64>,
    /// Also record slice-resolved observables.
    #[serde(default)]
    pub record_slices: bool,
}

impl SimSpec {
    pub fn new(params: ModelParams, t_end: f64, record_dt: f64, seed: u64, init: InitSpec) -> Self {
        SimSpec { params, t_end, record_dt, seed, init, max_attempts: None, record_slices: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.record_dt > 0.0 && self.record_dt <= self.t_end) {
            return Err(Error::invalid(format!(
                "record_dt must satisfy 0 < record_dt <= t_end, got {}",
                self.record_dt
            )));
        }
        self.init.validate()
    }

    /// Time per attempted flip, `tau / (N M)`.
    pub fn attempt_time(&self) -> f64 {
        self.params.tau / self.params.spin_count() as f64
    }

    /// Attempt counts at which observables are recorded.
    pub fn record_schedule(&self) -> Vec<u64> {
        let per_time = 1.0 / self.attempt_time();
        let n = (self.t_end / self.record_dt * (1.0 + 1e-12)).floor() as u64;
        let mut marks: Vec<u64> = (0..=n).map(|j| (j as f64 * self.record_dt * per_time).round() as u64).collect();
        let last = (self.t_end * per_time).round() as u64;
        if *marks.last().unwrap() < last && (self.t_end - n as f64 * self.record_dt) > 1e-9 * self.t_end {
            marks.push(last);
        }
        marks.dedup();
        marks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub spec: SimSpec,
    pub initial: AvgObservables,
    pub attempts: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<AvgObservables>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_states: Option<Vec<SliceObservables>>,
    pub meta: TrajectoryMeta,
}

fn bernoulli_spins(n: usize, m0: f64, rng: &mut ChaCha8Rng) -> Vec<i8> {
    let p = (0.5 * (1.0 + m0)).clamp(0.0, 1.0);
    (0..n).map(|_| if rng.random_bool(p) { 1 } else { -1 }).collect()
}

pub fn init_config(spec: &InitSpec, params: &ModelParams, rng: &mut ChaCha8Rng) -> Result<TrotterConfig> {
    spec.validate()?;
    let (n, m) = (params.sites, params.slices);
    let spins = match *spec {
        InitSpec::UniformUp => vec![1; n * m],
        InitSpec::Random => bernoulli_spins(n * m, 0.0, rng),
        InitSpec::Magnetized(m0) => bernoulli_spins(n * m, m0, rng),
        InitSpec::SliceReplicated(m0) => bernoulli_spins(n, m0, rng).repeat(m),
    };
    TrotterConfig::new(n, m, spins)
}

const ACCEPT_BITS: u32 = 53;

/// Acceptance thresholds for every possible local environment. The Glauber
/// rate depends only on `s`, the Trotter-neighbour sum in `{-2, 0, 2}` and
/// the sum of the other `N-1` spins of the slice.
#[derive(Debug, Clone)]
struct RateTable {
    sites: usize,
    thresholds: Vec<u64>,
}

impl RateTable {
    fn new(params: &ModelParams) -> Self {
        let n = params.sites;
        let mut thresholds = vec![0; 2 * 3 * n];
        for (si, s) in [-1i8, 1].into_iter().enumerate() {
            for (ni, nb) in [-2i64, 0, 2].into_iter().enumerate() {
                for o in 0..n {
                    let others = 2 * o as i64 - (n as i64 - 1);
                    let field = local_field_from_counts(others, nb, params);
                    let rate = glauber_rate(s, params.beta * field);
                    let t = (rate * (1u64 << ACCEPT_BITS) as f64).round() as u64;
                    thresholds[(si * 3 + ni) * n + o] = t;
                }
            }
        }
        RateTable { sites: n, thresholds }
    }

    #[inline(always)]
    fn threshold(&self, s: i8, nb: i64, others: i64) -> u64 {
        let si = ((s + 1) >> 1) as usize;
        let ni = (nb + 2) as usize >> 1;
        let o = ((others + self.sites as i64 - 1) >> 1) as usize;
        self.thresholds[(si * 3 + ni) * self.sites + o]
    }
}

/// Stateful single-trajectory engine.
pub struct Engine {
    params: ModelParams,
    config: TrotterConfig,
    table: RateTable,
    rng: ChaCha8Rng,
    attempts: u64,
    accepted: u64,
}

impl Engine {
    pub fn new(params: ModelParams, config: TrotterConfig, rng: ChaCha8Rng) -> Result<Self> {
        if !params.has_finite_bonds() {
            return Err(Error::domain("gamma = 0 makes the Trotter coupling B infinite; rates are degenerate"));
        }
        if config.sites() != params.sites || config.slices() != params.slices {
            return Err(Error::contract("config dimensions do not match params"));
        }
        let table = RateTable::new(&params);
        Ok(Engine { params, config, table, rng, attempts: 0, accepted: 0 })
    }

    pub fn config(&self) -> &TrotterConfig {
        &self.config
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// One attempted flip; returns the flat index if the spin flipped.
    #[inline(always)]
    pub fn attempt(&mut self) -> Option<usize> {
        let n = self.params.sites;
        let m = self.params.slices;
        let r = self.rng.next_u64();
        // multiply-shift: the high word picks the spin, the low word is a
        // fresh uniform for the acceptance test
        let prod = (r as u128) * ((n * m) as u128);
        let flat = (prod >> 64) as usize;
        let u = (prod as u64) >> (64 - ACCEPT_BITS);
        let k = flat / n;
        let i = flat - k * n;
        self.attempts += 1;
        let s = self.config.get(i, k);
        let nb = self.config.get(i, self.config.next_slice(k)) as i64 + self.config.get(i, self.config.prev_slice(k)) as i64;
        let others = self.config.slice_sum(k) - s as i64;
        if u < self.table.threshold(s, nb, others) {
            self.config.flip(i, k);
            self.accepted += 1;
            Some(flat)
        } else {
            None
        }
    }

    pub fn advance(&mut self, count: u64) {
        for _ in 0..count {
            self.attempt();
        }
    }
}

pub fn run(spec: &SimSpec) -> Result<Trajectory> {
    spec.validate()?;
    let params = &spec.params;
    if !params.has_finite_bonds() {
        return Err(Error::domain("gamma = 0 makes the Trotter coupling B infinite; rates are degenerate"));
    }
    let mut init_rng = stream(spec.seed, Stream::Init);
    let config = init_config(&spec.init, params, &mut init_rng)?;
    let initial = config.avg_observables(params)?;
    let mut engine = Engine::new(params.clone(), config, stream(spec.seed, Stream::Dynamics))?;

    let dt_attempt = spec.attempt_time();
    let schedule = spec.record_schedule();
    let mut traj = Trajectory {
        times: Vec::with_capacity(schedule.len()),
        states: Vec::with_capacity(schedule.len()),
        slice_states: spec.record_slices.then(Vec::new),
        meta: TrajectoryMeta { spec: spec.clone(), initial, attempts: 0, accepted: 0 },
    };
    for &mark in &schedule {
        if let Some(limit) = spec.max_attempts {
            if mark > limit {
                engine.advance(limit - engine.attempts());
                traj.meta.attempts = engine.attempts();
                traj.meta.accepted = engine.accepted();
                return Err(Error::Truncated { attempts: engine.attempts(), partial: Box::new(traj) });
            }
        }
        engine.advance(mark - engine.attempts());
        traj.times.push(mark as f64 * dt_attempt);
        traj.states.push(engine.config().avg_observables(params)?);
        if let Some(slices) = traj.slice_states.as_mut() {
            slices.push(engine.config().slice_observables(params)?);
        }
    }
    traj.meta.attempts = engine.attempts();
    traj.meta.accepted = engine.accepted();
    Ok(traj)
}
