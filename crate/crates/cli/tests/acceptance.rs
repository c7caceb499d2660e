//! Acceptance checks. Prints one PASS/FAIL line per criterion. The process
//! exits non-zero on a failure only when `ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::time::Instant;

use annealctl::{commands, ExperimentConfig};
use sqa_core::exact::{config_index, gibbs_distribution, total_variation};
use sqa_core::flow::{integrate, relax_eps};
use sqa_core::glauber::{init_config, Engine};
use sqa_core::rng::{stream, Stream};
use sqa_core::statics::{ansatz_xy, log_2cosh, partition_noninteracting_trotter};
use sqa_core::{
    hetero_moments, moments, rhs, solve_m, xi_exact, xi_expansion, FlowKind, InitSpec, ModelParams,
};

struct Check {
    pass: bool,
    detail: String,
}

fn criterion(n: usize, name: &str, budget_s: Option<f64>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let c = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = budget_s.is_none_or(|b| secs < b);
    let pass = c.pass && in_time;
    let budget = budget_s.map(|b| format!(" (budget {b} s)")).unwrap_or_default();
    println!(
        "{} criterion {n} [{name}]: {}; {secs:.2} s{budget}",
        if pass { "PASS" } else { "FAIL" },
        c.detail
    );
    pass
}

fn reference(h: f64, slices: usize) -> ModelParams {
    ModelParams::new(1, slices, 2.0, 0.5, h, 1.0, 1.0).unwrap()
}

struct Xorshift(u64);

impl Xorshift {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        lo + (hi - lo) * (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// `(<s_q>, <s_q s_q+1>, <s_q-1 s_q+1>, log Z)` of a periodic chain by summing all `2^M` states.
fn enumerate(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let m = xs.len();
    let spin = |bits: usize, k: usize| if bits >> (k % m) & 1 == 1 { 1.0 } else { -1.0 };
    let energy = |bits: usize| (0..m).map(|k| xs[k] * spin(bits, k) + ys[k] * spin(bits, k) * spin(bits, k + 1)).sum::<f64>();
    let top = (0..1 << m).map(energy).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut mag, mut bond, mut next) = (0.0, vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for bits in 0..1 << m {
        let w = (energy(bits) - top).exp();
        z += w;
        for k in 0..m {
            mag[k] += w * spin(bits, k);
            bond[k] += w * spin(bits, k) * spin(bits, k + 1);
            next[k] += w * spin(bits, k + m - 1) * spin(bits, k + 1);
        }
    }
    for v in mag.iter_mut().chain(&mut bond).chain(&mut next) {
        *v /= z;
    }
    (mag, bond, next, top + z.ln())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn trotter_exactness() -> Check {
    let exact = log_2cosh(1.0);
    let worst = (2..=512)
        .map(|m| (partition_noninteracting_trotter(m, 2.0, 0.5).unwrap() - exact).abs())
        .fold(0.0, f64::max);
    Check { pass: worst < 1e-10, detail: format!("max |log Z_M/N - log 2cosh 1| over M = 2..512 is {worst:.2e}") }
}

fn chain_oracle() -> Check {
    let mut d = Xorshift(0x9E37_79B9_7F4A_7C15);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let m = 3 + trial % 10;
        let (x, y) = (d.uniform(-2.0, 2.0), d.uniform(-1.5, 2.5));
        let got = moments(x, y, m).unwrap();
        let (mag, bond, next, log_z) = enumerate(&vec![x; m], &vec![y; m]);
        worst = worst
            .max((got.m1 - mag[0]).abs())
            .max((got.c12 - bond[0]).abs())
            .max((got.c13 - next[1]).abs())
            .max((got.log_z - log_z).abs());

        let xs: Vec<f64> = (0..m).map(|_| d.uniform(-2.0, 2.0)).collect();
        let ys: Vec<f64> = (0..m).map(|_| d.uniform(-1.5, 2.5)).collect();
        let got = hetero_moments(&xs, &ys).unwrap();
        let (mag, bond, next, log_z) = enumerate(&xs, &ys);
        worst = worst
            .max(max_diff(&got.m, &mag))
            .max(max_diff(&got.bond, &bond))
            .max(max_diff(&got.next, &next))
            .max((got.log_z - log_z).abs());
    }
    Check { pass: worst < 1e-10, detail: format!("max error over 100 homogeneous + 100 heterogeneous draws, M = 3..12: {worst:.2e}") }
}

fn gibbs_stationarity() -> Check {
    let p = ModelParams::new(3, 4, 1.0, 1.0, 0.2, 1.0, 1.0).unwrap();
    let exact = gibbs_distribution(&p).unwrap();
    let cfg = init_config(&InitSpec::Random, &p, &mut stream(11, Stream::Init)).unwrap();
    let mut engine = Engine::new(p, cfg, stream(11, Stream::Dynamics)).unwrap();
    engine.advance(100_000);
    let mut state = config_index(engine.config());
    let mut counts = vec![0u64; exact.len()];
    let total = 10_000_000u64;
    for _ in 0..total {
        if let Some(flat) = engine.attempt() {
            state ^= 1 << flat;
        }
        counts[state as usize] += 1;
    }
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let tv = total_variation(&empirical, &exact);
    Check { pass: tv < 0.02, detail: format!("N = 3, M = 4, 1e7 attempts: TV = {tv:.4}") }
}

fn statics_dynamics_link() -> Check {
    let residual = |m: usize| {
        let p = reference(0.5, m);
        let m_star = solve_m(&p).m();
        let (x, y) = ansatz_xy(&p, m_star);
        let mo = moments(x, y, m).unwrap();
        let out = rhs(FlowKind::Ferro, &[mo.m1, mo.c12], &p).unwrap();
        out[0].abs().max(out[1].abs())
    };
    let r: Vec<f64> = [12, 48, 192].iter().map(|&m| residual(m)).collect();
    let p = reference(0.5, 12);
    let slow = rhs(FlowKind::Slow, &[solve_m(&p).m()], &p).unwrap()[0].abs();
    let pass = r[2] < r[1] / 3.0 && r[1] / 3.0 < r[0] / 9.0 && slow < 1e-10;
    Check {
        pass,
        detail: format!(
            "ferro residual at M = 12, 48, 192: {:.3e}, {:.3e}, {:.3e}; slow rhs at root {slow:.1e}",
            r[0], r[1], r[2]
        ),
    }
}

fn correlator_expansion(h: f64) -> (bool, Vec<f64>) {
    let mut scaled = Vec::new();
    let mut pass = true;
    for m in [48usize, 192, 768] {
        let p = reference(h, m);
        let m_star = solve_m(&p).m();
        let (x, y) = ansatz_xy(&p, m_star);
        let got = m as f64 * (1.0 - moments(x, y, m).unwrap().c13);
        let r = (p.h + p.j0 * m_star).hypot(p.gamma);
        let want = 4.0 * p.beta * p.gamma * p.gamma * (p.beta * r).tanh() / r;
        let rel = (got / want - 1.0).abs();
        pass &= rel < 5.0 / m as f64;
        scaled.push(rel * m as f64);
    }
    (pass, scaled)
}

fn correlator() -> Check {
    let (pass, scaled) = correlator_expansion(0.1);
    let (_, other) = correlator_expansion(0.5);
    Check {
        pass,
        detail: format!(
            "h = 0.1: M * relative error at M = 48, 192, 768 is {:.3}, {:.3}, {:.3} (< 5); h = 0.5 for reference: {:.3}, {:.3}, {:.3}",
            scaled[0], scaled[1], scaled[2], other[0], other[1], other[2]
        ),
    }
}

fn xi_check() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (u, v) in [(1.0, 1.0), (0.3, 1.0)] {
        for ell in [1usize, 2] {
            let scaled: Vec<f64> = [64usize, 128, 256, 512, 1024]
                .iter()
                .map(|&m| (xi_exact(u, v, m, ell) - xi_expansion(u, v, m, ell)).abs() * (m as f64).powi(3))
                .collect();
            let hi = scaled.iter().copied().fold(0.0, f64::max);
            let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
            pass &= lo > 0.0 && hi / lo < 2.0;
            parts.push(format!("(u, v, l) = ({u}, {v}, {ell}): M^3 |diff| in [{lo:.4}, {hi:.4}]"));
        }
    }
    Check { pass, detail: parts.join("; ") }
}

fn ensemble_vs_theory() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "model.N = 2000\nmodel.T = 0.5\nmodel.gamma = 0.5\nmodel.h = 0.5\nmodel.J0 = 1\nmodel.tau = 1/M^2\n\
         run.kind = compare\nrun.t_end = 2\nrun.record_dt = 0.05\nrun.init = slice_replicated\nrun.m0 = 0\n\
         run.seeds = 1,2,3,4,5,6,7,8\nrun.M_list = 12,48\noutput.dir = {}\n",
        dir.path().display()
    );
    let cfg = ExperimentConfig::parse(&text, Path::new("ensemble.cfg")).unwrap();
    let s = commands::compare(&cfg).unwrap();
    let collapse_ok = s.collapse < 0.05;
    let accuracy_ok = s.per_m.iter().all(|p| p.sup_theory < 0.08);
    let ranking_ok = s.per_m.iter().all(|p| p.sup_theory <= p.sup_approx);
    let per_m: Vec<String> = s
        .per_m
        .iter()
        .map(|p| format!("M = {}: theory {:.4}, approx {:.4}", p.slices, p.sup_theory, p.sup_approx))
        .collect();
    Check {
        pass: collapse_ok && accuracy_ok && ranking_ok,
        detail: format!(
            "(a) collapse {:.4} < 0.05 {}; (b,c) {} [accuracy {}, ranking {}]",
            s.collapse,
            collapse_ok,
            per_m.join(", "),
            accuracy_ok,
            ranking_ok
        ),
    }
}

fn slice_symmetry() -> Check {
    let n = 12;
    let p = reference(0.5, n);
    let mut y0 = vec![0.2; n];
    y0.extend(vec![0.5; n]);
    let traj = integrate(FlowKind::FerroSlice, &y0, &p, 10.0, 0.05).unwrap();
    let mut spread = 0.0f64;
    for r in &traj.records {
        for half in [&r.state[..n], &r.state[n..]] {
            let mean = half.iter().sum::<f64>() / n as f64;
            spread = spread.max(half.iter().fold(0.0, |acc, v| acc.max((v - mean).abs())));
        }
    }
    Check {
        pass: spread < 1e-9 && traj.last().t >= 10.0 - 1e-12,
        detail: format!("M = 12, t in [0, 10]: max slice spread {spread:.2e} (m(10) = {:.6})", traj.last().m),
    }
}

fn relaxation_scaling() -> Check {
    let rates: Vec<f64> = [12usize, 48, 192]
        .iter()
        .map(|&m| relax_eps(FlowKind::Fields, 0.3, &reference(0.1, m)).unwrap().1[0].abs())
        .collect();
    let ratios = [rates[0] / rates[1], rates[1] / rates[2]];
    let pass = ratios.iter().all(|r| (r / 16.0 - 1.0).abs() < 0.15);
    Check { pass, detail: format!("|dm/dt| ratios per 4x M: {:.3}, {:.3} (16 +- 15%)", ratios[0], ratios[1]) }
}

fn main() {
    let results = [
        criterion(1, "Trotter exactness", Some(1.0), trotter_exactness),
        criterion(2, "chain moments vs enumeration", Some(10.0), chain_oracle),
        criterion(3, "Gibbs stationarity", Some(30.0), gibbs_stationarity),
        criterion(4, "statics-dynamics link", Some(5.0), statics_dynamics_link),
        criterion(5, "correlator expansion", Some(5.0), correlator),
        criterion(6, "Xi expansion", Some(1.0), xi_check),
        criterion(7, "ensemble vs slow flow", None, ensemble_vs_theory),
        criterion(8, "slice-symmetry preservation", None, slice_symmetry),
        criterion(9, "relaxation scaling", None, relaxation_scaling),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
