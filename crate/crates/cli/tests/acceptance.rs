//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test --test acceptance`. Every tolerance, size and seed
//! is a constant in this file.

use std::fs;
use std::io::Write;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use linecover::density::INVERSION_TOL;
use linecover::oracle::{certify, random_monotone_state};
use linecover::{
    coverage_phi, coverage_phi_grid, ensemble, g_hessian_min_eig, grad_q, gradient_ratio_check, lyapunov_q,
    optimal_positions, rate_fit, run, theorem_bound, DensityField, InitSpec, NoiseModel, PositionState, Protocol,
    Recording, ScheduleSpec, SimConfig,
};
use linecover_cli::verify::{fuzz_state, reference_fields, reference_noises};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const C1_N: usize = 20;
const C1_ITERS: u64 = 10_000;
const C1_SEED: u64 = 1;
const C1_MEAN_ABS_ERR: f64 = 0.02;
const C1_PHI_FACTOR: f64 = 1.5;
const C1_BUDGET: Duration = Duration::from_secs(5);

fn c1_config(init: InitSpec) -> SimConfig {
    SimConfig {
        n: C1_N,
        iters: C1_ITERS,
        seed: C1_SEED,
        field: DensityField::constant(1.0).unwrap(),
        noise: NoiseModel::uniform(0.5).unwrap(),
        schedule: ScheduleSpec::Hybrid,
        init,
        recording: Recording::Every(1000),
    }
}

fn criterion_1() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (label, init) in [("uniform-random", InitSpec::UniformRandom), ("all-at-one", InitSpec::AllAtOne)] {
        let start = Instant::now();
        let record = run(&c1_config(init)).unwrap();
        let elapsed = start.elapsed();
        let err = record.final_positions.mean_abs_dist(&record.x_star);
        let phi = record.final_row().phi;
        let phi_cap = C1_PHI_FACTOR * record.phi_star;
        let x_star_ok = record
            .x_star
            .positions()
            .iter()
            .enumerate()
            .all(|(i, &x)| (x - (2 * i + 1) as f64 / 40.0).abs() <= 1e-12);
        pass &= x_star_ok && err <= C1_MEAN_ABS_ERR && phi <= phi_cap && elapsed < C1_BUDGET;
        notes.push(format!(
            "{label}: mean |x - x*| = {err:.5} (<= {C1_MEAN_ABS_ERR}), phi = {phi:.5} (<= {phi_cap:.4}), {:.2} s",
            elapsed.as_secs_f64()
        ));
    }
    outcome(pass, notes.join("; "))
}

const C2_N: usize = 5;
const C2_U: usize = 5;
const C2_M: f64 = 0.5;
const C2_ITERS: u64 = 100_000;
const C2_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const C2_PER_DECADE: u32 = 20;
const C2_SE_SLACK: f64 = 2.0;
const C2_BUDGET: Duration = Duration::from_secs(60);
const C3_TAIL: f64 = 0.5;
const C3_SLOPE: (f64, f64) = (-1.3, -0.7);

fn c2_config() -> SimConfig {
    SimConfig {
        n: C2_N,
        iters: C2_ITERS,
        seed: 0,
        field: DensityField::constant(1.0).unwrap(),
        noise: NoiseModel::uniform(C2_M).unwrap(),
        schedule: ScheduleSpec::Theorem { u: C2_U },
        init: InitSpec::UniformRandom,
        recording: Recording::LogSpaced {
            per_decade: C2_PER_DECADE,
        },
    }
}

fn criteria_2_and_3() -> (Outcome, Outcome) {
    let config = c2_config();
    let seeds: Vec<u64> = C2_SEEDS.collect();
    let start = Instant::now();
    let curve = ensemble(&config, &seeds).unwrap();
    let elapsed = start.elapsed();

    let field = &config.field;
    let mut worst: Option<(u64, f64)> = None;
    let mut held = true;
    for p in &curve.points {
        let bound = theorem_bound(C2_N, C2_U, field.rho_max(), C2_M, field.rho_prime_sup(), p.t as f64).unwrap();
        let margin = bound + C2_SE_SLACK * p.stderr - p.mean;
        held &= margin >= 0.0;
        let ratio = p.mean / bound;
        if worst.is_none_or(|(_, r)| ratio > r) {
            worst = Some((p.t, ratio));
        }
    }
    let (worst_t, worst_ratio) = worst.unwrap();
    let c2 = outcome(
        held && elapsed < C2_BUDGET,
        format!(
            "{} recorded t, mean_err <= bound + 2 stderr at all; largest mean_err / bound = {worst_ratio:.3e} at t = {worst_t}; {:.2} s",
            curve.points.len(),
            elapsed.as_secs_f64()
        ),
    );

    let c3 = match rate_fit(&curve.mean_curve(), C3_TAIL) {
        Ok(slope) => outcome(
            (C3_SLOPE.0..=C3_SLOPE.1).contains(&slope),
            format!("tail slope {slope:.4} in [{}, {}]", C3_SLOPE.0, C3_SLOPE.1),
        ),
        Err(e) => outcome(false, e.to_string()),
    };
    (c2, c3)
}

const C4_SIZES: [usize; 4] = [1, 2, 5, 20];
const C4_STEPS: usize = 1_000_000;
/// Steps along one trajectory before a fresh fuzzed state is drawn.
const C4_RESTART: usize = 100;
const C4_MOVE_SLACK: f64 = 1e-12;

fn criterion_4() -> Outcome {
    let fields = reference_fields();
    let noises = reference_noises();
    let mut cases = Vec::new();
    for &n in &C4_SIZES {
        for f in &fields {
            for noise in &noises {
                cases.push((n, Protocol::new(f.clone(), *noise)));
            }
        }
    }
    let per_case = C4_STEPS.div_ceil(cases.len());
    let results: Vec<(usize, Option<String>)> = cases
        .par_iter()
        .enumerate()
        .map(|(ci, (n, protocol))| {
            let mut rng = ChaCha8Rng::seed_from_u64(4_000 + ci as u64);
            let mut x = fuzz_state(*n, &mut rng);
            for step in 0..per_case {
                if step % C4_RESTART == 0 {
                    x = fuzz_state(*n, &mut rng);
                }
                let alpha: f64 = rng.random();
                let g = protocol.stochastic_gradient(&x, &mut rng).g;
                let next = match protocol.apply_gradient(&x, alpha, &g) {
                    Ok(next) => next,
                    Err(e) => return (step + 1, Some(format!("case {ci}, step {step}: {e}"))),
                };
                for k in 0..*n {
                    let here = x.positions()[k];
                    let moved = next.positions()[k] - here;
                    let room = if moved < 0.0 { here - x.left_of(k) } else { x.right_of(k) - here };
                    if moved.abs() > 0.25 * room * (1.0 + C4_MOVE_SLACK) {
                        return (
                            step + 1,
                            Some(format!("case {ci}, step {step}, agent {k}: moved {moved:e} with gap {room:e}")),
                        );
                    }
                }
                x = next;
            }
            (per_case, None)
        })
        .collect();
    let steps: usize = results.iter().map(|r| r.0).sum();
    match results.into_iter().find_map(|r| r.1) {
        None => outcome(
            steps >= C4_STEPS,
            format!("{steps} steps over n in {C4_SIZES:?}, {} field and noise pairs, no violation", fields.len() * noises.len()),
        ),
        Some(c) => outcome(false, c),
    }
}

const C5_SIZES: [usize; 2] = [2, 5];
const C5_MS: [f64; 2] = [0.0, 0.5];
const C5_STATES: usize = 10;
const C5_DRAWS: usize = 1_000_000;
const C5_SE: f64 = 4.0;
const C5_FLOOR: f64 = 1e-9;

fn criterion_5() -> Outcome {
    let fields = reference_fields();
    let mut jobs = Vec::new();
    for &n in &C5_SIZES {
        for &m in &C5_MS {
            for s in 0..C5_STATES {
                jobs.push((n, m, s));
            }
        }
    }
    let results: Vec<Result<f64, String>> = jobs
        .par_iter()
        .map(|&(n, m, s)| {
            let field = &fields[s % fields.len()];
            let noise = if m == 0.0 { NoiseModel::zero() } else { NoiseModel::uniform(m).unwrap() };
            let protocol = Protocol::new(field.clone(), noise);
            let seed = 5_000 + (n as u64) * 100 + (m * 10.0) as u64 * 10 + s as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_monotone_state(n, &mut rng);
            let norm_bound = protocol.gradient_norm_bound();
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            for draw in 0..C5_DRAWS {
                let est = protocol.stochastic_gradient(&x, &mut rng);
                if est.norm_sq() > norm_bound * (1.0 + 1e-12) {
                    return Err(format!("seed {seed}, draw {draw}: |g|^2 = {} > {norm_bound}", est.norm_sq()));
                }
                for (k, v) in est.g.iter().enumerate() {
                    sum[k] += v;
                    sum_sq[k] += v * v;
                }
            }
            let exact = grad_q(&x, field);
            let draws = C5_DRAWS as f64;
            let mut worst: f64 = 0.0;
            for k in 0..n {
                let mean = sum[k] / draws;
                let var = ((sum_sq[k] - draws * mean * mean) / (draws - 1.0)).max(0.0);
                let se = (var / draws).sqrt();
                let dev = (mean - exact[k]).abs();
                if dev > C5_SE * se + C5_FLOOR {
                    return Err(format!(
                        "seed {seed}, state {:?}, component {k}: mean {mean} vs Q' {} ({se:e} stderr)",
                        x.positions(),
                        exact[k]
                    ));
                }
                if se > 0.0 {
                    worst = worst.max(dev / se);
                }
            }
            Ok(worst)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in results {
        match r {
            Ok(w) => worst = worst.max(w),
            Err(e) => return outcome(false, e),
        }
    }
    outcome(
        true,
        format!(
            "{} states x {C5_DRAWS} draws, mean g_bar matches Q' (largest deviation {worst:.2} stderr, limit {C5_SE}); norm bound held on every draw",
            jobs.len()
        ),
    )
}

const C6_SIZES: [usize; 3] = [2, 5, 10];
const C6_STATES: usize = 1000;
const C6_MAX_N: usize = 50;

fn criterion_6() -> Outcome {
    let mut min_margin = f64::INFINITY;
    for &n in &C6_SIZES {
        for (fi, field) in reference_fields().iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(6_000 + 10 * n as u64 + fi as u64);
            for _ in 0..C6_STATES {
                let x = random_monotone_state(n, &mut rng);
                match gradient_ratio_check(&x, field) {
                    linecover::RatioCheck::Evaluated { ratio, bound, pass } => {
                        if !pass {
                            return outcome(false, format!("{:?} on {}: ratio {ratio} < {bound}", x.positions(), field.family().name()));
                        }
                        min_margin = min_margin.min(ratio / bound);
                    }
                    linecover::RatioCheck::AtOptimum => {}
                }
            }
        }
    }
    for n in 1..=C6_MAX_N {
        let eig = g_hessian_min_eig(n);
        if eig < 2.0 / (n * n) as f64 {
            return outcome(false, format!("n = {n}: eigenvalue {eig} < 2/n^2"));
        }
    }
    for (n, exact) in [(1, 8.0), (2, 4.0), (3, 2.0)] {
        let eig = g_hessian_min_eig(n);
        if (eig - exact).abs() > 1e-12 {
            return outcome(false, format!("n = {n}: eigenvalue {eig}, expected {exact}"));
        }
    }
    outcome(
        true,
        format!("smallest ratio / (4/n^2) = {min_margin:.3}; eigenvalue >= 2/n^2 for n = 1..{C6_MAX_N}; exact 8, 4, 2"),
    )
}

const C7_SIZES: [usize; 5] = [1, 2, 5, 10, 20];
const C7_TOL: f64 = 1e-9;
const C7_GRID: usize = 100_000;
const C7_GRID_STATES: usize = 100;
const C7_GRID_SIZES: [usize; 3] = [2, 5, 10];

fn criterion_7() -> Outcome {
    let fields = reference_fields();
    let mut worst_residual: f64 = 0.0;
    for field in &fields {
        for &n in &C7_SIZES {
            let report = certify(field, n, INVERSION_TOL).unwrap();
            worst_residual = worst_residual.max(report.max_residual());
            let phi = coverage_phi(&report.x_star, field);
            let target = field.total_mass() / (2 * n) as f64;
            if report.max_residual() > C7_TOL || (phi - target).abs() > C7_TOL {
                return outcome(
                    false,
                    format!("{} n = {n}: residual {:e}, phi {phi} vs {target}", field.family().name(), report.max_residual()),
                );
            }
        }
    }
    let grid_failures: Vec<String> = fields
        .par_iter()
        .enumerate()
        .filter_map(|(fi, field)| {
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + fi as u64);
            let tol = 2.0 * field.total_mass() / C7_GRID as f64;
            (0..C7_GRID_STATES).find_map(|s| {
                let n = C7_GRID_SIZES[s % C7_GRID_SIZES.len()];
                let x = random_monotone_state(n, &mut rng);
                let closed = coverage_phi(&x, field);
                let grid = coverage_phi_grid(&x, field, C7_GRID).unwrap();
                ((closed - grid).abs() > tol).then(|| {
                    format!("{} at {:?}: closed {closed} vs grid {grid}", field.family().name(), x.positions())
                })
            })
        })
        .collect();
    match grid_failures.first() {
        Some(f) => outcome(false, f.clone()),
        None => outcome(
            true,
            format!(
                "largest residual {worst_residual:.1e} (<= {C7_TOL:e}); phi(x*) = F(1)/(2n); grid agreement on {} states per family",
                C7_GRID_STATES
            ),
        ),
    }
}

const C8_STATES: usize = 100;
const C8_N: usize = 6;
const C8_H: f64 = 1e-6;
const C8_REL: f64 = 1e-5;
/// Smallest gap between agents and to the ends, so `x +- h` stays ordered.
const C8_MARGIN: f64 = 1e-3;

fn interior_state<R: Rng>(n: usize, rng: &mut R) -> PositionState {
    loop {
        let x = random_monotone_state(n, rng);
        let p = x.positions();
        let ok = p[0] > C8_MARGIN
            && p[n - 1] < 1.0 - C8_MARGIN
            && p.windows(2).all(|w| w[1] - w[0] > C8_MARGIN);
        if ok {
            return x;
        }
    }
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    for (fi, field) in reference_fields().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8_000 + fi as u64);
        for _ in 0..C8_STATES {
            let x = interior_state(C8_N, &mut rng);
            let g = grad_q(&x, field);
            let fd: Vec<f64> = (0..C8_N)
                .map(|k| {
                    let shifted = |d: f64| {
                        let mut v = x.positions().to_vec();
                        v[k] += d;
                        lyapunov_q(&PositionState::new(v).unwrap(), field)
                    };
                    (shifted(C8_H) - shifted(-C8_H)) / (2.0 * C8_H)
                })
                .collect();
            let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            let rel = diff / norm;
            worst = worst.max(rel);
            if rel.is_nan() || rel > C8_REL {
                return outcome(false, format!("{} at {:?}: relative error {rel:e}", field.family().name(), x.positions()));
            }
        }
    }
    outcome(true, format!("largest relative error {worst:.2e} (<= {C8_REL:e}) over {} states per family", C8_STATES))
}

const C9_RUN: &str = r#"
n = 6
iters = 5000
seed = 11
record_every = 50
[density]
family = "smooth-bump"
amplitude = 2.0
center = 0.4
width = 0.15
[noise]
kind = "bernoulli"
m = 0.5
[schedule]
kind = "power"
p = 0.75
[init]
kind = "all-at-one"
"#;

const C9_SWEEP: &str = r#"
n = 3
iters = 5000
seed = 3
record_per_decade = 10
[density]
family = "affine"
intercept = 1.0
slope = 0.5
[noise]
kind = "uniform"
m = 0.5
[schedule]
kind = "theorem"
u = 4
"#;

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_linecover");
    let invoke = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.success();
    let mut files = Vec::new();
    for (name, doc, args) in [
        ("run", C9_RUN, vec!["run", "--seed", "42"]),
        ("sweep", C9_SWEEP, vec!["sweep", "--seeds", "8"]),
    ] {
        let cfg = dir.path().join(format!("{name}.toml"));
        fs::write(&cfg, doc).unwrap();
        let mut outputs = Vec::new();
        for copy in 0..2 {
            let out = dir.path().join(format!("{name}-{copy}.csv"));
            let mut full = args.clone();
            full.extend(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            if !invoke(&full) {
                return outcome(false, format!("{name} command failed"));
            }
            outputs.push(fs::read(&out).unwrap());
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            return outcome(false, format!("{name} outputs differ"));
        }
        files.push(format!("{name} ({} bytes)", outputs[0].len()));
    }
    outcome(true, format!("identical repeated outputs: {}", files.join(", ")))
}

fn main() -> ExitCode {
    let mut results = vec![("coverage run from both initial layouts", criterion_1())];
    let (c2, c3) = criteria_2_and_3();
    results.push(("expected error bound", c2));
    results.push(("O(1/t) convergence rate", c3));
    results.push(("order preservation", criterion_4()));
    results.push(("unbiased gradient estimate", criterion_5()));
    results.push(("gradient dominance and curvature", criterion_6()));
    results.push(("optimal configuration", criterion_7()));
    results.push(("gradient of Q", criterion_8()));
    results.push(("determinism", criterion_9()));

    let mut err = std::io::stderr().lock();
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        all &= o.pass;
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "criterion {} {verdict}: {name}: {}", i + 1, o.detail).unwrap();
    }
    // Sanity check that the optimum used throughout is the documented one.
    let x = optimal_positions(&DensityField::constant(1.0).unwrap(), 4, INVERSION_TOL).unwrap();
    all &= x.positions() == [0.125, 0.375, 0.625, 0.875];
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
