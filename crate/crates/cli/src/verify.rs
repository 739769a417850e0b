//! Invariant suites behind `linecover verify`.
//!
//! Every draw count, tolerance and seed is a constant below, so a passing
//! `verify` means the same thing on every machine. The gradient estimator
//! is a parameter so that a deliberately broken estimator can be checked
//! to fail.

use std::io::{self, Write};

use linecover::density::INVERSION_TOL;
use linecover::oracle::{certify, random_monotone_state};
use linecover::{
    coverage_phi, coverage_phi_grid, g_hessian_min_eig, grad_q, gradient_ratio_check, DensityField, GradientEstimate,
    NoiseModel, PositionState, Protocol, RatioCheck,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::fmt_num;
use crate::CliError;

pub const DEFAULT_SIZES: [usize; 3] = [2, 5, 10];

/// Protocol steps per (size, field, noise) combination.
pub const ORDER_STEPS: usize = 500;
/// Random states per (size, field) in the gradient-ratio suite.
pub const RATIO_STATES: usize = 1000;
/// The Hessian bound is checked for every `n` up to this size.
pub const HESSIAN_MAX_N: usize = 50;
/// Random states per (size, noise level) in the unbiasedness suite.
pub const UNBIAS_STATES: usize = 3;
/// Estimator draws per state.
pub const UNBIAS_DRAWS: usize = 200_000;
/// Allowed deviation of the sample mean, in standard errors.
pub const UNBIAS_SE: f64 = 4.0;
/// Absolute slack for components whose standard error vanishes.
pub const UNBIAS_FLOOR: f64 = 1e-9;
/// Random states per (size, field) in the grid comparison.
pub const PHI_STATES: usize = 20;
/// Grid points of the brute-force coverage oracle.
pub const PHI_GRID: usize = 100_000;
/// Largest first-order residual and `Phi(x*)` error accepted.
pub const OPTIMUM_TOL: f64 = 1e-9;
/// Relative rounding allowance on the move bound, which is attained.
pub const MOVE_SLACK: f64 = 1e-12;

const SEED: u64 = 0x5eed_0000;

/// Produces `g_bar` for a state; [`Faithful`] is the real protocol.
pub trait Estimator {
    fn estimate(&self, protocol: &Protocol, x: &PositionState, rng: &mut ChaCha8Rng) -> GradientEstimate;
}

pub struct Faithful;

impl Estimator for Faithful {
    fn estimate(&self, protocol: &Protocol, x: &PositionState, rng: &mut ChaCha8Rng) -> GradientEstimate {
        protocol.stochastic_gradient(x, rng)
    }
}

/// One field per family, with nontrivial slope and curvature.
pub fn reference_fields() -> Vec<DensityField> {
    vec![
        DensityField::constant(1.0).expect("valid"),
        DensityField::affine(1.0, 1.0).expect("valid"),
        DensityField::piecewise_linear(vec![0.0, 0.3, 0.7, 1.0], vec![1.0, 3.0, 1.5, 2.0]).expect("valid"),
        DensityField::smooth_bump(2.0, 0.5, 0.1).expect("valid"),
    ]
}

/// Every noise kind, including the largest allowed support.
pub fn reference_noises() -> Vec<NoiseModel> {
    vec![
        NoiseModel::zero(),
        NoiseModel::uniform(0.5).expect("valid"),
        NoiseModel::uniform(1.0).expect("valid"),
        NoiseModel::bernoulli(0.5).expect("valid"),
    ]
}

fn describe_noise(noise: &NoiseModel) -> String {
    format!("{:?}(M = {})", noise.kind(), fmt_num(noise.m())).to_lowercase()
}

fn describe_state(x: &PositionState) -> String {
    let v: Vec<String> = x.positions().iter().map(|&p| fmt_num(p)).collect();
    format!("[{}]", v.join(", "))
}

fn rng_for(suite: u64, n: usize, case: usize, trial: usize) -> (u64, ChaCha8Rng) {
    let seed = SEED ^ (suite << 56) ^ ((n as u64) << 40) ^ ((case as u64) << 24) ^ trial as u64;
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

/// Random ordered state, with ties and endpoint clusters mixed in.
pub fn fuzz_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PositionState {
    let mut v: Vec<f64> = match rng.random_range(0..4) {
        0 => (0..n).map(|_| rng.random::<f64>()).collect(),
        1 => {
            let z = [0.0, 1.0, rng.random()][rng.random_range(0..3)];
            vec![z; n]
        }
        2 => (0..n).map(|_| (rng.random::<f64>() * 10.0).round() / 10.0).collect(),
        _ => {
            let edge = rng.random_range(0..2) as f64;
            (0..n).map(|_| edge + (1.0 - 2.0 * edge) * 0.01 * rng.random::<f64>().powi(4)).collect()
        }
    };
    v.sort_by(f64::total_cmp);
    PositionState::new(v).expect("sorted values in [0, 1]")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    /// The first failing case, if any.
    pub counterexample: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

struct Tally {
    name: &'static str,
    checks: usize,
    counterexample: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            checks: 0,
            counterexample: None,
        }
    }

    // Records one check; returns false once a counterexample is held.
    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) -> bool {
        self.checks += 1;
        if !ok && self.counterexample.is_none() {
            self.counterexample = Some(describe());
        }
        self.counterexample.is_none()
    }

    fn done(self) -> SuiteReport {
        SuiteReport {
            name: self.name,
            checks: self.checks,
            counterexample: self.counterexample,
        }
    }
}

/// Steps from fuzzed states keep the agents ordered in `[0, 1]` and move
/// each agent by at most a quarter of the gap on the side it moves toward.
pub fn order_preservation<E: Estimator>(sizes: &[usize], est: &E) -> SuiteReport {
    let mut tally = Tally::new("order preservation");
    for &n in sizes {
        for (fi, field) in reference_fields().into_iter().enumerate() {
            for (ni, noise) in reference_noises().into_iter().enumerate() {
                let protocol = Protocol::new(field.clone(), noise);
                for trial in 0..ORDER_STEPS {
                    let (seed, mut rng) = rng_for(1, n, fi * 16 + ni, trial);
                    let x = fuzz_state(n, &mut rng);
                    let alpha: f64 = rng.random();
                    let g = est.estimate(&protocol, &x, &mut rng).g;
                    let next = protocol.apply_gradient(&x, alpha, &g);
                    let ok = next.as_ref().is_ok_and(|next| {
                        (0..n).all(|k| {
                            let here = x.positions()[k];
                            let step = next.positions()[k] - here;
                            let room = if step < 0.0 { here - x.left_of(k) } else { x.right_of(k) - here };
                            step.abs() <= 0.25 * room * (1.0 + MOVE_SLACK)
                        })
                    });
                    let keep_going = tally.check(ok, || {
                        format!(
                            "n = {n}, field = {}, noise = {}, seed = {seed}, alpha = {}, state = {} -> {}",
                            field.family().name(),
                            describe_noise(&noise),
                            fmt_num(alpha),
                            describe_state(&x),
                            match &next {
                                Ok(next) => describe_state(next),
                                Err(e) => e.to_string(),
                            }
                        )
                    });
                    if !keep_going {
                        return tally.done();
                    }
                }
            }
        }
    }
    tally.done()
}

/// `|Q'|^2 / (Q - Q*) >= 4 / n^2` at random ordered states.
pub fn gradient_ratio(sizes: &[usize]) -> SuiteReport {
    let mut tally = Tally::new("gradient ratio");
    for &n in sizes {
        for (fi, field) in reference_fields().into_iter().enumerate() {
            for trial in 0..RATIO_STATES {
                let (seed, mut rng) = rng_for(2, n, fi, trial);
                let x = random_monotone_state(n, &mut rng);
                let check = gradient_ratio_check(&x, &field);
                let ok = tally.check(check.passed(), || {
                    let detail = match check {
                        RatioCheck::Evaluated { ratio, bound, .. } => {
                            format!("ratio {} < {}", fmt_num(ratio), fmt_num(bound))
                        }
                        RatioCheck::AtOptimum => "at optimum".into(),
                    };
                    format!(
                        "n = {n}, field = {}, seed = {seed}, state = {}: {detail}",
                        field.family().name(),
                        describe_state(&x)
                    )
                });
                if !ok {
                    return tally.done();
                }
            }
        }
    }
    tally.done()
}

/// The Hessian of `Q` in mass coordinates has smallest eigenvalue at
/// least `2 / n^2`, with exact values 8, 4 and 2 for one to three agents.
pub fn hessian_bound(sizes: &[usize]) -> SuiteReport {
    let mut tally = Tally::new("hessian eigenvalue");
    let mut ns: Vec<usize> = (1..=HESSIAN_MAX_N).chain(sizes.iter().copied()).collect();
    ns.sort_unstable();
    ns.dedup();
    for n in ns {
        let eig = g_hessian_min_eig(n);
        let bound = 2.0 / (n * n) as f64;
        let ok = tally.check(eig >= bound, || {
            format!("n = {n}: eigenvalue {} < {}", fmt_num(eig), fmt_num(bound))
        });
        if !ok {
            return tally.done();
        }
    }
    for (n, exact) in [(1, 8.0), (2, 4.0), (3, 2.0)] {
        let eig = g_hessian_min_eig(n);
        let ok = tally.check((eig - exact).abs() <= 1e-12, || {
            format!("n = {n}: eigenvalue {} differs from {exact}", fmt_num(eig))
        });
        if !ok {
            break;
        }
    }
    tally.done()
}

/// The sample mean of `g_bar` matches `Q'` within a few standard errors,
/// and `|g_bar|^2` never exceeds its almost-sure bound.
pub fn unbiasedness<E: Estimator>(sizes: &[usize], est: &E) -> SuiteReport {
    let mut tally = Tally::new("unbiasedness");
    let field = DensityField::affine(1.0, 1.0).expect("valid");
    let noises = [NoiseModel::zero(), NoiseModel::uniform(0.5).expect("valid")];
    for &n in sizes {
        for (ni, noise) in noises.iter().enumerate() {
            let protocol = Protocol::new(field.clone(), *noise);
            let norm_bound = protocol.gradient_norm_bound() * (1.0 + MOVE_SLACK);
            for trial in 0..UNBIAS_STATES {
                let (seed, mut rng) = rng_for(3, n, ni, trial);
                let x = random_monotone_state(n, &mut rng);
                let mut sum = vec![0.0; n];
                let mut sum_sq = vec![0.0; n];
                for draw in 0..UNBIAS_DRAWS {
                    let g = est.estimate(&protocol, &x, &mut rng);
                    let norm = g.norm_sq();
                    let ok = tally.check(norm <= norm_bound, || {
                        format!(
                            "n = {n}, noise = {}, seed = {seed}, draw = {draw}, state = {}: |g|^2 = {} > {}",
                            describe_noise(noise),
                            describe_state(&x),
                            fmt_num(norm),
                            fmt_num(protocol.gradient_norm_bound())
                        )
                    });
                    if !ok {
                        return tally.done();
                    }
                    for (k, v) in g.g.iter().enumerate() {
                        sum[k] += v;
                        sum_sq[k] += v * v;
                    }
                }
                let draws = UNBIAS_DRAWS as f64;
                let exact = grad_q(&x, &field);
                for k in 0..n {
                    let mean = sum[k] / draws;
                    let var = ((sum_sq[k] - draws * mean * mean) / (draws - 1.0)).max(0.0);
                    let se = (var / draws).sqrt();
                    let dev = (mean - exact[k]).abs();
                    let ok = tally.check(dev <= UNBIAS_SE * se + UNBIAS_FLOOR, || {
                        format!(
                            "n = {n}, noise = {}, seed = {seed}, state = {}: component {} has mean {} but Q' = {} (stderr {})",
                            describe_noise(noise),
                            describe_state(&x),
                            k + 1,
                            fmt_num(mean),
                            fmt_num(exact[k]),
                            fmt_num(se)
                        )
                    });
                    if !ok {
                        return tally.done();
                    }
                }
            }
        }
    }
    tally.done()
}

/// The closed-form coverage metric agrees with the grid oracle to within
/// its resolution `2 F(1) / m`.
pub fn phi_oracle(sizes: &[usize]) -> SuiteReport {
    let mut tally = Tally::new("coverage oracle");
    for &n in sizes {
        for (fi, field) in reference_fields().into_iter().enumerate() {
            let tol = 2.0 * field.total_mass() / PHI_GRID as f64;
            for trial in 0..PHI_STATES {
                let (seed, mut rng) = rng_for(4, n, fi, trial);
                let x = random_monotone_state(n, &mut rng);
                let closed = coverage_phi(&x, &field);
                let grid = coverage_phi_grid(&x, &field, PHI_GRID).expect("grid size is at least 2");
                let ok = tally.check((closed - grid).abs() <= tol, || {
                    format!(
                        "n = {n}, field = {}, seed = {seed}, state = {}: closed form {} vs grid {}",
                        field.family().name(),
                        describe_state(&x),
                        fmt_num(closed),
                        fmt_num(grid)
                    )
                });
                if !ok {
                    return tally.done();
                }
            }
        }
    }
    tally.done()
}

/// The computed optimum satisfies the first-order conditions and attains
/// `Phi* = F(1) / (2n)`.
pub fn optimum(sizes: &[usize]) -> SuiteReport {
    let mut tally = Tally::new("optimal configuration");
    for &n in sizes {
        for field in reference_fields() {
            let describe = |what: String| format!("n = {n}, field = {}: {what}", field.family().name());
            let report = match certify(&field, n, INVERSION_TOL) {
                Ok(r) => r,
                Err(e) => {
                    tally.check(false, || describe(e.to_string()));
                    return tally.done();
                }
            };
            let residual = report.max_residual();
            if !tally.check(residual <= OPTIMUM_TOL, || describe(format!("residual {}", fmt_num(residual)))) {
                return tally.done();
            }
            let phi = coverage_phi(&report.x_star, &field);
            let target = field.total_mass() / (2 * n) as f64;
            let ok = tally.check((phi - target).abs() <= OPTIMUM_TOL, || {
                describe(format!("Phi(x*) = {} but F(1)/(2n) = {}", fmt_num(phi), fmt_num(target)))
            });
            if !ok {
                return tally.done();
            }
        }
    }
    tally.done()
}

/// Runs every suite in a fixed order.
pub fn run_suites<E: Estimator>(sizes: &[usize], est: &E) -> Vec<SuiteReport> {
    vec![
        order_preservation(sizes, est),
        gradient_ratio(sizes),
        hessian_bound(sizes),
        unbiasedness(sizes, est),
        phi_oracle(sizes),
        optimum(sizes),
    ]
}

pub fn write_reports<W: Write>(out: &mut W, sizes: &[usize], reports: &[SuiteReport]) -> io::Result<()> {
    let list: Vec<String> = sizes.iter().map(|n| n.to_string()).collect();
    writeln!(out, "sizes: {}", list.join(", "))?;
    if sizes.contains(&1) {
        writeln!(out, "note: n = 1 is an extension beyond the analysed multi-agent setting")?;
    }
    for r in reports {
        match &r.counterexample {
            None => writeln!(out, "PASS  {} ({} checks)", r.name, r.checks)?,
            Some(c) => {
                writeln!(out, "FAIL  {} (after {} checks)", r.name, r.checks)?;
                writeln!(out, "      counterexample: {c}")?;
            }
        }
    }
    Ok(())
}

/// Runs the suites with estimator `est` and reports a verification
/// failure if any suite fails.
pub fn verify_with<E: Estimator, W: Write>(sizes: &[usize], est: &E, out: &mut W) -> Result<Vec<SuiteReport>, CliError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Usage("sizes must be a nonempty list of positive integers".into()));
    }
    let reports = run_suites(sizes, est);
    write_reports(out, sizes, &reports).map_err(|e| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    })?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub fn cmd_verify<W: Write>(sizes: &[usize], out: &mut W) -> Result<Vec<SuiteReport>, CliError> {
    verify_with(sizes, &Faithful, out)
}
