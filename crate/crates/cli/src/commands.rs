//! The `run`, `optimal` and `sweep` commands.
//!
//! Each command writes its table to one writer and a short human-readable
//! summary to another, so the binary and the tests share one code path.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use linecover::density::INVERSION_TOL;
use linecover::oracle::certify;
use linecover::sim::{ensemble, rate_fit, run, theorem_bound};
use linecover::{DensityField, EnsembleCurve, OptimalityReport, RunRecord, ScheduleSpec, SimConfig};

use crate::output::{fmt_num, write_run_table, write_sweep_table};
use crate::CliError;

/// Largest first-order residual `optimal` accepts.
pub const OPTIMAL_RESIDUAL_TOL: f64 = 1e-9;

/// Fraction of the recorded points used for the tail slope.
pub const SLOPE_TAIL_FRACTION: f64 = 0.5;

fn summary_err(e: io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

/// Creates `path` and hands a buffered writer for it to `body`.
pub fn with_output_file<T>(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    let value = body(&mut w)?;
    w.flush().map_err(CliError::io(path))?;
    Ok(value)
}

pub fn cmd_run<T: Write, S: Write>(
    config: &SimConfig,
    seed: Option<u64>,
    table: &mut T,
    summary: &mut S,
) -> Result<RunRecord, CliError> {
    let config = seed.map_or_else(|| config.clone(), |s| config.with_seed(s));
    let record = run(&config)?;
    write_run_table(table, &record).map_err(summary_err)?;
    let last = record.final_row();
    writeln!(summary, "final phi = {}", fmt_num(last.phi)).map_err(summary_err)?;
    writeln!(summary, "optimal phi = {}", fmt_num(record.phi_star)).map_err(summary_err)?;
    writeln!(summary, "final err_sq = {}", fmt_num(last.err_sq)).map_err(summary_err)?;
    Ok(record)
}

pub fn cmd_optimal<S: Write>(n: usize, field: &DensityField, summary: &mut S) -> Result<OptimalityReport, CliError> {
    let report = certify(field, n, INVERSION_TOL)?;
    let xs: Vec<String> = report.x_star.positions().iter().map(|&v| fmt_num(v)).collect();
    writeln!(summary, "x* = {}", xs.join(" ")).map_err(summary_err)?;
    writeln!(summary, "phi* = {}", fmt_num(report.phi_star)).map_err(summary_err)?;
    writeln!(summary, "max residual = {}", fmt_num(report.max_residual())).map_err(summary_err)?;
    if report.max_residual().is_nan() || report.max_residual() > OPTIMAL_RESIDUAL_TOL {
        return Err(CliError::Verification(format!(
            "residual {} exceeds {}",
            fmt_num(report.max_residual()),
            fmt_num(OPTIMAL_RESIDUAL_TOL)
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub curve: EnsembleCurve,
    /// Expected-error bound at each recorded `t`; only defined for the
    /// theorem schedule.
    pub bound: Vec<Option<f64>>,
    pub slope: Option<f64>,
    /// `mean_err <= bound` at every recorded `t`.
    pub bound_held: Option<bool>,
    /// `mean_err <= bound + 2 stderr` at every recorded `t`.
    pub bound_held_2se: Option<bool>,
}

/// Runs seeds `base, base + 1, ..., base + seeds - 1`, where `base` is the
/// override or the configured seed.
pub fn cmd_sweep<T: Write, S: Write>(
    config: &SimConfig,
    seeds: usize,
    seed: Option<u64>,
    table: &mut T,
    summary: &mut S,
) -> Result<SweepSummary, CliError> {
    if seeds < 2 {
        return Err(CliError::Usage("need ≥ 2 seeds".into()));
    }
    let base = seed.unwrap_or(config.seed);
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| base.wrapping_add(i)).collect();
    let curve = ensemble(config, &seed_list)?;

    let bound: Vec<Option<f64>> = match config.schedule {
        ScheduleSpec::Theorem { u } => curve
            .points
            .iter()
            .map(|p| {
                theorem_bound(
                    config.n,
                    u,
                    config.field.rho_max(),
                    config.noise.m(),
                    config.field.rho_prime_sup(),
                    p.t as f64,
                )
                .map(Some)
            })
            .collect::<linecover::Result<_>>()?,
        _ => vec![None; curve.points.len()],
    };
    let means = curve.mean_curve();
    let running: Vec<Option<f64>> = (0..means.len())
        .map(|i| rate_fit(&means[..=i], SLOPE_TAIL_FRACTION).ok())
        .collect();
    write_sweep_table(table, &curve, &bound, &running).map_err(summary_err)?;

    let slope = rate_fit(&means, SLOPE_TAIL_FRACTION);
    let held = |slack: f64| {
        matches!(config.schedule, ScheduleSpec::Theorem { .. }).then(|| {
            curve
                .points
                .iter()
                .zip(&bound)
                .all(|(p, b)| b.is_some_and(|b| p.mean <= b + slack * p.stderr))
        })
    };
    let (bound_held, bound_held_2se) = (held(0.0), held(2.0));

    match &slope {
        Ok(s) => writeln!(summary, "tail slope = {}", fmt_num(*s)),
        Err(e) => writeln!(summary, "tail slope undefined: {e}"),
    }
    .map_err(summary_err)?;
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    match (bound_held, bound_held_2se) {
        (Some(strict), Some(loose)) => writeln!(
            summary,
            "mean_err <= bound at every t: {} (within 2 stderr: {})",
            yes_no(strict),
            yes_no(loose)
        ),
        _ => writeln!(summary, "bound: only defined for the theorem schedule"),
    }
    .map_err(summary_err)?;

    Ok(SweepSummary {
        curve,
        bound,
        slope: slope.ok(),
        bound_held,
        bound_held_2se,
    })
}
