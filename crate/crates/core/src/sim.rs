//! Seeded trajectories, multi-seed ensembles, the expected-error bound for
//! the decaying schedule, and log-log rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::{DensityField, INVERSION_TOL};
use crate::error::{Error, Result};
use crate::metrics::{coverage_phi, lyapunov_q, PositionState};
use crate::oracle::optimal_positions;
use crate::protocol::{NoiseModel, Protocol, StepSchedule};

/// Initial placement of the agents.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Sorted independent uniform draws on `[0, 1)`.
    UniformRandom,
    /// Every agent starts at `1`.
    AllAtOne,
    Explicit(Vec<f64>),
}

/// Stepsize rule as configured; resolved against the field, noise and
/// horizon of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Theorem { u: usize },
    Power { exponent: f64 },
    Hybrid,
}

/// Which iterations get a diagnostics row. The initial state and the final
/// step are always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    /// Every `k` steps.
    Every(u64),
    /// About `per_decade` logarithmically spaced steps per factor of ten,
    /// the natural layout for fitting power-law decay.
    LogSpaced { per_decade: u32 },
}

impl Recording {
    /// Sorted distinct recorded iterations for a run of `iters` steps.
    pub fn times(&self, iters: u64) -> Vec<u64> {
        let mut out = vec![0];
        match *self {
            Recording::Every(k) => {
                let k = k.max(1);
                out.extend((1..=iters / k).map(|i| i * k));
            }
            Recording::LogSpaced { per_decade } => {
                let d = per_decade.max(1) as f64;
                let mut j = 0u32;
                loop {
                    let t = 10f64.powf(j as f64 / d).round() as u64;
                    if t > iters {
                        break;
                    }
                    if t > *out.last().unwrap() {
                        out.push(t);
                    }
                    j += 1;
                }
            }
        }
        if *out.last().unwrap() != iters {
            out.push(iters);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub iters: u64,
    pub seed: u64,
    pub field: DensityField,
    pub noise: NoiseModel,
    pub schedule: ScheduleSpec,
    pub init: InitSpec,
    pub recording: Recording,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if self.iters < 1 {
            return bad("iters must be at least 1".into());
        }
        match self.recording {
            Recording::Every(0) => return bad("record_every must be at least 1".into()),
            Recording::LogSpaced { per_decade: 0 } => return bad("record_per_decade must be at least 1".into()),
            _ => {}
        }
        let violations = self.field.validate();
        if !violations.is_empty() {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidField(msg));
        }
        if let InitSpec::Explicit(v) = &self.init {
            if v.len() != self.n {
                return bad(format!("explicit init has {} positions but n = {}", v.len(), self.n));
            }
            PositionState::new(v.clone())?;
        }
        if let ScheduleSpec::Theorem { u } = self.schedule {
            if u < self.n {
                return bad(format!("schedule U = {u} must be an upper bound on n = {}", self.n));
            }
        }
        self.step_schedule().map(|_| ())
    }

    pub fn step_schedule(&self) -> Result<StepSchedule> {
        match self.schedule {
            ScheduleSpec::Theorem { u } => StepSchedule::theorem(u, self.field.rho_max(), self.noise.m()),
            ScheduleSpec::Power { exponent } => StepSchedule::power(exponent),
            ScheduleSpec::Hybrid => StepSchedule::hybrid(self.iters),
        }
    }

    pub fn with_seed(&self, seed: u64) -> SimConfig {
        SimConfig { seed, ..self.clone() }
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PositionState> {
        match &self.init {
            InitSpec::UniformRandom => {
                let mut v: Vec<f64> = (0..self.n).map(|_| rng.random::<f64>()).collect();
                v.sort_by(f64::total_cmp);
                PositionState::new(v)
            }
            InitSpec::AllAtOne => PositionState::uniform_at(self.n, 1.0),
            InitSpec::Explicit(v) => PositionState::new(v.clone()),
        }
    }
}

/// Diagnostics at one recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub t: u64,
    pub positions: Vec<f64>,
    pub q: f64,
    pub phi: f64,
    /// `|x - x*|^2 / n`.
    pub err_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: SimConfig,
    pub x_star: PositionState,
    pub phi_star: f64,
    pub rows: Vec<RunRow>,
    pub final_positions: PositionState,
}

impl RunRecord {
    pub fn final_row(&self) -> &RunRow {
        self.rows.last().expect("a run records at least its initial state")
    }
}

// Drives one seeded trajectory, handing every recorded state to `observe`.
fn simulate<F>(config: &SimConfig, mut observe: F) -> Result<PositionState>
where
    F: FnMut(u64, &PositionState),
{
    let protocol = Protocol::new(config.field.clone(), config.noise);
    let schedule = config.step_schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = config.initial_state(&mut rng)?;
    let times = config.recording.times(config.iters);
    let mut next = times.iter().copied().skip(1).peekable();
    observe(0, &x);
    for t in 0..config.iters {
        x = protocol.step(&x, schedule.alpha_at(t), &mut rng)?;
        if next.peek() == Some(&(t + 1)) {
            next.next();
            observe(t + 1, &x);
        }
    }
    Ok(x)
}

/// Runs one trajectory and records `Q`, `Phi` and the error to the optimum.
pub fn run(config: &SimConfig) -> Result<RunRecord> {
    config.validate()?;
    let field = &config.field;
    let x_star = optimal_positions(field, config.n, INVERSION_TOL)?;
    let phi_star = coverage_phi(&x_star, field);
    let mut rows = Vec::new();
    let final_positions = simulate(config, |t, x| {
        rows.push(RunRow {
            t,
            positions: x.positions().to_vec(),
            q: lyapunov_q(x, field),
            phi: coverage_phi(x, field),
            err_sq: x.mean_sq_dist(&x_star),
        })
    })?;
    Ok(RunRecord {
        config: config.clone(),
        x_star,
        phi_star,
        rows,
        final_positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsemblePoint {
    pub t: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean per-agent squared error over seeds at each recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCurve {
    pub seeds: Vec<u64>,
    pub points: Vec<EnsemblePoint>,
}

impl EnsembleCurve {
    /// `(t, mean)` pairs, the input expected by [`rate_fit`].
    pub fn mean_curve(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.t as f64, p.mean)).collect()
    }
}

/// Runs `config` once per seed (concurrently) and averages the error
/// curves in seed order.
pub fn ensemble(config: &SimConfig, seeds: &[u64]) -> Result<EnsembleCurve> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig("need ≥ 2 seeds".into()));
    }
    config.validate()?;
    let x_star = optimal_positions(&config.field, config.n, INVERSION_TOL)?;
    let curves = seeds
        .par_iter()
        .map(|&seed| {
            let mut curve = Vec::new();
            simulate(&config.with_seed(seed), |t, x| curve.push((t, x.mean_sq_dist(&x_star))))?;
            Ok(curve)
        })
        .collect::<Result<Vec<Vec<(u64, f64)>>>>()?;

    let k = curves.len() as f64;
    let points = (0..curves[0].len())
        .map(|i| {
            let t = curves[0][i].0;
            let mean = curves.iter().map(|c| c[i].1).sum::<f64>() / k;
            let var = curves.iter().map(|c| (c[i].1 - mean).powi(2)).sum::<f64>() / (k - 1.0);
            EnsemblePoint {
                t,
                mean,
                stderr: (var / k).sqrt(),
            }
        })
        .collect();
    Ok(EnsembleCurve {
        seeds: seeds.to_vec(),
        points,
    })
}

/// Upper bound on `E[|x(t) - x*|^2 / n]` under the decaying schedule with
/// agent-count bound `u`:
///
/// `16 n U^4 (rho_max + M)^4 (4 rho_max^2 + 2 |rho'| rho_max) / (8 U^2 (rho_max + M)^2 + t)`.
pub fn theorem_bound(n: usize, u: usize, rho_max: f64, m: f64, rho_prime_sup: f64, t: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if u < n {
        return Err(Error::InvalidConfig(format!("U = {u} must be at least n = {n}")));
    }
    let (nf, uf) = (n as f64, u as f64);
    let b = rho_max + m;
    let numerator = 16.0 * nf * uf.powi(4) * b.powi(4) * (4.0 * rho_max * rho_max + 2.0 * rho_prime_sup * rho_max);
    Ok(numerator / (8.0 * uf * uf * b * b + t))
}

/// Least-squares slope of `ln(error)` against `ln(t)` over the last
/// `tail_fraction` of the points.
pub fn rate_fit(curve: &[(f64, f64)], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::RateFit(format!("tail fraction {tail_fraction} must lie in (0, 1]")));
    }
    let take = ((curve.len() as f64) * tail_fraction).ceil() as usize;
    let window = &curve[curve.len() - take.min(curve.len())..];
    if window.len() < 10 {
        return Err(Error::RateFit(format!("{} points in the tail window, need 10", window.len())));
    }
    if let Some(&(t, e)) = window.iter().find(|(t, e)| !(*t > 0.0 && *e > 0.0)) {
        return Err(Error::RateFit(format!("non-positive point (t = {t}, error = {e})")));
    }
    let k = window.len() as f64;
    let (sx, sy) = window
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (t, e)| (sx + t.ln(), sy + e.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (sxy, sxx) = window.iter().fold((0.0, 0.0), |(sxy, sxx), (t, e)| {
        let dx = t.ln() - mx;
        (sxy + dx * (e.ln() - my), sxx + dx * dx)
    });
    if sxx == 0.0 {
        return Err(Error::RateFit("all t in the window coincide".into()));
    }
    Ok(sxy / sxx)
}
