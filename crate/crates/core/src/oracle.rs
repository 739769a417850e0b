//! Exact optimal coverage configuration and numerical certificates for the
//! bounds used in the convergence analysis.

use rand::Rng;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::metrics::{coverage_phi, grad_q, lyapunov_q, PositionState};

/// Below this gap `Q(x) - Q(x*)` the gradient ratio is treated as 0/0.
pub const AT_OPTIMUM_GAP: f64 = 1e-12;

/// The optimal configuration together with its first-order residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub x_star: PositionState,
    pub phi_star: f64,
    pub residuals: Vec<f64>,
    pub tol: f64,
}

impl OptimalityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// The unique minimizer of `Q` (and of the coverage metric).
///
/// The first-order conditions telescope to equal mass gaps `d = F(1)/n`
/// between neighbours and half-gaps at the walls, so
/// `F(x_i*) = (2i - 1) F(1) / (2n)`.
pub fn optimal_positions(field: &DensityField, n: usize, tol: f64) -> Result<PositionState> {
    if n == 0 {
        return Err(Error::InvalidState("at least one agent is required".into()));
    }
    let total = field.total_mass();
    let x = (1..=n)
        .map(|i| {
            let target = (2 * i - 1) as f64 * total / (2 * n) as f64;
            field.invert_antiderivative(target, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    PositionState::new(x)
}

/// `Phi* = F(1) / (2n)`.
pub fn optimal_phi(field: &DensityField, n: usize) -> f64 {
    field.total_mass() / (2 * n) as f64
}

/// `Q(x*) = F(1)^2 / n`.
pub fn optimal_q(field: &DensityField, n: usize) -> f64 {
    field.total_mass().powi(2) / n as f64
}

/// Residuals of the stationarity conditions of `Q`, written as mass-gap
/// balances. All vanish exactly at the optimum.
pub fn first_order_residuals(x: &PositionState, field: &DensityField) -> Vec<f64> {
    let n = x.len();
    let m: Vec<f64> = x.positions().iter().map(|&z| field.mass_to(z)).collect();
    let total = field.total_mass();
    if n == 1 {
        return vec![2.0 * m[0] - 2.0 * (total - m[0])];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                2.0 * m[0] - (m[1] - m[0])
            } else if i + 1 == n {
                (m[i] - m[i - 1]) - 2.0 * (total - m[i])
            } else {
                (m[i] - m[i - 1]) - (m[i + 1] - m[i])
            }
        })
        .collect()
}

/// Solves for the optimum and certifies it against the first-order
/// conditions.
pub fn certify(field: &DensityField, n: usize, tol: f64) -> Result<OptimalityReport> {
    let x_star = optimal_positions(field, n, tol)?;
    let residuals = first_order_residuals(&x_star, field);
    let phi_star = coverage_phi(&x_star, field);
    Ok(OptimalityReport {
        x_star,
        phi_star,
        residuals,
        tol,
    })
}

/// Outcome of the gradient-dominance check `|Q'|^2 / (Q - Q*) >= 4/n^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioCheck {
    Evaluated { ratio: f64, bound: f64, pass: bool },
    AtOptimum,
}

impl RatioCheck {
    pub fn passed(&self) -> bool {
        matches!(self, RatioCheck::Evaluated { pass: true, .. } | RatioCheck::AtOptimum)
    }
}

pub fn gradient_ratio_check(x: &PositionState, field: &DensityField) -> RatioCheck {
    let n = x.len();
    let gap = lyapunov_q(x, field) - optimal_q(field, n);
    if gap < AT_OPTIMUM_GAP {
        return RatioCheck::AtOptimum;
    }
    let g2: f64 = grad_q(x, field).iter().map(|g| g * g).sum();
    let ratio = g2 / gap;
    let bound = 4.0 / (n * n) as f64;
    RatioCheck::Evaluated {
        ratio,
        bound,
        pass: ratio >= bound,
    }
}

/// `v_1^2 + sum (v_{i+1} - v_i)^2 + v_n^2`.
pub fn boundary_difference_form(v: &[f64]) -> f64 {
    let n = v.len();
    let inner: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    v[0] * v[0] + inner + v[n - 1] * v[n - 1]
}

/// Smallest value of [`boundary_difference_form`] over `samples` random
/// unit vectors in dimension `n`.
pub fn sampled_form_minimum<R: Rng + ?Sized>(n: usize, samples: usize, rng: &mut R) -> f64 {
    let mut v = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let norm = loop {
            for c in v.iter_mut() {
                *c = rng.random_range(-1.0..=1.0);
            }
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-8 {
                break norm;
            }
        };
        v.iter_mut().for_each(|c| *c /= norm);
        best = best.min(boundary_difference_form(&v));
    }
    best
}

/// Sorted uniform draws: a random feasible state.
pub fn random_monotone_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PositionState {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    x.sort_by(f64::total_cmp);
    PositionState::new(x).expect("sorted draws in [0, 1) form a valid state")
}
