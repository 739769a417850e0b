//! Coverage metric, the Lyapunov function `Q`, its gradient, and the
//! spectrum of the Hessian of `Q` in mass coordinates.

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::tridiag;

/// Agent positions `0 <= x_1 <= ... <= x_n <= 1`, with the virtual
/// endpoints `x_0 = 0` and `x_{n+1} = 1` implied.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionState(Vec<f64>);

impl PositionState {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidState("at least one agent is required".into()));
        }
        if let Some((i, v)) = positions.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidState(format!("x_{} = {v} is outside [0, 1]", i + 1)));
        }
        if let Some(i) = positions.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidState(format!(
                "x_{} = {} > x_{} = {}",
                i + 1,
                positions[i],
                i + 2,
                positions[i + 1]
            )));
        }
        Ok(PositionState(positions))
    }

    /// `n` agents all parked at `z`.
    pub fn uniform_at(n: usize, z: f64) -> Result<Self> {
        Self::new(vec![z; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `x_{k-1}` for the zero-based agent index `k`, with `x_0 = 0`.
    pub fn left_of(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.0[k - 1]
        }
    }

    /// `x_{k+1}` for the zero-based agent index `k`, with `x_{n+1} = 1`.
    pub fn right_of(&self, k: usize) -> f64 {
        self.0.get(k + 1).copied().unwrap_or(1.0)
    }

    /// Squared distance to `other`, divided by `n`.
    pub fn mean_sq_dist(&self, other: &PositionState) -> f64 {
        let n = self.len() as f64;
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
    }

    pub fn mean_abs_dist(&self, other: &PositionState) -> f64 {
        let n = self.len() as f64;
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
    }
}

impl AsRef<[f64]> for PositionState {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn masses(x: &PositionState, field: &DensityField) -> Vec<f64> {
    x.positions().iter().map(|&z| field.mass_to(z)).collect()
}

/// Worst-case weighted distance from any point of `[0, 1]` to its nearest
/// agent.
///
/// In mass coordinates the farthest point of an interior gap is its
/// midpoint, and the boundary gaps are covered only from one side.
pub fn coverage_phi(x: &PositionState, field: &DensityField) -> f64 {
    let m = masses(x, field);
    let first = m[0];
    let last = field.total_mass() - m[m.len() - 1];
    let interior = m.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(0.0, f64::max);
    first.max(last).max(interior)
}

/// Brute-force `max_y min_i d(y, x_i)` over an `m`-point uniform grid.
pub fn coverage_phi_grid(x: &PositionState, field: &DensityField, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidState(format!("grid size {m} must be at least 2")));
    }
    let agents = masses(x, field);
    let h = 1.0 / (m - 1) as f64;
    let mut best = 0.0_f64;
    let mut fy = 0.0;
    let mut prev = 0.0;
    for j in 0..m {
        let y = if j + 1 == m { 1.0 } else { j as f64 * h };
        if j > 0 {
            fy += field.mass_between(prev, y);
        }
        prev = y;
        let nearest = agents.iter().map(|a| (fy - a).abs()).fold(f64::INFINITY, f64::min);
        best = best.max(nearest);
    }
    Ok(best)
}

/// `Q(x) = 2 F(x_1)^2 + sum (F(x_i) - F(x_{i-1}))^2 + 2 (F(1) - F(x_n))^2`.
pub fn lyapunov_q(x: &PositionState, field: &DensityField) -> f64 {
    let m = masses(x, field);
    let first = m[0];
    let last = field.total_mass() - m[m.len() - 1];
    let interior: f64 = m.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    2.0 * first * first + interior + 2.0 * last * last
}

/// Exact gradient of [`lyapunov_q`].
pub fn grad_q(x: &PositionState, field: &DensityField) -> Vec<f64> {
    let n = x.len();
    let m = masses(x, field);
    let total = field.total_mass();
    (0..n)
        .map(|k| {
            let left_gap = m[k] - if k == 0 { 0.0 } else { m[k - 1] };
            let right_gap = if k + 1 == n { total } else { m[k + 1] } - m[k];
            let (cl, cr) = boundary_weights(k, n);
            field.rho_at(x.positions()[k]) * (cl * left_gap - cr * right_gap)
        })
        .collect()
}

/// Weights on the left and right mass gaps in `dQ/dx_k`; boundary gaps
/// enter `Q` doubled.
pub fn boundary_weights(k: usize, n: usize) -> (f64, f64) {
    let cl = if k == 0 { 4.0 } else { 2.0 };
    let cr = if k + 1 == n { 4.0 } else { 2.0 };
    (cl, cr)
}

/// Smallest eigenvalue of the Hessian of `Q` in mass coordinates: the
/// tridiagonal matrix with diagonal `(6, 4, ..., 4, 6)` and off-diagonal
/// `-2`, or `(8)` when `n = 1`.
pub fn g_hessian_min_eig(n: usize) -> f64 {
    assert!(n >= 1, "need at least one agent");
    if n == 1 {
        return 8.0;
    }
    let mut diag = vec![4.0; n];
    diag[0] = 6.0;
    diag[n - 1] = 6.0;
    tridiag::min_eigenvalue(&diag, &vec![-2.0; n - 1])
}
