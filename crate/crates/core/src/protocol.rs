//! The randomized scalar coverage protocol.
//!
//! At every step agent `k` samples the density once between itself and
//! each neighbour and once at its own position, forms the weighted gap
//! estimates `L_k` and `R_k`, and moves against the resulting unbiased
//! estimate of `dQ/dx_k`. All agents update synchronously from the same
//! snapshot of positions.

use rand::Rng;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::metrics::{boundary_weights, PositionState};

/// Distribution of the additive measurement noise `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Uniform on `[-M, M]`.
    Uniform,
    /// `+M` or `-M` with equal probability.
    Bernoulli,
    /// No noise.
    Zero,
}

/// Zero-mean measurement noise supported on `[-M, M]` with `M <= 1`, so
/// that samples of a field with `rho >= 1` stay nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    m: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::InvalidNoise(format!("support bound {m} must be a nonnegative number")));
        }
        if m > 1.0 {
            return Err(Error::InvalidNoise(format!("support bound {m} must be ≤ 1")));
        }
        if kind == NoiseKind::Zero && m != 0.0 {
            return Err(Error::InvalidNoise("zero noise has support bound 0".into()));
        }
        Ok(NoiseModel { kind, m })
    }

    pub fn uniform(m: f64) -> Result<Self> {
        Self::new(NoiseKind::Uniform, m)
    }

    pub fn bernoulli(m: f64) -> Result<Self> {
        Self::new(NoiseKind::Bernoulli, m)
    }

    pub fn zero() -> Self {
        NoiseModel {
            kind: NoiseKind::Zero,
            m: 0.0,
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// The support bound `M`.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.m == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Uniform => rng.random_range(-self.m..=self.m),
            NoiseKind::Bernoulli => {
                if rng.random::<bool>() {
                    self.m
                } else {
                    -self.m
                }
            }
            NoiseKind::Zero => 0.0,
        }
    }
}

/// Rule mapping the iteration index to a stepsize in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `A / (A + t)` with `A = 8 U^2 (rho_max + M)^2`.
    Theorem { u: usize, scale: f64 },
    /// `1 / (t + 1)^p`.
    Power { exponent: f64 },
    /// `1` during the first half of `horizon` steps, `1 / sqrt(t)` after.
    Hybrid { horizon: u64 },
}

impl StepSchedule {
    /// `u` is a known upper bound on the number of agents.
    pub fn theorem(u: usize, rho_max: f64, m: f64) -> Result<Self> {
        if u < 1 {
            return Err(Error::InvalidSchedule("U must be at least 1".into()));
        }
        if !(rho_max.is_finite() && rho_max >= 1.0 && m.is_finite() && m >= 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "rho_max = {rho_max} and M = {m} do not give a valid scale"
            )));
        }
        let uf = u as f64;
        Ok(StepSchedule::Theorem {
            u,
            scale: 8.0 * uf * uf * (rho_max + m).powi(2),
        })
    }

    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::InvalidSchedule(format!("exponent {exponent} must lie in (1/2, 1]")));
        }
        Ok(StepSchedule::Power { exponent })
    }

    pub fn hybrid(horizon: u64) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidSchedule(format!("horizon {horizon} must be at least 2")));
        }
        Ok(StepSchedule::Hybrid { horizon })
    }

    pub fn alpha_at(&self, t: u64) -> f64 {
        let tf = t as f64;
        match *self {
            StepSchedule::Theorem { scale, .. } => scale / (scale + tf),
            StepSchedule::Power { exponent } => (tf + 1.0).powf(-exponent),
            StepSchedule::Hybrid { horizon } => {
                if 2 * t < horizon {
                    1.0
                } else {
                    1.0 / tf.sqrt()
                }
            }
        }
    }
}

/// The three noisy samples taken by one agent and the derived gap
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSamples {
    pub left_point: f64,
    pub right_point: f64,
    pub left_density: f64,
    pub own_density: f64,
    pub right_density: f64,
    /// `L_k`: sampled density times the length of the left gap.
    pub left_mass: f64,
    /// `R_k`: sampled density times the length of the right gap.
    pub right_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// `g_bar`, whose expectation is the gradient of `Q`.
    pub g: Vec<f64>,
    pub samples: Vec<AgentSamples>,
}

impl GradientEstimate {
    pub fn norm_sq(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum()
    }
}

/// A density field observed through a noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    field: DensityField,
    noise: NoiseModel,
}

impl Protocol {
    pub fn new(field: DensityField, noise: NoiseModel) -> Self {
        Protocol { field, noise }
    }

    pub fn field(&self) -> &DensityField {
        &self.field
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// `rho_max + M`, the almost-sure bound on any sample.
    pub fn sample_bound(&self) -> f64 {
        self.field.rho_max() + self.noise.m()
    }

    /// Upper bound on `|g_bar|^2` that holds on every draw.
    pub fn gradient_norm_bound(&self) -> f64 {
        64.0 * self.sample_bound().powi(4)
    }

    /// One noisy measurement `rho(z) + w`.
    pub fn sample_density<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> Result<f64> {
        let v = self.field.rho(z)?;
        Ok(v + self.noise.sample(rng))
    }

    fn sample_at<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> f64 {
        self.field.rho_at(z) + self.noise.sample(rng)
    }

    /// Draws the `3n` samples of one round and forms `g_bar`.
    ///
    /// Samples are drawn agent by agent in the order left point, own
    /// position, right point.
    pub fn stochastic_gradient<R: Rng + ?Sized>(&self, x: &PositionState, rng: &mut R) -> GradientEstimate {
        let n = x.len();
        let mut g = Vec::with_capacity(n);
        let mut samples = Vec::with_capacity(n);
        for k in 0..n {
            let here = x.positions()[k];
            let (left, right) = (x.left_of(k), x.right_of(k));

            let left_point = uniform_between(left, here, rng);
            let left_density = self.sample_at(left_point, rng);
            let own_density = self.sample_at(here, rng);
            let right_point = uniform_between(here, right, rng);
            let right_density = self.sample_at(right_point, rng);

            let left_mass = left_density * (here - left);
            let right_mass = right_density * (right - here);
            let (cl, cr) = boundary_weights(k, n);
            g.push(own_density * (cl * left_mass - cr * right_mass));
            samples.push(AgentSamples {
                left_point,
                right_point,
                left_density,
                own_density,
                right_density,
                left_mass,
                right_mass,
            });
        }
        let est = GradientEstimate { g, samples };
        debug_assert!(est.norm_sq() <= self.gradient_norm_bound() * (1.0 + 1e-12));
        est
    }

    /// Moves every agent by `-alpha / (16 (rho_max + M)^2) * g`.
    ///
    /// Fails only if the result is not an ordered state in `[0, 1]`, which
    /// the protocol rules out for any `g` produced by
    /// [`Protocol::stochastic_gradient`].
    pub fn apply_gradient(&self, x: &PositionState, alpha: f64, g: &[f64]) -> Result<PositionState> {
        check_alpha(alpha)?;
        let gain = alpha / (16.0 * self.sample_bound().powi(2));
        let next: Vec<f64> = x.positions().iter().zip(g).map(|(xk, gk)| xk - gain * gk).collect();
        PositionState::new(next).map_err(|e| match e {
            Error::InvalidState(msg) => Error::OrderViolation(msg),
            other => other,
        })
    }

    /// One synchronous round of the protocol with stepsize `alpha`.
    pub fn step<R: Rng + ?Sized>(&self, x: &PositionState, alpha: f64, rng: &mut R) -> Result<PositionState> {
        check_alpha(alpha)?;
        let est = self.stochastic_gradient(x, rng);
        self.apply_gradient(x, alpha, &est.g)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "alpha",
            value: alpha,
            domain: "[0, 1]",
        })
    }
}

fn uniform_between<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    // a + u (b - a) can round past b; clamp keeps the point in the gap.
    (a + u * (b - a)).min(b)
}
