//! Density fields on `[0, 1]`, their cumulative mass `F`, and the
//! density-weighted distance between points.
//!
//! Every admissible field satisfies `1 <= rho(z) <= rho_max`, so `F` is
//! strictly increasing with slope at least one and can be inverted by
//! bisection.

use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Absolute tolerance for quadrature-backed antiderivatives.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Default tolerance for [`DensityField::invert_antiderivative`].
pub const INVERSION_TOL: f64 = 1e-12;

/// Number of uniform grid points used by [`DensityField::validate`].
pub const VALIDATION_GRID: usize = 10_000;

const BISECTION_MAX_ITERS: usize = 200;

/// Parametric family of a density field.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `rho(z) = level`.
    Constant { level: f64 },
    /// `rho(z) = intercept + slope * z`.
    Affine { intercept: f64, slope: f64 },
    /// Linear interpolation through `(breakpoints[i], values[i])`; the
    /// breakpoints start at 0, end at 1 and are strictly increasing.
    PiecewiseLinear { breakpoints: Vec<f64>, values: Vec<f64> },
    /// `rho(z) = 1 + amplitude * exp(-(z - center)^2 / (2 width^2))`.
    SmoothBump { amplitude: f64, center: f64, width: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::Affine { .. } => "affine",
            Family::PiecewiseLinear { .. } => "piecewise-linear",
            Family::SmoothBump { .. } => "smooth-bump",
        }
    }

    /// Whether `rho` is differentiable everywhere on `[0, 1]`.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Family::PiecewiseLinear { .. })
    }
}

/// A density field together with its declared bounds `rho_max` and
/// `sup |rho'|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    family: Family,
    rho_max: f64,
    rho_prime_sup: f64,
    // Mass accumulated up to each breakpoint (piecewise-linear only).
    knot_mass: Vec<f64>,
    total_mass: f64,
}

impl DensityField {
    /// Builds a field from its family, declaring the analytic bounds.
    ///
    /// Only structural problems are rejected here (non-finite parameters,
    /// malformed breakpoints, non-positive bump width). Whether the field
    /// respects `rho >= 1` is checked by [`DensityField::validate`].
    pub fn new(family: Family) -> Result<Self> {
        check_structure(&family)?;
        let knot_mass = match &family {
            Family::PiecewiseLinear { breakpoints, values } => {
                let mut acc = Vec::with_capacity(breakpoints.len());
                acc.push(0.0);
                for i in 1..breakpoints.len() {
                    let seg = (breakpoints[i] - breakpoints[i - 1]) * 0.5 * (values[i] + values[i - 1]);
                    acc.push(acc[i - 1] + seg);
                }
                acc
            }
            _ => Vec::new(),
        };
        let (rho_max, rho_prime_sup) = analytic_bounds(&family);
        let mut field = DensityField {
            family,
            rho_max,
            rho_prime_sup,
            knot_mass,
            total_mass: 0.0,
        };
        field.total_mass = field.mass_to(1.0);
        Ok(field)
    }

    pub fn constant(level: f64) -> Result<Self> {
        Self::new(Family::Constant { level })
    }

    pub fn affine(intercept: f64, slope: f64) -> Result<Self> {
        Self::new(Family::Affine { intercept, slope })
    }

    pub fn piecewise_linear(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(Family::PiecewiseLinear { breakpoints, values })
    }

    pub fn smooth_bump(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        Self::new(Family::SmoothBump {
            amplitude,
            center,
            width,
        })
    }

    /// Replaces the analytic bounds with user-declared ones.
    pub fn with_declared_bounds(mut self, rho_max: f64, rho_prime_sup: f64) -> Self {
        self.rho_max = rho_max;
        self.rho_prime_sup = rho_prime_sup;
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn rho_prime_sup(&self) -> f64 {
        self.rho_prime_sup
    }

    /// `F(1)`, the total mass of the field.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Evaluates `rho(z)`.
    pub fn rho(&self, z: f64) -> Result<f64> {
        check_unit("z", z)?;
        Ok(self.rho_at(z))
    }

    /// Evaluates `F(z)`, the integral of `rho` over `[0, z]`.
    pub fn antiderivative(&self, z: f64) -> Result<f64> {
        check_unit("z", z)?;
        Ok(self.mass_to(z))
    }

    /// Finds `z` in `[0, 1]` with `|F(z) - y| <= tol` by bisection.
    pub fn invert_antiderivative(&self, y: f64, tol: f64) -> Result<f64> {
        if !(y.is_finite() && (0.0..=self.total_mass).contains(&y)) {
            return Err(Error::Domain {
                what: "y",
                value: y,
                domain: "[0, F(1)]",
            });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        if y == self.total_mass {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..BISECTION_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.mass_to(mid);
            if (fm - y).abs() <= tol {
                return Ok(self.newton_polish(mid, y));
            }
            if fm < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (dlo, dhi) = ((self.mass_to(lo) - y).abs(), (self.mass_to(hi) - y).abs());
        let (best, err) = if dlo <= dhi { (lo, dlo) } else { (hi, dhi) };
        if err <= tol {
            Ok(self.newton_polish(best, y))
        } else {
            Err(Error::InversionFailed { target: y, tol })
        }
    }

    // One Newton step from a bisection iterate, kept only if it lowers the
    // residual; exact wherever F is quadratic or linear near the root.
    fn newton_polish(&self, z: f64, y: f64) -> f64 {
        let r = self.mass_to(z) - y;
        let candidate = (z - r / self.rho_at(z)).clamp(0.0, 1.0);
        if (self.mass_to(candidate) - y).abs() < r.abs() {
            candidate
        } else {
            z
        }
    }

    /// Density-weighted distance `|F(b) - F(a)|`.
    pub fn rho_distance(&self, a: f64, b: f64) -> Result<f64> {
        check_unit("a", a)?;
        check_unit("b", b)?;
        Ok(self.mass_between(a.min(b), a.max(b)))
    }

    /// Lists every way in which the field breaks `1 <= rho <= rho_max` or
    /// exceeds its declared slope bound on a uniform validation grid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.rho_max.is_finite() && self.rho_max >= 1.0) {
            out.push(Violation::BadDeclaration {
                name: "rho_max",
                value: self.rho_max,
            });
        }
        if !(self.rho_prime_sup.is_finite() && self.rho_prime_sup >= 0.0) {
            out.push(Violation::BadDeclaration {
                name: "rho_prime_sup",
                value: self.rho_prime_sup,
            });
        }

        let h = 1.0 / (VALIDATION_GRID - 1) as f64;
        let grid = |i: usize| if i + 1 == VALIDATION_GRID { 1.0 } else { i as f64 * h };
        let mut min = (f64::INFINITY, 0.0);
        let mut max = (f64::NEG_INFINITY, 0.0);
        let mut slope = (0.0_f64, 0.0);
        let mut prev = self.rho_at(0.0);
        for i in 0..VALIDATION_GRID {
            let z = grid(i);
            let v = self.rho_at(z);
            if !v.is_finite() {
                out.push(Violation::NonFinite { z });
                return out;
            }
            if v < min.0 {
                min = (v, z);
            }
            if v > max.0 {
                max = (v, z);
            }
            if i > 0 {
                // By the mean value theorem a forward difference never
                // exceeds sup |rho'| on its cell.
                let d = ((v - prev) / (z - grid(i - 1))).abs();
                if d > slope.0 {
                    slope = (d, z);
                }
            }
            prev = v;
        }
        if min.0 < 1.0 {
            out.push(Violation::BelowOne {
                z: min.1,
                value: min.0,
            });
        }
        if max.0 > self.rho_max * (1.0 + 1e-12) {
            out.push(Violation::AboveRhoMax {
                z: max.1,
                value: max.0,
                declared: self.rho_max,
            });
        }
        if slope.0 > self.rho_prime_sup * (1.0 + 1e-9) + 1e-9 {
            out.push(Violation::SlopeAboveDeclared {
                z: slope.1,
                value: slope.0,
                declared: self.rho_prime_sup,
            });
        }
        out
    }

    /// Returns the field if [`DensityField::validate`] finds nothing.
    pub fn validated(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            Err(Error::InvalidField(msg))
        }
    }

    // Unchecked evaluation; callers guarantee z in [0, 1].
    pub(crate) fn rho_at(&self, z: f64) -> f64 {
        match &self.family {
            Family::Constant { level } => *level,
            Family::Affine { intercept, slope } => intercept + slope * z,
            Family::PiecewiseLinear { breakpoints, values } => {
                let j = segment_of(breakpoints, z);
                let t = (z - breakpoints[j]) / (breakpoints[j + 1] - breakpoints[j]);
                values[j] + t * (values[j + 1] - values[j])
            }
            Family::SmoothBump {
                amplitude,
                center,
                width,
            } => 1.0 + amplitude * bump(z, *center, *width),
        }
    }

    pub(crate) fn mass_to(&self, z: f64) -> f64 {
        match &self.family {
            Family::Constant { level } => level * z,
            Family::Affine { intercept, slope } => intercept * z + 0.5 * slope * z * z,
            Family::PiecewiseLinear { breakpoints, .. } => {
                let j = segment_of(breakpoints, z);
                self.knot_mass[j] + (z - breakpoints[j]) * 0.5 * (self.rho_at(breakpoints[j]) + self.rho_at(z))
            }
            Family::SmoothBump {
                amplitude,
                center,
                width,
            } => z + amplitude * adaptive_simpson(|s| bump(s, *center, *width), 0.0, z, QUADRATURE_TOL),
        }
    }

    /// `F(b) - F(a)` for `a <= b`, integrating only the sub-interval when
    /// the family has no closed form.
    pub(crate) fn mass_between(&self, a: f64, b: f64) -> f64 {
        match &self.family {
            Family::SmoothBump {
                amplitude,
                center,
                width,
            } => (b - a) + amplitude * adaptive_simpson(|s| bump(s, *center, *width), a, b, QUADRATURE_TOL),
            _ => self.mass_to(b) - self.mass_to(a),
        }
    }
}

/// A reason a field fails validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BelowOne { z: f64, value: f64 },
    AboveRhoMax { z: f64, value: f64, declared: f64 },
    SlopeAboveDeclared { z: f64, value: f64, declared: f64 },
    NonFinite { z: f64 },
    BadDeclaration { name: &'static str, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BelowOne { z, value } => write!(f, "ρ({z})={value} < 1"),
            Violation::AboveRhoMax { z, value, declared } => {
                write!(f, "ρ({z})={value} exceeds declared rho_max={declared}")
            }
            Violation::SlopeAboveDeclared { z, value, declared } => {
                write!(f, "|ρ'| ≈ {value} near z={z} exceeds declared rho_prime_sup={declared}")
            }
            Violation::NonFinite { z } => write!(f, "ρ({z}) is not finite"),
            Violation::BadDeclaration { name, value } => write!(f, "declared {name}={value} is not admissible"),
        }
    }
}

fn bump(z: f64, center: f64, width: f64) -> f64 {
    let d = z - center;
    (-d * d / (2.0 * width * width)).exp()
}

fn segment_of(breakpoints: &[f64], z: f64) -> usize {
    // partition_point gives the first breakpoint > z
    let p = breakpoints.partition_point(|&b| b <= z);
    p.clamp(1, breakpoints.len() - 1) - 1
}

fn check_unit(what: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: v,
            domain: "[0, 1]",
        })
    }
}

fn check_structure(family: &Family) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidField(msg));
    match family {
        Family::Constant { level } => {
            if !level.is_finite() {
                return bad(format!("constant level {level} is not finite"));
            }
        }
        Family::Affine { intercept, slope } => {
            if !(intercept.is_finite() && slope.is_finite()) {
                return bad("affine coefficients must be finite".into());
            }
        }
        Family::PiecewiseLinear { breakpoints, values } => {
            if breakpoints.len() < 2 {
                return bad("piecewise-linear needs at least two breakpoints".into());
            }
            if breakpoints.len() != values.len() {
                return bad(format!(
                    "{} breakpoints but {} values",
                    breakpoints.len(),
                    values.len()
                ));
            }
            if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
                return bad("breakpoints must start at 0 and end at 1".into());
            }
            if breakpoints.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
                return bad("breakpoints must be strictly increasing".into());
            }
            if values.iter().any(|v| !v.is_finite()) {
                return bad("piecewise-linear values must be finite".into());
            }
        }
        Family::SmoothBump {
            amplitude,
            center,
            width,
        } => {
            if !(amplitude.is_finite() && center.is_finite() && width.is_finite()) {
                return bad("bump parameters must be finite".into());
            }
            if *width <= 0.0 {
                return bad(format!("bump width {width} must be positive"));
            }
        }
    }
    Ok(())
}

fn analytic_bounds(family: &Family) -> (f64, f64) {
    match family {
        Family::Constant { level } => (*level, 0.0),
        Family::Affine { intercept, slope } => (intercept.max(intercept + slope), slope.abs()),
        Family::PiecewiseLinear { breakpoints, values } => {
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slope = breakpoints
                .windows(2)
                .zip(values.windows(2))
                .map(|(b, v)| ((v[1] - v[0]) / (b[1] - b[0])).abs())
                .fold(0.0, f64::max);
            (max, slope)
        }
        Family::SmoothBump {
            amplitude,
            center,
            width,
        } => {
            let nearest = center.clamp(0.0, 1.0);
            let rho_max = 1.0 + amplitude.max(0.0) * bump(nearest, *center, *width);
            // |rho'| peaks at center +- width, or at an endpoint if those
            // fall outside the domain.
            let slope_at = |z: f64| (amplitude * (z - center) / (width * width) * bump(z, *center, *width)).abs();
            let sup = [0.0, 1.0, center - width, center + width]
                .into_iter()
                .filter(|z| (0.0..=1.0).contains(z))
                .map(slope_at)
                .fold(0.0, f64::max);
            (rho_max, sup)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bump_field() -> DensityField {
        DensityField::smooth_bump(2.0, 0.5, 0.1).unwrap()
    }

    fn all_fields() -> Vec<DensityField> {
        vec![
            DensityField::constant(1.0).unwrap(),
            DensityField::affine(1.0, 1.0).unwrap(),
            DensityField::piecewise_linear(vec![0.0, 0.3, 0.7, 1.0], vec![1.0, 3.0, 1.5, 2.0]).unwrap(),
            bump_field(),
        ]
    }

    #[test]
    fn rho_examples() {
        assert_eq!(DensityField::constant(1.0).unwrap().rho(0.7).unwrap(), 1.0);
        assert_eq!(DensityField::affine(1.0, 1.0).unwrap().rho(0.5).unwrap(), 1.5);
        let peak = DensityField::smooth_bump(2.0, 0.5, 0.1).unwrap().rho(0.5).unwrap();
        assert_eq!(peak, 3.0);
    }

    #[test]
    fn out_of_domain_rejected() {
        let f = DensityField::constant(1.0).unwrap();
        assert!(matches!(f.rho(1.1), Err(Error::Domain { .. })));
        assert!(matches!(f.antiderivative(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(f.rho(f64::NAN), Err(Error::Domain { .. })));
        assert!(matches!(f.invert_antiderivative(1.5, 1e-12), Err(Error::Domain { .. })));
        assert!(matches!(f.rho_distance(0.2, 2.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn antiderivative_examples() {
        let c = DensityField::constant(1.0).unwrap();
        assert!((c.antiderivative(0.3).unwrap() - 0.3).abs() < 1e-15);
        let a = DensityField::affine(1.0, 1.0).unwrap();
        assert!((a.antiderivative(1.0).unwrap() - 1.5).abs() < 1e-15);
        for f in all_fields() {
            assert_eq!(f.antiderivative(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn inversion_examples() {
        let c = DensityField::constant(1.0).unwrap();
        assert!((c.invert_antiderivative(0.3, 1e-12).unwrap() - 0.3).abs() < 1e-12);
        let a = DensityField::affine(1.0, 1.0).unwrap();
        // positive root of z^2 + 2z - 1.5
        let root = -1.0 + 2.5_f64.sqrt();
        let z = a.invert_antiderivative(0.75, 1e-12).unwrap();
        assert!((z - root).abs() < 1e-11);
        assert!((z - 0.58114).abs() < 1e-5);
        for f in all_fields() {
            assert_eq!(f.invert_antiderivative(0.0, 1e-12).unwrap(), 0.0);
            assert_eq!(f.invert_antiderivative(f.total_mass(), 1e-12).unwrap(), 1.0);
        }
    }

    #[test]
    fn distance_examples() {
        let c = DensityField::constant(1.0).unwrap();
        assert!((c.rho_distance(0.2, 0.5).unwrap() - 0.3).abs() < 1e-15);
        let a = DensityField::affine(1.0, 1.0).unwrap();
        assert!((a.rho_distance(0.0, 1.0).unwrap() - 1.5).abs() < 1e-15);
        for f in all_fields() {
            assert_eq!(f.rho_distance(0.4, 0.4).unwrap(), 0.0);
        }
    }

    #[test]
    fn validation_examples() {
        assert!(DensityField::constant(1.0).unwrap().validate().is_empty());
        let low = DensityField::affine(0.5, 1.0).unwrap().validate();
        assert_eq!(low.len(), 1);
        assert_eq!(low[0].to_string(), "ρ(0)=0.5 < 1");
        let under = bump_field().with_declared_bounds(2.0, 100.0).validate();
        assert!(under.iter().any(|v| matches!(v, Violation::AboveRhoMax { .. })));
        let slope = bump_field().with_declared_bounds(3.0, 1.0).validate();
        assert!(slope.iter().any(|v| matches!(v, Violation::SlopeAboveDeclared { .. })));
        for f in all_fields() {
            assert!(f.validate().is_empty(), "{:?}", f.validate());
        }
        assert!(DensityField::affine(0.5, 1.0).unwrap().validated().is_err());
    }

    #[test]
    fn structural_errors() {
        assert!(DensityField::piecewise_linear(vec![0.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(DensityField::piecewise_linear(vec![0.0, 0.6, 0.4, 1.0], vec![1.0; 4]).is_err());
        assert!(DensityField::piecewise_linear(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(DensityField::smooth_bump(1.0, 0.5, 0.0).is_err());
        assert!(DensityField::constant(f64::INFINITY).is_err());
    }

    #[test]
    fn analytic_bump_bounds() {
        let f = bump_field();
        assert_eq!(f.rho_max(), 3.0);
        let expected = 2.0 / 0.1 * (-0.5_f64).exp();
        assert!((f.rho_prime_sup() - expected).abs() < 1e-12);
        // center outside the domain: bound taken at the nearest endpoint
        let g = DensityField::smooth_bump(1.0, 1.5, 0.2).unwrap();
        assert!((g.rho_max() - g.rho(1.0).unwrap()).abs() < 1e-15);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn bump_quadrature_matches_erf() {
        use statrs::function::erf::erf;
        let f = bump_field();
        let (a, mu, s) = (2.0, 0.5, 0.1_f64);
        let k = s * (std::f64::consts::PI / 2.0).sqrt();
        let exact = |z: f64| z + a * k * (erf((z - mu) / (s * 2f64.sqrt())) - erf(-mu / (s * 2f64.sqrt())));
        for i in 0..=50 {
            let z = i as f64 / 50.0;
            assert!((f.antiderivative(z).unwrap() - exact(z)).abs() < 1e-10, "z={z}");
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for f in all_fields().into_iter().filter(|f| !matches!(f.family(), Family::SmoothBump { .. })) {
            for i in 0..=40 {
                let z = i as f64 / 40.0;
                let q = adaptive_simpson(|s| f.rho_at(s), 0.0, z, QUADRATURE_TOL);
                assert!((q - f.antiderivative(z).unwrap()).abs() < 1e-8, "{} z={z}", f.family().name());
            }
        }
    }

    #[test]
    fn piecewise_linear_kinks_are_continuous() {
        let f = &all_fields()[2];
        for &b in &[0.3, 0.7] {
            let (l, r) = (f.antiderivative(b - 1e-12).unwrap(), f.antiderivative(b).unwrap());
            assert!((r - l).abs() < 1e-10);
        }
        assert!((f.rho(0.3).unwrap() - 3.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn mass_grows_at_least_linearly(idx in 0usize..4, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let f = &all_fields()[idx];
            let (lo, hi) = (a.min(b), a.max(b));
            let gap = f.antiderivative(hi).unwrap() - f.antiderivative(lo).unwrap();
            prop_assert!(gap >= (hi - lo) - 1e-12);
        }

        #[test]
        fn inversion_is_right_inverse(idx in 0usize..4, u in 0.0..=1.0f64) {
            let f = &all_fields()[idx];
            let y = u * f.total_mass();
            let z = f.invert_antiderivative(y, INVERSION_TOL).unwrap();
            prop_assert!((0.0..=1.0).contains(&z));
            prop_assert!((f.antiderivative(z).unwrap() - y).abs() <= INVERSION_TOL);
        }

        #[test]
        fn distance_is_additive_on_collinear_triples(
            idx in 0usize..4,
            mut pts in proptest::array::uniform3(0.0..=1.0f64),
        ) {
            let f = &all_fields()[idx];
            pts.sort_by(f64::total_cmp);
            let [a, b, c] = pts;
            let lhs = f.rho_distance(a, c).unwrap();
            let rhs = f.rho_distance(a, b).unwrap() + f.rho_distance(b, c).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9);
            prop_assert!((f.rho_distance(a, c).unwrap() - f.rho_distance(c, a).unwrap()).abs() == 0.0);
        }
    }
}
