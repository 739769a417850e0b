//! Eigenvalue bisection for symmetric tridiagonal matrices (Sturm counts).

/// Number of eigenvalues strictly below `shift` of the symmetric
/// tridiagonal matrix with diagonal `diag` and off-diagonal `off`.
pub fn count_below(diag: &[f64], off: &[f64], shift: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0_f64;
    for (i, &d) in diag.iter().enumerate() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = d - shift - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (d.abs() + shift.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix, bracketed by
/// Gershgorin discs and refined by bisection to machine precision.
///
/// # Panics
/// If `diag` is empty or `off.len() + 1 != diag.len()`.
pub fn min_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    assert!(!diag.is_empty() && off.len() + 1 == diag.len());
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i < off.len() { off[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = (0..diag.len()).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..diag.len()).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
