//! Central-difference gradient oracle used by the test suites.

use super::Real;

/// Numerical gradient of `f` at `x` via central differences with step `eps`.
pub fn central_difference(mut f: impl FnMut(&[Real]) -> Real, x: &[Real], eps: Real) -> Vec<Real> {
    let mut grad = vec![0.0; x.len()];
    let mut xs = x.to_vec();
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + eps;
        let hi = f(&xs);
        xs[i] = orig - eps;
        let lo = f(&xs);
        xs[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    grad
}

/// Largest relative error between analytic and numerical gradients. The
/// denominator is floored at 0.1 so near-zero entries are compared absolutely
/// instead of amplifying single-precision finite-difference noise.
pub fn max_rel_err(analytic: &[Real], numeric: &[Real]) -> Real {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(0.1))
        .fold(0.0, Real::max)
}
