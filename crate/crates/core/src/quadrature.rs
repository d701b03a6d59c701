//! Scalar quadrature on an interval, backed by tanh-sinh integration.

/// Integrates `f` over `[a, b]` to a relative accuracy of roughly `rel_tol`.
///
/// The absolute target is derived from a coarse first pass, so the result
/// is relative to the magnitude of the integral rather than to 1.
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let coarse = quadrature::double_exponential::integrate(&f, a, b, 1e-6);
    let scale = coarse.integral.abs().max(f64::MIN_POSITIVE);
    let fine = quadrature::double_exponential::integrate(&f, a, b, rel_tol * scale);
    fine.integral
}
