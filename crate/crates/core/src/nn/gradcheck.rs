/// Compares `analytic` against central differences of `loss` around `point`.
///
/// Returns `max |analytic − numeric| / max(1, |numeric|)`. `epsilon` is
/// clamped into `[1e-6, 1e-3]`.
pub fn grad_check<F>(point: &[f64], analytic: &[f64], epsilon: f64, mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "one analytic derivative per coordinate");
    let eps = epsilon.clamp(1e-6, 1e-3);
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let up = loss(&probe);
        probe[i] = point[i] - eps;
        let down = loss(&probe);
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}
