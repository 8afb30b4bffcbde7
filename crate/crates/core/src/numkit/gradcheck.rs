use super::Matrix;

/// Relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference gradient of `f` at `point`.
pub fn numeric_gradient(f: impl Fn(&Matrix) -> f64, point: &Matrix, step: f64) -> Matrix {
    let mut probe = point.clone();
    let mut grad = Matrix::zeros(point.rows(), point.cols());
    for i in 0..point.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - step;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        grad.as_mut_slice()[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Worst entrywise relative error between `analytic` and the central
/// difference gradient of `f` at `point`.
pub fn grad_check(f: impl Fn(&Matrix) -> f64, analytic: &Matrix, point: &Matrix, step: f64) -> f64 {
    assert_eq!(analytic.shape(), point.shape(), "gradient shape must match point");
    let numeric = numeric_gradient(f, point, step);
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
