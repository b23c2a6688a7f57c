/// Central-difference step used throughout the test suites.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `f` at `params` with central
/// differences of its value, coordinate by coordinate. Failures are reported
/// in the returned struct rather than raised.
pub fn gradient_check<F>(mut f: F, params: &[f64], step: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length must match parameter count");
    let mut point = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
        tolerance,
        passed: true,
    };
    for i in 0..params.len() {
        let orig = point[i];
        point[i] = orig + step;
        let (plus, _) = f(&point);
        point[i] = orig - step;
        let (minus, _) = f(&point);
        point[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err.is_nan() || err > report.max_rel_error || i == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    report
}
