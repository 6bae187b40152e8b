/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rtol: f64) -> bool {
        self.max_rel_err < rtol
    }
}

/// Relative error floor; keeps coordinates with near-zero gradient from dominating.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Central-difference check of `analytic` (∂f/∂x) at `x`.
///
/// `loss_fn` must be deterministic. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn finite_diff_check<F>(mut loss_fn: F, x: &[f64], analytic: &[f64], eps: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length must match parameters");
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: None,
        checked: x.len(),
    };
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = loss_fn(&probe);
        probe[i] = orig - eps;
        let down = loss_fn(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        report.max_abs_err = report.max_abs_err.max(abs);
        if rel > report.max_rel_err || rel.is_nan() {
            report.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
            report.worst_index = Some(i);
        }
    }
    report
}
