//! Central-difference gradient checking. Relu stacks are piecewise
//! linear, so a probe interval that straddles a kink produces a
//! meaningless quotient; those coordinates are detected by comparing
//! the two one-sided differences and skipped rather than tolerated.

use ndarray::Array1;

pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Probes `idxs` coordinates of `x0` with step `h`, comparing central
/// differences of `f` against `analytic`. Coordinates whose one-sided
/// differences disagree by more than 5% of scale are counted as kinks.
pub fn central_diff_check<F>(
    mut f: F,
    x0: &Array1<f64>,
    analytic: &Array1<f64>,
    idxs: &[usize],
    h: f64,
) -> GradCheckReport
where
    F: FnMut(&Array1<f64>) -> f64,
{
    assert_eq!(x0.len(), analytic.len());
    let f0 = f(x0);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for &i in idxs {
        let mut xp = x0.clone();
        xp[i] += h;
        let fp = f(&xp);
        xp[i] -= 2.0 * h;
        let fm = f(&xp);
        let fwd = (fp - f0) / h;
        let bwd = (f0 - fm) / h;
        let scale = fwd.abs().max(bwd.abs()).max(1e-6);
        if (fwd - bwd).abs() > 0.05 * scale {
            skipped += 1;
            continue;
        }
        let central = (fp - fm) / (2.0 * h);
        let denom = central.abs().max(analytic[i].abs()).max(1e-8);
        max_rel = max_rel.max((central - analytic[i]).abs() / denom);
        checked += 1;
    }
    GradCheckReport { max_rel_error: max_rel, checked, skipped }
}

/// Deterministic spread of probe indices over a vector of length `n`.
pub fn probe_indices(n: usize, count: usize) -> Vec<usize> {
    let stride = (n / count.max(1)).max(1) | 1;
    (0..count.min(n)).map(|k| (k * stride + k * k % 7) % n).collect()
}
