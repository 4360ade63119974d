//! Central finite-difference comparison against stored gradients.

use super::params::ParamStore;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: Vec<GradMismatch>,
    /// Worst relative error over coordinates whose gradient exceeds the
    /// absolute floor; tiny gradients can't give a meaningful ratio.
    pub max_rel_err: f64,
    /// Coordinates with a gradient above the absolute floor.
    pub nontrivial: usize,
}

#[derive(Clone, Debug)]
pub struct GradMismatch {
    pub flat_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckTolerance {
    pub eps: f64,
    pub rel: f64,
    pub abs_floor: f64,
}

impl Default for GradCheckTolerance {
    fn default() -> Self {
        GradCheckTolerance {
            eps: 1e-4,
            rel: 1e-3,
            abs_floor: 1e-6,
        }
    }
}

/// Compares `store`'s gradient slots with `(L(p + ε) − L(p − ε)) / 2ε` for
/// each flat index in `indices`. Parameter values are restored afterwards.
pub fn check<F>(
    store: &mut ParamStore,
    indices: &[usize],
    tol: GradCheckTolerance,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut failures = Vec::new();
    let mut max_rel_err: f64 = 0.0;
    let mut nontrivial = 0;
    for &i in indices {
        let analytic = store.grad_scalar(i);
        let p = store.scalar(i);
        store.set_scalar(i, p + tol.eps);
        let up = loss(store);
        store.set_scalar(i, p - tol.eps);
        let down = loss(store);
        store.set_scalar(i, p);
        let numeric = (up - down) / (2.0 * tol.eps);
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale > tol.abs_floor {
            nontrivial += 1;
            diff / scale
        } else {
            0.0
        };
        max_rel_err = max_rel_err.max(rel);
        if diff > tol.abs_floor && rel > tol.rel {
            failures.push(GradMismatch {
                flat_index: i,
                analytic,
                numeric,
            });
        }
    }
    GradCheckReport {
        checked: indices.len(),
        failures,
        max_rel_err,
        nontrivial,
    }
}
