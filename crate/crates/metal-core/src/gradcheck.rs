//! Finite-difference verification of reverse-mode gradients.
//!
//! [`grad_check`] perturbs every scalar parameter of a store in turn,
//! re-evaluates a caller-supplied loss, and compares the central difference
//! against the analytic gradient. It never fails; the report carries the
//! worst relative error and the caller decides the tolerance.

use crate::error::Result;
use crate::math;
use crate::tensor::{GradStore, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Relative errors use `max(|analytic|, |numeric|, rel_floor)` as the
    /// denominator so vanishing gradients do not divide by zero.
    pub rel_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            rel_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat coordinate index of the worst relative error.
    pub worst_coord: usize,
    pub n_coords: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compare `analytic` (aligned with `store`) against central finite
/// differences of `loss` at the store's current values.
pub fn grad_check<F>(
    store: &ParamStore,
    analytic: &GradStore,
    mut loss: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let flat = store.flatten();
    let analytic_flat = analytic.flatten();
    debug_assert_eq!(flat.len(), analytic_flat.len());

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_coord: 0,
        n_coords: flat.len(),
    };

    for i in 0..flat.len() {
        let mut bumped = flat.clone();
        bumped[i] = flat[i] + cfg.eps;
        probe.restore(&bumped)?;
        let up = loss(&probe)?;
        bumped[i] = flat[i] - cfg.eps;
        probe.restore(&bumped)?;
        let down = loss(&probe)?;

        let numeric = (up - down) / (2.0 * cfg.eps);
        let a = analytic_flat[i];
        let abs_err = math::abs(a - numeric);
        let rel = abs_err / math::fmax(math::fmax(math::abs(a), math::abs(numeric)), cfg.rel_floor);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_coord = i;
        }
        report.max_abs_err = math::fmax(report.max_abs_err, abs_err);
    }
    Ok(report)
}
