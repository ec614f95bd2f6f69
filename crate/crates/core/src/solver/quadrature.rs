//! Grid approximation of the one-step expectation
//! `E[v_{i+1}((q X + (1 - q)(1 + r)) x + c_{i+1})]` restricted to
//! positive next-stage wealth.
//!
//! After substituting `y = (q z + (1 - q)(1 + r)) x + c` the integrand is
//! `v_{i+1}(y) f(z(y)) / (q x)` with `z(y) = 1 + r - (1 + r)/q + (y - c)/(q x)`.
//! The integral is evaluated as `P(Y > 0)` times the `f`-weighted average of
//! `v_{i+1}` over the next stage grid.

use super::StageValues;
use crate::market::ReturnModel;

/// Relative weights below `exp(-WINDOW_LOG_CUTOFF)` of the largest grid
/// weight are dropped. They cannot move the ratio by more than ~1e-17.
const WINDOW_LOG_CUTOFF: f64 = 40.0;

/// `exp(-t²/2)` underflows to zero in f64 beyond this exponent.
const UNDERFLOW_EXPONENT: f64 = 745.0;

/// Above this spacing (in standard deviations) a chunk of the recurrence
/// could overflow before the matching decay is applied.
const MAX_RECURRENCE_STEP: f64 = 0.5;

const CHUNK: usize = 8;

/// Grid estimate of the probability of success after choosing stock weight
/// `q` at wealth `x`, given the next stage values.
///
/// Returns 0 when every grid weight `f(z(y))` underflows, i.e. the positive
/// part of `Y` places no resolvable mass on the grid.
pub fn candidate_value(
    q: f64,
    x: f64,
    next: &StageValues,
    c_next: f64,
    r: f64,
    model: &ReturnModel,
) -> f64 {
    debug_assert!(q > 0.0 && q <= 1.0 && x > 0.0);
    let gross = 1.0 + r;
    let inv_qx = 1.0 / (q * x);
    let a = gross - gross / q - c_next * inv_qx;
    let tail = model.sf(a);
    if tail == 0.0 {
        return 0.0;
    }

    let n = next.values.len();
    let spacing = next.spacing();
    // Standardised argument of f at grid node j is t_a + (j + 1) * beta.
    let t_a = (a - model.mu) / model.sigma;
    let beta = spacing * inv_qx / model.sigma;
    let t_at = |j: usize| t_a + (j + 1) as f64 * beta;

    let peak = (-t_a / beta - 1.0).round();
    let nearest = if peak <= 0.0 {
        0
    } else if peak >= (n - 1) as f64 {
        n - 1
    } else {
        peak as usize
    };
    let t_near = t_at(nearest);
    if 0.5 * t_near * t_near > UNDERFLOW_EXPONENT {
        return 0.0;
    }

    let reach = (t_near * t_near + 2.0 * WINDOW_LOG_CUTOFF).sqrt();
    let lo_real = ((-reach - t_a) / beta - 1.0).ceil();
    let hi_real = ((reach - t_a) / beta - 1.0).floor();
    let lo = if lo_real <= 0.0 {
        0
    } else {
        (lo_real as usize).min(nearest)
    };
    let hi = if hi_real >= (n - 1) as f64 {
        n - 1
    } else if hi_real < 0.0 {
        nearest
    } else {
        (hi_real as usize).max(nearest)
    };

    let (num, den) = if beta <= MAX_RECURRENCE_STEP {
        weighted_sums_recurrence(&next.values[lo..=hi], t_at(lo), beta, t_near)
    } else {
        weighted_sums_direct(&next.values[lo..=hi], t_at(lo), beta, t_near)
    };
    if den == 0.0 {
        return 0.0;
    }
    tail * (num / den)
}

/// `(sum v_j e_j, sum e_j)` with `e_j = exp(-(t_j² - t_ref²)/2)`,
/// `t_j = t0 + j * beta`.
fn weighted_sums_direct(values: &[f64], t0: f64, beta: f64, t_ref: f64) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &v) in values.iter().enumerate() {
        let t = t0 + j as f64 * beta;
        let e = (-0.5 * (t - t_ref) * (t + t_ref)).exp();
        num += v * e;
        den += e;
    }
    (num, den)
}

/// Same sums as [`weighted_sums_direct`], re-anchoring an exact `exp` every
/// [`CHUNK`] nodes and stepping with the ratio recurrence in between:
/// `e_{j+1} = e_j * g_j`, `g_{j+1} = g_j * exp(-beta²)`.
fn weighted_sums_recurrence(values: &[f64], t0: f64, beta: f64, t_ref: f64) -> (f64, f64) {
    let decay = (-beta * beta).exp();
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, chunk) in values.chunks(CHUNK).enumerate() {
        let t = t0 + (c * CHUNK) as f64 * beta;
        let mut e = (-0.5 * (t - t_ref) * (t + t_ref)).exp();
        let mut g = (-(t * beta) - 0.5 * beta * beta).exp();
        for &v in chunk {
            num += v * e;
            den += e;
            e *= g;
            g *= decay;
        }
    }
    (num, den)
}
