//! Three-phase grid search over the stock weight.
//!
//! Weights are handled as integer ten-thousandths so every phase visits an
//! exact, reproducible set of points.

use super::quadrature::candidate_value;
use super::StageValues;
use crate::market::ReturnModel;

const UNITS: i32 = 10_000;

fn weight(n: i32) -> f64 {
    n as f64 / UNITS as f64
}

/// Maximise `objective` over `(0, 1]`:
///
/// 1. `q ∈ {0.01, 0.02, ..., 0.99}`, first maximum wins;
/// 2. `q1 + 0.001 m` for `m = -9..=9`;
/// 3. `q2 + 0.0001 m` for `m = -9..=10`.
///
/// In the refinement phases the incumbent is replaced only by a strictly
/// larger value. Returns `(q3, objective(q3))`.
pub fn refine_weight(mut objective: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut best_n = 100;
    let mut best = objective(weight(best_n));
    for n in (200..=9_900).step_by(100) {
        let v = objective(weight(n));
        if v > best {
            best = v;
            best_n = n;
        }
    }
    for (step, range) in [(10, -9..=9), (1, -9..=10)] {
        let center = best_n;
        for m in range {
            if m == 0 {
                continue;
            }
            let n = center + step * m;
            let v = objective(weight(n));
            if v > best {
                best = v;
                best_n = n;
            }
        }
    }
    (weight(best_n), best)
}

/// Best stock weight at wealth `x` against the next stage values, and its
/// estimated success probability.
pub fn iterated_grid_search(
    x: f64,
    next: &StageValues,
    c_next: f64,
    r: f64,
    model: &ReturnModel,
) -> (f64, f64) {
    refine_weight(|q| candidate_value(q, x, next, c_next, r, model))
}
