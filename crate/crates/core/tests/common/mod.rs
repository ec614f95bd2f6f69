#![allow(dead_code)]

use wsopt_core::market::ReturnModel;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute accuracy `eps`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Last-stage success probability from wealth `x`: `P(X >= w_{k-1}(1+r)/x)`
/// below the threshold, 1 at or above it.
pub fn terminal_closed_form(model: &ReturnModel, threshold: f64, r: f64, x: f64) -> f64 {
    if x >= threshold {
        1.0
    } else {
        1.0 - model.cdf(threshold * (1.0 + r) / x)
    }
}

/// One-step expectation `E[v(Y x + c) ; Y x + c > 0]` with `Y = qX + (1-q)(1+r)`,
/// integrated in the return variable with the kink of `v` at `y_kink` as a
/// breakpoint.
pub fn one_step_expectation(
    model: &ReturnModel,
    v: &dyn Fn(f64) -> f64,
    y_kink: f64,
    q: f64,
    x: f64,
    c: f64,
    r: f64,
) -> f64 {
    let g = 1.0 + r;
    let z_of = |y: f64| (y - c) / (q * x) - (1.0 - q) * g / q;
    let lo = z_of(0.0);
    let hi = model.mu + 14.0 * model.sigma;
    let kink = z_of(y_kink).clamp(lo, hi);
    let integrand = |z: f64| {
        let y = (q * z + (1.0 - q) * g) * x + c;
        v(y) * model.pdf(z)
    };
    let mut total = 0.0;
    for (a, b) in [(lo, kink), (kink, hi)] {
        if b > a {
            total += adaptive_simpson(&integrand, a, b, 1e-13);
        }
    }
    total
}
