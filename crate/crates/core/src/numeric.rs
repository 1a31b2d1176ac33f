//! Dense nonlinear solvers for the tiny systems this crate produces
//! (at most a handful of equations in at most four unknowns).
//!
//! The workhorse is damped Gauss-Newton with a least-norm step through the
//! SVD pseudoinverse, so underdetermined systems (one equation, three
//! unknowns) move to the nearest solution instead of wandering. Closures
//! return `None` where an expression leaves its domain; the solver gives
//! up rather than stepping through the singularity.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct NewtonOpts {
    pub max_iters: usize,
    /// Convergence threshold on the residual norm.
    pub tol: f64,
    /// Singular values below `rank_tol * max(1, sigma_max)` are dropped
    /// from the pseudoinverse.
    pub rank_tol: f64,
}

impl Default for NewtonOpts {
    fn default() -> NewtonOpts {
        NewtonOpts { max_iters: 25, tol: 1e-12, rank_tol: 1e-9 }
    }
}

/// Euclidean norm that survives entries whose square underflows (approach
/// points can sit at distances like 1e-218, far below sqrt of the smallest
/// normal number).
pub fn robust_norm(d: &DVector<f64>) -> f64 {
    let amax = d.amax();
    if amax == 0.0 || !amax.is_finite() {
        return amax;
    }
    amax * d.unscale(amax).norm()
}

/// Least-norm Gauss-Newton. `f` is the residual, `j` its Jacobian; both
/// may refuse a point by returning `None`. Returns the first iterate whose
/// residual norm drops to `opts.tol`, or `None` on stall, domain failure
/// or non-finite values.
pub fn newton_least_norm(
    f: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
    j: impl Fn(&DVector<f64>) -> Option<DMatrix<f64>>,
    x0: &DVector<f64>,
    opts: &NewtonOpts,
) -> Option<DVector<f64>> {
    let mut x = x0.clone();
    let mut fx = f(&x)?;
    if !fx.iter().all(|v| v.is_finite()) {
        return None;
    }
    // a start that is merely within tolerance still gets one polish step:
    // callers subtract the solution from the start, and returning the start
    // unchanged would make that difference exactly zero
    let mut polished = false;
    for _ in 0..opts.max_iters {
        if fx.norm() == 0.0 || (polished && fx.norm() <= opts.tol) {
            return Some(x);
        }
        let jac = j(&x)?;
        if !jac.iter().all(|v| v.is_finite()) {
            return None;
        }
        let svd = jac.svd(true, true);
        let cut = opts.rank_tol * svd.singular_values.max().max(1.0);
        let step = svd.solve(&fx, cut).ok()?;
        // backtrack on overshoot; tiny systems rarely need more than a halving
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let cand = &x - &step * lambda;
            if let Some(fc) = f(&cand) {
                if fc.iter().all(|v| v.is_finite()) && (fc.norm() < fx.norm() || fc.norm() <= opts.tol) {
                    x = cand;
                    fx = fc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if fx.norm() <= opts.tol { Some(x) } else { None };
        }
        polished = true;
    }
    if fx.norm() <= opts.tol {
        Some(x)
    } else {
        None
    }
}

/// Gauss-Newton for minimization: drives `|f|^2` down and returns the best
/// iterate seen, even when the minimum is positive (nearest-point searches).
pub fn least_squares_refine(
    f: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
    j: impl Fn(&DVector<f64>) -> Option<DMatrix<f64>>,
    x0: &DVector<f64>,
    opts: &NewtonOpts,
) -> DVector<f64> {
    let mut best = x0.clone();
    let mut best_norm = match f(&best) {
        Some(v) if v.iter().all(|c| c.is_finite()) => v.norm(),
        _ => return best,
    };
    let mut x = best.clone();
    let mut fx_norm = best_norm;
    for _ in 0..opts.max_iters {
        if fx_norm <= opts.tol {
            break;
        }
        let Some(jac) = j(&x) else { break };
        if !jac.iter().all(|v| v.is_finite()) {
            break;
        }
        let Some(fx) = f(&x) else { break };
        let svd = jac.svd(true, true);
        let cut = opts.rank_tol * svd.singular_values.max().max(1.0);
        let Ok(step) = svd.solve(&fx, cut) else { break };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let cand = &x - &step * lambda;
            if let Some(fc) = f(&cand) {
                if fc.iter().all(|v| v.is_finite()) && fc.norm() < fx_norm {
                    x = cand;
                    fx_norm = fc.norm();
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        if fx_norm < best_norm {
            best = x.clone();
            best_norm = fx_norm;
        }
    }
    best
}

/// Bisection for a sign change of `g` on [a, b]. Returns the midpoint once
/// the bracket shrinks to `tol`; `None` without a sign change or when an
/// endpoint fails to evaluate.
pub fn bisect(g: impl Fn(f64) -> Option<f64>, a: f64, b: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    let mut glo = g(lo)?;
    let ghi = g(hi)?;
    if glo == 0.0 {
        return Some(lo);
    }
    if ghi == 0.0 {
        return Some(hi);
    }
    if glo.signum() == ghi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Some(mid);
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Some(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
