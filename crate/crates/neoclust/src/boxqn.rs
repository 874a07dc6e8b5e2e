//! Bound-constrained limited-memory quasi-Newton minimizer.
//!
//! Solves `min f(x) subject to l <= x <= u` for smooth `f` given through an
//! objective-with-gradient callback. The method alternates gradient
//! projection (for active-set identification) with L-BFGS steps restricted
//! to the estimated-free variables, using a projected Armijo backtracking
//! line search. Every iterate stays inside the box exactly; the stopping
//! criterion is the infinity norm of the projected gradient
//! `x - P[x - grad f(x)]`.

use ndarray::Array1;
use std::collections::VecDeque;

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const CURVATURE_SKIP: f64 = 1e-10;
const MIN_STEP: f64 = 1e-20;

/// A box-constrained minimization problem. The callback receives the point
/// and writes the gradient in place, returning the objective value.
pub struct BoxProblem<F> {
    pub lower: Array1<f64>,
    pub upper: Array1<f64>,
    pub x0: Array1<f64>,
    pub fg: F,
}

/// Why [`minimize`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnStatus {
    /// Projected-gradient infinity norm fell below `tol_pg`.
    Converged,
    /// Evaluation budget exhausted; the best iterate so far is returned.
    MaxEvals,
    /// No descent step of length above the floor exists along the projected
    /// steepest-descent path; the iterate is numerically stationary.
    Stalled,
    /// The callback produced a non-finite value or gradient.
    NonFinite,
}

/// Final iterate, objective, gradient, and bookkeeping from [`minimize`].
#[derive(Debug, Clone)]
pub struct QnResult {
    pub x: Array1<f64>,
    pub value: f64,
    pub grad: Array1<f64>,
    pub status: QnStatus,
    /// Projected-gradient infinity norm at the final iterate.
    pub pg_norm: f64,
    /// Number of callback evaluations spent.
    pub evals: usize,
    /// Objective value at each accepted iterate, starting with `x0`;
    /// non-increasing by construction.
    pub trace: Vec<f64>,
}

fn clamp(x: &Array1<f64>, lower: &Array1<f64>, upper: &Array1<f64>) -> Array1<f64> {
    Array1::from_iter(
        x.iter()
            .zip(lower.iter().zip(upper.iter()))
            .map(|(&v, (&l, &u))| v.max(l).min(u)),
    )
}

fn pg_inf_norm(x: &Array1<f64>, grad: &Array1<f64>, lower: &Array1<f64>, upper: &Array1<f64>) -> f64 {
    x.iter()
        .zip(grad.iter())
        .zip(lower.iter().zip(upper.iter()))
        .map(|((&v, &g), (&l, &u))| (v - (v - g).max(l).min(u)).abs())
        .fold(0.0, f64::max)
}

/// Variables pinned at a bound with the gradient pushing outward; the
/// quasi-Newton step leaves them fixed.
fn active_mask(
    x: &Array1<f64>,
    grad: &Array1<f64>,
    lower: &Array1<f64>,
    upper: &Array1<f64>,
) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            // an infinite bound is never active; the relative tolerance
            // below would otherwise swallow the whole axis
            let at_lower =
                lower[i].is_finite() && x[i] - lower[i] <= 1e-12 * (1.0 + lower[i].abs());
            let at_upper =
                upper[i].is_finite() && upper[i] - x[i] <= 1e-12 * (1.0 + upper[i].abs());
            (at_lower && grad[i] > 0.0) || (at_upper && grad[i] < 0.0)
        })
        .collect()
}

fn masked_dot(a: &Array1<f64>, b: &Array1<f64>, free: &[bool]) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(free.iter())
        .filter(|&(_, &f)| f)
        .map(|((&x, &y), _)| x * y)
        .sum()
}

/// Two-loop recursion over the stored pairs, restricted to free variables.
/// Pairs whose masked curvature is too small are skipped. Returns a descent
/// direction with active coordinates zero, or plain steepest descent when no
/// pair is usable.
fn lbfgs_direction(
    grad: &Array1<f64>,
    pairs: &VecDeque<(Array1<f64>, Array1<f64>)>,
    active: &[bool],
) -> (Array1<f64>, bool) {
    let free: Vec<bool> = active.iter().map(|&a| !a).collect();
    let mut q = Array1::from_iter(
        grad.iter()
            .zip(free.iter())
            .map(|(&g, &f)| if f { -g } else { 0.0 }),
    );
    let mut alphas: Vec<Option<(f64, f64)>> = Vec::with_capacity(pairs.len());
    let mut gamma = None;
    for (s, y) in pairs.iter().rev() {
        let sy = masked_dot(s, y, &free);
        let ss = masked_dot(s, s, &free);
        let yy = masked_dot(y, y, &free);
        if sy <= CURVATURE_SKIP * (ss * yy).sqrt() || sy <= 0.0 {
            alphas.push(None);
            continue;
        }
        if gamma.is_none() {
            gamma = Some(sy / yy);
        }
        let alpha = masked_dot(s, &q, &free) / sy;
        for i in 0..q.len() {
            if free[i] {
                q[i] -= alpha * y[i];
            }
        }
        alphas.push(Some((alpha, sy)));
    }
    let used_pairs = gamma.is_some();
    let gamma = gamma.unwrap_or(1.0);
    q.mapv_inplace(|v| v * gamma);
    for ((s, y), entry) in pairs.iter().zip(alphas.iter().rev()) {
        if let Some((alpha, sy)) = entry {
            let beta = masked_dot(y, &q, &free) / sy;
            for i in 0..q.len() {
                if free[i] {
                    q[i] += (alpha - beta) * s[i];
                }
            }
        }
    }
    (q, used_pairs)
}

/// Minimizes the boxed problem to projected-gradient tolerance `tol_pg`,
/// spending at most `max_evals` callback evaluations.
///
/// Panics if the bounds are inconsistent (`lower > upper` somewhere) or the
/// dimensions disagree.
pub fn minimize<F>(mut bp: BoxProblem<F>, tol_pg: f64, max_evals: usize) -> QnResult
where
    F: FnMut(&Array1<f64>, &mut Array1<f64>) -> f64,
{
    let dim = bp.x0.len();
    assert_eq!(bp.lower.len(), dim, "lower bound dimension mismatch");
    assert_eq!(bp.upper.len(), dim, "upper bound dimension mismatch");
    for i in 0..dim {
        assert!(
            bp.lower[i] <= bp.upper[i],
            "lower[{i}] = {} exceeds upper[{i}] = {}",
            bp.lower[i],
            bp.upper[i]
        );
    }

    let mut x = clamp(&bp.x0, &bp.lower, &bp.upper);
    let mut grad = Array1::zeros(dim);
    let mut value = (bp.fg)(&x, &mut grad);
    let mut evals = 1;
    let mut trace = vec![value];

    let finish = |x: Array1<f64>,
                  value: f64,
                  grad: Array1<f64>,
                  status: QnStatus,
                  evals: usize,
                  trace: Vec<f64>,
                  lower: &Array1<f64>,
                  upper: &Array1<f64>| {
        let pg_norm = pg_inf_norm(&x, &grad, lower, upper);
        QnResult {
            x,
            value,
            grad,
            status,
            pg_norm,
            evals,
            trace,
        }
    };

    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return finish(
            x,
            value,
            grad,
            QnStatus::NonFinite,
            evals,
            trace,
            &bp.lower,
            &bp.upper,
        );
    }

    let mut pairs: VecDeque<(Array1<f64>, Array1<f64>)> = VecDeque::with_capacity(MEMORY);
    let mut bb_step = 1.0 / (1.0 + grad.iter().fold(0.0f64, |m, g| m.max(g.abs())));
    // one steepest-descent retry is allowed per iterate before declaring a
    // stall; this flag records that the retry is in progress
    let mut forced_steepest = false;

    loop {
        if pg_inf_norm(&x, &grad, &bp.lower, &bp.upper) <= tol_pg {
            return finish(
                x,
                value,
                grad,
                QnStatus::Converged,
                evals,
                trace,
                &bp.lower,
                &bp.upper,
            );
        }
        if evals >= max_evals {
            return finish(
                x,
                value,
                grad,
                QnStatus::MaxEvals,
                evals,
                trace,
                &bp.lower,
                &bp.upper,
            );
        }

        let active = active_mask(&x, &grad, &bp.lower, &bp.upper);
        let (mut dir, mut quasi_newton) = if forced_steepest {
            (Array1::zeros(dim), false)
        } else {
            lbfgs_direction(&grad, &pairs, &active)
        };
        if !quasi_newton {
            for i in 0..dim {
                dir[i] = if active[i] { 0.0 } else { -grad[i] };
            }
        }
        // the two-loop result can fail to be a descent direction on
        // nonconvex objectives; fall back to projected steepest descent
        if quasi_newton && grad.dot(&dir) >= 0.0 {
            for i in 0..dim {
                dir[i] = if active[i] { 0.0 } else { -grad[i] };
            }
            quasi_newton = false;
        }

        let mut t = if quasi_newton { 1.0 } else { bb_step };
        let mut accepted = None;
        while evals < max_evals {
            let x_trial = clamp(&(&x + &(t * &dir)), &bp.lower, &bp.upper);
            let step = &x_trial - &x;
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step_norm == 0.0 || t < MIN_STEP {
                break;
            }
            let mut grad_trial = Array1::zeros(dim);
            let value_trial = (bp.fg)(&x_trial, &mut grad_trial);
            evals += 1;
            if !value_trial.is_finite() || grad_trial.iter().any(|g| !g.is_finite()) {
                return finish(
                    x,
                    value,
                    grad,
                    QnStatus::NonFinite,
                    evals,
                    trace,
                    &bp.lower,
                    &bp.upper,
                );
            }
            let predicted = grad.dot(&step);
            if value_trial <= value + ARMIJO_C1 * predicted && value_trial <= value {
                accepted = Some((x_trial, value_trial, grad_trial, step));
                break;
            }
            t *= BACKTRACK;
        }

        match accepted {
            Some((x_new, value_new, grad_new, step)) => {
                let y = &grad_new - &grad;
                let sy = step.dot(&y);
                let ss = step.dot(&step);
                if sy > CURVATURE_SKIP * (ss * y.dot(&y)).sqrt() {
                    bb_step = ss / sy;
                    if pairs.len() == MEMORY {
                        pairs.pop_front();
                    }
                    pairs.push_back((step, y));
                }
                x = x_new;
                value = value_new;
                grad = grad_new;
                trace.push(value);
                forced_steepest = false;
            }
            None => {
                if evals >= max_evals {
                    return finish(
                        x,
                        value,
                        grad,
                        QnStatus::MaxEvals,
                        evals,
                        trace,
                        &bp.lower,
                        &bp.upper,
                    );
                }
                if forced_steepest || pairs.is_empty() {
                    return finish(
                        x,
                        value,
                        grad,
                        QnStatus::Stalled,
                        evals,
                        trace,
                        &bp.lower,
                        &bp.upper,
                    );
                }
                // stale curvature can poison the direction; drop it and
                // retry once from steepest descent
                pairs.clear();
                forced_steepest = true;
            }
        }
    }
}
