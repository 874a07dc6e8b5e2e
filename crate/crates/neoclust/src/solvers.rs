//! The four multiplier-method drivers (ALM, PALM, ADMM, SADMM) and the
//! block subsolvers the ADMM variants use.
//!
//! All four share one outer loop: optimize the primal variables against the
//! current multipliers, then `lambda <- lambda - sigma c` and a penalty
//! increase when infeasibility stalls. They differ in the primal step:
//!
//! * ALM minimizes `L_A` jointly over all blocks with [`crate::boxqn`].
//! * PALM does the same plus a proximal term `1/(2 tau) ||x - x_k||^2`
//!   anchored at the previous outer iterate.
//! * ADMM sweeps the blocks in the order `Y, f, g, s, r`: the `Y` block via
//!   boxqn, `f` and `g` via the box-simplex bisection solver, `s` and `r`
//!   in closed form; multipliers update once per sweep.
//! * SADMM is ADMM with the `Y` solve replaced by a single projected
//!   gradient step with Armijo backtracking.
//!
//! The objective is nonconvex, so no monotonicity is promised across outer
//! iterations; the contract is infeasibility below `tol_infeas` at
//! termination.

use std::time::Instant;

use ndarray::{Array1, Array2};

use crate::auglag::{self, PenaltyPolicy};
use crate::boxqn::{self, BoxProblem, QnStatus};
use crate::iterative::DiscreteClustering;
use crate::model::{
    residuals, sdp_objective, KernelProblem, LowRankState, Multipliers,
};

/// Which multiplier method drives the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Alm,
    Palm,
    Admm,
    Sadmm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Alm => "alm",
            Method::Palm => "palm",
            Method::Admm => "admm",
            Method::Sadmm => "sadmm",
        }
    }
}

/// Outer-loop settings shared by all methods.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stop once the constraint infinity norm falls below this.
    pub tol_infeas: f64,
    /// Outer iteration cap.
    pub max_outer: usize,
    /// Initial penalty `sigma`. ALM and PALM move all blocks at once and can
    /// cross objective basins along the feasible manifold, where the penalty
    /// never bites; the stock value serves them on most instances. ADMM and
    /// SADMM move one block at a time, so a basin crossing transiently pays
    /// `sigma ||c||^2` and a too-large `sigma0` locks them into the warm
    /// start's basin. Scale it down when the constraint excursions are large
    /// (for the graph kernels here, roughly the squared mean weighted row
    /// sum).
    pub sigma0: f64,
    /// Penalty growth rule.
    pub penalty: PenaltyPolicy,
    /// Subproblem projected-gradient tolerance at the first outer iteration;
    /// shrinks by `inner_tol_shrink` per iteration down to `inner_tol_floor`.
    pub inner_tol_start: f64,
    pub inner_tol_shrink: f64,
    pub inner_tol_floor: f64,
    /// Evaluation budget per inner subproblem solve.
    pub max_inner_evals: usize,
    /// PALM proximal parameter `tau`; `None` ties it to the current `sigma`.
    pub tau: Option<f64>,
    /// Relative per-iteration state-change bound below which a fixed-point
    /// method (PALM, ADMM, SADMM) counts as settled. ALM counts as settled
    /// after every outer iteration.
    pub tol_settle: f64,
    /// Outer iterations without a settle after which the penalty check runs
    /// anyway. At a too-small `sigma` the multiplier updates can drive a
    /// limit cycle whose steps never settle; this breaks the cycle.
    pub penalty_stall: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_infeas: 1e-3,
            max_outer: 300,
            sigma0: 1.0,
            penalty: PenaltyPolicy::default(),
            inner_tol_start: 1e-2,
            inner_tol_shrink: 0.5,
            inner_tol_floor: 1e-6,
            max_inner_evals: 500,
            tau: None,
            tol_settle: 1e-4,
            penalty_stall: 50,
        }
    }
}

/// One row of the per-outer-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct OuterRecord {
    pub iter: usize,
    /// Seconds since the solve started; nondecreasing across records.
    pub wall_seconds: f64,
    pub sdp_objective: f64,
    pub infeasibility: f64,
    pub sigma: f64,
    /// Augmented-Lagrangian evaluations spent in this iteration's primal
    /// update.
    pub inner_evals: usize,
}

/// Full diagnostic trace of one solve.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub records: Vec<OuterRecord>,
}

impl SolverTrace {
    pub fn total_inner_evals(&self) -> usize {
        self.records.iter().map(|r| r.inner_evals).sum()
    }

    pub fn outer_iterations(&self) -> usize {
        self.records.len()
    }
}

/// Final state of a solve. When `converged` is false the returned state is
/// the best iterate encountered, not necessarily the last: the lowest
/// objective among iterates within the infeasibility tolerance, or the
/// lowest-infeasibility iterate if none reached it.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: LowRankState,
    pub multipliers: Multipliers,
    pub trace: SolverTrace,
    pub converged: bool,
}

/// Runs the selected method from `st0` (projected into the box first).
pub fn solve(
    p: &KernelProblem,
    st0: &LowRankState,
    method: Method,
    cfg: &SolverConfig,
) -> SolveResult {
    assert!(cfg.tol_infeas > 0.0, "tol_infeas must be positive");
    let mut st = st0.clone();
    st.project();
    let mut m = Multipliers::zeros(p.n(), cfg.sigma0);
    let mut trace = SolverTrace::default();
    let started = Instant::now();
    let mut inner_tol = cfg.inner_tol_start;
    let mut prev_infeas = f64::INFINITY;
    let mut last_check = 0usize;
    let mut best: Option<(f64, f64, LowRankState, Multipliers)> = None;
    let mut converged = false;
    let fixed_point_method = !matches!(method, Method::Alm);

    for iter in 0..cfg.max_outer {
        let flat_before = st.to_flat();
        let evals = match method {
            Method::Alm => joint_minimize(p, &mut st, &m, None, inner_tol, cfg.max_inner_evals),
            Method::Palm => {
                let tau = cfg.tau.unwrap_or(m.sigma);
                joint_minimize(
                    p,
                    &mut st,
                    &m,
                    Some((flat_before.clone(), 1.0 / tau)),
                    inner_tol,
                    cfg.max_inner_evals,
                )
            }
            Method::Admm => admm_sweep(p, &mut st, &m, inner_tol, cfg.max_inner_evals, false),
            Method::Sadmm => admm_sweep(p, &mut st, &m, inner_tol, cfg.max_inner_evals, true),
        };

        let res = residuals(p, &st);
        let infeas = res.inf_norm();
        let obj = sdp_objective(p, &st);
        trace.records.push(OuterRecord {
            iter,
            wall_seconds: started.elapsed().as_secs_f64(),
            sdp_objective: obj,
            infeasibility: infeas,
            sigma: m.sigma,
            inner_evals: evals,
        });
        // tolerance-feasible iterates rank by objective, the rest by
        // infeasibility; any feasible iterate beats any infeasible one
        let better = match &best {
            None => true,
            Some((b_infeas, b_obj, _, _)) => {
                match (infeas <= cfg.tol_infeas, *b_infeas <= cfg.tol_infeas) {
                    (true, true) => obj < *b_obj,
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => infeas < *b_infeas,
                }
            }
        };
        if better {
            best = Some((infeas, obj, st.clone(), m.clone()));
        }
        // ALM's inner solve leaves the state near-stationary for L_A, so
        // feasibility alone certifies an approximate KKT point. PALM, ADMM
        // and SADMM are fixed-point iterations (a feasible iterate can
        // still be crawling downhill, and PALM's true L_A gradient equals
        // its prox term), so they must also stop moving. The step-change
        // test reads on SADMM's stationarity only because the penalty guard
        // below keeps sigma from exploding: SADMM's step is scaled by
        // 1/sigma, and under runaway sigma a tiny step proves nothing.
        let flat_after = st.to_flat();
        let change = (&flat_after - &flat_before)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = flat_after.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let settled = !fixed_point_method || change <= cfg.tol_settle * (1.0 + scale);
        if infeas <= cfg.tol_infeas && settled {
            converged = true;
            break;
        }
        m = auglag::update_multipliers(&m, &res);
        // Grow the penalty only while infeasible, and only once the primal
        // iteration has settled at the current sigma: a mid-crawl sweep
        // method makes slow per-iteration progress that the growth rule
        // would misread as stalling, and the resulting sigma blow-up
        // freezes the Y block. ALM settles every iteration, recovering the
        // classic per-outer check. The stall window catches never-settling
        // limit cycles.
        if infeas > cfg.tol_infeas && (settled || iter - last_check >= cfg.penalty_stall) {
            m = auglag::update_penalty(&m, infeas, prev_infeas, cfg.penalty);
            prev_infeas = infeas;
            last_check = iter;
        }
        inner_tol = (inner_tol * cfg.inner_tol_shrink).max(cfg.inner_tol_floor);
    }

    if !converged {
        log::warn!(
            "{} did not converge within {} outer iterations; returning the \
             best iterate encountered",
            method.name(),
            cfg.max_outer
        );
        if let Some((_, _, best_st, best_m)) = best {
            st = best_st;
            m = best_m;
        }
    }
    SolveResult {
        state: st,
        multipliers: m,
        trace,
        converged,
    }
}

/// ALM/PALM primal update: minimize `L_A` (plus optional prox) jointly over
/// the flattened box. Returns the evaluation count.
fn joint_minimize(
    p: &KernelProblem,
    st: &mut LowRankState,
    m: &Multipliers,
    prox: Option<(Array1<f64>, f64)>,
    tol_pg: f64,
    max_evals: usize,
) -> usize {
    let (n, k) = (p.n(), p.k());
    let bp = BoxProblem {
        lower: LowRankState::flat_lower(n, k),
        upper: LowRankState::flat_upper(n, k),
        x0: st.to_flat(),
        fg: |x: &Array1<f64>, g: &mut Array1<f64>| {
            let state = LowRankState::from_flat(n, k, x);
            let out = auglag::eval(p, &state, m, prox.as_ref().map(|(a, w)| (a, *w)));
            g.assign(&out.grad);
            out.value
        },
    };
    let got = boxqn::minimize(bp, tol_pg, max_evals);
    if got.status == QnStatus::NonFinite {
        log::warn!("subproblem hit non-finite values; keeping its best iterate");
    }
    *st = LowRankState::from_flat(n, k, &got.x);
    got.evals
}

/// One ADMM sweep in the block order `Y, f, g, s, r`. Multiplier updates
/// happen in the caller, once per sweep. Returns the `L_A` evaluation count.
fn admm_sweep(
    p: &KernelProblem,
    st: &mut LowRankState,
    m: &Multipliers,
    tol_pg: f64,
    max_evals: usize,
    single_gradient_step: bool,
) -> usize {
    let (n, k) = (p.n(), p.k());
    let sigma = m.sigma;
    let w = p.weights();

    let evals = if single_gradient_step {
        projected_gradient_y_step(p, st, m)
    } else {
        let y0 = Array1::from_iter(st.y.t().iter().copied());
        let frozen = st.clone();
        let bp = BoxProblem {
            lower: Array1::zeros(n * k),
            upper: Array1::from_elem(n * k, f64::INFINITY),
            x0: y0,
            fg: |x: &Array1<f64>, g: &mut Array1<f64>| {
                let mut state = frozen.clone();
                for c in 0..k {
                    for i in 0..n {
                        state.y[(i, c)] = x[c * n + i];
                    }
                }
                let out = auglag::eval(p, &state, m, None);
                g.assign(&out.grad.slice(ndarray::s![..n * k]));
                out.value
            },
        };
        let got = boxqn::minimize(bp, tol_pg, max_evals);
        if got.status == QnStatus::NonFinite {
            log::warn!("Y-block subproblem hit non-finite values; keeping its best iterate");
        }
        for c in 0..k {
            for i in 0..n {
                st.y[(i, c)] = got.x[c * n + i];
            }
        }
        got.evals
    };

    // f block: min a'f + (sigma/2) f'Df + (sigma/2)(e'f)^2 over 0 <= f <= k
    // with D = diag(1 + w_i^2), from expanding the cb, cc, cd terms of L_A
    let z = st.y.sum_axis(ndarray::Axis(0));
    let yz = st.y.dot(&z);
    let a_f = Array1::from_shape_fn(n, |i| {
        p.d()[i] + w[i] * m.mu[i] - sigma * w[i] * yz[i] - m.lambda2
            - sigma * p.assignment_budget()
            - m.gamma[i]
            - sigma * (st.g[i] + st.s[i])
    });
    let d_f = Array1::from_shape_fn(n, |i| 1.0 + w[i] * w[i]);
    st.f = box_simplex_quadratic(&a_f, &d_f, sigma, k as f64);

    // g block: same form with D = I, from the cd and ce terms
    let a_g = Array1::from_shape_fn(n, |i| {
        m.gamma[i] - sigma * (st.f[i] - st.s[i]) - m.lambda3
            - sigma * (p.coverage_floor() + st.r)
    });
    let d_g = Array1::ones(n);
    st.g = box_simplex_quadratic(&a_g, &d_g, sigma, 1.0);

    st.s = closed_form_s(&st.f, &st.g, &m.gamma, sigma);
    st.r = closed_form_r(&st.g, p.beta(), m.lambda3, sigma);
    evals
}

/// SADMM `Y` update: one projected-gradient step with Armijo backtracking.
/// Never increases `L_A`; leaves `Y` unchanged when no decrease is found.
fn projected_gradient_y_step(p: &KernelProblem, st: &mut LowRankState, m: &Multipliers) -> usize {
    let (n, k) = (p.n(), p.k());
    let base = auglag::eval(p, st, m, None);
    let mut evals = 1;
    let grad_y = base.grad.slice(ndarray::s![..n * k]);
    let pg = (0..k)
        .flat_map(|c| (0..n).map(move |i| (i, c)))
        .map(|(i, c)| {
            let v = st.y[(i, c)];
            (v - (v - grad_y[c * n + i]).max(0.0)).abs()
        })
        .fold(0.0f64, f64::max);
    if pg == 0.0 {
        return evals;
    }
    // the penalty makes the Y-gradient Lipschitz constant scale with sigma
    let mut t = 1.0 / m.sigma.max(1.0);
    for _ in 0..60 {
        let mut trial = st.clone();
        let mut predicted = 0.0;
        let mut moved = false;
        for c in 0..k {
            for i in 0..n {
                let old = st.y[(i, c)];
                let new = (old - t * grad_y[c * n + i]).max(0.0);
                trial.y[(i, c)] = new;
                predicted += grad_y[c * n + i] * (new - old);
                moved |= new != old;
            }
        }
        if !moved {
            break;
        }
        let value = auglag::eval(p, &trial, m, None).value;
        evals += 1;
        if value <= base.value + 1e-4 * predicted && value <= base.value {
            st.y = trial.y;
            break;
        }
        t *= 0.5;
        if t < 1e-20 {
            break;
        }
    }
    evals
}

/// Solves `min a'x + (sigma/2) x'Dx + (sigma/2)(e'x)^2` over `0 <= x <= b`
/// for positive diagonal `D`.
///
/// For fixed `tau = e'x` the minimizer is the projection
/// `x(tau) = P[-(1/sigma) D^-1 (a + sigma tau e); 0, b]`, so the problem
/// reduces to the scalar root of `F(tau) = tau - e'x(tau)`, which is
/// nondecreasing with `F(0) <= 0 <= F(bn)`. Bisection narrows the bracket to
/// width `1e-12 (1 + bn)` (at most 200 steps); a final exact solve on the
/// piece where the active set froze removes the remaining bracket error.
pub fn box_simplex_quadratic(
    a: &Array1<f64>,
    d: &Array1<f64>,
    sigma: f64,
    b: f64,
) -> Array1<f64> {
    let n = a.len();
    assert_eq!(d.len(), n, "diagonal length mismatch");
    assert!(sigma > 0.0, "sigma must be positive");
    assert!(b > 0.0, "upper bound must be positive");
    assert!(d.iter().all(|&v| v > 0.0), "D must be strictly positive");

    let x_of = |tau: f64| -> Array1<f64> {
        Array1::from_shape_fn(n, |i| {
            (-(a[i] + sigma * tau) / (sigma * d[i])).clamp(0.0, b)
        })
    };
    let f_of = |tau: f64| tau - x_of(tau).sum();

    let mut lo = 0.0;
    let mut hi = b * n as f64;
    if f_of(lo) >= 0.0 {
        return x_of(lo);
    }
    for _ in 0..200 {
        if hi - lo < 1e-12 * (1.0 + b * n as f64) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f_of(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let x_mid = x_of(mid);
    // exact root on the current linear piece of F: with the active set taken
    // from x(mid), e'x(tau) = sum_bound b - sum_free (a_i/(sigma D_i) + tau/D_i)
    let mut coeff = 1.0;
    let mut constant = 0.0;
    for i in 0..n {
        if x_mid[i] > 0.0 && x_mid[i] < b {
            coeff += 1.0 / d[i];
            constant -= a[i] / (sigma * d[i]);
        } else if x_mid[i] >= b {
            constant += b;
        }
    }
    let tau_exact = constant / coeff;
    let tau = if (lo..=hi).contains(&tau_exact) {
        tau_exact
    } else {
        mid
    };
    x_of(tau)
}

/// Elementwise minimizer of the `s` terms of `L_A` under `s >= 0`:
/// `s* = max(0, f - g - gamma/sigma)`.
pub fn closed_form_s(
    f: &Array1<f64>,
    g: &Array1<f64>,
    gamma: &Array1<f64>,
    sigma: f64,
) -> Array1<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    Array1::from_shape_fn(f.len(), |i| (f[i] - g[i] - gamma[i] / sigma).max(0.0))
}

/// Minimizer of the `r` terms of `L_A` under `r >= 0`:
/// `r* = max(0, e'g - (1-beta) n - lambda3/sigma)`.
pub fn closed_form_r(g: &Array1<f64>, beta: f64, lambda3: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    (g.sum() - (1.0 - beta) * g.len() as f64 - lambda3 / sigma).max(0.0)
}

/// Lifts a discrete clustering into the relaxation's variables:
/// `Y_:,c = W u_:,c / sqrt(u_:,c' W u_:,c)`, `f` = row counts, `g` the
/// assigned indicator, `s = f - g`, `r = max(0, e'g - (1-beta) n)`.
///
/// For a budget-feasible `U` (and integral `(1+alpha) n`) every residual of
/// the lifted state is below 1e-12, and its relaxation objective equals the
/// discrete objective. Infeasible or empty-cluster inputs are lifted anyway
/// with a warning; the solvers absorb the residuals.
pub fn lift(p: &KernelProblem, u: &DiscreteClustering) -> LowRankState {
    if let Err(err) = u.validate_budgets(p) {
        log::warn!("lifting a budget-violating clustering: {err}");
    }
    let (n, k) = (p.n(), p.k());
    let w = p.weights();
    let mut y = Array2::zeros((n, k));
    for (c, members) in u.clusters().iter().enumerate() {
        if members.is_empty() {
            log::warn!("cluster {c} is empty; its lifted column is zero");
            continue;
        }
        let wc: f64 = members.iter().map(|&i| w[i]).sum();
        let norm = wc.sqrt();
        for &i in members {
            y[(i, c)] = w[i] / norm;
        }
    }
    let f = Array1::from_shape_fn(n, |i| u.assigned_count(i) as f64);
    let g = Array1::from_shape_fn(n, |i| if u.assigned_count(i) > 0 { 1.0 } else { 0.0 });
    let s = &f - &g;
    let r = (g.sum() - p.coverage_floor()).max(0.0);
    LowRankState { y, f, g, s, r }
}
