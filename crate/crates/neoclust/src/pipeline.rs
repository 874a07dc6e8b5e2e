//! End-to-end clustering runs: warm start, relaxation solve, rounding,
//! evaluation.
//!
//! Every run follows the same spine. A seeded iterative pass (optionally
//! the best of several restarts) produces a discrete warm start; either
//! that clustering is the answer, or it is lifted into the relaxation,
//! refined by a multiplier method, and rounded back. The result carries
//! the full diagnostic trail so callers can emit traces and metrics
//! without re-deriving anything.
//!
//! Determinism contract: a fixed problem, engine, and seed give the same
//! clustering on every run. Warm-start restart `t` uses seed `seed + t`,
//! so enlarging `warm_restarts` only adds candidates.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{NeoError, Result};
use crate::iterative::{self, DiscreteClustering, IterativeRun};
use crate::metrics::{f1_score, MetricsReport};
use crate::model::{infeasibility, sdp_objective, KernelProblem};
use crate::rounding::round_solution;
use crate::solvers::{lift, solve, Method, SolveResult, SolverConfig};

/// What refines the warm start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// The iterative method's clustering is returned as-is.
    Iterative,
    /// The warm start is lifted, solved with the given multiplier method,
    /// and rounded back.
    Sdp(Method),
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Iterative => "iterative",
            Engine::Sdp(m) => m.name(),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = NeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(Engine::Iterative),
            "alm" => Ok(Engine::Sdp(Method::Alm)),
            "palm" => Ok(Engine::Sdp(Method::Palm)),
            "admm" => Ok(Engine::Sdp(Method::Admm)),
            "sadmm" => Ok(Engine::Sdp(Method::Sadmm)),
            other => Err(NeoError::InvalidParameter(format!(
                "unknown method '{other}' (expected iterative, alm, palm, admm, or sadmm)"
            ))),
        }
    }
}

/// Everything a run needs besides the problem itself.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub engine: Engine,
    pub solver: SolverConfig,
    /// Sweep cap for each warm-start run.
    pub warm_iters: usize,
    /// Independently seeded warm-start runs; the lowest objective wins.
    pub warm_restarts: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            engine: Engine::Sdp(Method::Alm),
            solver: SolverConfig::default(),
            warm_iters: 100,
            warm_restarts: 1,
            seed: 0,
        }
    }
}

/// Output of [`run`]: the clustering plus the full diagnostic trail.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub clustering: DiscreteClustering,
    /// The warm start that seeded (or, for the iterative engine, is) the
    /// final clustering.
    pub warm: IterativeRun,
    /// Present for SDP engines; carries the outer-iteration trace.
    pub solve: Option<SolveResult>,
    pub report: MetricsReport,
}

/// Runs the configured engine on `p`, scoring against `truth` when given.
///
/// Solver non-convergence is not an error: the best iterate found is
/// rounded anyway and the report's status says "maxed" instead of
/// "converged". The returned clustering is never worse than the warm
/// start, which stays available in the result for comparison.
pub fn run(
    p: &KernelProblem,
    truth: Option<&[Vec<usize>]>,
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    if cfg.warm_restarts == 0 {
        return Err(NeoError::InvalidParameter(
            "warm_restarts must be at least 1".into(),
        ));
    }
    let started = Instant::now();

    let mut warm: Option<IterativeRun> = None;
    for t in 0..cfg.warm_restarts {
        let candidate = iterative::iterate(p, None, cfg.warm_iters, cfg.seed + t as u64)?;
        if warm
            .as_ref()
            .is_none_or(|best| candidate.objective < best.objective)
        {
            warm = Some(candidate);
        }
    }
    let warm = warm.expect("warm_restarts >= 1");

    let (clustering, solve_result) = match cfg.engine {
        Engine::Iterative => (warm.clustering.clone(), None),
        Engine::Sdp(method) => {
            let lifted = lift(p, &warm.clustering);
            let res = solve(p, &lifted, method, &cfg.solver);
            let rounded = round_solution(p, &res.state, Some(&warm.clustering))?;
            // the warm start is a feasible solution already in hand, so
            // the pipeline never returns anything worse than it
            let best = if iterative::neo_objective(p, &rounded)? <= warm.objective {
                rounded
            } else {
                warm.clustering.clone()
            };
            (best, Some(res))
        }
    };

    let status = match (cfg.engine, &solve_result) {
        (Engine::Iterative, _) => "iterative",
        (_, Some(res)) if res.converged => "converged",
        _ => "maxed",
    };
    let report = MetricsReport {
        method: cfg.engine.name().into(),
        status: status.into(),
        outer_iters: solve_result
            .as_ref()
            .map_or(warm.trace.len(), |res| res.trace.outer_iterations()),
        wall_seconds: started.elapsed().as_secs_f64(),
        neo_objective: iterative::neo_objective(p, &clustering)?,
        sdp_objective: solve_result.as_ref().map(|res| sdp_objective(p, &res.state)),
        infeasibility: solve_result.as_ref().map(|res| infeasibility(p, &res.state)),
        f1: truth
            .map(|t| f1_score(&clustering.clusters(), t))
            .transpose()?,
    };
    Ok(PipelineResult {
        clustering,
        warm,
        solve: solve_result,
        report,
    })
}
