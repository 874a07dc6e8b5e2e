//! Greedy rounding of a relaxed solution back to a discrete clustering.
//!
//! The relaxation's `g` says how strongly a point is assigned at all, `f`
//! roughly how many clusters it sits in, and `Y` how strongly it pulls
//! toward each cluster. Rounding reads them in that order: pick which
//! points must be assigned, size each point's membership target, then fill
//! memberships greedily by `Y` magnitude under the assignment quota.
//!
//! The hard contract is the discrete budget pair: exactly
//! `round((1+alpha) n)` assignments and at most `floor(beta n)` unassigned
//! points, checked by [`DiscreteClustering::validate_budgets`] before
//! returning. The step list is one consistent reading of a procedure the
//! source material only sketches; `round_solution(lift(u)) == u` for every
//! budget-feasible `u` is the anchor that keeps it honest.

use ndarray::Array2;

use crate::error::{NeoError, Result};
use crate::iterative::DiscreteClustering;
use crate::model::{KernelProblem, LowRankState};

/// Rounds `st` to a discrete clustering satisfying both budgets exactly.
///
/// Steps: (1) the `n - floor(beta n)` points with the largest `g` are
/// marked must-assign (ties: larger `f`, then lower index); (2) each point
/// gets a membership target `round(f_i)` clamped to `[1, k]` when
/// must-assign and `[0, k]` otherwise; (3) `(point, cluster)` pairs are
/// visited by `Y` descending (ties: lower index pair) and accepted while
/// the point is under its target, stopping at the assignment quota;
/// (4) if the targets are exhausted with quota left, a second pass accepts
/// the remaining pairs in the same order.
///
/// During step (3) an overlap assignment (a point's second or later
/// membership) is deferred when accepting it would leave too little quota
/// to cover the still-unassigned must-assign points; without that guard a
/// heavy-overlap `Y` could spend the whole quota before thin points get
/// their first membership. On a lifted feasible clustering the guard never
/// triggers, so idempotence is unaffected.
///
/// A state whose `Y` is identically zero carries no preference at all; the
/// caller-provided `fallback` (typically the warm start) is returned
/// instead, with a warning. With no fallback the greedy still runs: the
/// index tie-breaks make the result deterministic, just uninformed.
pub fn round_solution(
    p: &KernelProblem,
    st: &LowRankState,
    fallback: Option<&DiscreteClustering>,
) -> Result<DiscreteClustering> {
    let (n, k) = (p.n(), p.k());
    if st.y.nrows() != n || st.y.ncols() != k || st.f.len() != n || st.g.len() != n {
        return Err(NeoError::DimensionMismatch(format!(
            "state is {}x{} with f/g of length {}/{}, problem is {n}x{k}",
            st.y.nrows(),
            st.y.ncols(),
            st.f.len(),
            st.g.len()
        )));
    }
    let finite = st.y.iter().all(|v| v.is_finite())
        && st.f.iter().all(|v| v.is_finite())
        && st.g.iter().all(|v| v.is_finite());
    if !finite {
        return Err(NeoError::InvalidData(
            "state has non-finite entries".into(),
        ));
    }
    if st.y.iter().all(|&v| v == 0.0) {
        log::warn!("rounding a state with Y = 0; it carries no cluster preference");
        if let Some(fb) = fallback {
            return Ok(fb.clone());
        }
    }

    let quota = p.assignment_quota();
    let max_out = p.max_unassigned();

    // step 1: must-assign marking by g, ties by f, then index
    let mut by_g: Vec<usize> = (0..n).collect();
    by_g.sort_by(|&a, &b| {
        st.g[b]
            .total_cmp(&st.g[a])
            .then(st.f[b].total_cmp(&st.f[a]))
            .then(a.cmp(&b))
    });
    let mut must_assign = vec![false; n];
    for &i in by_g.iter().take(n - max_out) {
        must_assign[i] = true;
    }

    // step 2: per-point membership targets from f
    let target: Vec<usize> = (0..n)
        .map(|i| {
            let floor = usize::from(must_assign[i]);
            (st.f[i].round() as isize).clamp(floor as isize, k as isize) as usize
        })
        .collect();

    // step 3: greedy fill by Y, reserving quota for unassigned must points
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..k).map(move |c| (i, c)))
        .collect();
    pairs.sort_by(|&(i, c), &(j, d)| st.y[(j, d)].total_cmp(&st.y[(i, c)]).then((i, c).cmp(&(j, d))));

    let mut membership = Array2::from_elem((n, k), false);
    let mut count = vec![0usize; n];
    let mut total = 0usize;
    let mut pending_must = must_assign.iter().filter(|&&m| m).count();
    for &(i, c) in &pairs {
        if total == quota {
            break;
        }
        if count[i] >= target[i] {
            continue;
        }
        if count[i] > 0 && quota - total - 1 < pending_must {
            continue;
        }
        if count[i] == 0 && must_assign[i] {
            pending_must -= 1;
        }
        membership[(i, c)] = true;
        count[i] += 1;
        total += 1;
    }

    // step 4: targets exhausted with quota left; keep filling by Y
    if total < quota {
        for &(i, c) in &pairs {
            if total == quota {
                break;
            }
            if membership[(i, c)] {
                continue;
            }
            membership[(i, c)] = true;
            count[i] += 1;
            total += 1;
        }
    }

    let u = DiscreteClustering::new(membership);
    u.validate_budgets(p)?;
    Ok(u)
}
