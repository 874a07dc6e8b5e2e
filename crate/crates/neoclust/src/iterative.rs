//! Lloyd-style iterative algorithm for the discrete clustering objective.
//!
//! Each sweep computes kernel distances from every point to every implicit
//! cluster mean, then rebuilds the assignment under the two budgets: the
//! `n - floor(beta n)` points with the smallest minimum distance take their
//! nearest cluster, and the remaining `round((1+alpha) n) - (n - floor(beta n))`
//! assignments go greedily to the cheapest unused (point, cluster) pairs.
//! With `alpha = beta = 0` a sweep is exactly the weighted kernel k-means
//! assignment step.
//!
//! The returned objective trace is non-increasing: a sweep whose greedy
//! overflow phase would raise the objective is discarded and the best
//! clustering seen is returned.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NeoError, Result};
use crate::model::KernelProblem;

/// A binary assignment of `n` points to `k` clusters.
///
/// Rows may contain several ones (overlap) or none (unassigned); the budget
/// constraints are a property of the producing algorithm, checked by
/// [`DiscreteClustering::validate_budgets`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteClustering {
    membership: Array2<bool>,
    assign_count: Array1<usize>,
}

impl DiscreteClustering {
    /// Wraps a membership matrix, computing row counts.
    pub fn new(membership: Array2<bool>) -> Self {
        let assign_count = membership
            .rows()
            .into_iter()
            .map(|row| row.iter().filter(|&&m| m).count())
            .collect();
        Self {
            membership,
            assign_count,
        }
    }

    /// The empty assignment of the given shape.
    pub fn empty(n: usize, k: usize) -> Self {
        Self::new(Array2::from_elem((n, k), false))
    }

    /// Builds an assignment from index sets (0-based, one per cluster).
    pub fn from_clusters(n: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut membership = Array2::from_elem((n, clusters.len()), false);
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                if i >= n {
                    return Err(NeoError::InvalidData(format!(
                        "cluster {c} references point {i} but only {n} points exist"
                    )));
                }
                membership[(i, c)] = true;
            }
        }
        Ok(Self::new(membership))
    }

    pub fn n(&self) -> usize {
        self.membership.nrows()
    }

    pub fn k(&self) -> usize {
        self.membership.ncols()
    }

    pub fn membership(&self) -> &Array2<bool> {
        &self.membership
    }

    pub fn contains(&self, point: usize, cluster: usize) -> bool {
        self.membership[(point, cluster)]
    }

    /// Number of clusters the point belongs to.
    pub fn assigned_count(&self, point: usize) -> usize {
        self.assign_count[point]
    }

    /// Total number of (point, cluster) assignments.
    pub fn total_assignments(&self) -> usize {
        self.assign_count.sum()
    }

    /// Number of points assigned to no cluster.
    pub fn unassigned_count(&self) -> usize {
        self.assign_count.iter().filter(|&&c| c == 0).count()
    }

    /// Members of each cluster as sorted index sets.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        (0..self.k())
            .map(|c| {
                (0..self.n())
                    .filter(|&i| self.membership[(i, c)])
                    .collect()
            })
            .collect()
    }

    /// Checks the two discrete budgets: exactly `round((1+alpha) n)` total
    /// assignments and at most `floor(beta n)` unassigned points.
    pub fn validate_budgets(&self, p: &KernelProblem) -> Result<()> {
        if self.n() != p.n() || self.k() != p.k() {
            return Err(NeoError::DimensionMismatch(format!(
                "clustering is {}x{}, problem is {}x{}",
                self.n(),
                self.k(),
                p.n(),
                p.k()
            )));
        }
        let quota = p.assignment_quota();
        if self.total_assignments() != quota {
            return Err(NeoError::ConstraintViolation(format!(
                "{} assignments, budget requires exactly {quota}",
                self.total_assignments()
            )));
        }
        let max_out = p.max_unassigned();
        if self.unassigned_count() > max_out {
            return Err(NeoError::ConstraintViolation(format!(
                "{} unassigned points, at most {max_out} allowed",
                self.unassigned_count()
            )));
        }
        Ok(())
    }
}

/// The discrete objective `sum_c sum_i u_ic w_i ||phi(x_i) - m_c||^2`,
/// evaluated kernel-wise per cluster as
/// `sum_i u_ic w_i K_ii - v'Kv / W_c` with `v = u_:,c . w`, `W_c = sum v`.
///
/// The budgets are checked first. An empty cluster contributes zero and
/// emits a warning.
pub fn neo_objective(p: &KernelProblem, u: &DiscreteClustering) -> Result<f64> {
    u.validate_budgets(p)?;
    let w = p.weights();
    let kernel = p.kernel();
    let mut total = 0.0;
    for (c, members) in u.clusters().iter().enumerate() {
        if members.is_empty() {
            log::warn!("cluster {c} is empty; it contributes 0 to the objective");
            continue;
        }
        let wc: f64 = members.iter().map(|&i| w[i]).sum();
        let mut self_term = 0.0;
        let mut cross = 0.0;
        for &i in members {
            self_term += w[i] * kernel[(i, i)];
            for &j in members {
                cross += w[i] * w[j] * kernel[(i, j)];
            }
        }
        total += self_term - cross / wc;
    }
    Ok(total)
}

/// Result of [`iterate`]: final clustering, its objective, the per-sweep
/// objective trace (starting at the initial clustering), and whether the
/// sweeps reached a fixed point before `max_iters`.
#[derive(Debug, Clone)]
pub struct IterativeRun {
    pub clustering: DiscreteClustering,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Implicit cluster mean for one sweep: either the current members or a
/// single re-seeded point.
enum Center {
    Members(Vec<usize>),
    Point(usize),
}

/// Kernel distance from every point to every center:
/// `dist(i,c) = K_ii - 2 (Kv)_i / W_c + v'Kv / W_c^2` with `v = w` restricted
/// to the center's support.
fn center_distances(p: &KernelProblem, centers: &[Center]) -> Array2<f64> {
    let n = p.n();
    let kernel = p.kernel();
    let w = p.weights();
    let mut dist = Array2::zeros((n, centers.len()));
    for (c, center) in centers.iter().enumerate() {
        let mut v = Array1::zeros(n);
        match center {
            Center::Members(members) => {
                for &i in members {
                    v[i] = w[i];
                }
            }
            Center::Point(i) => v[*i] = w[*i],
        }
        let wc = v.sum();
        let kv = kernel.dot(&v);
        let q = v.dot(&kv) / (wc * wc);
        for i in 0..n {
            dist[(i, c)] = kernel[(i, i)] - 2.0 * kv[i] / wc + q;
        }
    }
    dist
}

/// One constrained assignment step given a distance matrix.
fn assign_step(p: &KernelProblem, dist: &Array2<f64>) -> DiscreteClustering {
    let (n, k) = (p.n(), p.k());
    let quota = p.assignment_quota();
    let must_cover = n - p.max_unassigned();

    let mut nearest = vec![(0.0f64, 0usize); n];
    for i in 0..n {
        let mut best_c = 0;
        for c in 1..k {
            if dist[(i, c)] < dist[(i, best_c)] {
                best_c = c;
            }
        }
        nearest[i] = (dist[(i, best_c)], best_c);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nearest[a].0.total_cmp(&nearest[b].0).then(a.cmp(&b)));

    let mut membership = Array2::from_elem((n, k), false);
    for &i in order.iter().take(must_cover) {
        membership[(i, nearest[i].1)] = true;
    }

    let mut made = must_cover;
    if made < quota {
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * k - made);
        for i in 0..n {
            for c in 0..k {
                if !membership[(i, c)] {
                    pairs.push((i, c));
                }
            }
        }
        pairs.sort_by(|&(i1, c1), &(i2, c2)| {
            dist[(i1, c1)]
                .total_cmp(&dist[(i2, c2)])
                .then(i1.cmp(&i2))
                .then(c1.cmp(&c2))
        });
        for (i, c) in pairs {
            membership[(i, c)] = true;
            made += 1;
            if made == quota {
                break;
            }
        }
    }
    DiscreteClustering::new(membership)
}

/// k-means++ seeding on kernel distances: the first center is uniform, each
/// next center is drawn with probability proportional to the distance
/// `K_ii - 2 K_ij + K_jj` to the closest chosen center, shifted so the
/// smallest value has weight zero. Indefinite kernels (graphs with a zero
/// diagonal) make these signed quantities negative; the shift keeps the
/// sampling weights valid without erasing their ordering.
fn seed_points(p: &KernelProblem, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = p.n();
    let kernel = p.kernel();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dmin: Vec<f64> = (0..n)
        .map(|i| {
            let j = chosen[0];
            kernel[(i, i)] - 2.0 * kernel[(i, j)] + kernel[(j, j)]
        })
        .collect();
    while chosen.len() < p.k() {
        let base = dmin.iter().copied().fold(f64::INFINITY, f64::min);
        let weight =
            |i: usize| if chosen.contains(&i) { 0.0 } else { dmin[i] - base };
        let total: f64 = (0..n).map(weight).sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for i in 0..n {
                let d = weight(i);
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all remaining points coincide with a center; any non-center works
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for i in 0..n {
            let d = kernel[(i, i)] - 2.0 * kernel[(i, next)] + kernel[(next, next)];
            dmin[i] = dmin[i].min(d);
        }
    }
    chosen
}

/// Centers for the next sweep: current members, with empty clusters
/// re-seeded from the point with the largest weighted distance contribution.
fn next_centers(
    p: &KernelProblem,
    u: &DiscreteClustering,
    dist: Option<&Array2<f64>>,
) -> Vec<Center> {
    let clusters = u.clusters();
    let empties: Vec<usize> = (0..u.k()).filter(|&c| clusters[c].is_empty()).collect();
    let mut centers: Vec<Center> = clusters.into_iter().map(Center::Members).collect();
    if empties.is_empty() {
        return centers;
    }
    log::warn!("{} empty cluster(s) after sweep; re-seeding", empties.len());
    // contribution of point i: sum over its assignments of w_i dist(i, c),
    // falling back to distance from the global weighted mean before the
    // first sweep
    let contribution: Vec<f64> = match dist {
        Some(dist) => (0..p.n())
            .map(|i| {
                (0..p.k())
                    .filter(|&c| u.contains(i, c))
                    .map(|c| p.weights()[i] * dist[(i, c)])
                    .sum()
            })
            .collect(),
        None => {
            let all = center_distances(p, &[Center::Members((0..p.n()).collect())]);
            (0..p.n()).map(|i| p.weights()[i] * all[(i, 0)]).collect()
        }
    };
    let mut order: Vec<usize> = (0..p.n()).collect();
    order.sort_by(|&a, &b| contribution[b].total_cmp(&contribution[a]).then(a.cmp(&b)));
    for (slot, &c) in empties.iter().enumerate() {
        centers[c] = Center::Point(order[slot % order.len()]);
    }
    centers
}

/// Runs the iterative algorithm from `init` (or from k-means++ seeding when
/// `None`) for at most `max_iters` sweeps.
///
/// The trace starts with the initial objective and appends one value per
/// adopted sweep; it is non-increasing. `converged` is true when a sweep
/// reproduced its input exactly.
pub fn iterate(
    p: &KernelProblem,
    init: Option<&DiscreteClustering>,
    max_iters: usize,
    seed: u64,
) -> Result<IterativeRun> {
    let mut current = match init {
        Some(u0) => {
            u0.validate_budgets(p)?;
            u0.clone()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seeds = seed_points(p, &mut rng);
            let centers: Vec<Center> = seeds.into_iter().map(Center::Point).collect();
            assign_step(p, &center_distances(p, &centers))
        }
    };
    let mut objective = neo_objective(p, &current)?;
    let mut trace = vec![objective];
    let mut converged = false;
    let mut last_dist: Option<Array2<f64>> = None;

    for _ in 0..max_iters {
        let centers = next_centers(p, &current, last_dist.as_ref());
        let dist = center_distances(p, &centers);
        let next = assign_step(p, &dist);
        if next == current {
            converged = true;
            break;
        }
        let next_objective = neo_objective(p, &next)?;
        if next_objective > objective + 1e-12 * (1.0 + objective.abs()) {
            // the greedy overflow phase is not an exact subproblem solve on
            // weighted instances; stop rather than oscillate
            break;
        }
        current = next;
        objective = next_objective;
        trace.push(objective);
        last_dist = Some(dist);
    }

    Ok(IterativeRun {
        clustering: current,
        objective,
        trace,
        converged,
    })
}
