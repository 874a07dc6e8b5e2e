//! Problem instance and primal/dual state for the low-rank relaxation.
//!
//! The discrete objective asks for `(1+alpha)n` assignments of `n` points to
//! `k` clusters, with at most `floor(beta*n)` points left unassigned. Its
//! continuous relaxation optimizes
//!
//! ```text
//!     minimize   f'd - trace(Y'KY)
//!     subject to (a) trace(Y' W^-1 Y) = k
//!                (b) Y Y' e = W f
//!                (c) e'f = (1+alpha) n
//!                (d) f - g - s = 0
//!                (e) e'g = (1-beta) n + r
//!                Y >= 0, 0 <= f <= k, 0 <= g <= 1, s >= 0, r >= 0
//! ```
//!
//! over a relaxed assignment matrix `Y` (n-by-k, columns normalized by
//! cluster weight), fractional assignment counts `f`, assignment indicators
//! `g`, and slacks `s`, `r`. All solvers share one flattened layout of the
//! primal variables: `x = [vec(Y) column-major; f; g; s; r]`, total dimension
//! `n*k + 3n + 1`.

use ndarray::{Array1, Array2};

use crate::error::{NeoError, Result};

/// A fixed clustering instance: kernel, point weights, and budgets.
///
/// `weights` holds the diagonal of the weight matrix `W`; `d[i] = w[i] * K[i,i]`
/// is precomputed at construction.
#[derive(Debug, Clone)]
pub struct KernelProblem {
    n: usize,
    k: usize,
    kernel: Array2<f64>,
    weights: Array1<f64>,
    d: Array1<f64>,
    alpha: f64,
    beta: f64,
}

impl KernelProblem {
    /// Builds an instance, validating symmetry of `K`, positivity of the
    /// weights, and the budget ranges `alpha >= 0`, `0 <= beta < 1`,
    /// `(1+alpha) n <= n k`.
    pub fn new(
        kernel: Array2<f64>,
        weights: Array1<f64>,
        k: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let n = kernel.nrows();
        if kernel.ncols() != n {
            return Err(NeoError::DimensionMismatch(format!(
                "kernel must be square, got {}x{}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if weights.len() != n {
            return Err(NeoError::DimensionMismatch(format!(
                "weights length {} does not match kernel size {n}",
                weights.len()
            )));
        }
        if k == 0 {
            return Err(NeoError::InvalidParameter("k must be >= 1".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(NeoError::InvalidParameter(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(NeoError::InvalidParameter(format!(
                "beta must lie in [0, 1), got {beta}"
            )));
        }
        if (1.0 + alpha) * n as f64 > (n * k) as f64 {
            return Err(NeoError::InvalidParameter(format!(
                "(1+alpha) n = {} exceeds the n*k = {} available assignment cells",
                (1.0 + alpha) * n as f64,
                n * k
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(NeoError::InvalidData("kernel has non-finite entries".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(NeoError::InvalidData(
                "weights must be strictly positive and finite".into(),
            ));
        }
        // Relative symmetry check at 1e-12.
        let scale = kernel.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (kernel[(i, j)] - kernel[(j, i)]).abs() > 1e-12 * scale {
                    return Err(NeoError::InvalidData(format!(
                        "kernel is not symmetric at ({i},{j}): {} vs {}",
                        kernel[(i, j)],
                        kernel[(j, i)]
                    )));
                }
            }
        }
        let d = Array1::from_iter((0..n).map(|i| weights[i] * kernel[(i, i)]));
        Ok(Self {
            n,
            k,
            kernel,
            weights,
            d,
            alpha,
            beta,
        })
    }

    /// Number of data points.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.k
    }

    /// The kernel matrix `K`.
    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    /// Diagonal of the weight matrix `W`.
    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// The vector `d` with `d[i] = w[i] K[i,i]`.
    pub fn d(&self) -> &Array1<f64> {
        &self.d
    }

    /// Overlap budget `alpha`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Non-exhaustiveness budget `beta`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Total assignment budget `(1+alpha) n`, kept real-valued.
    pub fn assignment_budget(&self) -> f64 {
        (1.0 + self.alpha) * self.n as f64
    }

    /// Minimum assigned-point mass `(1-beta) n`, kept real-valued.
    pub fn coverage_floor(&self) -> f64 {
        (1.0 - self.beta) * self.n as f64
    }

    /// Assignment quota of the discrete problem: `round((1+alpha) n)`.
    pub fn assignment_quota(&self) -> usize {
        self.assignment_budget().round() as usize
    }

    /// Maximum number of unassigned points: `floor(beta n)`.
    pub fn max_unassigned(&self) -> usize {
        (self.beta * self.n as f64).floor() as usize
    }

    /// Dimension of the flattened primal vector: `n*k + 3n + 1`.
    pub fn flat_dim(&self) -> usize {
        self.n * self.k + 3 * self.n + 1
    }
}

/// Primal variables `(Y, f, g, s, r)` of the relaxation.
///
/// The bound constraints are maintained exactly at all times; use
/// [`LowRankState::project`] after any raw update.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    /// Relaxed normalized assignment matrix, n-by-k, nonnegative.
    pub y: Array2<f64>,
    /// Fractional assignment counts, in `[0, k]`.
    pub f: Array1<f64>,
    /// Assignment indicator relaxation, in `[0, 1]`.
    pub g: Array1<f64>,
    /// Slack for `f >= g`, nonnegative.
    pub s: Array1<f64>,
    /// Slack for the coverage bound, nonnegative.
    pub r: f64,
}

impl LowRankState {
    /// The all-zero state of the given shape.
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            y: Array2::zeros((n, k)),
            f: Array1::zeros(n),
            g: Array1::zeros(n),
            s: Array1::zeros(n),
            r: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }

    /// Clamps every block into its box.
    pub fn project(&mut self) {
        let k = self.k() as f64;
        self.y.mapv_inplace(|v| v.max(0.0));
        self.f.mapv_inplace(|v| v.clamp(0.0, k));
        self.g.mapv_inplace(|v| v.clamp(0.0, 1.0));
        self.s.mapv_inplace(|v| v.max(0.0));
        self.r = self.r.max(0.0);
    }

    /// Flattens to `x = [vec(Y) column-major; f; g; s; r]`.
    pub fn to_flat(&self) -> Array1<f64> {
        let (n, k) = (self.n(), self.k());
        let mut x = Array1::zeros(n * k + 3 * n + 1);
        for c in 0..k {
            for i in 0..n {
                x[c * n + i] = self.y[(i, c)];
            }
        }
        for i in 0..n {
            x[n * k + i] = self.f[i];
            x[n * k + n + i] = self.g[i];
            x[n * k + 2 * n + i] = self.s[i];
        }
        x[n * k + 3 * n] = self.r;
        x
    }

    /// Rebuilds a state from the flattened layout.
    ///
    /// Panics if `x.len() != n*k + 3n + 1`.
    pub fn from_flat(n: usize, k: usize, x: &Array1<f64>) -> Self {
        assert_eq!(
            x.len(),
            n * k + 3 * n + 1,
            "flat vector has wrong dimension"
        );
        let mut y = Array2::zeros((n, k));
        for c in 0..k {
            for i in 0..n {
                y[(i, c)] = x[c * n + i];
            }
        }
        let f = Array1::from_iter((0..n).map(|i| x[n * k + i]));
        let g = Array1::from_iter((0..n).map(|i| x[n * k + n + i]));
        let s = Array1::from_iter((0..n).map(|i| x[n * k + 2 * n + i]));
        let r = x[n * k + 3 * n];
        Self { y, f, g, s, r }
    }

    /// Lower bounds of the flattened box (all zeros).
    pub fn flat_lower(n: usize, k: usize) -> Array1<f64> {
        Array1::zeros(n * k + 3 * n + 1)
    }

    /// Upper bounds of the flattened box: `+inf` on `Y`, `k` on `f`, `1` on
    /// `g`, `+inf` on `s` and `r`.
    pub fn flat_upper(n: usize, k: usize) -> Array1<f64> {
        let mut u = Array1::from_elem(n * k + 3 * n + 1, f64::INFINITY);
        for i in 0..n {
            u[n * k + i] = k as f64;
            u[n * k + n + i] = 1.0;
        }
        u
    }
}

/// Lagrange multipliers and penalty for the five constraint blocks.
#[derive(Debug, Clone)]
pub struct Multipliers {
    /// Multiplier for the trace normalization (a).
    pub lambda1: f64,
    /// Multiplier for the assignment total (c).
    pub lambda2: f64,
    /// Multiplier for the coverage bound (e).
    pub lambda3: f64,
    /// Multipliers for the count coupling (b), length n.
    pub mu: Array1<f64>,
    /// Multipliers for the slack coupling (d), length n.
    pub gamma: Array1<f64>,
    /// Quadratic penalty weight, positive.
    pub sigma: f64,
}

impl Multipliers {
    /// Zero multipliers with the given initial penalty.
    pub fn zeros(n: usize, sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            mu: Array1::zeros(n),
            gamma: Array1::zeros(n),
            sigma,
        }
    }
}

/// Residuals of the five equality-constraint blocks at a given state.
#[derive(Debug, Clone)]
pub struct ConstraintResiduals {
    /// `trace(Y' W^-1 Y) - k`
    pub ca: f64,
    /// `Y Y' e - W f`, length n
    pub cb: Array1<f64>,
    /// `e'f - (1+alpha) n`
    pub cc: f64,
    /// `f - g - s`, length n
    pub cd: Array1<f64>,
    /// `e'g - (1-beta) n - r`
    pub ce: f64,
}

impl ConstraintResiduals {
    /// Infinity norm over every residual entry; the outer stopping metric.
    pub fn inf_norm(&self) -> f64 {
        let mut m = self.ca.abs().max(self.cc.abs()).max(self.ce.abs());
        for v in self.cb.iter().chain(self.cd.iter()) {
            m = m.max(v.abs());
        }
        m
    }
}

fn check_dims(p: &KernelProblem, st: &LowRankState) {
    assert_eq!(st.n(), p.n(), "state row count does not match problem");
    assert_eq!(st.k(), p.k(), "state column count does not match problem");
    assert_eq!(st.f.len(), p.n(), "f length mismatch");
    assert_eq!(st.g.len(), p.n(), "g length mismatch");
    assert_eq!(st.s.len(), p.n(), "s length mismatch");
}

/// Relaxation objective `f'd - trace(Y'KY)`, computed as `sum_ij Y_ij (KY)_ij`
/// without forming `YY'`.
pub fn sdp_objective(p: &KernelProblem, st: &LowRankState) -> f64 {
    check_dims(p, st);
    let ky = p.kernel().dot(&st.y);
    let trace: f64 = st.y.iter().zip(ky.iter()).map(|(a, b)| a * b).sum();
    st.f.dot(p.d()) - trace
}

/// Evaluates all five constraint residuals.
///
/// The coupling block is evaluated as `Y (Y'e) - W.f`, costing `O(nk)` memory.
pub fn residuals(p: &KernelProblem, st: &LowRankState) -> ConstraintResiduals {
    check_dims(p, st);
    let w = p.weights();
    let mut ca = -(p.k() as f64);
    for i in 0..p.n() {
        let mut row = 0.0;
        for c in 0..p.k() {
            row += st.y[(i, c)] * st.y[(i, c)];
        }
        ca += row / w[i];
    }
    let col_sums = st.y.sum_axis(ndarray::Axis(0));
    let mut cb = st.y.dot(&col_sums);
    for i in 0..p.n() {
        cb[i] -= w[i] * st.f[i];
    }
    let cc = st.f.sum() - p.assignment_budget();
    let cd = &st.f - &st.g - &st.s;
    let ce = st.g.sum() - p.coverage_floor() - st.r;
    ConstraintResiduals { ca, cb, cc, cd, ce }
}

/// Infinity norm of the constraint residuals at `st`.
pub fn infeasibility(p: &KernelProblem, st: &LowRankState) -> f64 {
    residuals(p, st).inf_norm()
}
