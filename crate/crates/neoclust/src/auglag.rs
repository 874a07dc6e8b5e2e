//! The augmented Lagrangian of the relaxation, its analytic gradient, and
//! the multiplier/penalty updates shared by every solver.
//!
//! Multiplier terms are subtracted:
//!
//! ```text
//! L_A = f'd - tr(Y'KY)
//!       - lambda1 ca + (sigma/2) ca^2      ca = tr(Y' W^-1 Y) - k
//!       - mu' cb     + (sigma/2) |cb|^2    cb = Y Y' e - W f
//!       - lambda2 cc + (sigma/2) cc^2      cc = e'f - (1+alpha) n
//!       - gamma' cd  + (sigma/2) |cd|^2    cd = f - g - s
//!       - lambda3 ce + (sigma/2) ce^2      ce = e'g - (1-beta) n - r
//! ```
//!
//! so the first-order multiplier update is `lambda <- lambda - sigma c`. The
//! equivalent added-multiplier form differs only by `lambda <-> -lambda`.

use ndarray::Array1;

use crate::model::{
    residuals, ConstraintResiduals, KernelProblem, LowRankState, Multipliers,
};

/// Value and flattened gradient of the augmented Lagrangian at one state.
#[derive(Debug, Clone)]
pub struct AugLagValue {
    pub value: f64,
    /// Gradient in the `[vec(Y); f; g; s; r]` layout, length `nk + 3n + 1`.
    pub grad: Array1<f64>,
}

/// Evaluates `L_A` and its gradient. `prox` adds the proximal regularization
/// `weight/2 * ||x - anchor||^2` over the flattened variables, as used by
/// the proximal method of multipliers.
pub fn eval(
    p: &KernelProblem,
    st: &LowRankState,
    m: &Multipliers,
    prox: Option<(&Array1<f64>, f64)>,
) -> AugLagValue {
    let (n, k) = (p.n(), p.k());
    let sigma = m.sigma;
    let res = residuals(p, st);

    let ky = p.kernel().dot(&st.y);
    let trace: f64 = st.y.iter().zip(ky.iter()).map(|(a, b)| a * b).sum();
    let mut value = st.f.dot(p.d()) - trace
        - m.lambda1 * res.ca
        + 0.5 * sigma * res.ca * res.ca
        - m.mu.dot(&res.cb)
        + 0.5 * sigma * res.cb.dot(&res.cb)
        - m.lambda2 * res.cc
        + 0.5 * sigma * res.cc * res.cc
        - m.gamma.dot(&res.cd)
        + 0.5 * sigma * res.cd.dot(&res.cd)
        - m.lambda3 * res.ce
        + 0.5 * sigma * res.ce * res.ce;

    // Each penalty-plus-multiplier pair differentiates to (sigma c - lambda)
    // times the constraint's own gradient.
    let ta = sigma * res.ca - m.lambda1;
    let u = sigma * &res.cb - &m.mu;
    let tc = sigma * res.cc - m.lambda2;
    let vd = sigma * &res.cd - &m.gamma;
    let te = sigma * res.ce - m.lambda3;

    let z = st.y.sum_axis(ndarray::Axis(0));
    let ytu = st.y.t().dot(&u);
    let w = p.weights();

    let mut grad = Array1::zeros(p.flat_dim());
    // dL/dY = -2KY + 2 ta Y/w + u z' + e (Y'u)'
    for c in 0..k {
        for i in 0..n {
            grad[c * n + i] =
                -2.0 * ky[(i, c)] + 2.0 * ta * st.y[(i, c)] / w[i] + u[i] * z[c] + ytu[c];
        }
    }
    for i in 0..n {
        // dL/df = d + tc e - w.u + vd
        grad[n * k + i] = p.d()[i] + tc - w[i] * u[i] + vd[i];
        // dL/dg = -vd + te e
        grad[n * k + n + i] = -vd[i] + te;
        // dL/ds = -vd
        grad[n * k + 2 * n + i] = -vd[i];
    }
    // dL/dr = -te
    grad[n * k + 3 * n] = -te;

    if let Some((anchor, weight)) = prox {
        let x = st.to_flat();
        let diff = &x - anchor;
        value += 0.5 * weight * diff.dot(&diff);
        grad += &(weight * diff);
    }

    AugLagValue { value, grad }
}

/// First-order multiplier update `lambda <- lambda - sigma c` for every
/// block, matching the subtracted-multiplier form of `L_A`.
pub fn update_multipliers(m: &Multipliers, res: &ConstraintResiduals) -> Multipliers {
    assert!(m.sigma > 0.0, "sigma must be positive");
    Multipliers {
        lambda1: m.lambda1 - m.sigma * res.ca,
        lambda2: m.lambda2 - m.sigma * res.cc,
        lambda3: m.lambda3 - m.sigma * res.ce,
        mu: &m.mu - &(m.sigma * &res.cb),
        gamma: &m.gamma - &(m.sigma * &res.cd),
        sigma: m.sigma,
    }
}

/// Penalty growth rule: when to increase `sigma` and by how much.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyPolicy {
    /// Required infeasibility decrease factor per outer iteration.
    pub eta: f64,
    /// Multiplier applied to `sigma` when the decrease test fails.
    pub factor: f64,
    /// Upper clamp on `sigma`.
    pub sigma_max: f64,
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        Self {
            eta: 0.25,
            factor: 10.0,
            sigma_max: 1e8,
        }
    }
}

/// Increases `sigma` by `policy.factor` (clamped to `policy.sigma_max`) when
/// the infeasibility failed to drop below `eta` times its previous value;
/// otherwise leaves the multipliers untouched.
pub fn update_penalty(
    m: &Multipliers,
    infeas_now: f64,
    infeas_prev: f64,
    policy: PenaltyPolicy,
) -> Multipliers {
    let mut out = m.clone();
    if infeas_now > policy.eta * infeas_prev {
        out.sigma = (out.sigma * policy.factor).min(policy.sigma_max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sdp_objective;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, k: usize, seed: u64) -> KernelProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let kernel = b.dot(&b.t());
        let weights = Array1::from_shape_fn(n, |_| rng.gen_range(0.5..2.0));
        KernelProblem::new(kernel, weights, k, 0.3, 0.2).unwrap()
    }

    fn random_state(p: &KernelProblem, rng: &mut ChaCha8Rng) -> LowRankState {
        LowRankState {
            y: Array2::from_shape_fn((p.n(), p.k()), |_| rng.gen_range(0.05..1.0)),
            f: Array1::from_shape_fn(p.n(), |_| rng.gen_range(0.05..p.k() as f64 - 0.05)),
            g: Array1::from_shape_fn(p.n(), |_| rng.gen_range(0.05..0.95)),
            s: Array1::from_shape_fn(p.n(), |_| rng.gen_range(0.05..1.0)),
            r: rng.gen_range(0.05..1.0),
        }
    }

    fn random_multipliers(p: &KernelProblem, rng: &mut ChaCha8Rng, sigma: f64) -> Multipliers {
        Multipliers {
            lambda1: rng.gen_range(-2.0..2.0),
            lambda2: rng.gen_range(-2.0..2.0),
            lambda3: rng.gen_range(-2.0..2.0),
            mu: Array1::from_shape_fn(p.n(), |_| rng.gen_range(-2.0..2.0)),
            gamma: Array1::from_shape_fn(p.n(), |_| rng.gen_range(-2.0..2.0)),
            sigma,
        }
    }

    #[test]
    fn zero_multipliers_zero_sigma_is_plain_objective() {
        let p = random_problem(4, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let st = random_state(&p, &mut rng);
        let m = Multipliers {
            sigma: 0.0,
            ..Multipliers::zeros(p.n(), 1.0)
        };
        let got = eval(&p, &st, &m, None);
        assert_eq!(got.value, sdp_objective(&p, &st));
    }

    #[test]
    fn feasible_state_value_is_plain_objective() {
        // exact discrete lift: all residuals vanish, so every multiplier and
        // penalty term vanishes regardless of the multiplier values
        let n = 4;
        let p = KernelProblem::new(Array2::eye(n), Array1::ones(n), 2, 0.25, 0.0).unwrap();
        let mut st = LowRankState::zeros(n, 2);
        let sizes = [3.0f64, 2.0];
        for &(i, c) in &[(0, 0), (1, 0), (2, 1), (3, 0), (3, 1)] {
            st.y[(i, c)] = 1.0 / sizes[c].sqrt();
        }
        st.f = array![1.0, 1.0, 1.0, 2.0];
        st.g = Array1::ones(n);
        st.s = &st.f - &st.g;
        st.r = st.g.sum() - p.coverage_floor();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_multipliers(&p, &mut rng, 13.0);
        let got = eval(&p, &st, &m, None);
        assert_abs_diff_eq!(got.value, sdp_objective(&p, &st), epsilon = 1e-10);
    }

    /// Central finite differences of the value, step scaled per coordinate.
    fn fd_gradient(
        p: &KernelProblem,
        st: &LowRankState,
        m: &Multipliers,
        prox: Option<(&Array1<f64>, f64)>,
    ) -> Array1<f64> {
        let x = st.to_flat();
        let mut fd = Array1::zeros(x.len());
        for i in 0..x.len() {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let vp = eval(p, &LowRankState::from_flat(p.n(), p.k(), &xp), m, prox).value;
            let vm = eval(p, &LowRankState::from_flat(p.n(), p.k(), &xm), m, prox).value;
            fd[i] = (vp - vm) / (2.0 * h);
        }
        fd
    }

    fn block_ranges(n: usize, k: usize) -> [(usize, usize); 5] {
        [
            (0, n * k),
            (n * k, n * k + n),
            (n * k + n, n * k + 2 * n),
            (n * k + 2 * n, n * k + 3 * n),
            (n * k + 3 * n, n * k + 3 * n + 1),
        ]
    }

    #[test]
    fn gradient_matches_central_differences_per_block() {
        let p = random_problem(4, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..50 {
            let st = random_state(&p, &mut rng);
            let sigma = [0.5, 1.0, 10.0][trial % 3];
            let m = random_multipliers(&p, &mut rng, sigma);
            let anchor = random_state(&p, &mut rng).to_flat();
            let prox = if trial % 2 == 0 {
                None
            } else {
                Some((&anchor, 1.0 / sigma))
            };
            let analytic = eval(&p, &st, &m, prox).grad;
            let fd = fd_gradient(&p, &st, &m, prox);
            for (lo, hi) in block_ranges(p.n(), p.k()) {
                let mut err = 0.0f64;
                let mut scale = 0.0f64;
                for i in lo..hi {
                    err = err.max((analytic[i] - fd[i]).abs());
                    scale = scale.max(fd[i].abs());
                }
                assert!(
                    err <= 1e-5 * (1.0 + scale),
                    "block {lo}..{hi}: |analytic - fd| = {err} (scale {scale})"
                );
            }
        }
    }

    #[test]
    fn value_is_linear_in_each_multiplier() {
        let p = random_problem(5, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let st = random_state(&p, &mut rng);
        let m = random_multipliers(&p, &mut rng, 4.0);
        let res = residuals(&p, &st);
        let base = eval(&p, &st, &m, None).value;
        let delta = 0.37;

        let mut m1 = m.clone();
        m1.lambda1 += delta;
        assert_abs_diff_eq!(
            eval(&p, &st, &m1, None).value - base,
            -delta * res.ca,
            epsilon = 1e-9
        );
        let mut m2 = m.clone();
        m2.mu[1] += delta;
        assert_abs_diff_eq!(
            eval(&p, &st, &m2, None).value - base,
            -delta * res.cb[1],
            epsilon = 1e-9
        );
        let mut m3 = m.clone();
        m3.lambda3 += delta;
        assert_abs_diff_eq!(
            eval(&p, &st, &m3, None).value - base,
            -delta * res.ce,
            epsilon = 1e-9
        );
    }

    #[test]
    fn value_is_linear_in_sigma() {
        let p = random_problem(5, 2, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let st = random_state(&p, &mut rng);
        let m = random_multipliers(&p, &mut rng, 2.0);
        let res = residuals(&p, &st);
        let sq = res.ca * res.ca
            + res.cb.dot(&res.cb)
            + res.cc * res.cc
            + res.cd.dot(&res.cd)
            + res.ce * res.ce;
        let base = eval(&p, &st, &m, None).value;
        let mut m2 = m.clone();
        m2.sigma += 1.5;
        assert_abs_diff_eq!(
            eval(&p, &st, &m2, None).value - base,
            0.75 * sq,
            epsilon = 1e-9
        );
    }

    #[test]
    fn multiplier_update_formulas() {
        let res = ConstraintResiduals {
            ca: 0.5,
            cb: array![0.1, -0.2],
            cc: -1.0,
            cd: array![0.0, 2.0],
            ce: 0.25,
        };
        let m = Multipliers::zeros(2, 10.0);
        let next = update_multipliers(&m, &res);
        assert_eq!(next.lambda1, -5.0);
        assert_eq!(next.lambda2, 10.0);
        assert_eq!(next.lambda3, -2.5);
        assert_eq!(next.mu, array![-1.0, 2.0]);
        assert_eq!(next.gamma, array![0.0, -20.0]);
        assert_eq!(next.sigma, 10.0);
    }

    #[test]
    fn zero_residuals_leave_multipliers_unchanged() {
        let res = ConstraintResiduals {
            ca: 0.0,
            cb: Array1::zeros(3),
            cc: 0.0,
            cd: Array1::zeros(3),
            ce: 0.0,
        };
        let mut m = Multipliers::zeros(3, 2.0);
        m.lambda1 = 1.5;
        m.mu[2] = -0.5;
        let next = update_multipliers(&m, &res);
        assert_eq!(next.lambda1, 1.5);
        assert_eq!(next.mu, m.mu);
    }

    #[test]
    fn penalty_policy_rule() {
        let m = Multipliers::zeros(2, 1.0);
        let policy = PenaltyPolicy::default();
        // halving is not enough progress (0.5 > 0.25)
        assert_eq!(update_penalty(&m, 0.5, 1.0, policy).sigma, 10.0);
        // a 10x reduction is
        assert_eq!(update_penalty(&m, 0.1, 1.0, policy).sigma, 1.0);
        // clamp at sigma_max
        let mut at_max = m.clone();
        at_max.sigma = 1e8;
        assert_eq!(update_penalty(&at_max, 1.0, 1.0, policy).sigma, 1e8);
    }
}
