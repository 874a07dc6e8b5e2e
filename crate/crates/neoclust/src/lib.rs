//! Non-exhaustive overlapping clustering via multiplier methods on a
//! low-rank semidefinite relaxation.
//!
//! Classical k-means partitions every point into exactly one cluster. This
//! crate solves a generalization with two extra budgets: a total of
//! `(1+alpha) n` assignments may be made (so points can belong to several
//! clusters), and up to `floor(beta n)` points may be left out entirely (so
//! outliers need not be forced into a cluster). Setting `alpha = beta = 0`
//! recovers kernel k-means.
//!
//! Two complementary engines are provided:
//!
//! * [`iterative`]: a Lloyd-style alternating scheme that greedily
//!   reassigns points under the budgets. Fast, monotone, and used both as a
//!   baseline and as a warm start.
//! * [`solvers`]: four multiplier methods (augmented Lagrangian, proximal
//!   augmented Lagrangian, and two ADMM variants) applied to a low-rank
//!   nonconvex reformulation of the SDP relaxation, followed by
//!   [`rounding`] back to a discrete assignment.
//!
//! # Example
//!
//! ```
//! use ndarray::array;
//! use neoclust::{Dataset, KernelProblem, iterative};
//!
//! // Six points in two visible groups, one straggler.
//! let data = Dataset::new(array![
//!     [0.0, 0.0], [0.1, 0.0], [0.0, 0.1],
//!     [4.0, 4.0], [4.1, 4.0],
//!     [10.0, 0.0],
//! ])?;
//! let kernel = data.linear_kernel();
//! let weights = ndarray::Array1::ones(6);
//!
//! // Two clusters, no overlap, allow one point to stay unassigned.
//! let problem = KernelProblem::new(kernel, weights, 2, 0.0, 0.2)?;
//! let result = iterative::iterate(&problem, None, 100, 7)?;
//! let clustering = &result.clustering;
//!
//! // The straggler is the unassigned point.
//! assert_eq!(clustering.assigned_count(5), 0);
//! # Ok::<(), neoclust::NeoError>(())
//! ```

pub mod auglag;
pub mod boxqn;
mod error;
pub mod iterative;
pub mod kernels;
pub mod metrics;
mod model;
pub mod pipeline;
pub mod rounding;
pub mod solvers;

pub use error::{NeoError, Result};
pub use kernels::{Dataset, Graph};
pub use model::{
    infeasibility, residuals, sdp_objective, ConstraintResiduals, KernelProblem, LowRankState,
    Multipliers,
};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(objective, "../../../book/src/objective.md");
    chapter!(relaxation, "../../../book/src/relaxation.md");
    chapter!(multiplier_methods, "../../../book/src/multiplier-methods.md");
    chapter!(subsolvers, "../../../book/src/subsolvers.md");
    chapter!(rounding, "../../../book/src/rounding-and-evaluation.md");
    chapter!(cli, "../../../book/src/cli.md");
}
