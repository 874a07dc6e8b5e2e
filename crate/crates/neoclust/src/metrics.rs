//! Evaluation of discrete clusterings against ground truth.
//!
//! The headline number is a symmetrized average best-match F1: clusterings
//! here are overlapping and non-exhaustive, so label-permutation measures
//! like accuracy or NMI do not apply directly. Matching each cluster to
//! its best counterpart and averaging both directions rewards finding the
//! true communities without crediting either over- or under-splitting.

use std::collections::HashSet;
use std::fmt;

use crate::error::{NeoError, Result};

/// F1 of a single cluster pair on membership overlap.
///
/// With precision `|a ∩ b| / |a|` and recall `|a ∩ b| / |b|`, the harmonic
/// mean `2PR / (P + R)` reduces to `2 |a ∩ b| / (|a| + |b|)`, which is the
/// form computed here (it avoids 0/0 when one side is disjoint).
fn pair_f1(a: &HashSet<usize>, b: &HashSet<usize>) -> f64 {
    let inter = a.iter().filter(|x| b.contains(x)).count();
    2.0 * inter as f64 / (a.len() + b.len()) as f64
}

/// Mean over `from` of each cluster's best F1 against `against`.
///
/// The maxima are sorted before summing so that cluster order cannot
/// perturb the last bits of the mean; the score is then exactly invariant
/// under permutation of either argument.
fn best_match_mean(from: &[HashSet<usize>], against: &[HashSet<usize>]) -> f64 {
    let mut best: Vec<f64> = from
        .iter()
        .map(|a| {
            against
                .iter()
                .map(|b| pair_f1(a, b))
                .fold(0.0, f64::max)
        })
        .collect();
    best.sort_by(f64::total_cmp);
    best.iter().sum::<f64>() / best.len() as f64
}

/// Symmetrized average best-match F1 of `found` against `truth`, in
/// `[0, 1]`.
///
/// Each truth cluster is matched to the found cluster maximizing their
/// pairwise F1 (`2 |a ∩ b| / (|a| + |b|)`) and vice versa; the score is
/// the mean of the two directional averages. Identical clusterings score
/// 1 and the score is invariant under reordering clusters on either side.
///
/// Empty clusters in `found` carry no information and are skipped with a
/// warning; an entirely empty `found` scores 0, also with a warning. An
/// empty `truth` is a caller error.
pub fn f1_score(found: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64> {
    if truth.is_empty() {
        return Err(NeoError::InvalidParameter(
            "ground truth has no clusters".into(),
        ));
    }
    let empties = found.iter().filter(|c| c.is_empty()).count();
    if empties > 0 {
        log::warn!("skipping {empties} empty found cluster(s) in F1 scoring");
    }
    let found: Vec<HashSet<usize>> = found
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| c.iter().copied().collect())
        .collect();
    if found.is_empty() {
        log::warn!("no nonempty found clusters; F1 is 0");
        return Ok(0.0);
    }
    let truth: Vec<HashSet<usize>> = truth.iter().map(|c| c.iter().copied().collect()).collect();
    Ok(0.5 * (best_match_mean(&truth, &found) + best_match_mean(&found, &truth)))
}

/// Summary of one clustering run, printable as a key-value block and as a
/// CSV row.
///
/// Optional fields are absent for runs that skip the relaxation (the
/// iterative method has no SDP objective or infeasibility) or lack ground
/// truth (no F1); they print as empty CSV fields and are omitted from the
/// text block.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub method: String,
    /// "converged", "maxed", or "iterative".
    pub status: String,
    pub outer_iters: usize,
    pub wall_seconds: f64,
    /// Discrete objective of the final clustering.
    pub neo_objective: f64,
    pub sdp_objective: Option<f64>,
    pub infeasibility: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "method,status,outer_iters,wall_seconds,neo_objective,sdp_objective,infeasibility,f1"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.status,
            self.outer_iters,
            self.wall_seconds,
            self.neo_objective,
            opt(self.sdp_objective),
            opt(self.infeasibility),
            opt(self.f1),
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {}", self.method)?;
        writeln!(f, "status: {}", self.status)?;
        writeln!(f, "outer_iters: {}", self.outer_iters)?;
        writeln!(f, "wall_seconds: {:.3}", self.wall_seconds)?;
        writeln!(f, "neo_objective: {:.6}", self.neo_objective)?;
        if let Some(v) = self.sdp_objective {
            writeln!(f, "sdp_objective: {v:.6}")?;
        }
        if let Some(v) = self.infeasibility {
            writeln!(f, "infeasibility: {v:.3e}")?;
        }
        if let Some(v) = self.f1 {
            writeln!(f, "f1: {v:.4}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clusters(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<usize>> {
        (0..k)
            .map(|_| {
                let size = rng.gen_range(1..=n);
                let mut ids: Vec<usize> = (0..n).collect();
                ids.shuffle(rng);
                ids.truncate(size);
                ids
            })
            .collect()
    }

    #[test]
    fn identical_clusterings_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = random_clusters(&mut rng, 12, 3);
            assert_eq!(f1_score(&x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn one_blob_against_two_pairs_scores_two_thirds() {
        // each direction matches a size-2 cluster to the size-4 blob:
        // 2 * 2 / (2 + 4) = 2/3
        let truth = vec![vec![0, 1], vec![2, 3]];
        let found = vec![vec![0, 1, 2, 3]];
        let got = f1_score(&found, &truth).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn empty_found_list_scores_zero() {
        let truth = vec![vec![0, 1]];
        assert_eq!(f1_score(&[], &truth).unwrap(), 0.0);
        // all-empty clusters degenerate to the same case
        assert_eq!(f1_score(&[vec![], vec![]], &truth).unwrap(), 0.0);
    }

    #[test]
    fn empty_found_clusters_are_skipped() {
        let truth = vec![vec![0, 1]];
        let found = vec![vec![0, 1], vec![]];
        assert_eq!(f1_score(&found, &truth).unwrap(), 1.0);
    }

    #[test]
    fn empty_truth_is_an_error() {
        assert!(f1_score(&[vec![0]], &[]).is_err());
    }

    #[test]
    fn duplicate_ids_count_once() {
        let truth = vec![vec![0, 1]];
        let found = vec![vec![0, 0, 1, 1]];
        assert_eq!(f1_score(&found, &truth).unwrap(), 1.0);
    }

    #[test]
    fn report_row_matches_header_arity() {
        let report = MetricsReport {
            method: "palm".into(),
            status: "converged".into(),
            outer_iters: 42,
            wall_seconds: 0.5,
            neo_objective: -1.25,
            sdp_objective: None,
            infeasibility: Some(3e-4),
            f1: None,
        };
        let header_fields = MetricsReport::csv_header().split(',').count();
        let row = report.csv_row();
        assert_eq!(row.split(',').count(), header_fields);
        assert!(row.ends_with(','), "trailing optionals should be empty");
        let block = report.to_string();
        assert!(block.contains("infeasibility"));
        assert!(!block.contains("sdp_objective"));
    }

    proptest! {
        #[test]
        fn score_is_permutation_invariant(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..15);
            let (kt, kf) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let truth = random_clusters(&mut rng, n, kt);
            let found = random_clusters(&mut rng, n, kf);
            let base = f1_score(&found, &truth).unwrap();
            let mut found_p = found.clone();
            let mut truth_p = truth.clone();
            found_p.shuffle(&mut rng);
            truth_p.shuffle(&mut rng);
            prop_assert_eq!(base, f1_score(&found_p, &truth_p).unwrap());
        }

        #[test]
        fn score_stays_in_unit_interval(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 10_000);
            let n = rng.gen_range(2..15);
            let (kt, kf) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let truth = random_clusters(&mut rng, n, kt);
            let found = random_clusters(&mut rng, n, kf);
            let got = f1_score(&found, &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&got));
        }
    }
}
