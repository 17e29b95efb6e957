//! Nonparametric tests: paired Wilcoxon signed-rank (exact for small
//! samples) and the aligned Friedman rank-sum test with Hochberg's step-up
//! post-hoc adjustment.

use ndarray::ArrayView2;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::stats::average_ranks;

const WILCOXON_EXACT_LIMIT: usize = 25;

/// Two-sided paired Wilcoxon signed-rank p-value. Zero differences are
/// dropped and tied absolute differences receive averaged ranks. The exact
/// conditional distribution (dynamic program over sign assignments) is used
/// up to 25 nonzero pairs, a normal approximation with continuity and tie
/// corrections above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(1.0);
    }
    if diffs.len() < 5 {
        return Err(Error::data(
            "wilcoxon",
            format!("need at least 5 nonzero differences, got {}", diffs.len()),
        ));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    if n <= WILCOXON_EXACT_LIMIT {
        Ok(exact_two_sided_p(&ranks, w_plus))
    } else {
        let mean = n as f64 * (n + 1) as f64 / 4.0;
        let mut var = n as f64 * (n + 1) as f64 * (2 * n + 1) as f64 / 24.0;
        // tie correction: subtract sum(t^3 - t)/48 over tie groups
        let mut sorted = abs.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        if var <= 0.0 {
            return Ok(1.0);
        }
        let delta = w_plus - mean;
        let correction = 0.5 * delta.signum();
        let z = (delta - correction) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Ok((2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0))
    }
}

/// Exact two-sided p for the observed positive-rank sum, conditional on the
/// observed (possibly tied) ranks. Ranks are multiples of one half, so
/// doubling makes the sign-assignment sum distribution integral.
fn exact_two_sided_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for w in (r..=total).rev() {
            counts[w] += counts[w - r];
        }
    }
    let denom: f64 = counts.iter().sum();
    let w2 = (w_plus * 2.0).round() as usize;
    let p_le: f64 = counts[..=w2].iter().sum::<f64>() / denom;
    let p_ge: f64 = counts[w2..].iter().sum::<f64>() / denom;
    (2.0 * p_le.min(p_ge)).min(1.0)
}

/// Outcome of the aligned Friedman test with Hochberg post-hoc adjustment.
#[derive(Debug, Clone)]
pub struct FriedmanReport {
    pub overall_p: f64,
    pub statistic: f64,
    /// Method with the best (lowest) average aligned rank.
    pub control: String,
    /// Hochberg-adjusted p-value per method versus the control; the control
    /// itself carries `None`.
    pub adjusted: Vec<(String, Option<f64>)>,
    /// Average aligned rank per method, in input order.
    pub average_ranks: Vec<f64>,
}

/// Aligned Friedman rank-sum test over a methods-by-series score matrix.
/// Scores are aligned by subtracting each series' mean across methods, all
/// aligned values are ranked jointly (ties averaged), and pairwise
/// comparisons against the best-ranked method are Hochberg-adjusted.
pub fn aligned_friedman_hochberg(
    scores: &ArrayView2<f64>,
    names: &[String],
) -> Result<FriedmanReport> {
    let k = scores.nrows();
    let n = scores.ncols();
    if k != names.len() {
        return Err(Error::Dimension(format!(
            "{k} score rows but {} names",
            names.len()
        )));
    }
    if k < 3 {
        return Err(Error::data("friedman", "need at least 3 methods"));
    }
    if n < 10 {
        return Err(Error::data("friedman", "need at least 10 series"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("friedman", "non-finite score"));
    }

    // align within each series
    let mut aligned = vec![0.0; k * n];
    for i in 0..n {
        let col_mean: f64 = (0..k).map(|j| scores[[j, i]]).sum::<f64>() / k as f64;
        for j in 0..k {
            aligned[j * n + i] = scores[[j, i]] - col_mean;
        }
    }
    let ranks = average_ranks(&aligned);

    let method_rank_sum: Vec<f64> = (0..k)
        .map(|j| ranks[j * n..(j + 1) * n].iter().sum())
        .collect();
    let block_rank_sum: Vec<f64> = (0..n)
        .map(|i| (0..k).map(|j| ranks[j * n + i]).sum())
        .collect();

    let kn = (k * n) as f64;
    let numerator = (k as f64 - 1.0)
        * (method_rank_sum.iter().map(|r| r * r).sum::<f64>()
            - (k as f64 * (n * n) as f64 / 4.0) * (kn + 1.0) * (kn + 1.0));
    let denominator = kn * (kn + 1.0) * (2.0 * kn + 1.0) / 6.0
        - block_rank_sum.iter().map(|r| r * r).sum::<f64>() / k as f64;

    let (statistic, overall_p) = if denominator.abs() < 1e-9 {
        (0.0, 1.0)
    } else {
        let t = numerator / denominator;
        let chi = ChiSquared::new((k - 1) as f64).expect("valid dof");
        (t, (1.0 - chi.cdf(t.max(0.0))).clamp(0.0, 1.0))
    };

    let avg_ranks: Vec<f64> = method_rank_sum.iter().map(|r| r / n as f64).collect();
    let control_idx = avg_ranks
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    // pairwise z against the control on average aligned ranks
    let se = (k as f64 * (kn + 1.0) / 6.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut raw: Vec<(usize, f64)> = (0..k)
        .filter(|&j| j != control_idx)
        .map(|j| {
            let z = (avg_ranks[j] - avg_ranks[control_idx]) / se;
            (j, (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0))
        })
        .collect();

    // Hochberg step-up: from the largest raw p downward
    raw.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let m = raw.len();
    let mut adjusted_by_idx = vec![None; k];
    let mut running = f64::INFINITY;
    for pos in (0..m).rev() {
        let (j, p) = raw[pos];
        let candidate = ((m - pos) as f64 * p).min(1.0);
        running = running.min(candidate);
        adjusted_by_idx[j] = Some(running);
    }

    Ok(FriedmanReport {
        overall_p,
        statistic,
        control: names[control_idx].clone(),
        adjusted: names
            .iter()
            .cloned()
            .zip(adjusted_by_idx)
            .collect(),
        average_ranks: avg_ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn identical_samples_give_p_one() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(wilcoxon_signed_rank(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn six_positive_differences_exact_p() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let p = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!((p - 2.0 / 64.0).abs() < 1e-12, "p {p}");
    }

    #[test]
    fn symmetric_alternating_differences_near_one() {
        let a = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let p = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(p > 0.9, "p {p}");
    }

    #[test]
    fn too_few_nonzero_differences_error() {
        let a = [1.0, 1.0, 1.0, 1.0, 1.0, 2.0];
        let b = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(wilcoxon_signed_rank(&a, &b).is_err());
    }

    /// Brute-force enumeration over all sign assignments of the observed
    /// ranks; the implementation must match for every small n.
    fn enumeration_p(diffs: &[f64]) -> f64 {
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let ranks = average_ranks(&abs);
        let w_obs: f64 = diffs
            .iter()
            .zip(&ranks)
            .filter(|(d, _)| **d > 0.0)
            .map(|(_, r)| *r)
            .sum();
        let n = diffs.len();
        let mut le = 0usize;
        let mut ge = 0usize;
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            if w <= w_obs + 1e-12 {
                le += 1;
            }
            if w >= w_obs - 1e-12 {
                ge += 1;
            }
        }
        let total = (1usize << n) as f64;
        (2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0)
    }

    #[test]
    fn exact_matches_sign_enumeration() {
        let mut rng = crate::rng::substream(19, "wilcoxon-oracle");
        for n in 5..=10 {
            for _ in 0..20 {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0_f64).round()).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0_f64).round()).collect();
                let diffs: Vec<f64> = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| x - y)
                    .filter(|d| *d != 0.0)
                    .collect();
                if diffs.len() < 5 {
                    continue;
                }
                let got = wilcoxon_signed_rank(&a, &b).unwrap();
                let want = enumeration_p(&diffs);
                assert!(
                    (got - want).abs() < 1e-12,
                    "n={n}: got {got}, enumeration {want}"
                );
            }
        }
    }

    #[test]
    fn large_sample_uses_normal_approximation() {
        let mut rng = crate::rng::substream(23, "wilcoxon-large");
        let a: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let p = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("m{j}")).collect()
    }

    #[test]
    fn clearly_best_method_becomes_control() {
        let n = 20;
        let mut scores = Array2::<f64>::zeros((3, n));
        let mut rng = crate::rng::substream(31, "friedman");
        for i in 0..n {
            let base: f64 = rng.random_range(5.0..10.0);
            scores[[0, i]] = base - 4.0; // uniformly better
            scores[[1, i]] = base + rng.random_range(0.0..0.5);
            scores[[2, i]] = base + 1.0 + rng.random_range(0.0..0.5);
        }
        let report = aligned_friedman_hochberg(&scores.view(), &names(3)).unwrap();
        assert_eq!(report.control, "m0");
        assert!(report.overall_p < 0.01, "overall {}", report.overall_p);
        for (name, p) in &report.adjusted {
            if name != "m0" {
                assert!(p.unwrap() < 0.05, "{name}: {:?}", p);
            }
        }
    }

    #[test]
    fn rotated_scores_are_insignificant() {
        let n = 30;
        let base: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() * 3.0 + 5.0).collect();
        let mut scores = Array2::<f64>::zeros((3, n));
        for j in 0..3 {
            for i in 0..n {
                scores[[j, i]] = base[(i + j * 10) % n];
            }
        }
        let report = aligned_friedman_hochberg(&scores.view(), &names(3)).unwrap();
        assert!(report.overall_p > 0.3, "overall {}", report.overall_p);
    }

    #[test]
    fn degenerate_matrix_gives_p_one() {
        let scores = Array2::<f64>::from_elem((3, 12), 4.0);
        let report = aligned_friedman_hochberg(&scores.view(), &names(3)).unwrap();
        assert_eq!(report.overall_p, 1.0);
    }

    #[test]
    fn hochberg_adjustment_is_monotone() {
        let mut rng = crate::rng::substream(37, "hochberg");
        for _ in 0..30 {
            let n = 15;
            let k = 5;
            let mut scores = Array2::<f64>::zeros((k, n));
            for j in 0..k {
                for i in 0..n {
                    scores[[j, i]] = rng.random_range(0.0..10.0) + j as f64 * 0.3;
                }
            }
            let report = aligned_friedman_hochberg(&scores.view(), &names(k)).unwrap();
            // collect (raw order by adjusted p) and check non-decreasing when
            // sorted by the underlying average rank distance from control
            let mut adj: Vec<f64> = report
                .adjusted
                .iter()
                .filter_map(|(_, p)| *p)
                .collect();
            assert_eq!(adj.len(), k - 1);
            // Hochberg adjusted values sorted by raw p must be non-decreasing;
            // sorting the values themselves is equivalent for the check
            adj.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in adj.windows(2) {
                assert!(w[0] <= w[1] + 1e-15);
            }
            for p in adj {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
