//! Hypothesis tests used by the study report.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Bonferroni-corrected significance level for three hypotheses.
pub const STUDY_ALPHA: f64 = 0.0167;

/// Largest `n1 * n2` for which the Mann-Whitney p-value is computed exactly.
pub const EXACT_MWU_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
    ChiSquareDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
    pub method: PValueMethod,
}

impl StatsResult {
    fn new(test: &str, statistic: f64, p_value: f64, alpha: f64, method: PValueMethod) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            test: test.to_string(),
            statistic,
            p_value,
            alpha,
            significant: p_value < alpha,
            method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("contingency table has a zero marginal")]
    DegenerateTable,
    #[error("sample is empty")]
    EmptySample,
}

/// Pearson chi-square test of independence on a 2x2 table, without
/// continuity correction, 1 degree of freedom.
pub fn chi_square_test(table: [[u64; 2]; 2], alpha: f64) -> Result<StatsResult, StatsError> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::DegenerateTable);
    }
    let total = (rows[0] + rows[1]) as f64;
    let mut statistic = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &observed) in row.iter().enumerate() {
            let expected = rows[r] as f64 * cols[c] as f64 / total;
            statistic += (observed as f64 - expected).powi(2) / expected;
        }
    }
    // Survival function of chi-square with 1 df.
    let p = erfc((statistic / 2.0).sqrt());
    Ok(StatsResult::new(
        "chi_square",
        statistic,
        p,
        alpha,
        PValueMethod::ChiSquareDistribution,
    ))
}

/// Pooled midranks, doubled so that ties stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // Positions i+1..=j share the midrank (i + 1 + j) / 2.
        for &k in &order[i..j] {
            ranks[k] = (i + 1 + j) as u64;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    (ranks, tie_sizes)
}

/// Two-sided Mann-Whitney U test of `a` against `b`.
///
/// The statistic is U for `a` with midranks for ties. The p-value is
/// `P(|U - n1*n2/2| >= |u - n1*n2/2|)`, computed exactly over all
/// assignments of the pooled ranks when `n1 * n2 <= 400`, otherwise from the
/// normal approximation with tie-corrected variance (no continuity
/// correction).
pub fn mann_whitney_u(a: &[f64], b: &[f64], alpha: f64) -> Result<StatsResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_sizes) = doubled_midranks(&pooled);
    let doubled_rank_sum: u64 = ranks[..n1].iter().sum();
    // 2U = 2R1 - n1(n1+1)
    let doubled_u = doubled_rank_sum as i64 - (n1 * (n1 + 1)) as i64;
    let u = doubled_u as f64 / 2.0;

    if n1 * n2 <= EXACT_MWU_LIMIT {
        let p = exact_p(&ranks, n1, n2, doubled_u);
        return Ok(StatsResult::new(
            "mann_whitney_u",
            u,
            p,
            alpha,
            PValueMethod::Exact,
        ));
    }

    let n = (n1 + n2) as f64;
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let variance = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if variance <= 0.0 {
        1.0
    } else {
        let z = (u - n1f * n2f / 2.0) / variance.sqrt();
        erfc(z.abs() / std::f64::consts::SQRT_2)
    };
    Ok(StatsResult::new(
        "mann_whitney_u",
        u,
        p,
        alpha,
        PValueMethod::NormalApproximation,
    ))
}

/// Exact permutation p-value: counts, by dynamic programming over the pooled
/// doubled ranks, the size-`n1` subsets whose U is at least as far from its
/// mean as the observed one.
fn exact_p(ranks: &[u64], n1: usize, n2: usize, observed_doubled_u: i64) -> f64 {
    let max_sum: u64 = {
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable();
        sorted.iter().rev().take(n1).sum()
    };
    let width = max_sum as usize + 1;
    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0u128; width]; n1 + 1];
    ways[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=n1).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let (prev, cur) = (&lower[k - 1], &mut upper[0]);
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let offset = (n1 * (n1 + 1)) as i64;
    let centre = (n1 * n2) as i64;
    let observed = (observed_doubled_u - centre).abs();
    let mut extreme = 0u128;
    let mut total = 0u128;
    for (s, &count) in ways[n1].iter().enumerate() {
        if count == 0 {
            continue;
        }
        total += count;
        if (s as i64 - offset - centre).abs() >= observed {
            extreme += count;
        }
    }
    extreme as f64 / total as f64
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (Some(mean), Some((ss / (n - 1.0)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn chi_square_homogeneous_table() {
        let r = chi_square_test([[50, 50], [50, 50]], STUDY_ALPHA).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);
    }

    #[test]
    fn chi_square_against_scipy() {
        // scipy.stats.chi2_contingency(..., correction=False)
        let cases = [
            ([[30, 10], [10, 30]], 20.0, 7.744216431044088e-06),
            ([[54, 20], [71, 26]], 0.001060632124728944, 0.97401960891194),
            ([[12, 5], [3, 9]], 5.85483193277311, 0.015534341414683461),
            ([[7, 18], [40, 2]], 33.83506788247213, 5.998774902311807e-09),
        ];
        for (table, stat, p) in cases {
            let r = chi_square_test(table, STUDY_ALPHA).unwrap();
            assert!(close(r.statistic, stat, 1e-9), "{table:?}: {}", r.statistic);
            assert!(close(r.p_value, p, 1e-9), "{table:?}: {}", r.p_value);
        }
    }

    #[test]
    fn chi_square_zero_marginal() {
        assert_eq!(
            chi_square_test([[0, 0], [5, 5]], STUDY_ALPHA),
            Err(StatsError::DegenerateTable)
        );
    }

    #[test]
    fn significance_uses_strict_inequality() {
        let r = StatsResult::new("t", 0.0, 0.0167, 0.0167, PValueMethod::Exact);
        assert!(!r.significant);
    }

    #[test]
    fn mwu_identical_samples() {
        let a = [1.0, 2.0, 2.0, 3.0];
        let r = mann_whitney_u(&a, &a, STUDY_ALPHA).unwrap();
        assert_eq!(r.statistic, 8.0); // n^2 / 2
        assert!(close(r.p_value, 1.0, 1e-12));
        assert!(!r.significant);
    }

    #[test]
    fn mwu_fully_separated_small_samples() {
        // 20 equally likely rank assignments, two of them as extreme.
        let r = mann_whitney_u(&[1.0, 1.0, 1.0], &[5.0, 6.0, 7.0], STUDY_ALPHA).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(close(r.p_value, 0.1, 1e-12));
        assert_eq!(r.method, PValueMethod::Exact);
    }

    #[test]
    fn mwu_exact_without_ties_against_scipy() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [6.0, 7.0, 8.0, 9.0, 10.0, 11.0];
        let r = mann_whitney_u(&a, &b, STUDY_ALPHA).unwrap();
        assert!(close(r.p_value, 0.004329004329004329, 1e-12));
    }

    #[test]
    fn mwu_normal_approximation_against_scipy() {
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic", use_continuity=False)
        let a = [
            0., 1., 1., 2., 3., 3., 3., 4., 5., 2., 1., 0., 2., 2., 3., 1., 4., 2., 2., 3., 1.,
        ];
        let b = [
            1., 1., 2., 0., 0., 1., 1., 0., 2., 1., 1., 0., 1., 1., 1., 2., 0., 1., 1., 0., 1., 2.,
            1.,
        ];
        let r = mann_whitney_u(&a, &b, STUDY_ALPHA).unwrap();
        assert_eq!(r.method, PValueMethod::NormalApproximation);
        assert!(close(r.statistic, 378.5, 1e-12));
        assert!(
            close(r.p_value, 0.0007529313109940124, 1e-9),
            "{}",
            r.p_value
        );
        assert!(r.significant);

        let a = [
            2.5, 3.1, 4.0, 4.0, 5.2, 6.7, 1.1, 3.3, 2.2, 9.0, 4.4, 5.5, 6.1, 7.7, 3.9, 2.8, 4.1,
            5.0, 6.0, 3.0, 2.0,
        ];
        let b = [
            1.0, 2.0, 2.0, 3.5, 1.5, 0.5, 2.2, 3.0, 1.8, 2.9, 4.2, 1.1, 0.9, 2.4, 3.3, 1.7, 2.6,
            2.1, 1.2, 0.8, 3.1, 2.7,
        ];
        let r = mann_whitney_u(&a, &b, STUDY_ALPHA).unwrap();
        assert!(close(r.statistic, 394.5, 1e-12));
        assert!(
            close(r.p_value, 7.068313704206029e-05, 1e-9),
            "{}",
            r.p_value
        );
    }

    #[test]
    fn mwu_all_tied_large_samples() {
        let a = vec![1.0; 30];
        let r = mann_whitney_u(&a, &a, STUDY_ALPHA).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn mwu_empty_sample() {
        assert_eq!(
            mann_whitney_u(&[], &[1.0], STUDY_ALPHA),
            Err(StatsError::EmptySample)
        );
    }

    #[test]
    fn mean_sd_two_pass() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!(close(s.unwrap(), (5.0f64 / 3.0).sqrt(), 1e-12));
        assert_eq!(mean_sd(&[3.0]), (Some(3.0), None));
        assert_eq!(mean_sd(&[]), (None, None));
    }
}
