//! Wilcoxon signed-rank test on paired samples.
//!
//! Zero differences are dropped and tied magnitudes share the average
//! rank. Up to [`EXACT_LIMIT`] nonzero differences the null distribution
//! of W⁺ is computed exactly by counting sign assignments; beyond that a
//! normal approximation with tie and continuity corrections is used.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::TrainError;

pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `a − b` tends to be positive.
    Greater,
    /// `a − b` tends to be negative.
    Less,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Nonzero differences with the signed-rank statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRanks {
    pub ranks: Vec<f64>,
    pub positive: Vec<bool>,
    pub w_plus: f64,
    pub w_minus: f64,
}

pub fn signed_ranks(a: &[f64], b: &[f64]) -> Result<SignedRanks, TrainError> {
    if a.len() != b.len() {
        return Err(TrainError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&mags);
    let positive: Vec<bool> = diffs.iter().map(|&d| d > 0.0).collect();
    let w_plus = ranks.iter().zip(&positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let w_minus = ranks.iter().zip(&positive).filter(|(_, &p)| !p).map(|(r, _)| r).sum();
    Ok(SignedRanks {
        ranks,
        positive,
        w_plus,
        w_minus,
    })
}

/// p-value of the signed-rank test for the pairs `(a_i, b_i)`.
/// The two-sided statistic is `W = min(W⁺, W⁻)`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64, TrainError> {
    let sr = signed_ranks(a, b)?;
    if sr.ranks.is_empty() {
        return Ok(1.0);
    }
    let p = if sr.ranks.len() <= EXACT_LIMIT {
        exact_p(&sr, alternative)
    } else {
        normal_p(&sr, alternative)
    };
    Ok(p.min(1.0))
}

fn exact_p(sr: &SignedRanks, alternative: Alternative) -> f64 {
    // doubled ranks are integers even with average-rank ties
    let doubled: Vec<usize> = sr.ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let n_assign = 2f64.powi(sr.ranks.len() as i32);
    let observed = (2.0 * sr.w_plus).round() as usize;
    let le = |x: usize| counts[..=x.min(total)].iter().sum::<f64>() / n_assign;
    let ge = |x: usize| counts[x.min(total + 1)..].iter().sum::<f64>() / n_assign;
    match alternative {
        Alternative::Greater => ge(observed),
        Alternative::Less => le(observed),
        Alternative::TwoSided => {
            let w = observed.min(total - observed);
            2.0 * le(w)
        }
    }
}

fn normal_p(sr: &SignedRanks, alternative: Alternative) -> f64 {
    let m = sr.ranks.len() as f64;
    let mean = m * (m + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = sr.ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let upper = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    match alternative {
        Alternative::Greater => upper((sr.w_plus - mean - 0.5) / sd),
        Alternative::Less => upper((mean - sr.w_plus - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((sr.w_plus - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * upper(z)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_p_one() {
        let a = [0.3, 0.5, 0.9];
        assert_eq!(wilcoxon_signed_rank(&a, &a, Alternative::TwoSided).unwrap(), 1.0);
        assert_eq!(wilcoxon_signed_rank(&a, &a, Alternative::Greater).unwrap(), 1.0);
    }

    #[test]
    fn five_positive_differences() {
        let a = [1.0; 5];
        let b = [0.0; 5];
        assert_eq!(wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap(), 1.0 / 32.0);
        assert_eq!(wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap(), 1.0 / 16.0);
        assert_eq!(wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0], &[1.0, 2.0], Alternative::TwoSided),
            Err(TrainError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn large_sample_uses_normal_branch() {
        let a: Vec<f64> = (0..30).map(|i| i as f64 + 1.0).collect();
        let b = vec![0.0; 30];
        let p = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
        assert!(p > 0.0 && p < 1e-5);
        let p = wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap();
        assert!(p > 0.99);
    }
}
