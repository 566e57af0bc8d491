//! Small numeric helpers shared by the aggregation and cleaning code.

/// Pairwise (cascade) summation. The recursion order depends only on the
/// slice length, so results are reproducible across runs.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sum of `f(x)` over an iterator, collected first so the pairwise order is fixed.
pub fn sum_by<T, F: Fn(&T) -> f64>(items: &[T], f: F) -> f64 {
    let v: Vec<f64> = items.iter().map(f).collect();
    pairwise_sum(&v)
}

/// Nearest-rank percentile of an unsorted sample; `p` in (0, 1].
///
/// Returns `None` on an empty sample or a sample containing NaN.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Some(nearest_rank_sorted(&sorted, p))
}

/// Nearest-rank percentile of an already sorted, non-empty sample.
pub fn nearest_rank_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    // guard against 0.01 * 100 landing a hair above an integer
    let rank = (p * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn nearest_rank_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&xs, 0.5), Some(50.0));
        assert_eq!(nearest_rank(&xs, 0.01), Some(1.0));
        assert_eq!(nearest_rank(&xs, 0.99), Some(99.0));
        assert_eq!(nearest_rank(&xs, 0.95), Some(95.0));
        assert_eq!(nearest_rank(&xs, 1.0), Some(100.0));
    }

    #[test]
    fn nearest_rank_empty() {
        assert_eq!(nearest_rank(&[], 0.5), None);
    }
}
