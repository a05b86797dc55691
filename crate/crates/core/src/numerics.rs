//! Small deterministic numerical helpers shared by the analysis modules.

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (cascade) summation with a fixed split rule.
///
/// The split points depend only on the slice length, so the result is
/// reproducible regardless of how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `n` equally spaced values over `[lo, hi]` with both endpoints hit exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(-1.2, 1.2, 7);
        assert_eq!(v[0], -1.2);
        assert_eq!(v[6], 1.2);
        assert_eq!(v.len(), 7);
    }
}
