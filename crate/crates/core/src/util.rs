//! Shared numeric helpers.

/// Deterministic pairwise summation.
///
/// The reduction tree depends only on the slice length, so the result is
/// bit-identical no matter how the inputs were produced (serially or by a
/// thread pool writing into pre-sized chunks).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `n` evenly spaced values covering `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
        .collect()
}

/// Relative error of `got` against a reference, with an absolute floor so
/// near-zero references do not blow up the ratio.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Splits `n` items into chunks of at most `chunk` and reduces the per-chunk
/// results with [`pairwise_sum`]-like tree order. `eval` maps a chunk range
/// to its partial sum. Deterministic for fixed `n` and `chunk`.
pub fn chunked_sum(n: usize, chunk: usize, eval: impl Fn(std::ops::Range<usize>) -> f64) -> f64 {
    let parts: Vec<f64> = (0..n.div_ceil(chunk))
        .map(|c| eval(c * chunk..((c + 1) * chunk).min(n)))
        .collect();
    pairwise_sum(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_benign_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }

    #[test]
    fn pairwise_is_chunk_invariant() {
        let xs: Vec<f64> = (0..4097).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let direct = pairwise_sum(&xs);
        let chunked = chunked_sum(xs.len(), 64, |r| pairwise_sum(&xs[r]));
        // Not bit-identical to `direct` in general, but chunked_sum with the
        // same chunk size must be.
        let chunked2 = chunked_sum(xs.len(), 64, |r| pairwise_sum(&xs[r]));
        assert_eq!(chunked.to_bits(), chunked2.to_bits());
        assert!((direct - chunked).abs() < 1e-12);
    }

    #[test]
    fn linspace_endpoints_exact() {
        let xs = linspace(0.0, 0.12, 241);
        assert_eq!(xs[0], 0.0);
        assert_eq!(xs[240], 0.12);
        assert_eq!(xs.len(), 241);
    }
}
