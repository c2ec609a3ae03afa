//! Weighted histograms and total-variation distance.

/// Weighted mass per bin on `[lo, hi)`, plus a final overflow entry for
/// everything outside. Weights need not be normalised; the output is.
pub fn weighted_histogram(particles: &[f64], weights: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    assert_eq!(particles.len(), weights.len());
    assert!(bins > 0 && hi > lo);
    let mut out = vec![0.0; bins + 1];
    let width = (hi - lo) / bins as f64;
    let mut total = 0.0;
    for (&x, &w) in particles.iter().zip(weights) {
        let b = if x >= lo && x < hi {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            bins
        };
        out[b] += w;
        total += w;
    }
    if total > 0.0 {
        for v in &mut out {
            *v /= total;
        }
    }
    out
}

/// `½ Σ |p_i - q_i|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_and_overflow() {
        let h = weighted_histogram(&[0.1, 0.9, 1.5, -1.0], &[1.0, 1.0, 1.0, 1.0], 2, 0.0, 1.0);
        assert_eq!(h, vec![0.25, 0.25, 0.5]);
        assert_eq!(total_variation(&h, &h), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }
}
