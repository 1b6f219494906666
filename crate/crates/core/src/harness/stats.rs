use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: usize = 1000;

/// Quantile of sorted data with linear interpolation between the order
/// statistics at position `(n - 1) * q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval of the mean of 0/1 outcomes.
///
/// Draws `resamples` resamples of size `n` with replacement (index draws from
/// a ChaCha8 stream seeded by `seed`, one `gen_range(0..n)` per element), and
/// returns the `(1 - level) / 2` and `(1 + level) / 2` quantiles of the
/// resample means.
pub fn bootstrap_ci(outcomes: &[bool], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    assert!(!outcomes.is_empty(), "bootstrap of empty outcomes");
    assert!(resamples > 0, "at least one resample");
    assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
    let n = outcomes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n).filter(|_| outcomes[rng.gen_range(0..n)]).count();
            hits as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&means, tail), quantile_sorted(&means, 1.0 - tail))
}

/// Fraction of `true` outcomes.
pub fn success_rate(outcomes: &[bool]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|&&o| o).count() as f64 / outcomes.len() as f64
}
