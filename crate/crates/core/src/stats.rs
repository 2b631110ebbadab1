//! Small statistical helpers shared by the Monte Carlo estimators.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Two-sided 95% standard normal quantile.
pub const Z_95_TWO_SIDED: f64 = 1.959_963_984_540_054;
/// One-sided 95% standard normal quantile.
pub const Z_95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

/// Derives the seed of trial `index` from a master seed.
///
/// Each trial gets its own ChaCha stream, so the result depends only on
/// `(master, index)` and never on scheduling.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Binomial confidence interval at 95%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// True when only one side is informative (zero or all hits).
    pub one_sided: bool,
}

/// Wilson score interval for `hits` successes out of `trials`.
///
/// With zero hits (or all hits) the uninformative side is pinned to 0 (1)
/// and the other side uses the one-sided 95% quantile.
pub fn wilson_interval(hits: u64, trials: u64) -> Interval {
    assert!(trials > 0, "wilson interval needs at least one trial");
    assert!(hits <= trials);
    let n = trials as f64;
    let p = hits as f64 / n;
    let bounds = |z: f64| {
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = p + z2 / (2.0 * n);
        let margin = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        (
            ((center - margin) / denom).clamp(0.0, 1.0),
            ((center + margin) / denom).clamp(0.0, 1.0),
        )
    };
    if hits == 0 {
        let (_, hi) = bounds(Z_95_ONE_SIDED);
        Interval {
            lo: 0.0,
            hi,
            one_sided: true,
        }
    } else if hits == trials {
        let (lo, _) = bounds(Z_95_ONE_SIDED);
        Interval {
            lo,
            hi: 1.0,
            one_sided: true,
        }
    } else {
        let (lo, hi) = bounds(Z_95_TWO_SIDED);
        Interval {
            lo: lo.min(p),
            hi: hi.max(p),
            one_sided: false,
        }
    }
}

/// Ordinary least squares fit `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root mean square residual.
    pub residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        residual: (ss_res / nf).sqrt(),
    })
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_reference_value() {
        // 10/100 at 95%: (0.0552, 0.1744) from the closed form.
        let iv = wilson_interval(10, 100);
        assert!((iv.lo - 0.055_229).abs() < 1e-5, "{iv:?}");
        assert!((iv.hi - 0.174_366).abs() < 1e-5, "{iv:?}");
        assert!(!iv.one_sided);
    }

    #[test]
    fn zero_hits_is_one_sided() {
        let iv = wilson_interval(0, 1000);
        assert_eq!(iv.lo, 0.0);
        let z2 = Z_95_ONE_SIDED * Z_95_ONE_SIDED;
        assert!((iv.hi - z2 / (1000.0 + z2)).abs() < 1e-15);
        assert!(iv.one_sided);
        let all = wilson_interval(50, 50);
        assert_eq!(all.hi, 1.0);
        assert!(all.lo < 1.0);
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..64).map(|i| trial_seed(7, i)).collect();
        let b: Vec<u64> = (0..64).map(|i| trial_seed(7, i)).collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), a.len());
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.5).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    proptest! {
        #[test]
        fn wilson_contains_point_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
            let hits = ((trials as f64) * frac).floor() as u64;
            let iv = wilson_interval(hits, trials);
            let p = hits as f64 / trials as f64;
            prop_assert!(iv.lo <= p && p <= iv.hi);
            prop_assert!(0.0 <= iv.lo && iv.hi <= 1.0);
        }
    }
}
