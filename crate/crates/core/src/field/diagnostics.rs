//! Sampling diagnostics for the mixing and regularity assumptions.
//!
//! Everything here is an estimate from independent realisations; trial `t`
//! uses the field seed `trial_seed(spec.seed, t)`.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{generate_field, FieldSpec};
use crate::error::{Error, Result};
use crate::stats::{linear_fit, trial_seed};

pub const MIN_MIXING_TRIALS: u64 = 1000;

#[derive(Debug, Clone, Serialize)]
pub struct MixingDiagnostics {
    /// Ascending lattice distances along the first axis.
    pub distance_grid: Vec<u32>,
    /// `|P(A∩B) - P(A)P(B)|` for median threshold events at two sites.
    pub alpha_estimates: Vec<f64>,
    /// Monte Carlo standard error of each alpha estimate under independence.
    pub alpha_standard_errors: Vec<f64>,
    /// `|E[X1 X2] - E[X1]E[X2]|` with `X = exp(-V)` at two sites.
    pub moment_gap_pairs: Vec<f64>,
    /// Same for three collinear sites at spacing `L`; absent when `2L`
    /// does not fit in the region.
    pub moment_gap_triples: Vec<Option<f64>>,
    /// Largest of all factorisation gaps.
    pub moment_factorization_gap: f64,
    /// Slope of `-ln alpha` against distance over significant alphas, if at
    /// least two are significant. Diagnostic only.
    pub c1_estimate: Option<f64>,
    pub trials: u64,
}

/// Estimates strong-mixing coefficients from sampled realisations.
pub fn estimate_mixing(spec: &FieldSpec, distances: &[u32], trials: u64) -> Result<MixingDiagnostics> {
    spec.validate()?;
    if trials < MIN_MIXING_TRIALS {
        return Err(Error::domain(format!(
            "mixing estimates need at least {MIN_MIXING_TRIALS} trials, got {trials}"
        )));
    }
    if distances.is_empty() {
        return Err(Error::domain("no distances requested"));
    }
    let mut grid = distances.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let extent = spec.region.extents()[0] as u32;
    if let Some(&too_far) = grid.iter().find(|&&l| l >= extent) {
        return Err(Error::domain(format!(
            "distance {too_far} does not fit in a region of {extent} sites along the first axis"
        )));
    }

    let anchor = spec.region.lo.clone();
    let along = |k: u32| {
        let mut s = anchor.clone();
        s[0] += k as i64;
        s
    };
    // Sites needed per trial: offsets 0, L, 2L for every L in the grid.
    let mut offsets: Vec<u32> = vec![0];
    for &l in &grid {
        offsets.push(l);
        if 2 * l < extent {
            offsets.push(2 * l);
        }
    }
    offsets.sort_unstable();
    offsets.dedup();
    let slot = |k: u32| offsets.binary_search(&k).unwrap();

    let rows: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let sample = generate_field(&spec.with_seed(trial_seed(spec.seed, t)))?;
            Ok(offsets
                .iter()
                .map(|&k| sample.get(&along(k)).expect("site inside region"))
                .collect())
        })
        .collect::<Result<_>>()?;

    let n = trials as f64;
    let mut anchor_vals: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    anchor_vals.sort_by(f64::total_cmp);
    let median = anchor_vals[anchor_vals.len() / 2];

    let below = |v: f64| v <= median;
    let mean_of = |f: &dyn Fn(&Vec<f64>) -> f64| rows.iter().map(f).sum::<f64>() / n;

    let mut alphas = Vec::with_capacity(grid.len());
    let mut ses = Vec::with_capacity(grid.len());
    let mut gap2 = Vec::with_capacity(grid.len());
    let mut gap3 = Vec::with_capacity(grid.len());
    for &l in &grid {
        let (i0, i1) = (slot(0), slot(l));
        let pa = mean_of(&|r| below(r[i0]) as u8 as f64);
        let pb = mean_of(&|r| below(r[i1]) as u8 as f64);
        let pab = mean_of(&|r| (below(r[i0]) && below(r[i1])) as u8 as f64);
        alphas.push((pab - pa * pb).abs());
        ses.push((pa * (1.0 - pa) * pb * (1.0 - pb) / n).sqrt());

        let x = |v: f64| (-v).exp();
        let e0 = mean_of(&|r| x(r[i0]));
        let e1 = mean_of(&|r| x(r[i1]));
        let e01 = mean_of(&|r| x(r[i0]) * x(r[i1]));
        gap2.push((e01 - e0 * e1).abs());
        gap3.push(if 2 * l < extent {
            let i2 = slot(2 * l);
            let e2 = mean_of(&|r| x(r[i2]));
            let e012 = mean_of(&|r| x(r[i0]) * x(r[i1]) * x(r[i2]));
            Some((e012 - e0 * e1 * e2).abs())
        } else {
            None
        });
    }

    let moment_factorization_gap = gap2
        .iter()
        .copied()
        .chain(gap3.iter().flatten().copied())
        .fold(0.0, f64::max);

    let (xs, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .zip(alphas.iter().zip(&ses))
        .filter(|(_, (a, se))| **a > 3.0 * **se && **a > 0.0)
        .map(|(l, (a, _))| (*l as f64, -a.ln()))
        .unzip();
    let c1_estimate = linear_fit(&xs, &ys).map(|f| f.slope);

    Ok(MixingDiagnostics {
        distance_grid: grid,
        alpha_estimates: alphas,
        alpha_standard_errors: ses,
        moment_gap_pairs: gap2,
        moment_gap_triples: gap3,
        moment_factorization_gap,
        c1_estimate,
        trials,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LogHolderEstimate {
    pub epsilons: Vec<f64>,
    /// `sup_t [F(t+ε) - F(t)]` of the empirical marginal distribution.
    pub sup_increments: Vec<f64>,
    /// Fitted exponent in `Const·|ln ε|^(-κ)`.
    pub kappa_estimate: f64,
    pub constant: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub sample_size: usize,
}

/// Largest empirical mass of a half-open window of width `eps`, from sorted
/// data.
fn sup_increment(sorted: &[f64], eps: f64) -> f64 {
    let mut best = 0usize;
    let mut hi = 0usize;
    for lo in 0..sorted.len() {
        if hi < lo {
            hi = lo;
        }
        while hi < sorted.len() && sorted[hi] < sorted[lo] + eps {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    best as f64 / sorted.len() as f64
}

/// Estimates the log-Hölder exponent of the marginal distribution function.
///
/// All sites of every realisation are pooled; the marginal is the same at
/// every site.
pub fn estimate_log_holder(spec: &FieldSpec, epsilons: &[f64], trials: u64) -> Result<LogHolderEstimate> {
    spec.validate()?;
    if epsilons.len() < 3 {
        return Err(Error::domain(format!(
            "log-Hölder fit needs at least 3 epsilons, got {}",
            epsilons.len()
        )));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::domain(format!("epsilon {e} is outside (0, 1)")));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain("epsilons must be strictly decreasing"));
    }
    if trials == 0 {
        return Err(Error::domain("log-Hölder estimate needs at least one trial"));
    }

    let mut pooled: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| generate_field(&spec.with_seed(trial_seed(spec.seed, t))).map(|s| s.values().to_vec()))
        .collect::<Result<Vec<_>>>()?
        .concat();
    pooled.sort_by(f64::total_cmp);

    let sup_increments: Vec<f64> = epsilons.iter().map(|&e| sup_increment(&pooled, e)).collect();
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln().abs().ln()).collect();
    let ys: Vec<f64> = sup_increments.iter().map(|s| s.ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::domain("degenerate epsilon grid"))?;

    Ok(LogHolderEstimate {
        epsilons: epsilons.to_vec(),
        sup_increments,
        kappa_estimate: -fit.slope,
        constant: fit.intercept.exp(),
        residual: fit.residual,
        sample_size: pooled.len(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of independence for the values at two sites
/// `distance` apart along the first axis, binned by marginal quantiles.
pub fn chi_square_independence(
    spec: &FieldSpec,
    distance: u32,
    trials: u64,
    bins: usize,
) -> Result<ChiSquareResult> {
    spec.validate()?;
    if bins < 2 {
        return Err(Error::domain("need at least 2 bins"));
    }
    if distance as usize >= spec.region.extents()[0] {
        return Err(Error::domain(format!(
            "distance {distance} does not fit in the region"
        )));
    }
    let a_site = spec.region.lo.clone();
    let mut b_site = a_site.clone();
    b_site[0] += distance as i64;
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            generate_field(&spec.with_seed(trial_seed(spec.seed, t)))
                .map(|s| (s.get(&a_site).unwrap(), s.get(&b_site).unwrap()))
        })
        .collect::<Result<_>>()?;

    let mut marginal: Vec<f64> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    marginal.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..bins)
        .map(|k| marginal[k * marginal.len() / bins])
        .collect();
    let bin_of = |v: f64| cuts.partition_point(|c| *c <= v);

    let mut table = vec![vec![0.0f64; bins]; bins];
    for (a, b) in &pairs {
        table[bin_of(*a)][bin_of(*b)] += 1.0;
    }
    let n = pairs.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..bins).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let expected = rows[i] * cols[j] / n;
            if expected > 0.0 {
                stat += (table[i][j] - expected).powi(2) / expected;
            }
        }
    }
    let dof = (bins - 1) * (bins - 1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::domain(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: 1.0 - dist.cdf(stat),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldKind, LatticeBox, SiteLaw};

    fn spec(kind: FieldKind, len: i64, seed: u64) -> FieldSpec {
        FieldSpec {
            kind,
            law: SiteLaw::default(),
            seed,
            region: LatticeBox::new(vec![0], vec![len - 1]),
        }
    }

    /// Brute-force sample correlation at a given distance.
    fn empirical_corr(spec: &FieldSpec, distance: i64, trials: u64) -> (f64, f64) {
        let (a, b): (Vec<f64>, Vec<f64>) = (0..trials)
            .map(|t| {
                let s = generate_field(&spec.with_seed(trial_seed(spec.seed, t))).unwrap();
                (s.get(&[0]).unwrap(), s.get(&[distance]).unwrap())
            })
            .unzip();
        let n = trials as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        // Standard error of the sample correlation under independence.
        (cov / (va * vb).sqrt(), 1.0 / n.sqrt())
    }

    #[test]
    fn window_zero_is_uncorrelated_at_distance_one() {
        let s = spec(FieldKind::MovingAverage { window: 0 }, 4, 1);
        let (rho, se) = empirical_corr(&s, 1, 10_000);
        assert!(rho.abs() < 3.0 * se, "rho {rho} se {se}");
    }

    #[test]
    fn window_one_is_uncorrelated_beyond_two() {
        let s = spec(FieldKind::MovingAverage { window: 1 }, 8, 2);
        for d in [3, 4, 6] {
            let (rho, se) = empirical_corr(&s, d, 10_000);
            assert!(rho.abs() < 3.0 * se, "d {d}: rho {rho} se {se}");
        }
        // Overlapping windows: exact correlation 2/3 at distance 1.
        let (rho, se) = empirical_corr(&s, 1, 10_000);
        assert!((rho - 2.0 / 3.0).abs() < 5.0 * se, "rho {rho}");
    }

    #[test]
    fn mixing_alpha_examples() {
        let ma1 = spec(FieldKind::MovingAverage { window: 1 }, 8, 3);
        let diag = estimate_mixing(&ma1, &[3], 4000).unwrap();
        assert!(diag.alpha_estimates[0] <= 3.0 * diag.alpha_standard_errors[0], "{diag:?}");

        let iid = spec(FieldKind::IidUniform, 8, 4);
        let diag = estimate_mixing(&iid, &[1, 2, 5], 4000).unwrap();
        for (a, se) in diag.alpha_estimates.iter().zip(&diag.alpha_standard_errors) {
            assert!(*a <= 3.0 * se, "{diag:?}");
        }
        assert!(diag.alpha_estimates.iter().all(|a| (0.0..=1.0).contains(a)));

        let ma2 = spec(FieldKind::MovingAverage { window: 2 }, 8, 5);
        let diag = estimate_mixing(&ma2, &[1], 4000).unwrap();
        assert!(diag.alpha_estimates[0] > 3.0 * diag.alpha_standard_errors[0], "{diag:?}");
        assert!(diag.moment_gap_pairs[0] > 0.0);
    }

    #[test]
    fn mixing_distances_sorted_and_checked() {
        let s = spec(FieldKind::MovingAverage { window: 1 }, 8, 6);
        let diag = estimate_mixing(&s, &[5, 1, 3], 1000).unwrap();
        assert_eq!(diag.distance_grid, vec![1, 3, 5]);
        assert!(diag.moment_gap_triples[2].is_none());
        assert!(diag.moment_gap_triples[0].is_some());
        assert!(matches!(estimate_mixing(&s, &[8], 1000), Err(Error::Domain(_))));
        assert!(matches!(estimate_mixing(&s, &[1], 999), Err(Error::Domain(_))));
    }

    #[test]
    fn sup_increment_of_uniform_is_epsilon() {
        let s = spec(FieldKind::IidUniform, 16, 7);
        let est = estimate_log_holder(&s, &[0.2, 0.1, 0.05], 2000).unwrap();
        let n = est.sample_size as f64;
        // The sup over windows adds a few binomial standard deviations.
        let se = (0.1 * 0.9 / n).sqrt();
        assert!(est.sup_increments[1] >= 0.1 - 3.0 * se);
        assert!(est.sup_increments[1] <= 0.1 + 6.0 * se, "{est:?}");
    }

    #[test]
    fn window_sum_density_is_bounded() {
        // Mean of three uniforms has peak density 9/4, so the increment at
        // ε = 0.05 sits near 0.1125; oracle bound C = 9/4.
        let s = spec(FieldKind::MovingAverage { window: 1 }, 16, 8);
        let est = estimate_log_holder(&s, &[0.2, 0.1, 0.05], 2000).unwrap();
        let n = est.sample_size as f64;
        // Pooled sites are correlated; inflate the binomial error by the window volume.
        let se = (0.1125 * (1.0 - 0.1125) * 3.0 / n).sqrt();
        assert!(est.sup_increments[2] <= 2.25 * 0.05 + 6.0 * se, "{est:?}");
        assert!(est.kappa_estimate > 0.0);
    }

    #[test]
    fn log_holder_rejects_bad_grids() {
        let s = spec(FieldKind::IidUniform, 4, 0);
        assert!(matches!(estimate_log_holder(&s, &[0.1, 0.05], 10), Err(Error::Domain(_))));
        assert!(matches!(
            estimate_log_holder(&s, &[0.1, 0.1, 0.05], 10),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            estimate_log_holder(&s, &[1.5, 0.1, 0.05], 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn chi_square_independence_beyond_window() {
        // Fisher's combination over several seeds: -2 Σ ln p ~ χ²(2k).
        for (window, distance) in [(1u32, 3u32), (2, 5)] {
            let seeds = 6;
            let stat: f64 = (0..seeds)
                .map(|k| {
                    let s = spec(FieldKind::MovingAverage { window }, 12, 100 * window as u64 + k);
                    -2.0 * chi_square_independence(&s, distance, 10_000, 4).unwrap().p_value.ln()
                })
                .sum();
            let combined = 1.0 - ChiSquared::new(2.0 * seeds as f64).unwrap().cdf(stat);
            assert!(combined > 1e-3, "window {window}: combined p {combined}");
        }
        let s = spec(FieldKind::MovingAverage { window: 1 }, 12, 21);
        let res = chi_square_independence(&s, 1, 10_000, 4).unwrap();
        assert!(res.p_value < 1e-6, "{res:?}");
    }
}
