//! Large deviations of the empirical site average below
//! `s0 = min_x -½ ln E[e^(-V(x))]`.

use rayon::prelude::*;
use serde::Serialize;

use super::montecarlo::{Event, ProbabilityEstimate};
use crate::error::{Error, Result};
use crate::field::{generate_field, FieldSpec, LatticeBox};
use crate::stats::{linear_fit, trial_seed};

/// Smallest accepted number of trials per scale.
pub const MIN_LDP_TRIALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpVolume {
    pub l: i64,
    /// `|C_L| = (2L)^d`
    pub volume: f64,
    /// Lattice sites averaged over, `(2L - 1)^d`.
    pub sites: usize,
    pub estimate: ProbabilityEstimate,
    /// Hit trials on which `exp(s0·sites - ΣV) ≥ 1` failed.
    pub markov_failures: u64,
    pub mean_average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpReport {
    pub s0: f64,
    /// `min_x γ_x` with `γ_x = -ln E[e^(-V(x))]`.
    pub gamma_x_min: f64,
    pub volumes: Vec<LdpVolume>,
    /// Slope of `-ln p̂` against `|C_L|`; absent with fewer than two usable
    /// volumes.
    pub fitted_rate: Option<f64>,
    pub fit_intercept: Option<f64>,
    /// Volumes left out of the fit because they had no hits or only hits.
    pub excluded: Vec<i64>,
}

impl LdpReport {
    pub fn p_hats(&self) -> Vec<f64> {
        self.volumes.iter().map(|v| v.estimate.p_hat).collect()
    }

    pub fn markov_failures(&self) -> u64 {
        self.volumes.iter().map(|v| v.markov_failures).sum()
    }
}

/// Estimates `P{(1/|C_L|) Σ_{x ∈ C_L(0)} V(x) ≤ s0}` for each `L`, with the
/// dimension taken from `spec.region`.
pub fn ldp_experiment(spec: &FieldSpec, scales: &[i64], trials: usize) -> Result<LdpReport> {
    spec.validate()?;
    if trials < MIN_LDP_TRIALS {
        return Err(Error::config(format!(
            "large-deviation estimate needs at least {MIN_LDP_TRIALS} trials per scale, got {trials}"
        )));
    }
    if scales.is_empty() || scales.iter().any(|l| *l < 1) {
        return Err(Error::config("scales must be a non-empty list of positive integers"));
    }
    let d = spec.region.dim();
    let laplace = spec.laplace_transform_at_one();
    let gamma_x_min = -laplace.ln();
    let s0 = 0.5 * gamma_x_min;
    debug_assert!(s0 <= 0.5 * gamma_x_min);

    let mut volumes = Vec::with_capacity(scales.len());
    for (k, &l) in scales.iter().enumerate() {
        let region = LatticeBox::centered(&vec![0; d], l - 1);
        let sites = region.len();
        let bound = s0 * sites as f64;
        // (sum, is_hit, markov_ok)
        let samples: Vec<(f64, bool, bool)> = (0..trials)
            .into_par_iter()
            .map(|i| {
                let seed = trial_seed(spec.seed, (k * trials + i) as u64);
                let field = generate_field(&FieldSpec {
                    seed,
                    region: region.clone(),
                    ..spec.clone()
                })?;
                let sum: f64 = field.values().iter().sum();
                let hit = sum <= bound;
                Ok((sum, hit, !hit || (bound - sum).exp() >= 1.0))
            })
            .collect::<Result<_>>()?;
        let hits = samples.iter().filter(|s| s.1).count() as u64;
        let markov_failures = samples.iter().filter(|s| !s.2).count() as u64;
        let mean_average = samples.iter().map(|s| s.0).sum::<f64>() / (trials * sites) as f64;
        volumes.push(LdpVolume {
            l,
            volume: ((2 * l) as f64).powi(d as i32),
            sites,
            estimate: ProbabilityEstimate::new(Event::LdpAverage { s0 }, hits, trials as u64, None),
            markov_failures,
            mean_average,
        });
    }

    let mut excluded = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for v in &volumes {
        let e = &v.estimate;
        if e.hits == 0 || e.hits == e.trials {
            log::warn!("volume L = {} excluded from the rate fit ({} of {} hits)", v.l, e.hits, e.trials);
            excluded.push(v.l);
        } else {
            xs.push(v.volume);
            ys.push(-e.p_hat.ln());
        }
    }
    let fit = if xs.len() >= 2 { linear_fit(&xs, &ys) } else { None };
    Ok(LdpReport {
        s0,
        gamma_x_min,
        volumes,
        fitted_rate: fit.as_ref().map(|f| f.slope),
        fit_intercept: fit.as_ref().map(|f| f.intercept),
        excluded,
    })
}
