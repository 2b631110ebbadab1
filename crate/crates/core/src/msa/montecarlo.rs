//! Monte Carlo estimates of spectral-edge and singular-cube probabilities.
//!
//! Trial `i` draws its field with seed `trial_seed(spec.seed, i)`, so every
//! estimator sees the same realisations for the same master seed, and results
//! do not depend on how trials are scheduled.

use rayon::prelude::*;
use serde::Serialize;

use super::{ns_test_with, ScaleParameters};
use crate::error::{Error, Result};
use crate::field::{generate_field, FieldSpec};
use crate::geometry::{build_cube, GridBudget, LatticeCube};
use crate::hamiltonian::{assemble, AssembledHamiltonian, InteractionSpec};
use crate::spectral::{spectral_bottom, SpectralData};
use crate::stats::{trial_seed, wilson_interval, Interval};

/// Smallest accepted number of Monte Carlo trials.
pub const MIN_TRIALS: usize = 100;

/// Geometry of the cubes sampled by the estimators; the half-side comes
/// from the scale parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeConfig {
    pub n: usize,
    pub d: usize,
    pub spacing: f64,
    pub center: Vec<i64>,
    pub interaction: InteractionSpec,
    pub budget: GridBudget,
}

impl CubeConfig {
    /// Cube centred at the origin with unit spacing and no interaction.
    pub fn origin(n: usize, d: usize) -> Self {
        CubeConfig {
            n,
            d,
            spacing: 1.0,
            center: vec![0; n * d],
            interaction: InteractionSpec::none(),
            budget: GridBudget::default(),
        }
    }

    pub fn build(&self, l: f64) -> Result<LatticeCube> {
        build_cube(self.n, self.d, &self.center, l, self.spacing, self.budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    /// `E0 ≤ threshold`
    EdgeBelow { threshold: f64 },
    /// Some energy `E ≤ e_star` makes the cube singular.
    ExistsSingular { e_star: f64 },
    /// Empirical site average at most `s0`.
    LdpAverage { s0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub event: Event,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub wilson_interval: Interval,
    pub paper_bound: Option<f64>,
}

impl ProbabilityEstimate {
    pub fn new(event: Event, hits: u64, trials: u64, paper_bound: Option<f64>) -> Self {
        ProbabilityEstimate {
            event,
            trials,
            hits,
            p_hat: hits as f64 / trials as f64,
            wilson_interval: wilson_interval(hits, trials),
            paper_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeEstimate {
    /// `P{E0 ≤ L^(-1/2)}` against `L^(-2p 4^(N-n))`.
    pub estimate: ProbabilityEstimate,
    /// `P{E0 ≤ b L^(-2)}`.
    pub lifshitz: ProbabilityEstimate,
    pub b: f64,
    /// Per-trial ground energies, in trial order.
    pub ground_energies: Vec<f64>,
}

/// Samples cubes at scale `scale.l` and counts low ground energies.
pub fn mc_edge_probability(
    spec: &FieldSpec,
    cube: &CubeConfig,
    scale: &ScaleParameters,
    trials: usize,
    b: f64,
) -> Result<EdgeEstimate> {
    check_trials(trials)?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::config(format!("edge constant b must be positive, got {b}")));
    }
    let lattice = checked_cube(cube, scale)?;
    let ground_energies: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let h = sample_hamiltonian(spec, &lattice, &cube.interaction, i)?;
            Ok(spectral_bottom(&h, 1)?.e0)
        })
        .collect::<Result<_>>()?;
    let edge = scale.edge_threshold();
    let low = b * scale.l.powi(-2);
    let count = |t: f64| ground_energies.iter().filter(|e| **e <= t).count() as u64;
    Ok(EdgeEstimate {
        estimate: ProbabilityEstimate::new(
            Event::EdgeBelow { threshold: edge },
            count(edge),
            trials as u64,
            Some(scale.paper_bound()),
        ),
        lifshitz: ProbabilityEstimate::new(Event::EdgeBelow { threshold: low }, count(low), trials as u64, None),
        b,
        ground_energies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularTrial {
    pub e0: f64,
    /// `E0 ≤ L^(-1/2)`
    pub edge: bool,
    /// Grid energies tested; zero for edge trials.
    pub grid_checked: usize,
    /// Grid energies found singular.
    pub grid_singular: usize,
    /// Largest `block norm / threshold` over the grid.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityEstimate {
    /// `P{∃E ≤ E*: cube is (E, m)-singular}` against `L^(-2p 4^(N-n))`.
    pub estimate: ProbabilityEstimate,
    pub edge_hits: u64,
    /// Trials above the edge that the grid still found singular.
    pub grid_extra_hits: u64,
    /// Trials with `E0 > L^(-1/2)` where some grid energy was singular.
    pub soundness_failures: u64,
    /// Trials with `E0 > L^(-1/2)` but `dist(E, σ) ≤ ½L^(-1/2)` at a grid energy.
    pub gap_violations: u64,
    pub ns_checks: u64,
    pub grid: Vec<f64>,
    pub records: Vec<SingularTrial>,
}

/// `E* - k·step` for `k = 0, …, ⌊E*/step⌋`.
pub fn energy_grid(e_star: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config(format!("energy_grid_step must be positive, got {step}")));
    }
    if step > e_star {
        return Err(Error::config(format!(
            "energy_grid_step {step} exceeds E* = {e_star}"
        )));
    }
    let count = (e_star / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| e_star - k as f64 * step).collect())
}

/// Per trial: a ground energy at or below `L^(-1/2)` counts as a hit (the
/// edge event contains the singular one); otherwise the gap
/// `dist(E, σ) > ½L^(-1/2)` is asserted and the cube is tested directly on
/// the energy grid up to `E*`.
pub fn mc_singularity_probability(
    spec: &FieldSpec,
    cube: &CubeConfig,
    scale: &ScaleParameters,
    trials: usize,
    energy_grid_step: f64,
) -> Result<SingularityEstimate> {
    check_trials(trials)?;
    let grid = energy_grid(scale.e_star, energy_grid_step)?;
    let lattice = checked_cube(cube, scale)?;
    if !lattice.has_regions() {
        return Err(Error::domain(format!(
            "interior and outer regions need L > 3, got L = {}",
            scale.l
        )));
    }
    let edge = scale.edge_threshold();
    let records: Vec<(SingularTrial, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let h = sample_hamiltonian(spec, &lattice, &cube.interaction, i)?;
            let bottom = spectral_bottom(&h, 1)?;
            singular_trial(&h, &bottom, scale, &grid, edge)
        })
        .collect::<Result<_>>()?;

    let mut edge_hits = 0;
    let mut extra = 0;
    let mut gap_violations = 0;
    let mut ns_checks = 0;
    for (r, gap_ok) in &records {
        ns_checks += r.grid_checked as u64;
        if r.edge {
            edge_hits += 1;
        } else {
            if r.grid_singular > 0 {
                extra += 1;
            }
            if !gap_ok {
                gap_violations += 1;
            }
        }
    }
    Ok(SingularityEstimate {
        estimate: ProbabilityEstimate::new(
            Event::ExistsSingular { e_star: scale.e_star },
            edge_hits + extra,
            trials as u64,
            Some(scale.paper_bound()),
        ),
        edge_hits,
        grid_extra_hits: extra,
        soundness_failures: extra,
        gap_violations,
        ns_checks,
        grid,
        records: records.into_iter().map(|(r, _)| r).collect(),
    })
}

fn singular_trial(
    h: &AssembledHamiltonian,
    bottom: &SpectralData,
    scale: &ScaleParameters,
    grid: &[f64],
    edge: f64,
) -> Result<(SingularTrial, bool)> {
    let e0 = bottom.e0;
    let mut record = SingularTrial {
        e0,
        edge: e0 <= edge,
        grid_checked: 0,
        grid_singular: 0,
        max_ratio: 0.0,
    };
    if record.edge {
        return Ok((record, true));
    }
    let mut gap_ok = true;
    for &energy in grid {
        if energy >= e0 {
            continue;
        }
        gap_ok &= e0 - energy > 0.5 * edge;
        let verdict = ns_test_with(h, bottom, scale, energy)?;
        record.grid_checked += 1;
        if !verdict.is_ns() {
            record.grid_singular += 1;
        }
        let ratio = verdict.block_norm.map_or(f64::INFINITY, |b| b / verdict.threshold);
        record.max_ratio = record.max_ratio.max(ratio);
    }
    Ok((record, gap_ok))
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::config(format!(
            "Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

fn checked_cube(cube: &CubeConfig, scale: &ScaleParameters) -> Result<LatticeCube> {
    if cube.n != scale.n || cube.d != scale.d {
        return Err(Error::config(format!(
            "cube (n = {}, d = {}) does not match scale parameters (n = {}, d = {})",
            cube.n, cube.d, scale.n, scale.d
        )));
    }
    cube.interaction.validate()?;
    cube.build(scale.l)
}

pub(crate) fn sample_hamiltonian(
    spec: &FieldSpec,
    cube: &LatticeCube,
    interaction: &InteractionSpec,
    index: usize,
) -> Result<AssembledHamiltonian> {
    let trial = FieldSpec {
        seed: trial_seed(spec.seed, index as u64),
        region: cube.field_box(),
        ..spec.clone()
    };
    let field = generate_field(&trial)?;
    assemble(cube, &field, interaction)
}
