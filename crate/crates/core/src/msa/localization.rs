//! Qualitative localization: exponential decay of eigenvectors and bounded
//! position moments of spectrally filtered wave packets.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::RegionSelector;
use crate::hamiltonian::AssembledHamiltonian;
use crate::spectral::solve::{DenseEigen, DENSE_DIM_LIMIT};
use crate::spectral::{SpectralData, RESIDUAL_TOL};
use crate::stats::linear_fit;

/// Amplitudes below this fraction of the peak are round-off and not fitted.
const AMPLITUDE_FLOOR: f64 = 1e-12;
/// Eigenvector noise is taken as this multiple of the eigenpair residual.
const RESIDUAL_NOISE_FACTOR: f64 = 1e3;
/// Fits with a lower coefficient of determination count as non-localized.
const MIN_R_SQUARED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub index: usize,
    pub energy: f64,
    /// Grid index of the largest amplitude.
    pub peak: usize,
    /// `-d ln(envelope)/d dist`; zero when nothing could be fitted.
    pub rate: f64,
    pub r_squared: f64,
    pub localized: bool,
    /// Distance shells used in the fit.
    pub points: usize,
}

/// Fits `ln max_{|x - x_peak| = r} |ψ(x)|` against `r` for each eigenvector,
/// over the shells from the peak outward up to the first one that falls
/// below the noise floor.
pub fn eigenfunction_decay_fit(h: &AssembledHamiltonian, data: &SpectralData) -> Result<Vec<DecayFit>> {
    if let Some(r) = data.residuals.iter().find(|r| !(**r <= RESIDUAL_TOL)) {
        return Err(Error::domain(format!("eigenvector residual {r:e} exceeds 1e-8")));
    }
    let cube = &h.cube;
    let spacing = cube.spacing();
    Ok(data
        .eigenvectors
        .iter()
        .zip(&data.k_lowest)
        .zip(&data.residuals)
        .enumerate()
        .map(|(index, ((v, &energy), &residual))| {
            let peak = (0..v.len())
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
                .unwrap_or(0);
            let top = v[peak].abs();
            let mut envelope: Vec<f64> = Vec::new();
            for (x, value) in v.iter().enumerate() {
                let shell = (cube.distance(peak, x) / spacing).round() as usize;
                if shell >= envelope.len() {
                    envelope.resize(shell + 1, 0.0);
                }
                envelope[shell] = envelope[shell].max(value.abs());
            }
            let floor = (AMPLITUDE_FLOOR * top).max(RESIDUAL_NOISE_FACTOR * residual);
            let (xs, ys): (Vec<f64>, Vec<f64>) = envelope
                .iter()
                .enumerate()
                .take_while(|(_, a)| **a > floor)
                .map(|(r, a)| (r as f64 * spacing, a.ln()))
                .unzip();
            let fit = if xs.len() >= 3 { linear_fit(&xs, &ys) } else { None };
            let (rate, r_squared) = fit.map_or((0.0, 0.0), |f| (-f.slope, f.r_squared));
            DecayFit {
                index,
                energy,
                peak,
                rate,
                r_squared,
                localized: r_squared >= MIN_R_SQUARED && rate > 0.0,
                points: xs.len(),
            }
        })
        .collect())
}

pub struct DynamicalMomentSpec {
    /// Moment exponent `s > 0`.
    pub s: f64,
    /// Closed energy interval `I`; `P_I` projects onto eigenvalues inside.
    pub interval: (f64, f64),
    /// Initial region `K`.
    pub k: RegionSelector,
    pub time_grid: Vec<f64>,
}

/// `points` logarithmically spaced times over `[1e-2, 1e3]`. Doubling the
/// density with `2·points - 1` keeps every original time.
pub fn default_time_grid(points: usize) -> Vec<f64> {
    let (a, b) = (-2.0f64, 3.0f64);
    match points {
        0 => Vec::new(),
        1 => vec![10f64.powf(a)],
        _ => (0..points)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTrace {
    pub times: Vec<f64>,
    /// `‖X^s e^(-itH) P_I 1_K‖` at each time.
    pub values: Vec<f64>,
    pub max: f64,
    pub argmax_time: f64,
    /// Number of eigenvalues in `I`.
    pub rank: usize,
    pub k_size: usize,
}

/// `‖X^s e^(-itH) P_I 1_K‖` through a dense spectral decomposition.
pub struct MomentOperator {
    energies: Vec<f64>,
    /// `V_Iᵀ X^(2s) V_I`
    weight: DMatrix<Complex<f64>>,
    /// Rows of `V_I` on `K`, transposed: `rank × |K|`.
    initial: DMatrix<f64>,
}

impl MomentOperator {
    pub fn new(h: &AssembledHamiltonian, s: f64, interval: (f64, f64), k: &RegionSelector) -> Result<Self> {
        let dim = h.dim();
        if dim > DENSE_DIM_LIMIT {
            return Err(Error::resource(format!(
                "dynamical moment needs a dense decomposition; dimension {dim} exceeds {DENSE_DIM_LIMIT}"
            )));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("moment exponent s must be positive, got {s}")));
        }
        let k_idx = h.cube.mask_indices(k)?;
        if k_idx.is_empty() {
            return Err(Error::domain("initial region K contains no grid points"));
        }
        let eig = DenseEigen::new(&h.matrix);
        let selected: Vec<usize> = (0..dim)
            .filter(|&j| eig.values[j] >= interval.0 && eig.values[j] <= interval.1)
            .collect();
        let rank = selected.len();
        let v_i = DMatrix::from_fn(dim, rank, |x, j| eig.vectors[(x, selected[j])]);
        let position: Vec<f64> = (0..dim)
            .map(|x| {
                let p = h.cube.point(x);
                p.iter().fold(0.0f64, |m, c| m.max(c.abs())).powf(2.0 * s)
            })
            .collect();
        let mut scaled = v_i.clone();
        for (x, w) in position.iter().enumerate() {
            scaled.row_mut(x).scale_mut(*w);
        }
        let weight = (v_i.transpose() * scaled).map(|w| Complex::new(w, 0.0));
        let initial = DMatrix::from_fn(rank, k_idx.len(), |j, c| v_i[(k_idx[c], j)]);
        Ok(MomentOperator {
            energies: selected.iter().map(|&j| eig.values[j]).collect(),
            weight,
            initial,
        })
    }

    pub fn rank(&self) -> usize {
        self.energies.len()
    }

    pub fn k_size(&self) -> usize {
        self.initial.ncols()
    }

    /// The norm at time `t ≥ 0`.
    pub fn norm_at(&self, t: f64) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let phased = DMatrix::from_fn(self.rank(), self.k_size(), |j, c| {
            Complex::from_polar(1.0, -t * self.energies[j]) * self.initial[(j, c)]
        });
        let gram = phased.adjoint() * &self.weight * &phased;
        let top = if gram.nrows() == 1 {
            gram[(0, 0)].re
        } else {
            gram.symmetric_eigenvalues().max()
        };
        top.max(0.0).sqrt()
    }
}

/// Evaluates the moment on the time grid and reports its maximum.
pub fn dynamical_moment(h: &AssembledHamiltonian, spec: &DynamicalMomentSpec) -> Result<MomentTrace> {
    if spec.time_grid.is_empty() || spec.time_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::domain("time grid must be a non-empty set of positive times"));
    }
    let op = MomentOperator::new(h, spec.s, spec.interval, &spec.k)?;
    let values: Vec<f64> = spec.time_grid.iter().map(|&t| op.norm_at(t)).collect();
    let (arg, max) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    Ok(MomentTrace {
        times: spec.time_grid.clone(),
        max,
        argmax_time: spec.time_grid[arg],
        values,
        rank: op.rank(),
        k_size: op.k_size(),
    })
}
