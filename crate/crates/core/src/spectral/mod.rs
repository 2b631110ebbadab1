//! Spectral bottom, masked resolvent norms and the Combes–Thomas envelope.
//!
//! Every resolvent column `x = (H - E)^(-1) e_j` is certified by its
//! residual `‖(H - E)x - e_j‖ ≤ 1e-8` before it is used.

mod lanczos;
pub mod solve;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::RegionSelector;
use crate::hamiltonian::AssembledHamiltonian;
use crate::sparse::CsrMatrix;
use solve::{conjugate_gradient, BandLdl, DenseEigen, DENSE_DIM_LIMIT};

pub use lanczos::eigen_residual;

/// Below this dimension eigenvalues come from a dense decomposition.
pub const DENSE_BOTTOM_LIMIT: usize = 2000;
/// Required residual for eigenpairs and resolvent columns.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Energies closer than this to the spectrum are treated as collisions.
pub const COLLISION_TOL: f64 = 1e-10;
/// Default minimum gap for Combes–Thomas verification.
pub const DEFAULT_MIN_ETA: f64 = 0.05;

const LANCZOS_MAX_STEPS: usize = 300;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Dense eigendecomposition.
    Dense,
    /// Banded `LDLᵀ` factorisation.
    Direct,
    /// Krylov iteration (Lanczos or conjugate gradients).
    Iterative,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub e0: f64,
    /// Lowest eigenvalues, ascending; `k_lowest[0] == e0`.
    pub k_lowest: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub method: SolveMethod,
}

impl SpectralData {
    /// `dist(E, σ(H))` when it is determined by the computed eigenvalues:
    /// always for `E ≤ e0`, and up to the largest computed eigenvalue.
    pub fn gap_at(&self, energy: f64) -> Option<f64> {
        if energy <= self.e0 {
            return Some(self.e0 - energy);
        }
        let last = *self.k_lowest.last().unwrap();
        if energy > last {
            return None;
        }
        Some(
            self.k_lowest
                .iter()
                .map(|l| (l - energy).abs())
                .fold(f64::INFINITY, f64::min),
        )
    }
}

/// Lowest `k` eigenpairs of an assembled Hamiltonian.
pub fn spectral_bottom(h: &AssembledHamiltonian, k: usize) -> Result<SpectralData> {
    let data = matrix_bottom(&h.matrix, k)?;
    let bound = h.spectral_lower_bound();
    if data.e0 < bound - 1e-9 * bound.abs().max(1.0) {
        return Err(Error::numeric(
            format!("ground energy {} below the Gershgorin bound {bound}", data.e0),
            data.residuals[0],
        ));
    }
    Ok(data)
}

/// Lowest `k` eigenpairs of a symmetric sparse matrix.
pub fn matrix_bottom(matrix: &CsrMatrix, k: usize) -> Result<SpectralData> {
    let dim = matrix.dim();
    if k == 0 || k > dim {
        return Err(Error::domain(format!(
            "requested {k} eigenvalues of a {dim}-dimensional matrix"
        )));
    }
    let (values, vectors, method) = if dim < DENSE_BOTTOM_LIMIT {
        let eig = DenseEigen::new(matrix);
        let vectors = (0..k).map(|c| eig.vectors.column(c).iter().copied().collect()).collect();
        (eig.values[..k].to_vec(), vectors, SolveMethod::Dense)
    } else {
        let (v, w) = lanczos_bottom(matrix, k)?;
        (v, w, SolveMethod::Iterative)
    };
    let residuals: Vec<f64> = values
        .iter()
        .zip(&vectors)
        .map(|(l, v)| eigen_residual(matrix, *l, v))
        .collect();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > RESIDUAL_TOL {
        return Err(Error::numeric("eigenpair residual above 1e-8", worst));
    }
    Ok(SpectralData {
        e0: values[0],
        k_lowest: values,
        eigenvectors: vectors,
        residuals,
        method,
    })
}

/// Shift-invert Lanczos with an adaptively tightened shift. The shift is
/// moved towards the current Ritz estimate of `e0`; banded factorisations
/// certify via inertia that it stays below the spectrum.
fn lanczos_bottom(matrix: &CsrMatrix, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = matrix.dim();
    let lower = matrix.gershgorin_lower();
    let mut shift = lower - 1e-2 * lower.abs().max(1.0);
    let banded = BandLdl::fits(matrix);
    let mut best_residual = f64::INFINITY;
    for _round in 0..6 {
        let direct = if banded {
            Some(BandLdl::factor(matrix, shift).ok_or_else(|| {
                Error::numeric(format!("shift {shift} hit a zero pivot"), best_residual)
            })?)
        } else {
            None
        };
        let invert = |b: &[f64]| match &direct {
            Some(f) => f.solve(b),
            None => conjugate_gradient(matrix, shift, b, 1e-13, 20 * dim).0,
        };
        let outcome = lanczos::lowest_eigenpairs(matrix, shift, invert, k, LANCZOS_MAX_STEPS, RESIDUAL_TOL);
        let worst = outcome.residuals.iter().copied().fold(0.0, f64::max);
        best_residual = best_residual.min(worst);
        if outcome.converged && outcome.values.len() == k {
            return Ok((outcome.values, outcome.vectors));
        }
        // Ritz values bound e0 from above; move the shift 90% of the way.
        let target = outcome.values[0];
        let mut step = 0.9 * (target - shift);
        let mut next = shift + step;
        if banded {
            while step > 0.0 {
                match BandLdl::factor(matrix, next) {
                    Some(f) if f.negative_pivots() == 0 => break,
                    _ => {
                        step *= 0.3;
                        next = shift + step;
                    }
                }
            }
        }
        if step <= 0.0 {
            break;
        }
        shift = next;
    }
    Err(Error::numeric(
        format!("Lanczos did not reach residual {RESIDUAL_TOL:e} for {k} eigenpairs"),
        best_residual,
    ))
}

enum Backend {
    Direct(BandLdl),
    Cg,
    Dense(DenseEigen),
}

/// `(H - E)^(-1)` at a fixed energy, ready for column solves.
pub struct ShiftedResolvent<'a> {
    matrix: &'a CsrMatrix,
    energy: f64,
    backend: Backend,
    definite: bool,
}

impl<'a> ShiftedResolvent<'a> {
    /// Prepares the solver. `bottom` must describe the same matrix.
    pub fn new(matrix: &'a CsrMatrix, energy: f64, bottom: &SpectralData) -> Result<Self> {
        let below = bottom.e0 - energy;
        if below.abs() <= COLLISION_TOL {
            return Err(Error::SpectralCollision {
                energy,
                distance: below.abs(),
            });
        }
        let definite = below > 0.0;
        let backend = if definite {
            match BandLdl::fits(matrix).then(|| BandLdl::factor(matrix, energy)).flatten() {
                Some(f) => Backend::Direct(f),
                None => Backend::Cg,
            }
        } else if matrix.dim() <= DENSE_DIM_LIMIT {
            let eig = DenseEigen::new(matrix);
            let distance = eig.distance_to_spectrum(energy);
            if distance <= COLLISION_TOL {
                return Err(Error::SpectralCollision { energy, distance });
            }
            Backend::Dense(eig)
        } else if BandLdl::fits(matrix) {
            match BandLdl::factor(matrix, energy) {
                Some(f) => Backend::Direct(f),
                None => return Err(Error::SpectralCollision { energy, distance: 0.0 }),
            }
        } else {
            return Err(Error::resource(format!(
                "resolvent above the spectral bottom needs a dense or banded factorisation; dimension {} exceeds both limits",
                matrix.dim()
            )));
        };
        Ok(ShiftedResolvent {
            matrix,
            energy,
            backend,
            definite,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn method(&self) -> SolveMethod {
        match self.backend {
            Backend::Direct(_) => SolveMethod::Direct,
            Backend::Cg => SolveMethod::Iterative,
            Backend::Dense(_) => SolveMethod::Dense,
        }
    }

    /// Column `j` of the resolvent together with its certified residual.
    pub fn column(&self, j: usize) -> Result<(Vec<f64>, f64)> {
        let dim = self.matrix.dim();
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        let x = match &self.backend {
            Backend::Direct(f) => f.solve(&e),
            Backend::Cg => conjugate_gradient(self.matrix, self.energy, &e, 1e-11, 20 * dim).0,
            Backend::Dense(eig) => eig.solve(self.energy, &e),
        };
        let res = shifted_residual(self.matrix, self.energy, &x, &e);
        if res > RESIDUAL_TOL {
            return Err(if self.definite {
                Error::numeric(format!("resolvent column {j} failed its residual certificate"), res)
            } else {
                Error::SpectralCollision {
                    energy: self.energy,
                    distance: 0.0,
                }
            });
        }
        Ok((x, res))
    }

    /// Columns for all `cols`, solved concurrently; order matches `cols`.
    pub fn columns(&self, cols: &[usize]) -> Result<Vec<(Vec<f64>, f64)>> {
        cols.par_iter().map(|&j| self.column(j)).collect()
    }
}

fn shifted_residual(matrix: &CsrMatrix, shift: f64, x: &[f64], b: &[f64]) -> f64 {
    let ax = matrix.mul_vec(x);
    ax.iter()
        .zip(x)
        .zip(b)
        .map(|((a, xi), bi)| (a - shift * xi - bi).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventBlockNorm {
    pub energy: f64,
    pub from_size: usize,
    pub to_size: usize,
    /// `‖1_to G(E) 1_from‖`
    pub norm: f64,
    pub method: SolveMethod,
    pub columns_solved: usize,
    pub max_residual: f64,
}

/// `‖1_to (H - E)^(-1) 1_from‖` for region masks of the Hamiltonian's cube.
pub fn resolvent_block_norm(
    h: &AssembledHamiltonian,
    energy: f64,
    from: &RegionSelector,
    to: &RegionSelector,
) -> Result<ResolventBlockNorm> {
    let bottom = spectral_bottom(h, 1)?;
    let from_idx = h.cube.mask_indices(from)?;
    let to_idx = h.cube.mask_indices(to)?;
    let resolvent = ShiftedResolvent::new(&h.matrix, energy, &bottom)?;
    block_norm(&resolvent, &from_idx, &to_idx)
}

/// Block norm from index sets with a prepared resolvent.
pub fn block_norm(resolvent: &ShiftedResolvent<'_>, from: &[usize], to: &[usize]) -> Result<ResolventBlockNorm> {
    let cols = resolvent.columns(from)?;
    let block = DMatrix::from_fn(to.len(), from.len(), |r, c| cols[c].0[to[r]]);
    let max_residual = cols.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(ResolventBlockNorm {
        energy: resolvent.energy(),
        from_size: from.len(),
        to_size: to.len(),
        norm: operator_norm(&block),
        method: resolvent.method(),
        columns_solved: from.len(),
        max_residual,
    })
}

/// Largest singular value by power iteration on `BᵀB`, stopped once the
/// eigen-residual `‖BᵀBv - μv‖` drops below `1e-10·μ`, with a dense SVD
/// fallback if the iteration cap is hit.
pub fn operator_norm(b: &DMatrix<f64>) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    let gram = b.transpose() * b;
    let n = gram.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e_55ed);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.5);
    v /= v.norm();
    for _ in 0..POWER_MAX_ITER {
        let w = &gram * &v;
        let mu = v.dot(&w);
        if mu <= 0.0 {
            // v is orthogonal to the range; only possible for B = 0 with a
            // positive start vector.
            if w.norm() == 0.0 {
                return 0.0;
            }
            break;
        }
        if (&w - &v * mu).norm() <= POWER_TOL * mu {
            return mu.sqrt();
        }
        let len = w.norm();
        v = w / len;
    }
    b.clone().svd(false, false).singular_values.max()
}

/// Right-hand side of the Combes–Thomas bound
/// `(1/((1-γ²)η)) e^(γ√(ηD)) e^(-γ√η·dist)` with `η = e0 - E`.
pub fn combes_thomas_envelope(energy: f64, e0: f64, gamma_ct: f64, total_dim: usize, distance: f64) -> Result<f64> {
    let eta = e0 - energy;
    if !(eta > 0.0) {
        return Err(Error::domain(format!(
            "Combes–Thomas needs E below the spectrum, got η = {eta}"
        )));
    }
    if !(gamma_ct > 0.0 && gamma_ct < 1.0) {
        return Err(Error::domain(format!("gamma_ct must lie in (0, 1), got {gamma_ct}")));
    }
    let root = eta.sqrt();
    let prefactor = 1.0 / ((1.0 - gamma_ct * gamma_ct) * eta);
    Ok(prefactor * (gamma_ct * (eta * total_dim as f64).sqrt()).exp() * (-gamma_ct * root * distance).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct CtPair {
    pub x: usize,
    pub y: usize,
    pub distance: f64,
    pub measured: f64,
    /// Envelope with the total dimension `D = nd` in the prefactor.
    pub envelope: f64,
    /// Envelope with the single-particle dimension `d` instead.
    pub envelope_particle_d: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CombesThomasReport {
    pub energy: f64,
    pub e0: f64,
    pub eta: f64,
    pub gamma_ct: f64,
    pub total_dim: usize,
    pub particle_dim: usize,
    pub tolerance: f64,
    pub violations: usize,
    pub max_ratio: f64,
    pub max_residual: f64,
    pub columns_solved: usize,
    pub pairs: Vec<CtPair>,
}

impl CombesThomasReport {
    /// CSV with one row per pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema: combes-thomas v1\n");
        out.push_str("x,y,distance,measured,envelope,envelope_particle_d,ratio\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.x, p.y, p.distance, p.measured, p.envelope, p.envelope_particle_d, p.ratio
            );
        }
        out
    }
}

pub const CT_TOLERANCE: f64 = 1e-9;

/// All ordered pairs of grid indices.
pub fn all_pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|x| (0..dim).map(move |y| (x, y))).collect()
}

/// Compares point-to-point resolvent entries `|G(x,y)|` with the
/// Combes–Thomas envelope at their max-norm distance.
pub fn verify_combes_thomas(
    h: &AssembledHamiltonian,
    energy: f64,
    gamma_ct: f64,
    pairs: &[(usize, usize)],
    min_eta: f64,
) -> Result<CombesThomasReport> {
    let bottom = spectral_bottom(h, 1)?;
    verify_combes_thomas_with(h, &bottom, energy, gamma_ct, pairs, min_eta)
}

pub fn verify_combes_thomas_with(
    h: &AssembledHamiltonian,
    bottom: &SpectralData,
    energy: f64,
    gamma_ct: f64,
    pairs: &[(usize, usize)],
    min_eta: f64,
) -> Result<CombesThomasReport> {
    let eta = bottom.e0 - energy;
    if !(eta >= min_eta) {
        return Err(Error::domain(format!(
            "Combes–Thomas check needs η ≥ {min_eta}, got {eta}"
        )));
    }
    let dim = h.dim();
    if let Some(p) = pairs.iter().find(|(x, y)| *x >= dim || *y >= dim) {
        return Err(Error::domain(format!("pair {p:?} outside the grid of {dim} points")));
    }
    let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    cols.sort_unstable();
    cols.dedup();
    let resolvent = ShiftedResolvent::new(&h.matrix, energy, bottom)?;
    let solved = resolvent.columns(&cols)?;
    let max_residual = solved.iter().map(|c| c.1).fold(0.0, f64::max);

    let total_dim = h.cube.axes();
    let particle_dim = h.cube.d();
    let mut out = Vec::with_capacity(pairs.len());
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for &(x, y) in pairs {
        let col = &solved[cols.binary_search(&y).unwrap()].0;
        let measured = col[x].abs();
        let distance = h.cube.distance(x, y);
        let envelope = combes_thomas_envelope(energy, bottom.e0, gamma_ct, total_dim, distance)?;
        let envelope_particle_d = combes_thomas_envelope(energy, bottom.e0, gamma_ct, particle_dim, distance)?;
        let ratio = measured / envelope;
        if measured > envelope + CT_TOLERANCE {
            violations += 1;
        }
        max_ratio = max_ratio.max(ratio);
        out.push(CtPair {
            x,
            y,
            distance,
            measured,
            envelope,
            envelope_particle_d,
            ratio,
        });
    }
    Ok(CombesThomasReport {
        energy,
        e0: bottom.e0,
        eta,
        gamma_ct,
        total_dim,
        particle_dim,
        tolerance: CT_TOLERANCE,
        violations,
        max_ratio,
        max_residual,
        columns_solved: cols.len(),
        pairs: out,
    })
}
