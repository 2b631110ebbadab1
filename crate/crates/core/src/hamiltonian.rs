//! Finite-difference assembly of `H = -Δ + U + V` on a cube with Dirichlet
//! boundary conditions.
//!
//! `-Δ` is the second-order central stencil scaled by `h⁻²`; `V(x) = Σ_k
//! V(x_k)` reads the field from the unit cell containing each particle
//! position; `U` is a sum of pair terms `Φ(|x_i - x_j|_∞)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSample;
use crate::geometry::LatticeCube;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionProfile {
    /// `Φ(r) = u0·1[r ≤ r0]`
    Step,
    /// `Φ(r) = u0·(1 - r/r0)` on `[0, r0]`; `u0·1[r = 0]` when `r0 = 0`.
    Hat,
}

/// Finite-range, non-negative pair interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub r0: f64,
    pub u0: f64,
    pub profile: InteractionProfile,
}

impl InteractionSpec {
    pub fn none() -> Self {
        InteractionSpec {
            r0: 0.0,
            u0: 0.0,
            profile: InteractionProfile::Step,
        }
    }

    pub fn is_interacting(&self) -> bool {
        self.u0 != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u0 >= 0.0 && self.u0.is_finite()) {
            return Err(Error::domain(format!("interaction amplitude u0 must be ≥ 0, got {}", self.u0)));
        }
        if !(self.r0 >= 0.0 && self.r0.is_finite()) {
            return Err(Error::domain(format!("interaction range r0 must be ≥ 0, got {}", self.r0)));
        }
        Ok(())
    }

    pub fn phi(&self, r: f64) -> f64 {
        if r > self.r0 {
            return 0.0;
        }
        match self.profile {
            InteractionProfile::Step => self.u0,
            InteractionProfile::Hat if self.r0 == 0.0 => self.u0,
            InteractionProfile::Hat => self.u0 * (1.0 - r / self.r0),
        }
    }
}

/// `U(x) = Σ_{i<j} Φ(|x_i - x_j|_∞)` for an `n`-particle point with
/// `d`-dimensional particles.
pub fn interaction_energy(x: &[f64], d: usize, spec: &InteractionSpec) -> f64 {
    assert!(d > 0 && x.len() % d == 0, "point length must be a multiple of d");
    let n = x.len() / d;
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let r = (0..d)
                .map(|c| (x[i * d + c] - x[j * d + c]).abs())
                .fold(0.0, f64::max);
            total += spec.phi(r);
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct AssembledHamiltonian {
    pub cube: LatticeCube,
    pub matrix: CsrMatrix,
    /// `Σ_k V(x_k)` per grid point.
    pub potential_part: Vec<f64>,
    /// `U(x)` per grid point.
    pub interaction_part: Vec<f64>,
    pub interaction: InteractionSpec,
}

impl AssembledHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Diagonal entry of the bare stencil, `2nd/h²`.
    pub fn stencil_diagonal(&self) -> f64 {
        2.0 * self.cube.axes() as f64 / self.cube.spacing().powi(2)
    }

    /// Gershgorin lower bound `min diag - 2nd/h²`.
    pub fn spectral_lower_bound(&self) -> f64 {
        let min_diag = self.matrix.diagonal().into_iter().fold(f64::INFINITY, f64::min);
        min_diag - self.stencil_diagonal()
    }
}

pub fn assemble(cube: &LatticeCube, field: &FieldSample, spec: &InteractionSpec) -> Result<AssembledHamiltonian> {
    spec.validate()?;
    if field.region().dim() != cube.d() {
        return Err(Error::domain(format!(
            "field lives in Z^{} but particles are {}-dimensional",
            field.region().dim(),
            cube.d()
        )));
    }
    let needed = cube.field_box();
    let missing: Vec<Vec<i64>> = needed.sites().filter(|s| !field.region().contains(s)).collect();
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(12).map(|s| format!("{s:?}")).collect();
        let more = if missing.len() > 12 {
            format!(" and {} more", missing.len() - 12)
        } else {
            String::new()
        };
        return Err(Error::domain(format!(
            "field does not cover sites {}{more}",
            shown.join(", ")
        )));
    }

    let d = cube.d();
    let axes = cube.axes();
    let inv_h2 = 1.0 / cube.spacing().powi(2);
    let stencil = 2.0 * axes as f64 * inv_h2;
    let dim = cube.len();

    let mut potential_part = Vec::with_capacity(dim);
    let mut interaction_part = Vec::with_capacity(dim);
    let mut rows = Vec::with_capacity(dim);
    for idx in 0..dim {
        let x = cube.point(idx);
        let v: f64 = x
            .chunks(d)
            .map(|xk| {
                field
                    .get(&LatticeCube::cell_site(xk))
                    .expect("coverage checked above")
            })
            .sum();
        let u = if spec.is_interacting() {
            interaction_energy(&x, d, spec)
        } else {
            0.0
        };
        potential_part.push(v);
        interaction_part.push(u);

        let mut row = Vec::with_capacity(2 * axes + 1);
        row.push((idx, stencil + v + u));
        for axis in 0..axes {
            for dir in [-1, 1] {
                if let Some(nb) = cube.neighbor(idx, axis, dir) {
                    row.push((nb, -inv_h2));
                }
            }
        }
        rows.push(row);
    }

    Ok(AssembledHamiltonian {
        cube: cube.clone(),
        matrix: CsrMatrix::from_rows(rows),
        potential_part,
        interaction_part,
        interaction: *spec,
    })
}

/// All `n`-fold sums of the given single-particle eigenvalues, sorted.
pub fn kronecker_sums(single: &[f64], n: usize) -> Vec<f64> {
    let mut sums = vec![0.0];
    for _ in 0..n {
        sums = sums
            .iter()
            .flat_map(|s| single.iter().map(move |l| s + l))
            .collect();
    }
    sums.sort_by(f64::total_cmp);
    sums
}

/// Spectrum of the non-interacting `n`-particle operator, built from the
/// single-particle Hamiltonian `h1` by dense diagonalisation.
pub fn kronecker_sum_oracle(h1: &AssembledHamiltonian, n: usize) -> Result<Vec<f64>> {
    if h1.interaction.is_interacting() {
        return Err(Error::domain(
            "Kronecker-sum spectrum only holds without interaction (u0 = 0)",
        ));
    }
    if h1.cube.n() != 1 {
        return Err(Error::domain(format!(
            "expected a single-particle Hamiltonian, got n = {}",
            h1.cube.n()
        )));
    }
    if n == 0 {
        return Err(Error::domain("particle count must be positive"));
    }
    let eig = SymmetricEigen::new(h1.matrix.to_dense());
    Ok(kronecker_sums(eig.eigenvalues.as_slice(), n))
}

/// Dense eigenvalues, ascending. Used by tests and small oracles.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_field, FieldKind, FieldSpec, LatticeBox, SiteLaw};
    use crate::geometry::{build_cube, GridBudget};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn constant_field(region: LatticeBox, c: f64) -> FieldSample {
        let len = region.len();
        let spec = FieldSpec {
            kind: FieldKind::IidUniform,
            law: SiteLaw {
                offset: c,
                amplitude: 0.0,
            },
            seed: 0,
            region,
        };
        FieldSample::from_values(spec, vec![c; len]).unwrap()
    }

    fn cube(n: usize, d: usize, l: f64, h: f64) -> LatticeCube {
        build_cube(n, d, &vec![0; n * d], l, h, GridBudget::default()).unwrap()
    }

    fn step(u0: f64, r0: f64) -> InteractionSpec {
        InteractionSpec {
            r0,
            u0,
            profile: InteractionProfile::Step,
        }
    }

    #[test]
    fn interaction_examples() {
        assert_eq!(interaction_energy(&[0.0, 0.0], 1, &step(1.0, 2.0)), 1.0);
        assert_eq!(interaction_energy(&[0.0, 3.0], 1, &step(1.0, 2.0)), 0.0);
        assert_eq!(interaction_energy(&[0.0, 1.0, 2.0], 1, &step(2.0, 2.0)), 6.0);
        // Max-norm pair distance in d = 2.
        assert_eq!(interaction_energy(&[0.0, 0.0, 1.0, 2.0], 2, &step(1.0, 2.0)), 1.0);
        let hat = InteractionSpec {
            r0: 2.0,
            u0: 4.0,
            profile: InteractionProfile::Hat,
        };
        assert_eq!(interaction_energy(&[0.0, 1.0], 1, &hat), 2.0);
        assert_eq!(interaction_energy(&[0.0, 2.5], 1, &hat), 0.0);
    }

    #[test]
    fn free_three_point_cube() {
        let c = cube(1, 1, 2.0, 1.0);
        let h = assemble(&c, &constant_field(c.field_box(), 0.0), &InteractionSpec::none()).unwrap();
        let dense = h.matrix.to_dense();
        assert_eq!(dense, DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]));
        let ev = dense_eigenvalues(&dense);
        for (k, e) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / 4.0).cos();
            assert!((e - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_cube() {
        for d in 1..=3 {
            let c = cube(1, d, 1.0, 1.0);
            assert_eq!(c.len(), 1);
            let h = assemble(&c, &constant_field(c.field_box(), 0.0), &InteractionSpec::none()).unwrap();
            assert_eq!(h.matrix.get(0, 0), 2.0 * d as f64);
        }
        let c = cube(1, 1, 0.5, 0.5);
        let h = assemble(&c, &constant_field(c.field_box(), 0.0), &InteractionSpec::none()).unwrap();
        assert_eq!(h.matrix.get(0, 0), 8.0);
    }

    #[test]
    fn diagonal_decomposes() {
        let c = cube(2, 1, 3.0, 1.0);
        let spec = FieldSpec::default_on(c.field_box(), 12);
        let field = generate_field(&spec).unwrap();
        let inter = step(0.7, 1.0);
        let h = assemble(&c, &field, &inter).unwrap();
        for i in 0..h.dim() {
            let x = c.point(i);
            let v = field.get(&[x[0] as i64]).unwrap() + field.get(&[x[1] as i64]).unwrap();
            let u = if (x[0] - x[1]).abs() <= 1.0 { 0.7 } else { 0.0 };
            assert!((h.matrix.get(i, i) - (2.0 * 2.0 + v + u)).abs() < 1e-14);
            assert_eq!(h.potential_part[i], v);
            assert_eq!(h.interaction_part[i], u);
        }
        assert_eq!(h.matrix.asymmetry(), 0.0);
    }

    #[test]
    fn coverage_gap_lists_sites() {
        let c = cube(1, 1, 3.0, 1.0);
        let field = constant_field(LatticeBox::new(vec![-2], vec![1]), 0.0);
        match assemble(&c, &field, &InteractionSpec::none()) {
            Err(Error::Domain(msg)) => assert!(msg.contains("[2]"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kronecker_sums_examples() {
        assert_eq!(kronecker_sums(&[1.0, 3.0], 2), vec![2.0, 4.0, 4.0, 6.0]);
        assert_eq!(kronecker_sums(&[3.0, 1.0], 1), vec![1.0, 3.0]);
        let c = cube(1, 1, 2.0, 1.0);
        let h1 = assemble(&c, &constant_field(c.field_box(), 0.0), &InteractionSpec::none()).unwrap();
        let two = kronecker_sum_oracle(&h1, 2).unwrap();
        assert!((two[0] - 2.0 * (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(two.len(), 9);
    }

    #[test]
    fn kronecker_oracle_rejects_interaction() {
        let c = cube(1, 1, 2.0, 1.0);
        let h1 = assemble(&c, &constant_field(c.field_box(), 0.0), &step(1.0, 1.0)).unwrap();
        assert!(matches!(kronecker_sum_oracle(&h1, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn two_particle_free_spectrum_is_pairwise_sums() {
        let c1 = cube(1, 1, 6.0, 1.0);
        let c2 = cube(2, 1, 6.0, 1.0);
        let field = generate_field(&FieldSpec::default_on(c1.field_box(), 3)).unwrap();
        let h1 = assemble(&c1, &field, &InteractionSpec::none()).unwrap();
        let h2 = assemble(&c2, &field, &InteractionSpec::none()).unwrap();
        let oracle = kronecker_sum_oracle(&h1, 2).unwrap();
        let direct = dense_eigenvalues(&h2.matrix.to_dense());
        let dev = oracle.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "deviation {dev}");
    }

    #[test]
    fn matrix_market_export_roundtrips_entries() {
        let c = cube(1, 1, 2.0, 1.0);
        let h = assemble(&c, &constant_field(c.field_box(), 0.5), &InteractionSpec::none()).unwrap();
        let mm = h.matrix.to_matrix_market();
        assert!(mm.lines().any(|l| l == "2 2 2.5"));
        assert!(mm.lines().any(|l| l == "1 2 -1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn symmetric_and_gershgorin(seed in any::<u64>(), n in 1usize..3, u0 in 0.0f64..3.0, halve in any::<bool>()) {
            let h = if halve { 0.5 } else { 1.0 };
            let c = cube(n, 1, 4.0, h);
            let field = generate_field(&FieldSpec::default_on(c.field_box(), seed)).unwrap();
            let ham = assemble(&c, &field, &step(u0, 1.0)).unwrap();
            prop_assert_eq!(ham.matrix.asymmetry(), 0.0);
            let ev = dense_eigenvalues(&ham.matrix.to_dense());
            prop_assert!(ev[0] >= ham.spectral_lower_bound() - 1e-10);
        }

        #[test]
        fn interaction_never_lowers_ground_state(seed in any::<u64>(), u0 in 0.0f64..5.0, r0 in 0.0f64..3.0) {
            let c = cube(2, 1, 4.0, 1.0);
            let field = generate_field(&FieldSpec::default_on(c.field_box(), seed)).unwrap();
            let free = assemble(&c, &field, &InteractionSpec::none()).unwrap();
            let inter = assemble(&c, &field, &step(u0, r0)).unwrap();
            let e_free = dense_eigenvalues(&free.matrix.to_dense())[0];
            let e_int = dense_eigenvalues(&inter.matrix.to_dense())[0];
            prop_assert!(e_int >= e_free - 1e-12);
        }
    }
}
