//! n-particle cubes `C^(n)_L(u) = {x ∈ R^(nd) : |x - u|_∞ < L}` discretised on
//! a grid of step `h`, with the interior region `C^(n)_{L/3}(u)` and the
//! outer shell `C^(n)_L(u) \ C^(n)_{L-2}(u)`.
//!
//! Grid points are `u + h·j` with integer `j` and `|j|·h < L` on every axis;
//! the Dirichlet boundary sits at `|x - u|_∞ = L`. Axes are ordered particle
//! by particle (`axis = particle·d + component`), last axis fastest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::LatticeBox;

/// Cap on grid points per cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridBudget {
    pub max_points: usize,
}

impl Default for GridBudget {
    fn default() -> Self {
        GridBudget {
            max_points: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCube {
    n: usize,
    d: usize,
    center: Vec<i64>,
    half_side: f64,
    spacing: f64,
    /// Largest `|j|` per axis.
    reach: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionSelector {
    Interior,
    Outer,
    /// A single grid point, in physical coordinates.
    Point(Vec<f64>),
    Full,
}

/// Builds the grid of `C^(n)_L(u)`.
///
/// `L/h` must be an integer so that the boundary falls on the grid; the cube
/// then has `2L/h - 1` points per axis.
pub fn build_cube(n: usize, d: usize, center: &[i64], half_side: f64, spacing: f64, budget: GridBudget) -> Result<LatticeCube> {
    if n == 0 || d == 0 {
        return Err(Error::domain("particle count and dimension must be positive"));
    }
    if center.len() != n * d {
        return Err(Error::domain(format!(
            "center has {} coordinates, expected n·d = {}",
            center.len(),
            n * d
        )));
    }
    if !(half_side > 0.0 && half_side.is_finite()) {
        return Err(Error::domain(format!("half side L must be positive, got {half_side}")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::domain(format!("grid step h must be positive, got {spacing}")));
    }
    let ratio = half_side / spacing;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
        return Err(Error::domain(format!(
            "grid step h = {spacing} does not divide the half side L = {half_side}"
        )));
    }
    let reach = steps as i64 - 1;
    let per_axis = (2 * reach + 1) as f64;
    let nd = n * d;
    let points = per_axis.powi(nd as i32);
    if points > budget.max_points as f64 {
        return Err(Error::resource(format!(
            "cube with n·d = {nd} axes of {per_axis} points needs {points:.3e} grid points, budget is {}",
            budget.max_points
        )));
    }
    Ok(LatticeCube {
        n,
        d,
        center: center.to_vec(),
        half_side,
        spacing,
        reach,
    })
}

impl LatticeCube {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Total dimension `n·d`.
    pub fn axes(&self) -> usize {
        self.n * self.d
    }

    pub fn center(&self) -> &[i64] {
        &self.center
    }

    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points_per_axis(&self) -> usize {
        (2 * self.reach + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|C^(n)_L(u)| = (2L)^(nd)`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_side).powi(self.axes() as i32)
    }

    /// Interior and outer regions are only defined for `L > 3`.
    pub fn has_regions(&self) -> bool {
        self.half_side > 3.0
    }

    /// Integer offsets `j` of grid point `idx`.
    pub fn offsets(&self, mut idx: usize) -> Vec<i64> {
        let m = self.points_per_axis();
        let mut j = vec![0; self.axes()];
        for a in (0..self.axes()).rev() {
            j[a] = (idx % m) as i64 - self.reach;
            idx /= m;
        }
        j
    }

    pub fn index_of_offsets(&self, j: &[i64]) -> Option<usize> {
        if j.len() != self.axes() || j.iter().any(|x| x.abs() > self.reach) {
            return None;
        }
        let m = self.points_per_axis();
        Some(j.iter().fold(0, |acc, x| acc * m + (x + self.reach) as usize))
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.offsets(idx)
            .iter()
            .zip(&self.center)
            .map(|(j, u)| *u as f64 + *j as f64 * self.spacing)
            .collect()
    }

    /// `|x - u|_∞` for grid point `idx`.
    pub fn distance_from_center(&self, idx: usize) -> f64 {
        self.offsets(idx).iter().map(|j| j.abs()).max().unwrap_or(0) as f64 * self.spacing
    }

    /// Max-norm distance between two grid points.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let ja = self.offsets(a);
        let jb = self.offsets(b);
        ja.iter().zip(&jb).map(|(x, y)| (x - y).abs()).max().unwrap_or(0) as f64 * self.spacing
    }

    /// Neighbour of `idx` one step along `axis` in direction `dir` (±1).
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i64) -> Option<usize> {
        let mut j = self.offsets(idx);
        j[axis] += dir;
        self.index_of_offsets(&j)
    }

    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.axes() {
            return None;
        }
        let j: Vec<i64> = x
            .iter()
            .zip(&self.center)
            .map(|(xi, u)| (xi - *u as f64) / self.spacing)
            .map(|r| {
                let k = r.round();
                if (r - k).abs() < 1e-9 {
                    Some(k as i64)
                } else {
                    None
                }
            })
            .collect::<Option<_>>()?;
        self.index_of_offsets(&j)
    }

    /// Indices selected by a region mask, ascending.
    pub fn mask_indices(&self, selector: &RegionSelector) -> Result<Vec<usize>> {
        let tol = 1e-9 * self.spacing;
        match selector {
            RegionSelector::Full => Ok((0..self.len()).collect()),
            RegionSelector::Point(x) => self.locate(x).map(|i| vec![i]).ok_or_else(|| {
                Error::domain(format!("point {x:?} is not a grid point of the cube"))
            }),
            RegionSelector::Interior | RegionSelector::Outer => {
                if !self.has_regions() {
                    return Err(Error::domain(format!(
                        "interior and outer regions need L > 3, cube has L = {}",
                        self.half_side
                    )));
                }
                let l = self.half_side;
                let keep: Box<dyn Fn(f64) -> bool> = match selector {
                    RegionSelector::Interior => Box::new(move |r| r < l / 3.0 - tol),
                    _ => Box::new(move |r| r >= l - 2.0 - tol),
                };
                Ok((0..self.len())
                    .filter(|&i| keep(self.distance_from_center(i)))
                    .collect())
            }
        }
    }

    /// Lattice site whose unit cell `[z - ½, z + ½)^d` contains the
    /// single-particle position `x`.
    pub fn cell_site(x: &[f64]) -> Vec<i64> {
        x.iter().map(|c| (c + 0.5).floor() as i64).collect()
    }

    /// Box of lattice cells touched by the projection of the cube onto any
    /// particle coordinate.
    pub fn field_box(&self) -> LatticeBox {
        let extreme = |particle: usize, sign: f64| -> Vec<i64> {
            let x: Vec<f64> = (0..self.d)
                .map(|c| self.center[particle * self.d + c] as f64 + sign * self.reach as f64 * self.spacing)
                .collect();
            Self::cell_site(&x)
        };
        (0..self.n)
            .map(|p| LatticeBox::new(extreme(p, -1.0), extreme(p, 1.0)))
            .reduce(|a, b| a.union(&b))
            .expect("n ≥ 1")
    }

    /// CSV of the selected points, columns `x1..x_{nd}`.
    pub fn mask_csv(&self, indices: &[usize]) -> String {
        let mut out = String::from("# schema: cube-mask v1\n");
        let header: Vec<String> = (1..=self.axes()).map(|a| format!("x{a}")).collect();
        let _ = writeln!(out, "index,{}", header.join(","));
        for &i in indices {
            let coords: Vec<String> = self.point(i).iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{i},{}", coords.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(n: usize, d: usize, l: f64, h: f64) -> LatticeCube {
        build_cube(n, d, &vec![0; n * d], l, h, GridBudget::default()).unwrap()
    }

    fn coords_1d(c: &LatticeCube, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| c.point(i)[0]).collect()
    }

    #[test]
    fn small_grids() {
        let c = cube(1, 1, 2.0, 1.0);
        assert_eq!(coords_1d(&c, &(0..c.len()).collect::<Vec<_>>()), vec![-1.0, 0.0, 1.0]);
        assert_eq!(cube(2, 1, 2.0, 1.0).len(), 9);
        assert_eq!(cube(1, 1, 3.5, 0.5).len(), 13);
        assert_eq!(cube(2, 1, 2.0, 1.0).volume(), 16.0);
    }

    #[test]
    fn masks_at_l6() {
        let c = cube(1, 1, 6.0, 1.0);
        let int = c.mask_indices(&RegionSelector::Interior).unwrap();
        let out = c.mask_indices(&RegionSelector::Outer).unwrap();
        assert_eq!(coords_1d(&c, &int), vec![-1.0, 0.0, 1.0]);
        assert_eq!(coords_1d(&c, &out), vec![-5.0, -4.0, 4.0, 5.0]);
        assert!(int.iter().all(|i| !out.contains(i)));
    }

    #[test]
    fn small_cubes_have_no_regions() {
        let c = cube(1, 1, 3.0, 1.0);
        assert!(matches!(c.mask_indices(&RegionSelector::Interior), Err(Error::Domain(_))));
        assert!(matches!(c.mask_indices(&RegionSelector::Outer), Err(Error::Domain(_))));
        assert_eq!(c.mask_indices(&RegionSelector::Full).unwrap().len(), 5);
    }

    #[test]
    fn point_mask() {
        let c = cube(2, 1, 4.0, 0.5);
        let idx = c.mask_indices(&RegionSelector::Point(vec![1.5, -2.0])).unwrap();
        assert_eq!(c.point(idx[0]), vec![1.5, -2.0]);
        assert!(c.mask_indices(&RegionSelector::Point(vec![1.25, 0.0])).is_err());
        assert!(c.mask_indices(&RegionSelector::Point(vec![4.0, 0.0])).is_err());
    }

    #[test]
    fn step_must_divide_half_side() {
        let err = build_cube(1, 1, &[0], 3.0, 0.7, GridBudget::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(build_cube(1, 2, &[0], 3.0, 1.0, GridBudget::default()).is_err());
    }

    #[test]
    fn budget_names_dimension_count() {
        let err = build_cube(3, 2, &[0; 6], 10.0, 1.0, GridBudget { max_points: 1000 }).unwrap_err();
        match err {
            Error::Resource(msg) => assert!(msg.contains("n·d = 6"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_box_covers_all_particles() {
        let c = build_cube(2, 1, &[0, 10], 2.0, 1.0, GridBudget::default()).unwrap();
        assert_eq!(c.field_box(), LatticeBox::new(vec![-1], vec![11]));
        let half = cube(1, 1, 2.0, 0.5);
        // Points -1.5..1.5; cell of -1.5 is -1, cell of 1.5 is 2.
        assert_eq!(half.field_box(), LatticeBox::new(vec![-1], vec![2]));
    }

    #[test]
    fn mask_csv_rows() {
        let c = cube(1, 1, 6.0, 1.0);
        let int = c.mask_indices(&RegionSelector::Interior).unwrap();
        let csv = c.mask_csv(&int);
        assert_eq!(csv.lines().count(), 2 + int.len());
        assert!(csv.contains("\n5,0\n"));
    }

    proptest! {
        #[test]
        fn interior_outer_disjoint(k in 4i64..40, n in 1usize..3, halve in any::<bool>()) {
            let h = if halve { 0.5 } else { 1.0 };
            let l = k as f64;
            let c = cube(n, 1, l, h);
            let int = c.mask_indices(&RegionSelector::Interior).unwrap();
            let out = c.mask_indices(&RegionSelector::Outer).unwrap();
            prop_assert!(!int.is_empty() && !out.is_empty());
            prop_assert!(int.iter().all(|i| out.binary_search(i).is_err()));
        }

        #[test]
        fn grid_size_and_reflection(k in 1i64..20, n in 1usize..3, d in 1usize..3) {
            let h = 1.0;
            let l = k as f64;
            let c = cube(n, d, l, h);
            let m = (2.0 * l / h) as usize - 1;
            prop_assert_eq!(c.len(), m.pow((n * d) as u32));
            for i in 0..c.len() {
                let reflected: Vec<i64> = c.offsets(i).iter().map(|j| -j).collect();
                prop_assert!(c.index_of_offsets(&reflected).is_some());
                prop_assert!(c.distance_from_center(i) < l);
            }
        }
    }
}
