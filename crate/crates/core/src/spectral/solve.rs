//! Linear solvers for shifted Hamiltonians `H - σ`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::sparse::CsrMatrix;

/// Dimension up to which the banded direct factorisation is used.
pub const DIRECT_DIM_LIMIT: usize = 50_000;
/// Storage cap (entries) for the band factor.
pub const BAND_STORAGE_LIMIT: usize = 20_000_000;
/// Dimension up to which dense eigendecompositions are acceptable.
pub const DENSE_DIM_LIMIT: usize = 4000;

/// `LDLᵀ` factorisation of a symmetric banded matrix, no pivoting.
#[derive(Debug, Clone)]
pub struct BandLdl {
    dim: usize,
    bw: usize,
    /// Row `i` holds `L[i, i-bw..=i]`; the diagonal slot stores `D[i]`.
    data: Vec<f64>,
    negative_pivots: usize,
}

impl BandLdl {
    pub fn fits(matrix: &CsrMatrix) -> bool {
        let bw = matrix.bandwidth();
        matrix.dim() <= DIRECT_DIM_LIMIT && matrix.dim() * (bw + 1) <= BAND_STORAGE_LIMIT
    }

    /// Factorises `A - shift·I`. Returns `None` when a pivot vanishes.
    pub fn factor(matrix: &CsrMatrix, shift: f64) -> Option<Self> {
        let dim = matrix.dim();
        let bw = matrix.bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; dim * w];
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        for i in 0..dim {
            for (j, v) in matrix.row(i) {
                if j <= i {
                    data[at(i, j)] = v;
                }
            }
            data[at(i, i)] -= shift;
        }
        let scale = matrix
            .diagonal()
            .iter()
            .map(|d| (d - shift).abs())
            .fold(1.0, f64::max);
        let mut negative_pivots = 0;
        for j in 0..dim {
            let k0 = j.saturating_sub(bw);
            let mut dj = data[at(j, j)];
            for k in k0..j {
                let l = data[at(j, k)];
                dj -= l * l * data[at(k, k)];
            }
            if !dj.is_finite() || dj.abs() <= 1e-14 * scale {
                return None;
            }
            if dj < 0.0 {
                negative_pivots += 1;
            }
            data[at(j, j)] = dj;
            for i in j + 1..(j + bw + 1).min(dim) {
                let k0 = i.saturating_sub(bw);
                let mut s = data[at(i, j)];
                for k in k0..j {
                    s -= data[at(i, k)] * data[at(j, k)] * data[at(k, k)];
                }
                data[at(i, j)] = s / dj;
            }
        }
        Some(BandLdl {
            dim,
            bw,
            data,
            negative_pivots,
        })
    }

    /// Number of eigenvalues below the shift (Sylvester inertia).
    pub fn negative_pivots(&self) -> usize {
        self.negative_pivots
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (dim, bw) = (self.dim, self.bw);
        let w = bw + 1;
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        let mut x = b.to_vec();
        for i in 0..dim {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[at(i, k)] * x[k];
            }
            x[i] = s;
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi /= self.data[at(i, i)];
        }
        for i in (0..dim).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(dim) {
                s -= self.data[at(k, i)] * x[k];
            }
            x[i] = s;
        }
        x
    }
}

/// Conjugate gradients for `(A - shift) x = b` with `A - shift` positive
/// definite. Returns the iterate and its final residual norm.
pub fn conjugate_gradient(matrix: &CsrMatrix, shift: f64, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = b.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        matrix.mul_vec_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= shift * xi;
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    // Recompute the true residual rather than trusting the recursion.
    apply(&x, &mut ap);
    let res = ap
        .iter()
        .zip(b)
        .map(|(a, bi)| (a - bi).powi(2))
        .sum::<f64>()
        .sqrt();
    (x, res)
}

/// Full eigendecomposition kept for repeated shifted solves.
#[derive(Debug, Clone)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    /// Columns are eigenvectors, ordered like `values` (ascending).
    pub vectors: DMatrix<f64>,
}

impl DenseEigen {
    pub fn new(matrix: &CsrMatrix) -> Self {
        let eig = SymmetricEigen::new(matrix.to_dense());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(matrix.dim(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        DenseEigen { values, vectors }
    }

    pub fn distance_to_spectrum(&self, energy: f64) -> f64 {
        self.values
            .iter()
            .map(|l| (l - energy).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// `(A - shift)^(-1) b` through the spectral decomposition.
    pub fn solve(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        for (k, lambda) in self.values.iter().enumerate() {
            let col = self.vectors.column(k);
            let coef: f64 = col.iter().zip(b).map(|(v, bi)| v * bi).sum::<f64>() / (lambda - shift);
            for (xi, v) in x.iter_mut().zip(col.iter()) {
                *xi += coef * v;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(m: usize, diag_extra: impl Fn(usize) -> f64) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * m + j;
        let rows = (0..m * m)
            .map(|p| {
                let (i, j) = (p / m, p % m);
                let mut r = vec![(p, 4.0 + diag_extra(p))];
                if i > 0 {
                    r.push((idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    r.push((idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    r.push((idx(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    r.push((idx(i, j + 1), -1.0));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    fn residual(a: &CsrMatrix, shift: f64, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        ax.iter()
            .zip(x)
            .zip(b)
            .map(|((ax, x), b)| (ax - shift * x - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn band_ldl_solves_definite_and_indefinite() {
        let a = laplacian_2d(9, |p| (p % 5) as f64 * 0.3);
        let b: Vec<f64> = (0..81).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        for shift in [-0.5, 1.3] {
            let f = BandLdl::factor(&a, shift).unwrap();
            let x = f.solve(&b);
            assert!(residual(&a, shift, &x, &b) < 1e-10);
        }
    }

    #[test]
    fn inertia_counts_eigenvalues_below_shift() {
        let a = laplacian_2d(6, |p| (p % 3) as f64 * 0.1);
        let eig = DenseEigen::new(&a);
        let shift = 0.5 * (eig.values[4] + eig.values[5]);
        let f = BandLdl::factor(&a, shift).unwrap();
        assert_eq!(f.negative_pivots(), 5);
    }

    #[test]
    fn cg_matches_direct() {
        let a = laplacian_2d(12, |_| 0.0);
        let b: Vec<f64> = (0..144).map(|i| (i as f64).sin()).collect();
        let (x, res) = conjugate_gradient(&a, -0.1, &b, 1e-12, 2000);
        assert!(res < 1e-11);
        let direct = BandLdl::factor(&a, -0.1).unwrap().solve(&b);
        let diff = x.iter().zip(&direct).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn dense_eigen_solve() {
        let a = laplacian_2d(5, |_| 0.0);
        let eig = DenseEigen::new(&a);
        let b: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let x = eig.solve(2.1, &b);
        assert!(residual(&a, 2.1, &x, &b) < 1e-10);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn singular_shift_breaks_down() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 1.0)], vec![(1, 2.0)]]);
        assert!(BandLdl::factor(&a, 1.0).is_none());
    }
}
