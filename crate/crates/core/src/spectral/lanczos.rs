//! Shift-invert Lanczos with full reorthogonalisation for the lowest
//! eigenpairs of large sparse Hamiltonians.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparse::CsrMatrix;

pub struct LanczosOutcome {
    /// Ritz values mapped back to the original operator, ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Lowest `k` eigenpairs of `matrix`. `invert(b)` must return
/// `(matrix - shift)^(-1) b` for a `shift` strictly below the spectrum.
///
/// On non-convergence the best Ritz pairs are still returned; their values
/// are upper bounds for the true eigenvalues.
pub fn lowest_eigenpairs(
    matrix: &CsrMatrix,
    shift: f64,
    invert: impl Fn(&[f64]) -> Vec<f64>,
    k: usize,
    max_steps: usize,
    tol: f64,
) -> LanczosOutcome {
    let dim = matrix.dim();
    let max_steps = max_steps.min(dim).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut v0: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v0);

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last: Option<LanczosOutcome> = None;

    for step in 0..max_steps {
        let mut w = invert(&basis[step]);
        let alpha = dot(&w, &basis[step]);
        alphas.push(alpha);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                axpy(-c, v, &mut w);
            }
        }
        let beta = dot(&w, &w).sqrt();
        let m = alphas.len();
        let exhausted = beta < 1e-13 * alpha.abs().max(1.0);

        if m >= k && (m % 5 == 0 || exhausted || m == max_steps) {
            let (thetas, vecs) = ritz(&basis, &alphas, &betas, k);
            let values: Vec<f64> = thetas.iter().map(|t| shift + 1.0 / t).collect();
            let residuals: Vec<f64> = values
                .iter()
                .zip(&vecs)
                .map(|(l, v)| eigen_residual(matrix, *l, v))
                .collect();
            let worst = residuals.iter().copied().fold(0.0, f64::max);
            let converged = worst <= tol;
            last = Some(LanczosOutcome {
                values,
                vectors: vecs,
                residuals,
                converged,
            });
            if converged {
                break;
            }
        }
        if exhausted {
            break;
        }
        betas.push(beta);
        for x in w.iter_mut() {
            *x /= beta;
        }
        basis.push(w);
    }
    let mut out = last.unwrap_or_else(|| {
        let (thetas, vecs) = ritz(&basis, &alphas, &betas, k.min(alphas.len()));
        let values: Vec<f64> = thetas.iter().map(|t| shift + 1.0 / t).collect();
        let residuals = values.iter().zip(&vecs).map(|(l, v)| eigen_residual(matrix, *l, v)).collect();
        LanczosOutcome {
            values,
            vectors: vecs,
            residuals,
            converged: false,
        }
    });
    // Largest θ first means smallest eigenvalue first already; keep it explicit.
    let mut order: Vec<usize> = (0..out.values.len()).collect();
    order.sort_by(|&a, &b| out.values[a].total_cmp(&out.values[b]));
    out.values = order.iter().map(|&i| out.values[i]).collect();
    out.vectors = order.iter().map(|&i| out.vectors[i].clone()).collect();
    out.residuals = order.iter().map(|&i| out.residuals[i]).collect();
    out
}

/// Ritz pairs for the `k` largest Ritz values of the tridiagonal matrix.
fn ritz(basis: &[Vec<f64>], alphas: &[f64], betas: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let dim = basis[0].len();
    let mut thetas = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        thetas.push(eig.eigenvalues[i]);
        let mut v = vec![0.0; dim];
        for (j, b) in basis.iter().take(m).enumerate() {
            axpy(eig.eigenvectors[(j, i)], b, &mut v);
        }
        normalize(&mut v);
        vecs.push(v);
    }
    (thetas, vecs)
}

/// `‖A v - λ v‖ / ‖v‖`
pub fn eigen_residual(matrix: &CsrMatrix, lambda: f64, v: &[f64]) -> f64 {
    let av = matrix.mul_vec(v);
    let num: f64 = av.iter().zip(v).map(|(a, x)| (a - lambda * x).powi(2)).sum();
    (num / dot(v, v)).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}
