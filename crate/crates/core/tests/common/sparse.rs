use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ncl_core::sparse::{Inertia, LdlFactors, SparseSymMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn dense(a: &SparseSymMatrix<f64>) -> DMatrix<f64> {
    let n = a.dim();
    DMatrix::from_column_slice(n, n, &a.to_dense())
}

/// Eigenvalue sign counts; `|λ| < 1e-10·max(1, max|λ|)` counts as zero.
pub fn eigen_inertia(a: &DMatrix<f64>) -> Inertia {
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    let tol = 1e-10 * ev.amax().max(1.0);
    let mut i = Inertia::default();
    for &l in ev.iter() {
        if l > tol {
            i.positive += 1;
        } else if l < -tol {
            i.negative += 1;
        } else {
            i.zero += 1;
        }
    }
    i
}

/// `‖P A Pᵀ − L D Lᵀ‖_max`.
pub fn reconstruction_error(a: &SparseSymMatrix<f64>, f: &LdlFactors<f64>) -> f64 {
    let n = a.dim();
    let mut l = DMatrix::<f64>::identity(n, n);
    for (i, j, v) in f.l_entries() {
        l[(i, j)] = v;
    }
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(f.diagonal()));
    let ldl = &l * d * l.transpose();
    let full = dense(a);
    let p = f.perm();
    let mut err = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            err = err.max((full[(p[r], p[c])] - ldl[(r, c)]).abs());
        }
    }
    err
}

pub fn random_sparse(rng: &mut ChaCha8Rng, n: usize, density: f64, shift: f64) -> SparseSymMatrix<f64> {
    let mut trip = Vec::new();
    for j in 0..n {
        trip.push((j, j, rng.gen_range(-2.0..2.0) + shift));
        for i in j + 1..n {
            if rng.gen_bool(density) {
                trip.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    SparseSymMatrix::from_triplets(n, &trip).unwrap()
}
