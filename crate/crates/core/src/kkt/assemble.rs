use crate::sparse::SparseSymMatrix;

use super::{KktData, KktFormulation};

/// `Ω = Σ̃(ρ̂ + Σ̃)⁻¹` for one slack.
pub fn omega(sigma_s: f64, rho_hat: f64) -> f64 {
    sigma_s / (rho_hat + sigma_s)
}

/// Assembles the symmetric matrix (lower triangle) and right-hand side of
/// `form` at regularization `delta`. The sparsity pattern depends only on
/// the structure of `data`, never on its values.
pub fn assemble(form: KktFormulation, d: &KktData, delta: f64) -> (SparseSymMatrix<f64>, Vec<f64>) {
    let (n, m, nt) = (d.n(), d.m(), d.n_t);
    let rho_hat = d.rho + delta;
    let theta = 1.0 / rho_hat;
    let sigma = d.sigma();
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();

    match form {
        KktFormulation::K2 | KktFormulation::K2r => {
            push_hessian(d, &mut trip);
            for i in 0..n {
                trip.push((i, i, sigma[i] + delta));
            }
            let g = d.barrier_gradient();
            let full = form == KktFormulation::K2;
            let yrow = if full { n + m } else { n };
            if full {
                for i in 0..m {
                    trip.push((n + i, n + i, rho_hat));
                    trip.push((yrow + i, n + i, 1.0));
                    trip.push((yrow + i, yrow + i, 0.0));
                }
            } else {
                for i in 0..m {
                    trip.push((yrow + i, yrow + i, -theta));
                }
            }
            for i in 0..m {
                for k in d.jac_row_ptr[i]..d.jac_row_ptr[i + 1] {
                    trip.push((yrow + i, d.jac_col[k], d.jac_val[k]));
                }
            }
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            if full {
                rhs.extend((0..m).map(|i| -(d.y_k[i] + rho_hat * d.r[i] - d.y[i])));
                rhs.extend((0..m).map(|i| -(d.c[i] + d.r[i])));
            } else {
                rhs.extend((0..m).map(|i| -(d.c[i] - theta * (d.y_k[i] - d.y[i]))));
            }
            let dim = yrow + m;
            (SparseSymMatrix::from_triplets(dim, &trip).expect("indices in range"), rhs)
        }
        KktFormulation::K1s => {
            push_hessian(d, &mut trip);
            for i in 0..nt {
                trip.push((i, i, sigma[i] + delta));
            }
            let w: Vec<f64> = (0..m)
                .map(|i| {
                    if i < d.m_eq {
                        rho_hat
                    } else {
                        rho_hat * omega(sigma[nt + i - d.m_eq] + delta, rho_hat)
                    }
                })
                .collect();
            for i in 0..m {
                let row = d.jac_row_ptr[i]..d.jac_row_ptr[i + 1];
                for a in row.clone() {
                    let ca = d.jac_col[a];
                    if ca >= nt {
                        continue;
                    }
                    for b in row.clone() {
                        let cb = d.jac_col[b];
                        if cb >= nt || cb > ca {
                            continue;
                        }
                        trip.push((ca, cb, w[i] * d.jac_val[a] * d.jac_val[b]));
                    }
                }
            }
            let rhs = k1s_rhs(d, delta, &sigma);
            (SparseSymMatrix::from_triplets(nt, &trip).expect("indices in range"), rhs)
        }
    }
}

fn push_hessian(d: &KktData, trip: &mut Vec<(usize, usize, f64)>) {
    for j in 0..d.n_t {
        for k in d.hess_col_ptr[j]..d.hess_col_ptr[j + 1] {
            trip.push((d.hess_row[k], j, d.hess_val[k]));
        }
    }
}

/// `r_s = −(y_k − ρ̂c)_I − ∇φ_s + μ(S−L_s)⁻¹e − μ(U_s−S)⁻¹e`. The slack
/// gradient vanishes for problems in NCO form but is kept for generality.
pub(super) fn r_s(d: &KktData, rho_hat: f64) -> Vec<f64> {
    let nt = d.n_t;
    (0..d.n_s())
        .map(|j| {
            let i = d.m_eq + j;
            let k = nt + j;
            let mut v = -(d.y_k[i] - rho_hat * d.c[i]) - d.grad[k];
            if d.lower[k].is_finite() {
                v += d.mu / (d.x[k] - d.lower[k]);
            }
            if d.upper[k].is_finite() {
                v -= d.mu / (d.upper[k] - d.x[k]);
            }
            v
        })
        .collect()
}

/// `r_t + ρ̂ J_Iᵀ (Σ̃_s + ρ̂)⁻¹ r_s`, with
/// `r_t = J_tᵀ(y_k − ρ̂c) − ∇f + μ(T−L_t)⁻¹e − μ(U_t−T)⁻¹e`.
fn k1s_rhs(d: &KktData, delta: f64, sigma: &[f64]) -> Vec<f64> {
    let nt = d.n_t;
    let rho_hat = d.rho + delta;
    let rs = r_s(d, rho_hat);
    let mut rhs = vec![0.0; nt];
    for i in 0..d.m() {
        let mut wi = d.y_k[i] - rho_hat * d.c[i];
        if i >= d.m_eq {
            let j = i - d.m_eq;
            wi += rho_hat * rs[j] / (sigma[nt + j] + delta + rho_hat);
        }
        for k in d.jac_row_ptr[i]..d.jac_row_ptr[i + 1] {
            let col = d.jac_col[k];
            if col < nt {
                rhs[col] += d.jac_val[k] * wi;
            }
        }
    }
    for i in 0..nt {
        rhs[i] -= d.grad[i];
        if d.lower[i].is_finite() {
            rhs[i] += d.mu / (d.x[i] - d.lower[i]);
        }
        if d.upper[i].is_finite() {
            rhs[i] -= d.mu / (d.upper[i] - d.x[i]);
        }
    }
    rhs
}
