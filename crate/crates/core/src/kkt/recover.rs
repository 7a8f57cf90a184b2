use super::assemble::r_s;
use super::{KktData, KktFormulation, NewtonStep};

/// Maps the symmetric solution back to the full step. This is the only place
/// where the `−Δy` unknown of `K2`/`K2r` is turned into `Δy`.
pub fn recover_full_step(form: KktFormulation, d: &KktData, delta: f64, sol: &[f64]) -> NewtonStep {
    let (n, m, nt) = (d.n(), d.m(), d.n_t);
    let rho_hat = d.rho + delta;
    let theta = 1.0 / rho_hat;
    let from_dy = |dy: &[f64]| -> Vec<f64> { (0..m).map(|i| theta * (dy[i] - d.y_k[i] + d.y[i]) - d.r[i]).collect() };

    let (dx, dr, dy) = match form {
        KktFormulation::K2 => {
            let dx = sol[..n].to_vec();
            let dr = sol[n..n + m].to_vec();
            let dy: Vec<f64> = sol[n + m..].iter().map(|v| -v).collect();
            (dx, dr, dy)
        }
        KktFormulation::K2r => {
            let dx = sol[..n].to_vec();
            let dy: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
            let dr = from_dy(&dy);
            (dx, dr, dy)
        }
        KktFormulation::K1s => {
            let sigma = d.sigma();
            let rs = r_s(d, rho_hat);
            let mut dx = vec![0.0; n];
            dx[..nt].copy_from_slice(sol);
            // J_I Δt over t columns only
            let mut jdt = vec![0.0; m];
            for i in 0..m {
                jdt[i] = (d.jac_row_ptr[i]..d.jac_row_ptr[i + 1])
                    .filter(|&k| d.jac_col[k] < nt)
                    .map(|k| d.jac_val[k] * sol[d.jac_col[k]])
                    .sum();
            }
            for j in 0..d.n_s() {
                let i = d.m_eq + j;
                dx[nt + j] = (rho_hat * jdt[i] + rs[j]) / (sigma[nt + j] + delta + rho_hat);
            }
            let mut jdx = vec![0.0; m];
            d.jac_mul(&dx, &mut jdx);
            let dy: Vec<f64> = (0..m).map(|i| -rho_hat * (jdx[i] + d.c[i]) + d.y_k[i] - d.y[i]).collect();
            let dr = from_dy(&dy);
            (dx, dr, dy)
        }
    };

    let mut dz_l = vec![0.0; n];
    let mut dz_u = vec![0.0; n];
    for i in 0..n {
        if d.lower[i].is_finite() {
            dz_l[i] = -(d.z_l[i] * dx[i] - d.mu) / (d.x[i] - d.lower[i]) - d.z_l[i];
        }
        if d.upper[i].is_finite() {
            dz_u[i] = (d.z_u[i] * dx[i] + d.mu) / (d.upper[i] - d.x[i]) - d.z_u[i];
        }
    }
    NewtonStep { dx, dr, dy, dz_l, dz_u, delta, ..Default::default() }
}

/// Max-norm residual of the regularized unsymmetric system
///
/// ```text
/// [ H+δI   0    −Jᵀ  −I    I  ] [Δx ]     [ ∇φ − Jᵀy − z_l + z_u ]
/// [ 0      ρ̂I   −I    0    0  ] [Δr ]     [ y_k + ρ̂r − y         ]
/// [ J      I     0    0    0  ] [Δy ] = − [ c + r                 ]
/// [ Z_l    0     0   X−L   0  ] [Δz_l]    [ Z_l(x−ℓ) − μe         ]
/// [ −Z_u   0     0    0   U−X ] [Δz_u]    [ Z_u(u−x) − μe         ]
/// ```
///
/// Bound rows are taken over finite bounds only.
pub fn k3_residual(d: &KktData, step: &NewtonStep) -> f64 {
    let (n, m, nt) = (d.n(), d.m(), d.n_t);
    let rho_hat = d.rho + step.delta;
    let mut res = 0.0f64;
    let mut hdx = vec![0.0; nt];
    d.hess_mul(&step.dx[..nt], &mut hdx);
    let mut aty = vec![0.0; n];
    let w: Vec<f64> = (0..m).map(|i| d.y[i] + step.dy[i]).collect();
    d.jac_t_mul(&w, &mut aty);
    for i in 0..n {
        let h = if i < nt { hdx[i] } else { 0.0 };
        let mut v = h + step.delta * step.dx[i] + d.grad[i] - aty[i];
        if d.lower[i].is_finite() {
            v -= d.z_l[i] + step.dz_l[i];
        }
        if d.upper[i].is_finite() {
            v += d.z_u[i] + step.dz_u[i];
        }
        res = res.max(v.abs());
    }
    let mut jdx = vec![0.0; m];
    d.jac_mul(&step.dx, &mut jdx);
    for i in 0..m {
        let r2 = rho_hat * step.dr[i] - step.dy[i] + d.y_k[i] + rho_hat * d.r[i] - d.y[i];
        let r3 = jdx[i] + step.dr[i] + d.c[i] + d.r[i];
        res = res.max(r2.abs()).max(r3.abs());
    }
    for i in 0..n {
        if d.lower[i].is_finite() {
            let g = d.x[i] - d.lower[i];
            let v = d.z_l[i] * step.dx[i] + g * step.dz_l[i] + d.z_l[i] * g - d.mu;
            res = res.max(v.abs());
        }
        if d.upper[i].is_finite() {
            let g = d.upper[i] - d.x[i];
            let v = -d.z_u[i] * step.dx[i] + g * step.dz_u[i] + d.z_u[i] * g - d.mu;
            res = res.max(v.abs());
        }
    }
    res
}
