use ncl_core::model::Model;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const REL: f64 = 1e-5;

pub fn random_interior(m: &Model, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m.n_t())
        .map(|i| {
            let (l, u, s) = (m.lower()[i], m.upper()[i], m.start()[i]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) if l == u => l,
                (true, true) => l + (u - l) * rng.gen_range(0.05..0.95),
                (true, false) => l + rng.gen_range(0.1..2.0),
                (false, true) => u - rng.gen_range(0.1..2.0),
                (false, false) => s + rng.gen_range(-1.0..1.0),
            }
        })
        .collect()
}

fn close(a: f64, fd: f64, scale: f64) -> bool {
    (a - fd).abs() <= REL * scale.max(1.0)
}

/// `σ∇f − Jᵀy` from the exact derivatives.
fn lag_gradient(m: &Model, t: &[f64], y: &[f64], sigma: f64) -> Vec<f64> {
    let mut ws = m.workspace::<f64>();
    let mut g: Vec<f64> = m.eval_gradient(t, &mut ws).unwrap().iter().map(|v| sigma * v).collect();
    let jp = m.jacobian_pattern().clone();
    let jv = m.eval_jacobian(t, &mut ws).unwrap();
    for i in 0..jp.nrows {
        for k in jp.row_ptr[i]..jp.row_ptr[i + 1] {
            g[jp.col_idx[k]] -= y[i] * jv[k];
        }
    }
    g
}

/// Every column for small models, 40 random columns otherwise.
fn columns_to_check(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= 300 {
        (0..n).collect()
    } else {
        (0..40).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Central-difference check of the gradient, Jacobian and Lagrangian Hessian
/// at `points` random interior points.
pub fn check_derivatives(name: &str, m: &Model, rng: &mut ChaCha8Rng, points: usize) -> Result<(), String> {
    let (n, nrows) = (m.n_t(), m.m());
    let mut ws = m.workspace::<f64>();
    let jp = m.jacobian_pattern().clone();
    let hp = m.hessian_pattern().clone();
    for _ in 0..points {
        let t = random_interior(m, rng);
        let y: Vec<f64> = (0..nrows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sigma = rng.gen_range(0.5..2.0);
        let g = m.eval_gradient(&t, &mut ws).unwrap();
        let jv = m.eval_jacobian(&t, &mut ws).unwrap().to_vec();
        let hv = m.eval_lag_hessian(&t, &y, sigma, &mut ws).unwrap().to_vec();

        for j in columns_to_check(n, rng) {
            let (mut tp, mut tm) = (t.clone(), t.clone());
            tp[j] += STEP;
            tm[j] -= STEP;
            let fd = (m.eval_objective(&tp, &mut ws).unwrap() - m.eval_objective(&tm, &mut ws).unwrap()) / (2.0 * STEP);
            if !close(g[j], fd, g[j].abs()) {
                return Err(format!("{name} gradient[{j}]: {} vs {fd}", g[j]));
            }

            let mut cp = vec![0.0; nrows];
            let mut cm = vec![0.0; nrows];
            m.eval_constraints_into(&tp, &mut ws, &mut cp).unwrap();
            m.eval_constraints_into(&tm, &mut ws, &mut cm).unwrap();
            for i in 0..nrows {
                let fd = (cp[i] - cm[i]) / (2.0 * STEP);
                let row = &jp.col_idx[jp.row_ptr[i]..jp.row_ptr[i + 1]];
                let exact = row.iter().position(|&c| c == j).map_or(0.0, |k| jv[jp.row_ptr[i] + k]);
                if !close(exact, fd, fd.abs()) {
                    return Err(format!("{name} jacobian[{i},{j}]: {exact} vs {fd}"));
                }
            }

            let (gp, gm) = (lag_gradient(m, &tp, &y, sigma), lag_gradient(m, &tm, &y, sigma));
            let col: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * STEP)).collect();
            let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (i, fd) in col.iter().enumerate() {
                let exact = hp.slot(i, j).map_or(0.0, |s| hv[s]);
                if !close(exact, *fd, scale) {
                    return Err(format!("{name} hessian[{i},{j}]: {exact} vs {fd}"));
                }
            }
        }
    }
    Ok(())
}
