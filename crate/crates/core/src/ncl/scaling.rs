use crate::model::{Model, NlpView};
use crate::sparse::{analyze, factorize, solve_refined, RefineOptions, SparseSymMatrix};

/// Objective factor `σ_f` and one factor per constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFactors {
    pub objective: f64,
    pub constraints: Vec<f64>,
}

/// `max{1e-8, min(1, 1/‖g‖∞)}`; a zero gradient gives 1.
pub fn scale_factor(gnorm: f64) -> f64 {
    (1.0 / gnorm).min(1.0).max(1e-8)
}

/// Gradient-based factors at model point `t`, measured over the `free`
/// variables only.
pub fn compute_scaling(model: &Model, t: &[f64], free: &[usize]) -> ScaleFactors {
    let mut ws = model.workspace::<f64>();
    let mut is_free = vec![false; model.n_t()];
    free.iter().for_each(|&i| is_free[i] = true);
    let g = model.eval_gradient(t, &mut ws).expect("consistent dimensions");
    let gn = g.iter().zip(&is_free).filter(|(_, &f)| f).fold(0.0f64, |a, (v, _)| a.max(v.abs()));
    let jp = model.jacobian_pattern().clone();
    let jv = model.eval_jacobian(t, &mut ws).expect("consistent dimensions");
    let constraints = (0..jp.nrows)
        .map(|i| {
            let n = (jp.row_ptr[i]..jp.row_ptr[i + 1])
                .filter(|&k| is_free[jp.col_idx[k]])
                .fold(0.0f64, |a, k| a.max(jv[k].abs()));
            scale_factor(n)
        })
        .collect();
    ScaleFactors { objective: scale_factor(gn), constraints }
}

/// Least-squares multipliers `(JJᵀ + 1e-8 I) y = J∇φ` at `x`, clipped to `±1e3`.
pub fn init_duals(view: &mut NlpView, x: &[f64]) -> Vec<f64> {
    let (n, m) = (view.n(), view.m());
    if m == 0 {
        return Vec::new();
    }
    let mut grad = vec![0.0; n];
    view.gradient(x, &mut grad);
    let mut jac = vec![0.0; view.jac_col().len()];
    view.jacobian(x, &mut jac);
    let (rp, cols) = (view.jac_row_ptr().to_vec(), view.jac_col().to_vec());

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        for k in rp[i]..rp[i + 1] {
            by_col[cols[k]].push((i, jac[k]));
            rhs[i] += jac[k] * grad[cols[k]];
        }
    }
    let mut trip: Vec<(usize, usize, f64)> = (0..m).map(|i| (i, i, 1e-8)).collect();
    for col in &by_col {
        for &(i, a) in col {
            for &(j, b) in col {
                if j <= i {
                    trip.push((i, j, a * b));
                }
            }
        }
    }
    let mat = SparseSymMatrix::from_triplets(m, &trip).expect("indices in range");
    let sym = analyze(&mat);
    let Ok(fac) = factorize(&sym, &mat, 1e-20) else {
        return vec![0.0; m];
    };
    let sol = solve_refined(&fac, &mat, &rhs, &RefineOptions::default());
    sol.x.into_iter().map(|v| if v.is_finite() { v.clamp(-1e3, 1e3) } else { 0.0 }).collect()
}
