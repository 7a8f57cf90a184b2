//! Up-looking sparse LDLᵀ with a static elimination order.
//!
//! No numerical pivoting is performed. A pivot whose magnitude falls below the
//! pivot epsilon is replaced by `±ε` keeping its sign (exact zero becomes
//! `+ε`), so the factorization always completes and factors a diagonally
//! perturbed matrix `P A Pᵀ + E`.

use crate::scalar::Real;

use super::ordering::minimum_degree;
use super::{FactorError, SparseSymMatrix};

/// Inertia triple: counts of positive, negative and zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn new(positive: usize, negative: usize, zero: usize) -> Self {
        Self { positive, negative, zero }
    }
}

impl std::fmt::Display for Inertia {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.positive, self.negative, self.zero)
    }
}

/// Ordering and elimination structure for one sparsity pattern.
#[derive(Debug, Clone)]
pub struct SymbolicFactorization {
    n: usize,
    /// `perm[k]` is the original index of the k-th pivot.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<Option<usize>>,
    l_col_ptr: Vec<usize>,
    /// Upper triangle of `P A Pᵀ` by column: rows `<= k` and the slot in `A.values()`.
    up_ptr: Vec<usize>,
    up_row: Vec<usize>,
    up_src: Vec<usize>,
    pattern_nnz: usize,
    pattern_fingerprint: u64,
}

impl SymbolicFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `inv_perm[i]` is the pivot position of original index `i`.
    pub fn inv_perm(&self) -> &[usize] {
        &self.inv_perm
    }

    /// Nonzeros in the strict lower triangle of `L`.
    pub fn l_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    pub fn elimination_tree(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// True when `a` has the pattern this analysis was computed for.
    pub fn matches<T: Real>(&self, a: &SparseSymMatrix<T>) -> bool {
        a.dim() == self.n && a.nnz() == self.pattern_nnz && fingerprint(a) == self.pattern_fingerprint
    }
}

fn fingerprint<T: Real>(a: &SparseSymMatrix<T>) -> u64 {
    // FNV-1a over the structure arrays
    let mut h: u64 = 0xcbf29ce484222325;
    for &x in a.col_ptr().iter().chain(a.row_idx()) {
        h ^= x as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Symbolic analysis with the minimum degree ordering.
pub fn analyze<T: Real>(a: &SparseSymMatrix<T>) -> SymbolicFactorization {
    let n = a.dim();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let perm = minimum_degree(&adj);
    analyze_with_ordering(a, perm)
}

/// Symbolic analysis for a caller-supplied elimination order.
pub fn analyze_with_ordering<T: Real>(a: &SparseSymMatrix<T>, perm: Vec<usize>) -> SymbolicFactorization {
    let n = a.dim();
    assert_eq!(perm.len(), n, "ordering length must match the matrix dimension");
    let mut inv_perm = vec![usize::MAX; n];
    for (k, &p) in perm.iter().enumerate() {
        assert!(inv_perm[p] == usize::MAX, "ordering is not a permutation");
        inv_perm[p] = k;
    }

    // upper triangle of the permuted matrix, column by column
    let mut counts = vec![0usize; n + 1];
    for j in 0..n {
        for p in a.col_ptr()[j]..a.col_ptr()[j + 1] {
            let (pi, pj) = (inv_perm[a.row_idx()[p]], inv_perm[j]);
            counts[pi.max(pj) + 1] += 1;
        }
    }
    for k in 0..n {
        counts[k + 1] += counts[k];
    }
    let up_ptr = counts.clone();
    let mut next = counts;
    let mut up_row = vec![0usize; a.nnz()];
    let mut up_src = vec![0usize; a.nnz()];
    for j in 0..n {
        for p in a.col_ptr()[j]..a.col_ptr()[j + 1] {
            let (pi, pj) = (inv_perm[a.row_idx()[p]], inv_perm[j]);
            let (row, col) = if pi <= pj { (pi, pj) } else { (pj, pi) };
            up_row[next[col]] = row;
            up_src[next[col]] = p;
            next[col] += 1;
        }
    }

    // elimination tree and column counts of L
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut flag = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        for p in up_ptr[k]..up_ptr[k + 1] {
            let mut i = up_row[p];
            if i >= k {
                continue;
            }
            while flag[i] != k {
                if parent[i].is_none() {
                    parent[i] = Some(k);
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i].expect("parent set above");
            }
        }
    }
    let mut l_col_ptr = vec![0usize; n + 1];
    for k in 0..n {
        l_col_ptr[k + 1] = l_col_ptr[k] + lnz[k];
    }

    SymbolicFactorization {
        n,
        perm,
        inv_perm,
        parent,
        l_col_ptr,
        up_ptr,
        up_row,
        up_src,
        pattern_nnz: a.nnz(),
        pattern_fingerprint: fingerprint(a),
    }
}

/// Numeric factors `P A Pᵀ = L D Lᵀ + E`.
#[derive(Debug, Clone)]
pub struct LdlFactors<T> {
    n: usize,
    perm: Vec<usize>,
    l_col_ptr: Vec<usize>,
    l_row: Vec<usize>,
    l_val: Vec<T>,
    d: Vec<T>,
    inertia: Inertia,
    perturbed: usize,
    pivot_eps: T,
}

impl<T: Real> LdlFactors<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn diagonal(&self) -> &[T] {
        &self.d
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    /// Number of pivots replaced by `±ε`.
    pub fn perturbed_pivots(&self) -> usize {
        self.perturbed
    }

    pub fn pivot_eps(&self) -> T {
        self.pivot_eps
    }

    /// Strict lower triangle of `L` as `(row, col, value)` in permuted indices.
    pub fn l_entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.l_col_ptr[j]..self.l_col_ptr[j + 1]).map(move |p| (self.l_row[p], j, self.l_val[p]))
        })
    }

    /// Solves `(P A Pᵀ + E) ` system for the original ordering: `x ≈ A⁻¹ b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| x[p]).collect();
        for j in 0..self.n {
            let yj = y[j];
            if yj != T::zero() {
                for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                    y[self.l_row[p]] -= self.l_val[p] * yj;
                }
            }
        }
        for (yj, dj) in y.iter_mut().zip(&self.d) {
            *yj /= *dj;
        }
        for j in (0..self.n).rev() {
            let mut s = y[j];
            for p in self.l_col_ptr[j]..self.l_col_ptr[j + 1] {
                s -= self.l_val[p] * y[self.l_row[p]];
            }
            y[j] = s;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
    }
}

/// Numeric factorization under the static order of `sym`.
///
/// With `pivot_eps > 0` every pivot with `|d| < pivot_eps` is perturbed and
/// counted. With `pivot_eps == 0` an exactly zero pivot aborts with
/// [`FactorError::ZeroPivot`].
pub fn factorize<T: Real>(
    sym: &SymbolicFactorization,
    a: &SparseSymMatrix<T>,
    pivot_eps: T,
) -> Result<LdlFactors<T>, FactorError> {
    if !sym.matches(a) {
        return Err(FactorError::PatternMismatch);
    }
    let n = sym.n;
    let vals = a.values();
    let lnnz = sym.l_nnz();
    let mut l_row = vec![0usize; lnnz];
    let mut l_val = vec![T::zero(); lnnz];
    let mut d = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut pattern = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    let mut perturbed = 0usize;
    let mut inertia = Inertia::default();

    for k in 0..n {
        let mut top = n;
        flag[k] = k;
        for p in sym.up_ptr[k]..sym.up_ptr[k + 1] {
            let mut i = sym.up_row[p];
            y[i] += vals[sym.up_src[p]];
            let mut len = 0;
            while flag[i] != k {
                pattern[len] = i;
                len += 1;
                flag[i] = k;
                i = sym.parent[i].expect("row subtree reaches k");
            }
            while len > 0 {
                top -= 1;
                len -= 1;
                pattern[top] = pattern[len];
            }
        }
        let mut dk = y[k];
        y[k] = T::zero();
        for &i in &pattern[top..n] {
            let yi = y[i];
            y[i] = T::zero();
            let start = sym.l_col_ptr[i];
            for p in start..start + lnz[i] {
                y[l_row[p]] -= l_val[p] * yi;
            }
            let lki = yi / d[i];
            dk -= lki * yi;
            l_row[start + lnz[i]] = k;
            l_val[start + lnz[i]] = lki;
            lnz[i] += 1;
        }
        if !dk.is_finite() {
            return Err(FactorError::NonFinite { pivot: k });
        }
        if dk.abs() < pivot_eps {
            dk = if dk < T::zero() { -pivot_eps } else { pivot_eps };
            perturbed += 1;
        } else if dk == T::zero() {
            return Err(FactorError::ZeroPivot { pivot: k });
        }
        if dk > T::zero() {
            inertia.positive += 1;
        } else {
            inertia.negative += 1;
        }
        d[k] = dk;
    }

    Ok(LdlFactors {
        n,
        perm: sym.perm.clone(),
        l_col_ptr: sym.l_col_ptr.clone(),
        l_row,
        l_val,
        d,
        inertia,
        perturbed,
        pivot_eps,
    })
}
