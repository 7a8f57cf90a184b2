use crate::scalar::Real;

use super::SparseError;

/// Symmetric matrix stored as its lower triangle in compressed-column form.
///
/// Every stored entry has `row >= col`; row indices are strictly increasing
/// within a column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix<T> {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseSymMatrix<T> {
    /// Builds a matrix from raw lower-triangle CSC arrays, validating the layout.
    pub fn from_csc(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self, SparseError> {
        if col_ptr.len() != n + 1 || col_ptr[0] != 0 {
            return Err(SparseError::InvalidStructure("column pointer length or origin".into()));
        }
        if row_idx.len() != values.len() || *col_ptr.last().unwrap() != row_idx.len() {
            return Err(SparseError::InvalidStructure("nonzero count mismatch".into()));
        }
        for j in 0..n {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(SparseError::InvalidStructure(format!("column pointers decrease at {j}")));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (k, &i) in rows.iter().enumerate() {
                if i < j || i >= n {
                    return Err(SparseError::InvalidStructure(format!(
                        "entry ({i},{j}) outside the lower triangle"
                    )));
                }
                if k > 0 && rows[k - 1] >= i {
                    return Err(SparseError::InvalidStructure(format!(
                        "row indices not strictly increasing in column {j}"
                    )));
                }
            }
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Entries above the
    /// diagonal are mirrored into the lower triangle; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self, SparseError> {
        let mut entries: Vec<(usize, usize, T)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(SparseError::DimensionMismatch { expected: n, found: i.max(j) + 1 });
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            entries.push((c, r, v));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in entries {
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((c, r));
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    /// Lower triangle of a dense row-major symmetric matrix; exact zeros off
    /// the diagonal are dropped, the diagonal is always stored.
    pub fn from_dense(n: usize, dense: &[T]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..n {
            for i in j..n {
                let v = dense[i * n + j];
                if i == j || v != T::zero() {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Self { n, col_ptr, row_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.nnz());
        Self { n: self.n, col_ptr: self.col_ptr.clone(), row_idx: self.row_idx.clone(), values }
    }

    /// Iterates stored lower-triangle entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    /// Value at `(i, j)` of the full symmetric matrix (binary search).
    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => T::zero(),
        }
    }

    /// `y = A x` using the symmetric expansion of the stored triangle.
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let a = self.values[p];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Full dense row-major copy.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.n;
        let mut d = vec![T::zero(); n * n];
        for (i, j, v) in self.iter() {
            d[i * n + j] += v;
            if i != j {
                d[j * n + i] += v;
            }
        }
        d
    }

    /// Symmetric permutation `B = P A Pᵀ` with `B[k][l] = A[perm[k]][perm[l]]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0usize; self.n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let trip: Vec<(usize, usize, T)> = self.iter().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        Self::from_triplets(self.n, &trip).expect("permutation preserves dimension")
    }

    /// Position of the stored entry `(i, j)` (lower triangle), if present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let start = self.col_ptr[c];
        self.row_idx[start..self.col_ptr[c + 1]].binary_search(&r).ok().map(|k| start + k)
    }
}
