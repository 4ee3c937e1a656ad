//! Compressed sparse row storage with a shareable symbolic pattern.

use std::sync::Arc;

/// Symbolic CSR pattern: row offsets plus sorted, unique column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Build a pattern from unsorted (row, col) pairs; duplicates collapse.
    pub fn from_pairs(n_rows: usize, n_cols: usize, pairs: &mut Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _) in pairs.iter() {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = pairs.iter().map(|&(_, j)| j).collect();
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Offset of entry (i, j) in the value array, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|off| lo + off)
    }
}

/// Sparse matrix in CSR form. The pattern is reference-counted so that all
/// operators assembled on one mesh share it and can be combined entrywise.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    /// Assemble from triplets; duplicate entries are summed. Mainly for
    /// small hand-built systems and tests.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Self {
        let mut pairs: Vec<(usize, usize)> = triplets.iter().map(|&(i, j, _)| (i, j)).collect();
        let pattern = Arc::new(SparsityPattern::from_pairs(n_rows, n_cols, &mut pairs));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            let off = m.pattern.find(i, j).expect("triplet entry in pattern");
            m.values[off] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.pattern.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.pattern.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern
            .find(i, j)
            .map(|off| self.values[off])
            .unwrap_or(0.0)
    }

    /// Add `v` to entry (i, j); the entry must exist in the pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let off = self
            .pattern
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[off] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols());
        let mut y = vec![0.0; self.n_rows()];
        for i in 0..self.n_rows() {
            let mut acc = 0.0;
            for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                acc += self.values[off] * x[self.pattern.col_idx[off]];
            }
            y[i] = acc;
        }
        y
    }

    /// y += s * A x, without allocating.
    pub fn matvec_acc(&self, s: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols());
        assert_eq!(y.len(), self.n_rows());
        for i in 0..self.n_rows() {
            let mut acc = 0.0;
            for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                acc += self.values[off] * x[self.pattern.col_idx[off]];
            }
            y[i] += s * acc;
        }
    }

    /// Entrywise linear combination of same-pattern matrices.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
        assert!(!terms.is_empty());
        let pattern = terms[0].1.pattern.clone();
        for (_, m) in terms {
            assert!(
                Arc::ptr_eq(&pattern, &m.pattern) || *pattern == *m.pattern,
                "linear_combination requires identical sparsity patterns"
            );
        }
        let mut out = SparseMatrix::zeros(pattern);
        for (s, m) in terms {
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += s * v;
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Column sums e^T A as a dense vector.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols()];
        for i in 0..self.n_rows() {
            for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                sums[self.pattern.col_idx[off]] += self.values[off];
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_rows()];
        for i in 0..self.n_rows() {
            for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                sums[i] += self.values[off];
            }
        }
        sums
    }

    /// Row sums of absolute values (gives the infinity norm when maximised).
    pub fn row_sums_abs(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_rows()];
        for i in 0..self.n_rows() {
            for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                sums[i] += self.values[off].abs();
            }
        }
        sums
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max_ij |A_ij - A_ji| over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_rows() {
            for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                let j = self.pattern.col_idx[off];
                worst = worst.max((self.values[off] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replace row `i` by the identity row (used for Dirichlet rows).
    pub fn set_identity_row(&mut self, i: usize) {
        for off in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
            self.values[off] = if self.pattern.col_idx[off] == i { 1.0 } else { 0.0 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort_columns() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 1, 2.0), (0, 0, 1.0), (0, 1, 3.0), (1, 1, 4.0)],
        );
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(1, 1), 4.0);
        // columns sorted per row
        let r0 = &m.col_idx()[m.row_ptr()[0]..m.row_ptr()[1]];
        assert!(r0.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn matvec_and_column_sums() {
        let m = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![7.0, -2.0]);
        assert_eq!(m.column_sums(), vec![1.0, -1.0, 2.0]);
    }
}
