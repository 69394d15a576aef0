//! Minimal CSR storage for the real sparse operators on the cross-section
//! (Dirichlet Laplacian, angular derivative and their products).

use num_complex::Complex64;

/// Real sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut rows: Vec<usize> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    /// y = A x (real input).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    /// y += w * A x (complex input, complex weight).
    pub fn apply_complex_scaled(&self, w: Complex64, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, v) in self.row(r) {
                acc += x[c] * v;
            }
            y[r] += w * acc;
        }
    }

    /// y = A x (complex input).
    pub fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        for v in y.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        self.apply_complex_scaled(Complex64::new(1.0, 0.0), x, y);
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = self.triplets();
        for t in trip.iter_mut() {
            *t = (t.1, t.0, t.2);
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// C = A^T A, assembled exactly (used for the Gram part of form assemblies).
    pub fn gram(&self) -> CsrMatrix {
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        // (A^T A)_{ij} = sum_r A_{ri} A_{rj}; accumulate row by row
        for r in 0..self.nrows {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            for a in lo..hi {
                for b in lo..hi {
                    trip.push((self.col_idx[a], self.col_idx[b], self.values[a] * self.values[b]));
                }
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.ncols, &trip)
    }

    /// max |A - A^T| over all entries.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut map = std::collections::BTreeMap::new();
        for (r, c, v) in self.triplets() {
            *map.entry((r, c)).or_insert(0.0) += v;
        }
        for (r, c, v) in t.triplets() {
            *map.entry((r, c)).or_insert(0.0) -= v;
        }
        map.values().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut a = ndarray::Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.triplets() {
            a[(r, c)] += v;
        }
        a
    }

    /// Triplet-format text dump: one `row col value` line per entry.
    pub fn dump_triplets(&self, name: &str) -> String {
        let mut s = format!("# twistgap sparse-matrix v1 name={} rows={} cols={} nnz={}\n", name, self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{} {} {:.16e}\n", r, c, v));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_assembly_merges_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 2);
        let d = a.to_dense();
        assert_eq!(d[(0, 0)], 3.0);
        assert_eq!(d[(1, 0)], -1.0);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn apply_matches_dense() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 0, -1.0), (2, 2, 4.0), (1, 2, 0.5)]);
        let x = vec![1.0, 2.0, 3.0];
        let mut y = vec![0.0; 3];
        a.apply(&x, &mut y);
        assert_eq!(y, vec![4.0, 0.5, 12.0]);
    }

    #[test]
    fn gram_is_transpose_times_self() {
        let a = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, -1.0), (2, 1, 3.0)]);
        let g = a.gram().to_dense();
        let d = a.to_dense();
        let expect = d.t().dot(&d);
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[(i, j)] - expect[(i, j)]).abs() < 1e-14);
            }
        }
        assert_eq!(a.gram().asymmetry(), 0.0);
    }
}
