//! Compressed sparse row matrices for message-passing aggregation.

use super::tensor::Tensor;

/// CSR matrix with f32 values. Column indices within each row are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl Csr {
    /// Build from (row, col, value) triplets. Duplicate coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(u32, u32, f32)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            debug_assert!((r as usize) < n_rows && (c as usize) < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                t.push((self.indices[k], r as u32, self.values[k]));
            }
        }
        Csr::from_triplets(self.n_cols, self.n_rows, t)
    }

    /// y = self * x, with x of shape [n_cols, d].
    pub fn matmul_dense(&self, x: &[f32], d: usize, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.n_rows * d);
        out.fill(0.0);
        for r in 0..self.n_rows {
            let dst = &mut out[r * d..(r + 1) * d];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k] as usize;
                let v = self.values[k];
                let src = &x[c * d..(c + 1) * d];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut data = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                data[r * self.n_cols + self.indices[k] as usize] += self.values[k];
            }
        }
        Tensor::new(vec![self.n_rows, self.n_cols], data).unwrap()
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        match self.indices[lo..hi].binary_search(&(c as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }
}
