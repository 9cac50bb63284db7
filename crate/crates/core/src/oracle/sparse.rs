//! Complex compressed-sparse-row matrices and the few products the master
//! equation needs.

use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    /// Builds a square matrix from `(row, col, value)` triplets; duplicates
    /// are summed and exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim, row_ptr, cols, vals }.pruned()
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    fn pruned(self) -> Self {
        let triplets: Vec<_> = self.triplets().filter(|t| t.2 != C64::new(0.0, 0.0)).collect();
        if triplets.len() == self.vals.len() {
            return self;
        }
        let mut row_ptr = vec![0; self.dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..self.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim: self.dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(C64::new(0.0, 0.0), |(_, v)| v)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * s)).collect())
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.dim, o.dim);
        Self::from_triplets(self.dim, self.triplets().chain(o.triplets()).collect())
    }

    /// Sparse product `self · o`.
    pub fn matmul(&self, o: &Self) -> Self {
        assert_eq!(self.dim, o.dim);
        let mut triplets = Vec::new();
        let mut acc = vec![C64::new(0.0, 0.0); self.dim];
        let mut touched = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in o.row(k) {
                    if acc[c] == C64::new(0.0, 0.0) {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = C64::new(0.0, 0.0);
            }
            touched.clear();
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// Largest absolute row sum (the induced ∞-norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `out += s · self · x` for a dense row-major `dim × dim` matrix `x`.
    pub fn mul_dense_left_acc(&self, x: &[C64], s: C64, out: &mut [C64]) {
        let d = self.dim;
        for r in 0..d {
            let out_row = &mut out[r * d..(r + 1) * d];
            for (k, a) in self.row(r) {
                let f = a * s;
                let x_row = &x[k * d..(k + 1) * d];
                for (o, v) in out_row.iter_mut().zip(x_row) {
                    *o += f * v;
                }
            }
        }
    }

    /// `out += s · x · self` for a dense row-major matrix `x`.
    pub fn mul_dense_right_acc(&self, x: &[C64], s: C64, out: &mut [C64]) {
        let d = self.dim;
        for i in 0..d {
            let x_row = &x[i * d..(i + 1) * d];
            let out_row = &mut out[i * d..(i + 1) * d];
            for (k, &xv) in x_row.iter().enumerate() {
                if xv == C64::new(0.0, 0.0) {
                    continue;
                }
                let f = xv * s;
                for (c, b) in self.row(k) {
                    out_row[c] += f * b;
                }
            }
        }
    }

    /// `Tr(self · x)` for a dense row-major matrix `x`.
    pub fn trace_with(&self, x: &[C64]) -> C64 {
        let d = self.dim;
        self.triplets().map(|(r, c, v)| v * x[c * d + r]).sum()
    }
}
