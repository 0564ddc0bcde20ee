//! Sparse assembly and banded direct solvers.
//!
//! Grid operators couple only nearest neighbours, so with the node ordering
//! of [`crate::geometry`] every matrix is banded with half-bandwidth equal to
//! the stride of the last axis. Banded Cholesky handles the symmetric
//! positive definite Robin stiffness; banded LU with partial pivoting handles
//! the nonsymmetric Newton Jacobians that include transport.

use crate::error::{Error, Result};

/// Compressed sparse rows with sorted column indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[i + 1] += 1;
            cols.push(j);
            vals.push(v);
            last = Some((i, j));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    /// Same sparsity pattern as `self` with the values of `other`
    /// (entries of `other` outside the pattern are dropped, so callers use
    /// it only when the pattern of `other` is contained in `self`'s).
    pub fn values_on_pattern_of(&self, other: &CsrMatrix) -> Vec<f64> {
        let mut out = vec![0.0; self.vals.len()];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[k] = other.get(i, self.cols[k]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    /// `Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.cols[k]] += self.vals[k] * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.vals.len());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                t.push((self.cols[k], i, self.vals[k]));
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.vals[k] * y[self.cols[k]];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn half_bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                bw = bw.max(i.abs_diff(self.cols[k]));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.cols[k]] = self.vals[k];
            }
        }
        d
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i] at offsets 0..=bw
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the matrix given by `entry(i, j)` for `j ∈ [i-bw, i]`.
    pub fn factor_with(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = entry(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + k + bw - i] * l[j * w + k + bw - j];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + j + bw - i] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let bw = a.half_bandwidth();
        Self::factor_with(a.dim(), bw, |i, j| a.get(i, j))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + k + bw - i] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l[k * w + i + bw - k] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// LU factorisation with partial pivoting of a general band matrix,
/// stored column-wise in the layout used by LAPACK's `gbtrf`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    /// Factors the matrix given in CSR form with `kl` sub- and `ku`
    /// super-diagonals.
    pub fn factor_csr(row_ptr: &[usize], cols: &[usize], vals: &[f64], n: usize, kl: usize, ku: usize) -> Result<Self> {
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![0.0; ld * n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[k];
                debug_assert!(i <= j + kl && j <= i + ku);
                ab[kv + i - j + j * ld] = vals[k];
            }
        }
        let mut lu = BandedLu { n, kl, ku, ab, pivots: vec![0; n] };
        lu.factor_in_place()?;
        Ok(lu)
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        let ab = &mut self.ab;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[kv + j * ld].abs();
            for t in 1..=km {
                let v = ab[kv + t + j * ld].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            self.pivots[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(j));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(kv + j - c + c * ld, kv + j + jp - c + c * ld);
                }
            }
            if km > 0 {
                let inv = 1.0 / ab[kv + j * ld];
                for t in 1..=km {
                    ab[kv + t + j * ld] *= inv;
                }
                for c in (j + 1)..=ju {
                    let a_jc = ab[kv + j - c + c * ld];
                    if a_jc != 0.0 {
                        for t in 1..=km {
                            ab[kv + j + t - c + c * ld] -= ab[kv + t + j * ld] * a_jc;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let lm = kl.min(n - 1 - j);
            let bj = b[j];
            for t in 1..=lm {
                b[j + t] -= self.ab[kv + t + j * ld] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[kv + j * ld];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[kv + i - j + j * ld] * bj;
            }
        }
    }
}
