//! Compressed sparse row matrices and Krylov solvers (CG, MINRES).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("entry ({row}, {col}) out of bounds for a {nrows}x{ncols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Triplet accumulator. Duplicate entries are summed in insertion order when
/// the matrix is compressed, so the result is independent of sort internals.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row as u32, col as u32, value));
    }

    /// Add `scale * m` with its top-left corner at `(row_offset, col_offset)`.
    pub fn add_block(&mut self, row_offset: usize, col_offset: usize, m: &CsrMatrix, scale: f64) {
        for r in 0..m.nrows {
            for (c, v) in m.row(r) {
                self.push(row_offset + r, col_offset + c, scale * v);
            }
        }
    }

    /// Add `scale * mᵀ` with its top-left corner at `(row_offset, col_offset)`.
    pub fn add_block_transposed(&mut self, row_offset: usize, col_offset: usize, m: &CsrMatrix, scale: f64) {
        for r in 0..m.nrows {
            for (c, v) in m.row(r) {
                self.push(row_offset + c, col_offset + r, scale * v);
            }
        }
    }

    pub fn build(mut self) -> Result<CsrMatrix, SparseError> {
        for &(r, c, v) in &self.entries {
            let (r, c) = (r as usize, c as usize);
            if r >= self.nrows || c >= self.ncols {
                return Err(SparseError::OutOfBounds {
                    row: r,
                    col: c,
                    nrows: self.nrows,
                    ncols: self.ncols,
                });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { row: r, col: c });
            }
        }
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(u32, u32)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c as usize);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            cols,
            vals,
        })
    }
}

/// Sparse matrix in compressed row storage with sorted, unique column
/// indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.vals.copy_from_slice(d);
        m
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build().expect("dense input is in bounds")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.vals.iter_mut().for_each(|v| *v *= s);
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        b.add_block_transposed(0, 0, self, 1.0);
        b.build().expect("transpose of a valid matrix")
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// `max |A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut m: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m = m.max((v - self.get(c, r)).abs());
            }
        }
        m
    }

    /// `self + s * other`.
    pub fn add(&self, other: &CsrMatrix, s: f64) -> Result<CsrMatrix, SparseError> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(SparseError::Dimension(format!(
                "{}x{} + {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        b.add_block(0, 0, self, 1.0);
        b.add_block(0, 0, other, s);
        b.build()
    }

    /// Replace row and column `i` by the unit vector `e_i`.
    pub fn pin(&mut self, i: usize) {
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                if r == i || c == i {
                    self.vals[k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
        if self.get(i, i) != 1.0 {
            let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + 1);
            b.add_block(0, 0, self, 1.0);
            b.push(i, i, 1.0);
            *self = b.build().expect("in bounds");
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += s * x);
}

/// Outcome of an iterative solve. `relative_residual` is the true residual
/// `‖b − Ax‖ / ‖b‖` recomputed from the returned iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Residual estimate after each iteration (preconditioned norm for MINRES).
    pub history: Vec<f64>,
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let mut r = a.matvec(x);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let n = norm(&r);
    (r, n)
}

fn jacobi(diag: &[f64]) -> Vec<f64> {
    diag.iter().map(|d| 1.0 / d.abs().max(1e-30)).collect()
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems, starting from zero.
pub fn cg(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> (Vec<f64>, SolveReport) {
    cg_with_guess(a, b, vec![0.0; b.len()], tol, maxit)
}

pub fn cg_with_guess(a: &CsrMatrix, b: &[f64], x0: Vec<f64>, tol: f64, maxit: usize) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    let bnorm = norm(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                history: Vec::new(),
            },
        );
    }
    let minv = jacobi(&a.diagonal());
    let (mut r, mut rnorm) = true_residual(a, b, &x);
    let mut history = Vec::new();
    let mut it = 0;
    let mut ap = vec![0.0; n];
    // outer loop restarts from the true residual if recurrence drift hides it
    while rnorm > tol * bnorm && it < maxit {
        let mut z: Vec<f64> = r.iter().zip(&minv).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while it < maxit {
            a.matvec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            it += 1;
            let est = norm(&r) / bnorm;
            history.push(est);
            if est <= 0.5 * tol {
                break;
            }
            z.iter_mut().zip(r.iter().zip(&minv)).for_each(|(z, (r, m))| *z = r * m);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        let (rt, nt) = true_residual(a, b, &x);
        r = rt;
        let stalled = nt >= 0.99 * rnorm;
        rnorm = nt;
        if stalled {
            break;
        }
    }
    let rel = rnorm / bnorm;
    (
        x,
        SolveReport {
            iterations: it,
            relative_residual: rel,
            converged: rel <= tol,
            history,
        },
    )
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with a
/// diagonal preconditioner. `precond` holds the diagonal of the symmetric
/// positive definite preconditioner; entries are taken in absolute value and
/// clamped below at 1e-30. Iterates until the true relative residual is at
/// most `tol`, restarting from the current iterate when the recurrence
/// estimate and the true residual drift apart.
pub fn minres(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize, precond: &[f64]) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(precond.len(), n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                history: Vec::new(),
            },
        );
    }
    let minv = jacobi(precond);
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut it = 0;
    let mut rnorm = bnorm;
    let mut inner_tol = tol;
    let mut restarts = 0;
    while it < maxit {
        let (r0, _) = true_residual(a, b, &x);
        it += minres_cycle(a, &r0, &minv, &mut x, inner_tol, rnorm / bnorm, maxit - it, &mut history);
        let (_, nt) = true_residual(a, b, &x);
        rnorm = nt;
        if rnorm <= tol * bnorm {
            break;
        }
        restarts += 1;
        if restarts > 20 {
            break;
        }
        // tighten the inner stopping rule when the estimate was optimistic
        inner_tol *= 0.5;
    }
    let rel = rnorm / bnorm;
    (
        x,
        SolveReport {
            iterations: it,
            relative_residual: rel,
            converged: rel <= tol,
            history,
        },
    )
}

/// One MINRES cycle on `A d = r0`, accumulating `d` into `x`. The stopping
/// test scales the preconditioned residual estimate by the ratio of true to
/// preconditioned initial residual norms.
#[allow(clippy::too_many_arguments)]
fn minres_cycle(
    a: &CsrMatrix,
    r0: &[f64],
    minv: &[f64],
    x: &mut [f64],
    tol: f64,
    rel0: f64,
    maxit: usize,
    history: &mut Vec<f64>,
) -> usize {
    let n = r0.len();
    let mut v_old = vec![0.0; n];
    let mut v = r0.to_vec();
    let mut z: Vec<f64> = v.iter().zip(minv).map(|(v, m)| v * m).collect();
    let mut gamma = dot(&z, &v).sqrt();
    if gamma == 0.0 {
        return 0;
    }
    let gamma0 = gamma;
    let mut gamma_old = 1.0;
    let mut eta = gamma;
    let (mut s_old, mut s, mut c_old, mut c) = (0.0, 0.0, 1.0, 1.0);
    let mut w_old = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut az = vec![0.0; n];
    let mut it = 0;
    while it < maxit {
        z.iter_mut().for_each(|z| *z /= gamma);
        a.matvec_into(&z, &mut az);
        let delta = dot(&az, &z);
        let (f1, f2) = (delta / gamma, gamma / gamma_old);
        for i in 0..n {
            let vn = az[i] - f1 * v[i] - f2 * v_old[i];
            v_old[i] = v[i];
            v[i] = vn;
        }
        let gamma_new = dot_weighted(&v, minv).sqrt();
        let alpha0 = c * delta - c_old * s * gamma;
        let alpha1 = (alpha0 * alpha0 + gamma_new * gamma_new).sqrt();
        let alpha2 = s * delta + c_old * c * gamma;
        let alpha3 = s_old * gamma;
        let c_new = alpha0 / alpha1;
        let s_new = gamma_new / alpha1;
        let step = c_new * eta;
        for i in 0..n {
            let wn = (z[i] - alpha3 * w_old[i] - alpha2 * w[i]) / alpha1;
            w_old[i] = w[i];
            w[i] = wn;
            x[i] += step * wn;
        }
        eta *= -s_new;
        it += 1;
        let est = rel0 * eta.abs() / gamma0;
        history.push(est);
        gamma_old = gamma;
        gamma = gamma_new;
        s_old = s;
        s = s_new;
        c_old = c;
        c = c_new;
        if est <= tol || gamma == 0.0 {
            break;
        }
        for i in 0..n {
            z[i] = v[i] * minv[i];
        }
    }
    it
}

fn dot_weighted(v: &[f64], m: &[f64]) -> f64 {
    v.iter().zip(m).map(|(v, m)| v * v * m).sum()
}

/// Dense Gaussian elimination with partial pivoting; used as a reference
/// solver on small systems.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[p][k].abs() < 1e-300 {
            return None;
        }
        m.swap(k, p);
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    Some(x)
}
