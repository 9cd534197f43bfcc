//! Sparse non-Hermitian linear algebra: CSR storage, restarted GMRES with a
//! diagonal right preconditioner, Arnoldi factorizations with Hessenberg QR
//! for Ritz values, and a small dense complex LU.

use crate::error::{Error, Result};
use crate::C64;

/// Coordinate-format accumulator used by operator builders.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub n: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets { n, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, val: C64) {
        debug_assert!(row < self.n && col < self.n);
        if val.norm() > 0.0 {
            self.entries.push((row, col, val));
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Triplets, scale: C64) {
        debug_assert_eq!(self.n, other.n);
        self.entries
            .extend(other.entries.iter().map(|&(r, c, v)| (r, c, scale * v)));
    }

    pub fn to_csr(&self) -> Csr {
        let n = self.n;
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<C64> = Vec::with_capacity(sorted.len());
        let mut i = 0usize;
        for r in 0..n {
            row_ptr[r] = cols.len();
            while i < sorted.len() && sorted[i].0 == r {
                let (_, c, v) = sorted[i];
                if cols.len() > row_ptr[r] && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
                i += 1;
            }
        }
        row_ptr[n] = cols.len();
        Csr { n, row_ptr, cols, vals }
    }
}

/// Compressed sparse row complex matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Stored `(column, value)` pairs of one row.
    pub fn row_entries(&self, row: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[row]..self.row_ptr[row + 1]).map(move |i| (self.cols[i], self.vals[i]))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        for r in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        let mut d = vec![C64::new(0.0, 0.0); self.n];
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[i] == r {
                    d[r] += self.vals[i];
                }
            }
        }
        d
    }

    pub fn entry(&self, r: usize, c: usize) -> C64 {
        let mut v = C64::new(0.0, 0.0);
        for i in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.cols[i] == c {
                v += self.vals[i];
            }
        }
        v
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Csr {
        let mut t = Triplets::new(self.n);
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push(self.cols[i], r, self.vals[i].conj());
            }
        }
        t.to_csr()
    }

    /// Delete one row/column index (deflation of a structurally decoupled
    /// coordinate). Returns the reduced matrix; the mapping is
    /// `new_i = old_i` for `old_i < drop`, `old_i − 1` otherwise.
    pub fn drop_index(&self, drop: usize) -> Csr {
        let mut t = Triplets::new(self.n - 1);
        for r in 0..self.n {
            if r == drop {
                continue;
            }
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[i];
                if c == drop {
                    continue;
                }
                let rr = if r > drop { r - 1 } else { r };
                let cc = if c > drop { c - 1 } else { c };
                t.push(rr, cc, self.vals[i]);
            }
        }
        t.to_csr()
    }
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Outcome of a GMRES solve.
#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Restarted GMRES(m) with an optional diagonal right preconditioner:
/// solves `A M⁻¹ u = b`, returns `x = M⁻¹ u`.
pub fn gmres<F>(
    op: F,
    b: &[C64],
    precond_diag: Option<&[C64]>,
    restart: usize,
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<C64>, SolveInfo)>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let apply_m_inv = |v: &[C64]| -> Vec<C64> {
        match precond_diag {
            Some(d) => v.iter().zip(d).map(|(vi, di)| vi / di).collect(),
            None => v.to_vec(),
        }
    };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![C64::new(0.0, 0.0); n],
            SolveInfo { residual: 0.0, iterations: 0, converged: true },
        ));
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut total_iters = 0usize;
    let mut res = f64::INFINITY;
    while total_iters < max_iters {
        // r = b − A x
        let ax = op(&x);
        let mut r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        res = beta / bnorm;
        if res <= tol {
            return Ok((x, SolveInfo { residual: res, iterations: total_iters, converged: true }));
        }
        for ri in r.iter_mut() {
            *ri /= beta;
        }
        let m = restart.min(max_iters - total_iters);
        let mut v: Vec<Vec<C64>> = vec![r];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        // Givens rotations
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0usize;
        for j in 0..m {
            total_iters += 1;
            let mut w = op(&apply_m_inv(&v[j]));
            // modified Gram-Schmidt
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(vi, &w);
                h[i][j] = hij;
                axpy(&mut w, -hij, vi);
            }
            let hnext = norm(&w);
            h[j + 1][j] = C64::new(hnext, 0.0);
            // apply accumulated rotations to column j
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            // new rotation to zero h[j+1][j]
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c.conj() * h[j][j] + s.conj() * h[j + 1][j];
            h[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -s * g[j];
            g[j] = c.conj() * g[j];
            k_used = j + 1;
            res = g[j + 1].norm() / bnorm;
            if hnext < 1e-300 || res <= tol {
                break;
            }
            for wi in w.iter_mut() {
                *wi /= hnext;
            }
            v.push(w);
        }
        // back substitution for y, then x += M⁻¹ (V y)
        let k = k_used;
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![C64::new(0.0, 0.0); n];
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut update, *yj, &v[j]);
        }
        let update = apply_m_inv(&update);
        axpy(&mut x, C64::new(1.0, 0.0), &update);
        if res <= tol {
            // recompute the true residual once for the report
            let ax = op(&x);
            let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let res = norm(&r) / bnorm;
            if res <= tol * 10.0 {
                return Ok((x, SolveInfo { residual: res, iterations: total_iters, converged: true }));
            }
        }
    }
    Ok((x, SolveInfo { residual: res, iterations: total_iters, converged: false }))
}

/// Complex Givens rotation zeroing `b`: returns `(c, s)` with
/// `c̄·a + s̄·b = r`, `|c|² + |s|² = 1`.
fn givens(a: C64, b: C64) -> (C64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    }
    let r = (an * an + bn * bn).sqrt();
    if an == 0.0 {
        (C64::new(0.0, 0.0), b / r)
    } else {
        (a / r, b / r)
    }
}

/// Eigenvalues of a dense complex matrix by Hessenberg reduction followed by
/// shifted QR iteration with deflation. Intended for the small projected
/// matrices produced by Arnoldi (m ≲ 200).
pub fn dense_eigenvalues(a: &[Vec<C64>]) -> Result<Vec<C64>> {
    let n = a.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut h: Vec<Vec<C64>> = a.to_vec();
    hessenberg_reduce(&mut h);
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n; // active block is 0..hi
    let mut iters_since_deflate = 0usize;
    let max_total = 60 * n;
    let mut total = 0usize;
    while hi > 0 {
        if hi == 1 {
            eigs.push(h[0][0]);
            hi -= 1;
            continue;
        }
        // check for deflation at the bottom of the active block
        let sub = h[hi - 1][hi - 2].norm();
        let scale = h[hi - 1][hi - 1].norm() + h[hi - 2][hi - 2].norm();
        if sub <= 1e-14 * scale.max(1e-300) {
            eigs.push(h[hi - 1][hi - 1]);
            hi -= 1;
            iters_since_deflate = 0;
            continue;
        }
        total += 1;
        if total > max_total {
            return Err(Error::numerical("QR iteration failed to converge"));
        }
        // Wilkinson shift from the trailing 2×2; exceptional shift on stall
        let mu = if iters_since_deflate % 12 == 11 {
            h[hi - 1][hi - 1] + C64::new(sub, 0.0)
        } else {
            wilkinson_shift(
                h[hi - 2][hi - 2],
                h[hi - 2][hi - 1],
                h[hi - 1][hi - 2],
                h[hi - 1][hi - 1],
            )
        };
        iters_since_deflate += 1;
        // implicit single-shift QR sweep on the active Hessenberg block
        qr_sweep(&mut h, hi, mu);
    }
    Ok(eigs)
}

fn hessenberg_reduce(h: &mut [Vec<C64>]) {
    let n = h.len();
    for k in 0..n.saturating_sub(2) {
        // Householder on column k below the subdiagonal
        let mut x: Vec<C64> = (k + 1..n).map(|i| h[i][k]).collect();
        let xn = norm(&x);
        if xn < 1e-300 {
            continue;
        }
        let alpha = if x[0].norm() > 0.0 {
            -(x[0] / x[0].norm()) * xn
        } else {
            C64::new(-xn, 0.0)
        };
        x[0] -= alpha;
        let vn = norm(&x);
        if vn < 1e-300 {
            continue;
        }
        for xi in x.iter_mut() {
            *xi /= vn;
        }
        // H ← (I − 2vv†) H (I − 2vv†)
        for col in 0..n {
            let s: C64 = (0..x.len()).map(|i| x[i].conj() * h[k + 1 + i][col]).sum();
            for i in 0..x.len() {
                let upd = 2.0 * s * x[i];
                h[k + 1 + i][col] -= upd;
            }
        }
        for row in 0..n {
            let s: C64 = (0..x.len()).map(|i| h[row][k + 1 + i] * x[i]).sum();
            for i in 0..x.len() {
                let upd = 2.0 * s * x[i].conj();
                h[row][k + 1 + i] -= upd;
            }
        }
    }
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    // eigenvalue of [[a,b],[c,d]] closest to d
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn qr_sweep(h: &mut [Vec<C64>], hi: usize, mu: C64) {
    // explicit shifted QR step on the leading hi×hi Hessenberg block:
    // H − μI = QR, then H ← RQ + μI
    for i in 0..hi {
        h[i][i] -= mu;
    }
    let mut gs: Vec<(C64, C64)> = Vec::with_capacity(hi - 1);
    for k in 0..hi - 1 {
        let (c, s) = givens(h[k][k], h[k + 1][k]);
        for col in k..hi {
            let a = h[k][col];
            let b = h[k + 1][col];
            h[k][col] = c.conj() * a + s.conj() * b;
            h[k + 1][col] = -s * a + c * b;
        }
        h[k + 1][k] = C64::new(0.0, 0.0);
        gs.push((c, s));
    }
    for (k, &(c, s)) in gs.iter().enumerate() {
        let rows = (k + 2).min(hi);
        for row in 0..rows {
            let a = h[row][k];
            let b = h[row][k + 1];
            h[row][k] = a * c + b * s;
            h[row][k + 1] = -a * s.conj() + b * c.conj();
        }
    }
    for i in 0..hi {
        h[i][i] += mu;
    }
}

/// Solve a dense complex system by LU with partial pivoting (consumes `a`).
pub fn dense_solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Result<Vec<C64>> {
    let n = a.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].norm().partial_cmp(&a[j][k].norm()).unwrap())
            .unwrap();
        if a[piv][k].norm() < 1e-300 {
            return Err(Error::numerical("singular matrix in dense solve"));
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                let upd = f * a[k][j];
                a[i][j] -= upd;
            }
            let upd = f * b[k];
            b[i] -= upd;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}

/// Reusable LU factorization (partial pivoting) of a shifted sparse matrix
/// materialized dense, for the many right-hand sides of shift-invert
/// iterations at a fixed shift.
pub struct DenseLu {
    n: usize,
    /// row-major combined L (unit diagonal, below) and U (on and above)
    lu: Vec<C64>,
    /// row swapped with row `k` at elimination step `k`
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor_shifted(a: &Csr, sigma: C64) -> Result<DenseLu> {
        let n = a.n;
        let mut lu = vec![C64::new(0.0, 0.0); n * n];
        for row in 0..n {
            for (col, v) in a.row_entries(row) {
                lu[row * n + col] += v;
            }
            lu[row * n + row] -= sigma;
        }
        let mut piv = vec![0usize; n];
        let mut prow = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            let mut p = k;
            let mut pmax = lu[k * n + k].norm();
            for i in k + 1..n {
                let m = lu[i * n + k].norm();
                if m > pmax {
                    pmax = m;
                    p = i;
                }
            }
            if pmax < 1e-300 {
                return Err(Error::numerical("singular shifted matrix in LU"));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            prow[k + 1..n].copy_from_slice(&lu[k * n + k + 1..k * n + n]);
            let inv = C64::new(1.0, 0.0) / lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] * inv;
                lu[i * n + k] = f;
                if f.norm_sqr() != 0.0 {
                    let row = &mut lu[i * n + k + 1..i * n + n];
                    for (rj, pj) in row.iter_mut().zip(&prow[k + 1..n]) {
                        *rj -= f * pj;
                    }
                }
            }
        }
        Ok(DenseLu { n, lu, piv })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk.norm_sqr() != 0.0 {
                for i in k + 1..n {
                    x[i] -= self.lu[i * n + k] * xk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Arnoldi factorization `A V_m = V_{m+1} H̃_m` starting from `v0`
/// (normalized internally). Returns `(V, H)` with `V` of length ≤ m+1 and
/// `H` of shape `(m+1)×m`; stops early on breakdown.
pub fn arnoldi<F>(op: F, v0: &[C64], m: usize) -> (Vec<Vec<C64>>, Vec<Vec<C64>>)
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let mut v0 = v0.to_vec();
    let n0 = norm(&v0);
    for x in v0.iter_mut() {
        *x /= n0;
    }
    let mut v = vec![v0];
    let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
    for j in 0..m {
        let mut w = op(&v[j]);
        for (i, vi) in v.iter().enumerate() {
            let hij = dot(vi, &w);
            h[i][j] = hij;
            axpy(&mut w, -hij, vi);
        }
        // one reorthogonalization pass for stability
        for (i, vi) in v.iter().enumerate() {
            let corr = dot(vi, &w);
            h[i][j] += corr;
            axpy(&mut w, -corr, vi);
        }
        let wn = norm(&w);
        h[j + 1][j] = C64::new(wn, 0.0);
        if wn < 1e-12 {
            break;
        }
        for x in w.iter_mut() {
            *x /= wn;
        }
        v.push(w);
    }
    (v, h)
}
