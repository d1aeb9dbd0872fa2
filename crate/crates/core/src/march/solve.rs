//! Lag-0 solve `Z₀ J = b`.
//!
//! Rows of background voxels reduce to `id₀·J = b`. On contrast voxels the
//! system is symmetrized as `(id₀ I − C^{½} S̃₀ C^{½}) y = C^{−½} b`,
//! `J = C^{½} y`, and factorized once with a sparse `LDLᵀ` in geometric
//! nested-dissection order. A Jacobi-preconditioned conjugate-gradient
//! fallback covers grids whose factor would not fit the memory budget.

use crate::error::{Error, Result};
use crate::kernel::InteractionKernel;
use crate::scalar::Real;

/// Compressed sparse column matrix with both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix<T> {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CscMatrix<T> {
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..self.n {
            let xj = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let t = self.get(j, i);
                worst = worst.max((self.values[p] - t).abs());
            }
        }
        worst
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(p) => self.values[self.col_ptr[j] + p],
            Err(_) => T::zero(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }
}

/// Sparse `LDLᵀ` factor of a symmetric matrix under a fill-reducing permutation.
#[derive(Clone, Debug)]
pub struct LdlFactor<T> {
    perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    d: Vec<T>,
}

/// Elimination tree and column counts of `P A Pᵀ`.
fn ldl_symbolic<T>(a: &CscMatrix<T>, perm: &[usize], pinv: &[usize]) -> (Vec<usize>, Vec<usize>) {
    const NONE: usize = usize::MAX;
    let n = a.n;
    let mut parent = vec![NONE; n];
    let mut flag = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        let kk = perm[k];
        for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
            let mut i = pinv[a.row_idx[p]];
            if i < k {
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
    }
    let mut l_ptr = vec![0usize; n + 1];
    for k in 0..n {
        l_ptr[k + 1] = l_ptr[k] + lnz[k];
    }
    (parent, l_ptr)
}

impl<T: Real> LdlFactor<T> {
    /// Predicted factor size without numeric work.
    pub fn symbolic_nnz(a: &CscMatrix<T>, perm: &[usize]) -> usize {
        let pinv = invert(perm);
        let (_, l_ptr) = ldl_symbolic(a, perm, &pinv);
        l_ptr[a.n]
    }

    /// Up-looking factorization; fails on a zero pivot.
    pub fn factorize(a: &CscMatrix<T>, perm: Vec<usize>) -> Result<Self> {
        const NONE: usize = usize::MAX;
        let n = a.n;
        let pinv = invert(&perm);
        let (parent, l_ptr) = ldl_symbolic(a, &perm, &pinv);
        let nnz = l_ptr[n];
        let mut l_idx = vec![0usize; nnz];
        let mut l_val = vec![T::zero(); nnz];
        let mut d = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let kk = perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let mut i = pinv[a.row_idx[p]];
                if i <= k {
                    y[i] += a.values[p];
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = T::zero();
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = T::zero();
                let p2 = l_ptr[i] + lnz[i];
                for p in l_ptr[i]..p2 {
                    let r = l_idx[p];
                    y[r] -= l_val[p] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                l_idx[p2] = k;
                l_val[p2] = lki;
                lnz[i] += 1;
            }
            if d[k] == T::zero() || !d[k].is_finite() {
                return Err(Error::Singular(format!("zero pivot at elimination step {k}")));
            }
        }
        Ok(LdlFactor { perm, l_ptr, l_idx, l_val, d })
    }

    pub fn nnz(&self) -> usize {
        self.l_idx.len()
    }

    /// Number of negative pivots, the inertia count of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < T::zero()).count()
    }

    pub fn solve_in_place(&self, b: &mut [T], work: &mut Vec<T>) {
        let n = self.d.len();
        work.resize(n, T::zero());
        for k in 0..n {
            work[k] = b[self.perm[k]];
        }
        for j in 0..n {
            let xj = work[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                work[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..n {
            work[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = work[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                s -= self.l_val[p] * work[self.l_idx[p]];
            }
            work[j] = s;
        }
        for k in 0..n {
            b[self.perm[k]] = work[k];
        }
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Nested-dissection order of lattice points: split the bounding box across
/// its longest axis, order both halves recursively, then the separator slab
/// of thickness `reach` along that axis.
pub fn nested_dissection(points: &[[usize; 3]], reach: [usize; 3]) -> Vec<usize> {
    let mut order = Vec::with_capacity(points.len());
    let idx: Vec<usize> = (0..points.len()).collect();
    dissect(points, idx, reach, &mut order);
    order
}

fn dissect(points: &[[usize; 3]], idx: Vec<usize>, reach: [usize; 3], order: &mut Vec<usize>) {
    if idx.len() <= 16 {
        order.extend(idx);
        return;
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in &idx {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3).max_by_key(|&a| ((hi[a] - lo[a]) / reach[a].max(1), a)).unwrap();
    let span = hi[axis] - lo[axis];
    if span < 2 * reach[axis] + 1 {
        order.extend(idx);
        return;
    }
    let cut = lo[axis] + (span + 1 - reach[axis]) / 2;
    let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
    for i in idx {
        let c = points[i][axis];
        if c < cut {
            left.push(i);
        } else if c >= cut + reach[axis] {
            right.push(i);
        } else {
            sep.push(i);
        }
    }
    dissect(points, left, reach, order);
    dissect(points, right, reach, order);
    order.extend(sep);
}

/// How the lag-0 system is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Sparse `LDLᵀ` when the predicted factor fits, conjugate gradients otherwise.
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug)]
enum Method {
    Direct(LdlFactor<f64>),
    Iterative { tol: f64, max_iter: usize },
}

/// Factorized lag-0 operator.
#[derive(Debug)]
pub struct Z0Solver {
    id0: f64,
    /// Zero-based contrast voxels and their `√C`.
    active: Vec<usize>,
    sqrt_c: Vec<f64>,
    /// Symmetrized operator on active unknowns, index `3·a + α`.
    pub sym: CscMatrix<f64>,
    /// Coupling of background currents into contrast rows: `(row, voxel·3+α, S̃₀)`.
    coupling: Vec<(usize, usize, f64)>,
    method: Method,
    m: usize,
}

/// Largest factor (in stored entries) built by [`SolverKind::Auto`].
pub const DIRECT_NNZ_LIMIT: usize = 60_000_000;

/// Offsets with a non-zero lag-0 kernel.
fn lag0_offsets(kernel: &InteractionKernel) -> Vec<[i64; 3]> {
    let [u, v, w] = kernel.dims.map(|x| x as i64);
    let mut out = Vec::new();
    for dw in -(w - 1)..w {
        for dv in -(v - 1)..v {
            for du in -(u - 1)..u {
                let d = [du, dv, dw];
                if kernel.band(d.map(|x| x.unsigned_abs() as usize))[0] == 0 {
                    out.push(d);
                }
            }
        }
    }
    out
}

impl Z0Solver {
    pub fn new(kernel: &InteractionKernel, kind: SolverKind) -> Result<Self> {
        let dims = kernel.dims;
        let m = kernel.voxels();
        let id0 = kernel.identity[0];
        if id0 == 0.0 {
            return Err(Error::Singular("identity part of lag 0 vanishes".into()));
        }
        let active: Vec<usize> = (0..m).filter(|&i| kernel.contrast[i] != 0.0).collect();
        let sqrt_c: Vec<f64> = active.iter().map(|&i| kernel.contrast[i].sqrt()).collect();
        let mut slot = vec![usize::MAX; m];
        for (a, &i) in active.iter().enumerate() {
            slot[i] = a;
        }
        let coords = |i: usize| [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
        let offsets = lag0_offsets(kernel);
        let n = 3 * active.len();
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut coupling = Vec::new();
        let mut column: Vec<(usize, f64)> = Vec::new();
        // columns in source order; rows are test voxels at source + d
        for (a_src, &src) in active.iter().enumerate() {
            let c = coords(src);
            for alpha in 0..3 {
                column.clear();
                for d in &offsets {
                    let t = [0, 1, 2].map(|x| c[x] as i64 + d[x]);
                    if (0..3).any(|x| t[x] < 0 || t[x] >= dims[x] as i64) {
                        continue;
                    }
                    let tv = t[0] as usize + dims[0] * (t[1] as usize + dims[1] * t[2] as usize);
                    let a_t = slot[tv];
                    if a_t == usize::MAX {
                        continue;
                    }
                    for beta in 0..3 {
                        let s = kernel.get(beta, alpha, *d, 0);
                        let mut v = -sqrt_c[a_t] * s * sqrt_c[a_src];
                        if tv == src && beta == alpha {
                            v += id0;
                        }
                        if v != 0.0 {
                            column.push((3 * a_t + beta, v));
                        }
                    }
                }
                column.sort_by_key(|e| e.0);
                for &(r, v) in &column {
                    row_idx.push(r);
                    values.push(v);
                }
                col_ptr[3 * a_src + alpha + 1] = row_idx.len();
            }
        }
        for src in (0..m).filter(|&i| slot[i] == usize::MAX) {
            let c = coords(src);
            for d in &offsets {
                let t = [0, 1, 2].map(|x| c[x] as i64 + d[x]);
                if (0..3).any(|x| t[x] < 0 || t[x] >= dims[x] as i64) {
                    continue;
                }
                let tv = t[0] as usize + dims[0] * (t[1] as usize + dims[1] * t[2] as usize);
                if slot[tv] == usize::MAX {
                    continue;
                }
                for beta in 0..3 {
                    for alpha in 0..3 {
                        let s = kernel.get(beta, alpha, *d, 0);
                        if s != 0.0 {
                            coupling.push((3 * slot[tv] + beta, 3 * src + alpha, s));
                        }
                    }
                }
            }
        }
        let sym = CscMatrix { n, col_ptr, row_idx, values };

        let reach = kernel.h.map(|h| (1.0 / h).ceil().max(1.0) as usize);
        let points: Vec<[usize; 3]> = active.iter().map(|&i| coords(i)).collect();
        let vox_order = nested_dissection(&points, reach);
        let perm: Vec<usize> = vox_order.iter().flat_map(|&a| [3 * a, 3 * a + 1, 3 * a + 2]).collect();

        let iterative = Method::Iterative { tol: 1e-12, max_iter: 10_000 };
        let method = match kind {
            SolverKind::Iterative => iterative,
            SolverKind::Direct => Method::Direct(LdlFactor::factorize(&sym, perm)?),
            SolverKind::Auto => {
                if n == 0 || LdlFactor::symbolic_nnz(&sym, &perm) <= DIRECT_NNZ_LIMIT {
                    Method::Direct(LdlFactor::factorize(&sym, perm)?)
                } else {
                    iterative
                }
            }
        };
        let solver = Z0Solver { id0, active, sqrt_c, sym, coupling, method, m };
        solver.check()?;
        Ok(solver)
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.method, Method::Direct(_))
    }

    /// Factor entries, or zero for the iterative method.
    pub fn factor_nnz(&self) -> usize {
        match &self.method {
            Method::Direct(f) => f.nnz(),
            Method::Iterative { .. } => 0,
        }
    }

    /// Probe solve on a fixed vector to catch an ill-conditioned factor.
    fn check(&self) -> Result<()> {
        let n = self.sym.n;
        if n == 0 {
            return Ok(());
        }
        let b: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let mut x = b.clone();
        self.solve_sym(&mut x)?;
        let mut r = vec![0.0; n];
        self.sym.matvec(&x, &mut r);
        let err = r.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(err <= 1e-8 * nb) {
            return Err(Error::Singular(format!("lag-0 solve residual {:.3e}", err / nb)));
        }
        Ok(())
    }

    fn solve_sym(&self, x: &mut [f64]) -> Result<()> {
        match &self.method {
            Method::Direct(f) => {
                f.solve_in_place(x, &mut Vec::new());
                Ok(())
            }
            Method::Iterative { tol, max_iter } => {
                let b = x.to_vec();
                conjugate_gradient(&self.sym, &b, x, *tol, *max_iter).map(|_| ())
            }
        }
    }

    /// Solve `Z₀ J = b` in place; `b` and `J` are component-major (`α·M + m`).
    pub fn solve(&self, b: &mut [f64]) -> Result<()> {
        let m = self.m;
        let mut bg = false;
        for i in 0..3 * m {
            let vox = i % m;
            if self.sqrt_c.is_empty() || !self.is_active(vox) {
                b[i] /= self.id0;
                bg |= b[i] != 0.0;
            }
        }
        let mut y = vec![0.0; 3 * self.active.len()];
        for (a, &vox) in self.active.iter().enumerate() {
            for alpha in 0..3 {
                y[3 * a + alpha] = b[alpha * m + vox];
            }
        }
        if bg {
            // −C S̃₀ J_bg moves to the right-hand side of contrast rows
            for &(row, col, s) in &self.coupling {
                let vox = self.active[row / 3];
                let c = self.sqrt_c[row / 3].powi(2);
                y[row] += c * s * b[(col % 3) * m + col / 3];
                let _ = vox;
            }
        }
        for (a, v) in y.chunks_mut(3).enumerate() {
            v.iter_mut().for_each(|x| *x /= self.sqrt_c[a]);
        }
        self.solve_sym(&mut y)?;
        for (a, &vox) in self.active.iter().enumerate() {
            for alpha in 0..3 {
                b[alpha * m + vox] = self.sqrt_c[a] * y[3 * a + alpha];
            }
        }
        Ok(())
    }

    fn is_active(&self, vox: usize) -> bool {
        self.active.binary_search(&vox).is_ok()
    }
}

/// Jacobi-preconditioned conjugate gradients; returns the iteration count.
pub fn conjugate_gradient<T: Real>(
    a: &CscMatrix<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<usize> {
    let n = a.n;
    let diag: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
    if diag.iter().any(|&d| d <= T::zero()) {
        return Err(Error::Singular("non-positive diagonal in conjugate gradients".into()));
    }
    let dot = |p: &[T], q: &[T]| p.iter().zip(q).fold(T::zero(), |s, (a, b)| s + *a * *b);
    let nb = dot(b, b).sqrt();
    if nb == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(0);
    }
    let mut ax = vec![T::zero(); n];
    a.matvec(x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
    let mut z: Vec<T> = r.iter().zip(&diag).map(|(r, d)| *r / *d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol * nb {
            return Ok(it);
        }
        a.matvec(&p, &mut ax);
        let pap = dot(&p, &ax);
        if pap <= T::zero() {
            return Err(Error::Singular("indefinite lag-0 operator in conjugate gradients".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Singular(format!("conjugate gradients did not converge in {max_iter} iterations")))
}
