//! Positive-definite stability analysis, truncation experiments and FIR
//! regularization.
//!
//! The march is stable on the negative real axis when every
//!
//! ```text
//!   D_n = Σ_{j=0}^{n} (−1)^j C(ℓ−j, ℓ−n) Z_j,   n = 0..ℓ
//! ```
//!
//! is positive definite. With `Z_j = id_j I − C S̃_j` and a diagonal contrast,
//! `C^{−½} D_n C^{½} = (Σ c_j id_j) I − C^{½} (Σ c_j S̃_j) C^{½}` is symmetric
//! on the contrast voxels, so definiteness is checked on that form. Rows of
//! background voxels reduce to the scalar `Σ c_j id_j` and are left out.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernel::{pair_index, InteractionKernel, PAIR_ORDER};
use crate::toeplitz::{Level, ToeplitzPlan, Workspace};

/// `(−1)^j C(ℓ−j, ℓ−n)` for `j = 0..=n`, divided by the largest magnitude.
pub fn pdsa_coefficients(ell: usize, n: usize) -> Vec<f64> {
    assert!(n <= ell);
    let ln_binom = |a: usize, b: usize| -> f64 { (1..=b).map(|i| (((a - b + i) as f64) / i as f64).ln()).sum() };
    let logs: Vec<f64> = (0..=n).map(|j| ln_binom(ell - j, ell - n)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().enumerate().map(|(j, l)| if j % 2 == 0 { 1.0 } else { -1.0 } * (l - top).exp()).collect()
}

/// Symmetrized `D_n` restricted to contrast voxels.
pub struct DnOperator<'a> {
    kernel: &'a InteractionKernel,
    /// Zero-based contrast voxels and `√C`.
    active: Vec<usize>,
    sqrt_c: Vec<f64>,
    /// `Σ c_j id_j`.
    pub identity: f64,
    /// Octant table of `Σ c_j S̃_j`, six components per offset.
    combined: Vec<[f64; 6]>,
    scale: f64,
}

fn parity(beta: usize, alpha: usize, d: [i64; 3]) -> f64 {
    let mut s = 1.0;
    for a in 0..3 {
        if d[a] < 0 && ((beta == a) ^ (alpha == a)) {
            s = -s;
        }
    }
    s
}

impl<'a> DnOperator<'a> {
    /// `scale` multiplies every `Z_j`, for invariance checks.
    pub fn new(kernel: &'a InteractionKernel, n: usize, scale: f64) -> Result<Self> {
        if n > kernel.ell {
            return Err(Error::Config(format!("D_{n} requested but the kernel has {} lags", kernel.ell)));
        }
        let coef = pdsa_coefficients(kernel.ell, n);
        let dims = kernel.dims;
        let n_off = dims.iter().product::<usize>();
        let mut combined = vec![[0.0; 6]; n_off];
        for (o, c) in combined.iter_mut().enumerate() {
            let d = [o % dims[0], (o / dims[0]) % dims[1], o / (dims[0] * dims[1])];
            let band = kernel.band(d);
            for j in band[0]..=band[1].min(n) {
                let s = kernel.octant_slice(d, j);
                for p in 0..6 {
                    c[p] += coef[j] * s[p];
                }
            }
        }
        let identity = coef.iter().zip(&kernel.identity).map(|(c, i)| c * i).sum();
        let active: Vec<usize> = (0..kernel.voxels()).filter(|&i| kernel.contrast[i] != 0.0).collect();
        let sqrt_c = active.iter().map(|&i| kernel.contrast[i].sqrt()).collect();
        Ok(DnOperator { kernel, active, sqrt_c, identity, combined, scale })
    }

    pub fn dim(&self) -> usize {
        3 * self.active.len()
    }

    fn coords(&self, i: usize) -> [i64; 3] {
        let d = self.kernel.dims;
        [i % d[0], (i / d[0]) % d[1], i / (d[0] * d[1])].map(|x| x as i64)
    }

    fn combined_get(&self, beta: usize, alpha: usize, d: [i64; 3]) -> f64 {
        let dims = self.kernel.dims;
        let ad = d.map(|x| x.unsigned_abs() as usize);
        let o = ad[0] + dims[0] * (ad[1] + dims[1] * ad[2]);
        parity(beta, alpha, d) * self.combined[o][pair_index(beta, alpha)]
    }

    /// Dense matrix, unknown `3a + α` for the `a`-th contrast voxel.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (p, &i) in self.active.iter().enumerate() {
            let ci = self.coords(i);
            for (q, &j) in self.active.iter().enumerate() {
                let cj = self.coords(j);
                let d = [0, 1, 2].map(|x| ci[x] - cj[x]);
                let w = self.sqrt_c[p] * self.sqrt_c[q];
                for b in 0..3 {
                    for al in 0..3 {
                        let mut v = -w * self.combined_get(b, al, d);
                        if p == q && b == al {
                            v += self.identity;
                        }
                        a[(3 * p + b, 3 * q + al)] = self.scale * v;
                    }
                }
            }
        }
        a
    }

    /// FFT-based product with the three-level Toeplitz form of `Σ c_j S̃_j`.
    pub fn matrix_free(&self) -> Result<MatrixFreeDn<'_, 'a>> {
        let dims = self.kernel.dims;
        let levels = dims.map(|n| Level::padded(n, n));
        let blocks = (0..3).map(|b| (0..3).map(|a| Some(pair_index(b, a))).collect()).collect();
        let plan = ToeplitzPlan::embed(&levels, blocks, 6, |g, o| {
            let (b, a) = PAIR_ORDER[g];
            self.combined_get(b, a, [o[0], o[1], o[2]])
        })?;
        Ok(MatrixFreeDn { op: self, plan, ws: Workspace::default() })
    }
}

pub struct MatrixFreeDn<'o, 'a> {
    op: &'o DnOperator<'a>,
    plan: ToeplitzPlan<f64>,
    ws: Workspace<f64>,
}

impl MatrixFreeDn<'_, '_> {
    pub fn apply(&mut self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let m = self.op.kernel.voxels();
        let mut full = vec![vec![0.0; m]; 3];
        for (p, &i) in self.op.active.iter().enumerate() {
            for a in 0..3 {
                full[a][i] = self.op.sqrt_c[p] * x[3 * p + a];
            }
        }
        let z = self.plan.matvec(&full, &mut self.ws)?;
        for (p, &i) in self.op.active.iter().enumerate() {
            for b in 0..3 {
                let v = self.op.identity * x[3 * p + b] - self.op.sqrt_c[p] * z[b][i];
                y[3 * p + b] = self.op.scale * v;
            }
        }
        Ok(())
    }
}

/// Definiteness outcome of one `D_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    PositiveDefinite,
    Indefinite,
    /// The eigenvalue iteration stopped before deciding.
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdsaMethod {
    Dense,
    MatrixFree,
}

/// Largest `3M` for which dense checks are attempted.
pub const DENSE_LIMIT: usize = 10_000;

#[derive(Clone, Debug)]
pub struct PdsaEntry {
    pub n: usize,
    pub verdict: Verdict,
    /// Smallest eigenvalue estimate of the normalized symmetric `D_n`.
    pub lambda_min: Option<f64>,
    /// Residual bound of `lambda_min` (zero for dense decompositions).
    pub residual: f64,
    pub iterations: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct PdsaReport {
    pub method: PdsaMethod,
    /// Extra positive factor applied to every `Z_j`.
    pub scale: f64,
    pub entries: Vec<PdsaEntry>,
}

impl PdsaReport {
    pub fn render(&self) -> String {
        let mut s = format!("method {:?}  scale {}\n", self.method, self.scale);
        s.push_str("    n  verdict              lambda_min     residual  iterations  seconds\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{:>5}  {:<18} {:>12} {:>12.3e} {:>11} {:>8.3}\n",
                e.n,
                format!("{:?}", e.verdict),
                e.lambda_min.map_or("-".into(), |l| format!("{l:.6e}")),
                e.residual,
                e.iterations,
                e.elapsed.as_secs_f64()
            ));
        }
        s
    }
}

/// Lanczos controls for the matrix-free check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosSpec {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for LanczosSpec {
    fn default() -> Self {
        LanczosSpec { max_iter: 500, rel_tol: 1e-6 }
    }
}

pub fn pdsa_check(kernel: &InteractionKernel, n_list: &[usize], method: PdsaMethod) -> Result<PdsaReport> {
    pdsa_check_with(kernel, n_list, method, 1.0, LanczosSpec::default())
}

pub fn pdsa_check_with(
    kernel: &InteractionKernel,
    n_list: &[usize],
    method: PdsaMethod,
    scale: f64,
    lanczos: LanczosSpec,
) -> Result<PdsaReport> {
    if !(scale > 0.0) {
        return Err(Error::Config("PDSA scale must be positive".into()));
    }
    if method == PdsaMethod::Dense && 3 * kernel.voxels() > DENSE_LIMIT {
        return Err(Error::Config(format!("dense PDSA limited to 3M ≤ {DENSE_LIMIT}")));
    }
    let mut entries = Vec::new();
    for &n in n_list {
        let t = Instant::now();
        let op = DnOperator::new(kernel, n, scale)?;
        let mut entry = if op.dim() == 0 {
            PdsaEntry { n, verdict: Verdict::PositiveDefinite, lambda_min: None, residual: 0.0, iterations: 0, elapsed: Duration::ZERO }
        } else {
            match method {
                PdsaMethod::Dense => dense_entry(n, &op),
                PdsaMethod::MatrixFree => {
                    let mut mf = op.matrix_free()?;
                    let dim = op.dim();
                    let r = smallest_eigenvalue(dim, |x, y| mf.apply(x, y), lanczos)?;
                    PdsaEntry { n, verdict: r.verdict, lambda_min: Some(r.value), residual: r.residual, iterations: r.iterations, elapsed: Duration::ZERO }
                }
            }
        };
        entry.elapsed = t.elapsed();
        entries.push(entry);
    }
    Ok(PdsaReport { method, scale, entries })
}

fn dense_entry(n: usize, op: &DnOperator) -> PdsaEntry {
    let a = op.dense();
    let pd = a.clone().cholesky().is_some();
    let eig = SymmetricEigen::new(a);
    let lambda = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    PdsaEntry {
        n,
        verdict: if pd { Verdict::PositiveDefinite } else { Verdict::Indefinite },
        lambda_min: Some(lambda),
        residual: 0.0,
        iterations: 0,
        elapsed: Duration::ZERO,
    }
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn dense_smallest_eigenvalue(a: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug)]
pub struct EigenEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub verdict: Verdict,
}

/// Lanczos with full reorthogonalization for the smallest eigenvalue.
///
/// A negative Ritz value proves indefiniteness (Ritz values bound the
/// spectrum from inside); positivity is only claimed once the Ritz value
/// minus its residual bound stays positive.
pub fn smallest_eigenvalue(
    n: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    spec: LanczosSpec,
) -> Result<EigenEstimate> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best = EigenEstimate { value: f64::NAN, residual: f64::INFINITY, iterations: 0, verdict: Verdict::Inconclusive };
    let max_iter = spec.max_iter.min(n);
    for it in 0..max_iter {
        apply(&basis[it], &mut w)?;
        let a = dot(&basis[it], &w);
        alpha.push(a);
        for (x, q) in w.iter_mut().zip(&basis[it]) {
            *x -= a * q;
        }
        if it > 0 {
            let b = beta[it - 1];
            for (x, q) in w.iter_mut().zip(&basis[it - 1]) {
                *x -= b * q;
            }
        }
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (x, q) in w.iter_mut().zip(v) {
                    *x -= c * q;
                }
            }
        }
        let b = dot(&w, &w).sqrt();
        let k = alpha.len();
        let last = it + 1 == max_iter;
        if k % 5 == 0 || last || b == 0.0 || k < 5 {
            let mut t = DMatrix::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alpha[i];
                if i + 1 < k {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (imin, &theta) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            let norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let resid = b * eig.eigenvectors[(k - 1, imin)].abs();
            best = EigenEstimate { value: theta, residual: resid, iterations: k, verdict: Verdict::Inconclusive };
            let converged = resid <= spec.rel_tol * norm.max(f64::MIN_POSITIVE) || b == 0.0;
            if converged {
                best.verdict = if theta - resid > 0.0 {
                    Verdict::PositiveDefinite
                } else if theta < 0.0 {
                    Verdict::Indefinite
                } else {
                    Verdict::Inconclusive
                };
                return Ok(best);
            }
        }
        if b == 0.0 {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    if best.value < 0.0 {
        best.verdict = Verdict::Indefinite;
    }
    Ok(best)
}

/// Quantize every stored kernel value to the nearest multiple of `eps`.
pub fn inject_truncation(kernel: &InteractionKernel, eps: f64) -> Result<InteractionKernel> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("truncation step must be positive, got {eps}")));
    }
    let mut out = kernel.clone();
    for v in out.raw_values_mut() {
        // below the spacing of representable values the grid is the identity
        if v.abs() / eps < 4.5e15 {
            *v = (*v / eps).round() * eps;
        }
    }
    Ok(out)
}

/// Coefficients `δ_n` added to the identity part of `Z_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    pub coeffs: Vec<f64>,
}

impl FirFilter {
    /// `Σ (−1)ⁿ δ_n`, the regularization seen by the alternating mode.
    pub fn alternating_sum(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(n, d)| if n % 2 == 0 { *d } else { -*d }).sum()
    }

    /// `|Σ δ_n e^{−jnθ}|`.
    pub fn magnitude(&self, theta: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, d) in self.coeffs.iter().enumerate() {
            re += d * (n as f64 * theta).cos();
            im -= d * (n as f64 * theta).sin();
        }
        re.hypot(im)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

/// Two-, three- or four-tap binomial high-pass filter with `Σ(−1)ⁿδ_n = δ`.
pub fn make_fir(order: usize, delta: f64) -> Result<FirFilter> {
    make_fir_with(order, delta, false)
}

/// As [`make_fir`]; `literal_fir4` keeps `+δ/8` as the last four-tap
/// coefficient, which breaks the alternating-sum constraint.
pub fn make_fir_with(order: usize, delta: f64, literal_fir4: bool) -> Result<FirFilter> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("regularization must be non-negative, got {delta}")));
    }
    let taps: &[f64] = match order {
        2 => &[0.5, -0.5],
        3 => &[0.25, -0.5, 0.25],
        4 if literal_fir4 => &[0.125, -0.375, 0.375, 0.125],
        4 => &[0.125, -0.375, 0.375, -0.125],
        _ => return Err(Error::Config(format!("unsupported filter order {order}; use 2, 3 or 4"))),
    };
    Ok(FirFilter { coeffs: taps.iter().map(|t| t * delta).collect() })
}

/// Add `δ_n` to the identity part of `Z_n`.
pub fn regularize(kernel: &InteractionKernel, filter: &FirFilter) -> Result<InteractionKernel> {
    if filter.order() > kernel.ell + 1 {
        return Err(Error::Config(format!("filter of order {} exceeds {} lags", filter.order(), kernel.ell)));
    }
    let mut out = kernel.clone();
    for (id, d) in out.identity.iter_mut().zip(&filter.coeffs) {
        *id += d;
    }
    Ok(out)
}

/// `δ = 10⁻⁷ M`.
pub fn recommend_delta(m: usize) -> f64 {
    1e-7 * m as f64
}
