//! Multi-level block-Toeplitz matrix-vector products by circulant embedding.
//!
//! A level with `n_row` rows and `n_col` columns holds the generator values
//! for offsets `i − j ∈ [−(n_col−1), n_row−1]`. Embedding into a circulant of
//! length `N ≥ n_row + n_col − 1` places the non-negative offsets first and
//! the negative offsets wrapped at the end; the product then becomes a
//! multi-dimensional circular convolution evaluated with FFTs. A banded level
//! whose generator vanishes outside `[lo, hi]` only needs
//! `N ≥ max(n_row − lo, hi + n_col)`. Level 0 is the fastest-varying index
//! of the flattened vectors.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rows, columns, generator support and circulant length of one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Level {
    pub n_row: usize,
    pub n_col: usize,
    /// Smallest offset `i − j` with a non-zero generator.
    pub lo: i64,
    /// Largest such offset.
    pub hi: i64,
    pub n: usize,
}

impl Level {
    /// Full support with the minimal circulant length `n_row + n_col − 1`.
    pub fn exact(n_row: usize, n_col: usize) -> Self {
        let mut l = Self::banded(n_row, n_col, i64::MIN, i64::MAX);
        l.n = l.min_len();
        l
    }

    /// Full support, circulant length padded to the next 5-smooth size.
    pub fn padded(n_row: usize, n_col: usize) -> Self {
        Self::banded(n_row, n_col, i64::MIN, i64::MAX)
    }

    /// Generator support `[lo, hi]` (clipped to the valid offsets), padded
    /// circulant length.
    pub fn banded(n_row: usize, n_col: usize, lo: i64, hi: i64) -> Self {
        let lo = lo.max(1 - n_col as i64);
        let hi = hi.min(n_row as i64 - 1);
        let mut l = Level { n_row, n_col, lo, hi, n: 0 };
        l.n = smooth_size(l.min_len());
        l
    }

    /// Shortest circulant free of wrap-around for this support.
    pub fn min_len(&self) -> usize {
        if self.hi < self.lo {
            return 1;
        }
        (self.n_row as i64 - self.lo).max(self.hi + self.n_col as i64).max(1) as usize
    }

    /// Generator offsets `lo ..= hi`.
    pub fn offsets(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }
}

/// Smallest `2^a 3^b 5^c ≥ n`.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Separable N-dimensional complex FFT, axis 0 fastest.
pub struct NdFft<T: Real> {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> std::fmt::Debug for NdFft<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdFft").field("dims", &self.dims).finish()
    }
}

impl<T: Real> NdFft<T> {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        NdFft {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.forward);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex<T>], plans: &[Arc<dyn Fft<T>>]) {
        debug_assert_eq!(data.len(), self.len());
        let mut stride = 1;
        let mut line = Vec::new();
        for (axis, &n) in self.dims.iter().enumerate() {
            if n > 1 {
                let plan = &plans[axis];
                if stride == 1 {
                    plan.process(data);
                } else {
                    let block = n * stride;
                    line.resize(block, Complex::default());
                    for chunk in data.chunks_mut(block) {
                        for i in 0..stride {
                            for j in 0..n {
                                line[i * n + j] = chunk[j * stride + i];
                            }
                        }
                        plan.process(&mut line);
                        for i in 0..stride {
                            for j in 0..n {
                                chunk[j * stride + i] = line[i * n + j];
                            }
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

/// Flattened index of per-level coordinates, level 0 fastest.
fn flat(coords: &[usize], dims: &[usize]) -> usize {
    coords.iter().zip(dims).rev().fold(0, |acc, (c, d)| acc * d + c)
}

/// Visit every multi-index of `extents`, level 0 fastest.
fn for_each_index(extents: &[usize], mut f: impl FnMut(&[usize])) {
    if extents.iter().any(|&e| e == 0) {
        return;
    }
    let mut idx = vec![0; extents.len()];
    loop {
        f(&idx);
        let mut a = 0;
        loop {
            if a == extents.len() {
                return;
            }
            idx[a] += 1;
            if idx[a] < extents[a] {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Spectra of an embedded multi-level block-Toeplitz operator.
///
/// `blocks[β][α]` names the generator used for output component `β` and
/// input component `α`, so symmetric block structures share spectra.
pub struct ToeplitzPlan<T: Real> {
    levels: Vec<Level>,
    fft: Arc<NdFft<T>>,
    spectra: Vec<Vec<Complex<T>>>,
    blocks: Vec<Vec<Option<usize>>>,
}

impl<T: Real> std::fmt::Debug for ToeplitzPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzPlan").field("levels", &self.levels).field("generators", &self.spectra.len()).finish()
    }
}

/// Caller-owned buffers for [`ToeplitzPlan::matvec`].
#[derive(Debug, Default)]
pub struct Workspace<T: Real> {
    inputs: Vec<Vec<Complex<T>>>,
    acc: Vec<Vec<Complex<T>>>,
}

impl<T: Real> ToeplitzPlan<T> {
    /// Embed generators `gen(g, offsets)` for `g < n_gen`, with one offset per
    /// level in `Level::offsets()`.
    pub fn embed(
        levels: &[Level],
        blocks: Vec<Vec<Option<usize>>>,
        n_gen: usize,
        gen: impl Fn(usize, &[i64]) -> T,
    ) -> Result<Self> {
        let dims: Vec<usize> = levels.iter().map(|l| l.n).collect();
        Self::embed_with(levels, Arc::new(NdFft::new(&dims)), blocks, n_gen, gen)
    }

    /// As [`ToeplitzPlan::embed`], reusing transforms shared with other plans.
    pub fn embed_with(
        levels: &[Level],
        fft: Arc<NdFft<T>>,
        blocks: Vec<Vec<Option<usize>>>,
        n_gen: usize,
        gen: impl Fn(usize, &[i64]) -> T,
    ) -> Result<Self> {
        validate_levels(levels)?;
        if fft.dims() != levels.iter().map(|l| l.n).collect::<Vec<_>>().as_slice() {
            return Err(Error::Config("transform shape does not match levels".into()));
        }
        let extents: Vec<usize> = levels.iter().map(|l| (l.hi - l.lo + 1).max(0) as usize).collect();
        let mut spectra = Vec::with_capacity(n_gen);
        let mut offs = vec![0i64; levels.len()];
        let mut pos = vec![0usize; levels.len()];
        for g in 0..n_gen {
            let mut col = vec![Complex::default(); fft.len()];
            for_each_index(&extents, |idx| {
                for (a, l) in levels.iter().enumerate() {
                    let o = idx[a] as i64 + l.lo;
                    offs[a] = o;
                    pos[a] = if o >= 0 { o as usize } else { (l.n as i64 + o) as usize };
                }
                col[flat(&pos, fft.dims())] = Complex::new(gen(g, &offs), T::zero());
            });
            fft.forward(&mut col);
            spectra.push(col);
        }
        Ok(ToeplitzPlan { levels: levels.to_vec(), fft, spectra, blocks })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn fft(&self) -> &Arc<NdFft<T>> {
        &self.fft
    }

    pub fn spectra(&self) -> &[Vec<Complex<T>>] {
        &self.spectra
    }

    pub fn n_in(&self) -> usize {
        self.blocks.first().map_or(0, |r| r.len())
    }

    pub fn n_out(&self) -> usize {
        self.blocks.len()
    }

    pub fn col_len(&self) -> usize {
        self.levels.iter().map(|l| l.n_col).product()
    }

    pub fn row_len(&self) -> usize {
        self.levels.iter().map(|l| l.n_row).product()
    }

    /// Zero-pad one input component into the circulant shape and transform.
    pub fn forward_input(&self, x: &[T], out: &mut Vec<Complex<T>>) {
        out.clear();
        out.resize(self.fft.len(), Complex::default());
        let ext: Vec<usize> = self.levels.iter().map(|l| l.n_col).collect();
        scatter(x, &ext, self.fft.dims(), out);
        self.fft.forward(out);
    }

    /// `acc[β] += Σ_α Ĝ[β][α] · x̂[α]` point-wise.
    pub fn accumulate(&self, inputs: &[Vec<Complex<T>>], acc: &mut [Vec<Complex<T>>]) {
        for (b, row) in self.blocks.iter().enumerate() {
            for (a, g) in row.iter().enumerate() {
                if let Some(g) = g {
                    for ((o, s), x) in acc[b].iter_mut().zip(&self.spectra[*g]).zip(&inputs[a]) {
                        *o += *s * *x;
                    }
                }
            }
        }
    }

    /// Inverse-transform an accumulator and add the first `n_row` entries per
    /// level into `y`.
    pub fn inverse_output(&self, acc: &mut [Complex<T>], y: &mut [T]) {
        self.fft.inverse(acc);
        let scale = T::one() / T::of(self.fft.len() as f64);
        let ext: Vec<usize> = self.levels.iter().map(|l| l.n_row).collect();
        gather_add(acc, self.fft.dims(), &ext, scale, y);
    }

    /// `y[β] = Σ_α T^{βα} x[α]`.
    pub fn matvec(&self, x: &[Vec<T>], ws: &mut Workspace<T>) -> Result<Vec<Vec<T>>> {
        if x.len() != self.n_in() {
            return Err(Error::Dimension { expected: self.n_in(), got: x.len() });
        }
        for xa in x {
            if xa.len() != self.col_len() {
                return Err(Error::Dimension { expected: self.col_len(), got: xa.len() });
            }
        }
        ws.inputs.resize_with(x.len(), Vec::new);
        for (xa, buf) in x.iter().zip(ws.inputs.iter_mut()) {
            self.forward_input(xa, buf);
        }
        ws.acc.resize_with(self.n_out(), Vec::new);
        for a in ws.acc.iter_mut() {
            a.clear();
            a.resize(self.fft.len(), Complex::default());
        }
        self.accumulate(&ws.inputs, &mut ws.acc);
        let mut y = vec![vec![T::zero(); self.row_len()]; self.n_out()];
        for (acc, yb) in ws.acc.iter_mut().zip(y.iter_mut()) {
            self.inverse_output(acc, yb);
        }
        Ok(y)
    }
}

fn validate_levels(levels: &[Level]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("Toeplitz plan needs at least one level".into()));
    }
    for l in levels {
        if l.n_row == 0 || l.n_col == 0 {
            return Err(Error::Config(format!("zero-sized Toeplitz level {l:?}")));
        }
        if l.n < l.min_len() {
            return Err(Error::Config(format!("circulant length too short in {l:?}")));
        }
    }
    Ok(())
}

/// Copy a dense array of shape `ext` into the corner of a `dims` array.
pub(crate) fn scatter<T: Real>(x: &[T], ext: &[usize], dims: &[usize], out: &mut [Complex<T>]) {
    let run = ext[0];
    let rows: usize = ext[1..].iter().product();
    let mut idx = vec![0usize; ext.len()];
    for r in 0..rows {
        let mut rem = r;
        for a in 1..ext.len() {
            idx[a] = rem % ext[a];
            rem /= ext[a];
        }
        idx[0] = 0;
        let dst = flat(&idx, dims);
        for i in 0..run {
            out[dst + i] = Complex::new(x[r * run + i], T::zero());
        }
    }
}

/// Add `scale·Re(data)` from the corner of a `dims` array into `y` (shape `ext`).
pub(crate) fn gather_add<T: Real>(data: &[Complex<T>], dims: &[usize], ext: &[usize], scale: T, y: &mut [T]) {
    let run = ext[0];
    let rows: usize = ext[1..].iter().product();
    let mut idx = vec![0usize; ext.len()];
    for r in 0..rows {
        let mut rem = r;
        for a in 1..ext.len() {
            idx[a] = rem % ext[a];
            rem /= ext[a];
        }
        idx[0] = 0;
        let src = flat(&idx, dims);
        for i in 0..run {
            y[r * run + i] += data[src + i].re * scale;
        }
    }
}
