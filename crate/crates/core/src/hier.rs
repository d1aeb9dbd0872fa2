//! Spatial-temporal hierarchical blocked convolution.
//!
//! Offsets are split into nested boxes `M_K ⊂ … ⊂ M_0`. The innermost box
//! `M_K` is the smallest one holding every offset with a non-zero lag-1
//! kernel; each outer box doubles the half-widths, truncated at the lattice
//! size. The shell `M_k \ M_{k+1}` only interacts over the lag band
//! `[s_k, e_k]` fixed by its distance bounds, so level `k` is a four-level
//! Toeplitz product (three spatial levels, one temporal) that consumes the
//! latest block of `s_k` currents every `s_k` steps and scatters into the
//! pending history of the next `e_k` steps.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{lag_band, lag_count, pair_index, InteractionKernel, PAIR_ORDER};
use crate::march::{EngineKind, HistoryEngine, PendingSlot, Ring};
use crate::toeplitz::{gather_add, scatter, Level, ToeplitzPlan};

/// Offset box and lag band of one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelGeometry {
    /// Box half-widths `(U_k, V_k, W_k)`.
    pub half: [usize; 3],
    /// Half-widths of the excluded inner box `M_{k+1}`.
    pub inner: Option<[usize; 3]>,
    /// First lag `s_k`; also the block width and firing cadence.
    pub s: usize,
    /// Last lag `e_k`.
    pub e: usize,
}

impl LevelGeometry {
    /// Whether a non-negative offset lies in this level's shell.
    pub fn contains(&self, d: [usize; 3]) -> bool {
        (0..3).all(|a| d[a] <= self.half[a]) && self.inner.is_none_or(|i| (0..3).any(|a| d[a] > i[a]))
    }

    pub fn block(&self) -> usize {
        self.s
    }
}

/// Level boxes and bands of a kernel, outermost (`k = 0`) first.
pub fn level_geometry(kernel: &InteractionKernel) -> Vec<LevelGeometry> {
    geometry_with(kernel.dims, |d| kernel.band(d))
}

/// As [`level_geometry`] for a lattice with normalized voxel edges `h`,
/// without assembling a kernel.
pub fn level_geometry_for(dims: [usize; 3], h: [f64; 3]) -> Vec<LevelGeometry> {
    let ell = lag_count(dims, h);
    geometry_with(dims, |d| lag_band(d.map(|x| x as i64), h, ell))
}

fn geometry_with(dims: [usize; 3], band: impl Fn([usize; 3]) -> [usize; 2]) -> Vec<LevelGeometry> {
    let octants = || {
        (0..dims[2]).flat_map(move |w| (0..dims[1]).flat_map(move |v| (0..dims[0]).map(move |u| [u, v, w])))
    };
    let mut inner = [0usize; 3];
    for d in octants() {
        let b = band(d);
        if b[0] <= 1 && 1 <= b[1] {
            for a in 0..3 {
                inner[a] = inner[a].max(d[a]);
            }
        }
    }
    let mut boxes = vec![inner];
    loop {
        let last = *boxes.last().unwrap();
        let next = [0, 1, 2].map(|a| (2 * last[a]).min(dims[a] - 1));
        if next == last {
            break;
        }
        boxes.push(next);
    }
    // boxes run inner → outer; level K is boxes[0]
    let mut levels = Vec::new();
    for (i, &half) in boxes.iter().enumerate() {
        let inner = (i > 0).then(|| boxes[i - 1]);
        let mut geo = LevelGeometry { half, inner, s: usize::MAX, e: 0 };
        let (mut lo, mut hi) = (usize::MAX, 0);
        for d in octants().filter(|&d| geo.contains(d)) {
            let b = band(d);
            let b0 = b[0].max(1);
            if b0 <= b[1] {
                lo = lo.min(b0);
                hi = hi.max(b[1]);
            }
        }
        if lo <= hi {
            geo.s = lo;
            geo.e = hi;
            levels.push(geo);
        }
    }
    levels.reverse();
    levels
}

/// One level with its embedded four-level Toeplitz operator.
pub struct HierLevel {
    pub geometry: LevelGeometry,
    plan: ToeplitzPlan<f64>,
}

impl std::fmt::Debug for HierLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HierLevel").field("geometry", &self.geometry).field("plan", &self.plan).finish()
    }
}

/// Reusable transform buffers shared by all levels.
#[derive(Debug, Default)]
pub struct FireWorkspace {
    x: Vec<f64>,
    buf: Vec<Complex64>,
    acc: [Vec<Complex64>; 3],
}

impl HierLevel {
    /// Circulant lengths `[N_u, N_v, N_w, N_t]`.
    pub fn plan_dims(&self) -> Vec<usize> {
        self.plan.levels().iter().map(|l| l.n).collect()
    }

    /// Bytes of the six generator spectra.
    pub fn spectra_bytes(&self) -> usize {
        6 * self.plan.fft().len() * 16
    }

    /// Contributions of the block `J_{t−b+1} … J_t` to steps `t+1 … t+e`,
    /// one component-major vector per target step.
    pub fn fire(&self, t: usize, block: &[&[f64]], ws: &mut FireWorkspace) -> Result<Vec<Vec<f64>>> {
        let b = self.geometry.block();
        if t == 0 || !t.is_multiple_of(b) {
            return Err(Error::March { step: t, reason: format!("level with cadence {b} fired out of schedule") });
        }
        if block.len() != b {
            return Err(Error::Dimension { expected: b, got: block.len() });
        }
        let m3 = block[0].len();
        let m = m3 / 3;
        let levels = self.plan.levels();
        let ext_in: Vec<usize> = levels.iter().map(|l| l.n_col).collect();
        let ext_out: Vec<usize> = levels.iter().map(|l| l.n_row).collect();
        let fft = self.plan.fft();
        let n = fft.len();
        let spectra = self.plan.spectra();
        for acc in ws.acc.iter_mut() {
            acc.clear();
            acc.resize(n, Complex64::default());
        }
        for a in 0..3 {
            ws.x.clear();
            for j in block {
                ws.x.extend_from_slice(&j[a * m..(a + 1) * m]);
            }
            ws.buf.clear();
            ws.buf.resize(n, Complex64::default());
            scatter(&ws.x, &ext_in, fft.dims(), &mut ws.buf);
            fft.forward(&mut ws.buf);
            for (beta, acc) in ws.acc.iter_mut().enumerate() {
                let s = &spectra[pair_index(beta, a)];
                for ((o, g), x) in acc.iter_mut().zip(s).zip(&ws.buf) {
                    *o += g * x;
                }
            }
        }
        let e = self.geometry.e;
        let mut out = vec![vec![0.0; m3]; e];
        let scale = 1.0 / n as f64;
        for (beta, acc) in ws.acc.iter_mut().enumerate() {
            fft.inverse(acc);
            ws.x.clear();
            ws.x.resize(e * m, 0.0);
            gather_add(acc, fft.dims(), &ext_out, scale, &mut ws.x);
            for (o, y) in out.iter_mut().zip(ws.x.chunks(m)) {
                o[beta * m..(beta + 1) * m].copy_from_slice(y);
            }
        }
        Ok(out)
    }
}

/// Level decomposition of a kernel with its Toeplitz plans.
#[derive(Debug)]
pub struct LevelPlan {
    pub dims: [usize; 3],
    pub ell: usize,
    /// Outermost level first; the last level fires every step.
    pub levels: Vec<HierLevel>,
}

pub fn plan_levels(kernel: &InteractionKernel) -> Result<LevelPlan> {
    let dims = kernel.dims;
    let mut levels = Vec::new();
    for geo in level_geometry(kernel) {
        let b = geo.block();
        let mut lv: Vec<Level> =
            (0..3).map(|a| Level::banded(dims[a], dims[a], -(geo.half[a] as i64), geo.half[a] as i64)).collect();
        lv.push(Level::banded(geo.e, b, 0, (geo.e - b) as i64));
        let blocks = (0..3).map(|x| (0..3).map(|y| Some(pair_index(x, y))).collect()).collect();
        let plan = ToeplitzPlan::embed(&lv, blocks, 6, |g, o| {
            let d = [o[0], o[1], o[2]];
            if !geo.contains(d.map(|x| x.unsigned_abs() as usize)) {
                return 0.0;
            }
            let lag = (o[3] + b as i64) as usize;
            if lag < geo.s || lag > geo.e {
                return 0.0;
            }
            let (beta, alpha) = PAIR_ORDER[g];
            kernel.get(beta, alpha, d, lag)
        })?;
        levels.push(HierLevel { geometry: geo, plan });
    }
    Ok(LevelPlan { dims, ell: kernel.ell, levels })
}

impl LevelPlan {
    /// Longest pending horizon `max e_k`.
    pub fn horizon(&self) -> usize {
        self.levels.iter().map(|l| l.geometry.e).max().unwrap_or(0)
    }

    /// Largest block width.
    pub fn max_block(&self) -> usize {
        self.levels.iter().map(|l| l.geometry.block()).max().unwrap_or(1)
    }

    /// Predicted bytes: spectra, pending slots and the largest firing workspace.
    pub fn memory_bytes(&self) -> usize {
        let m3 = 3 * self.dims.iter().product::<usize>();
        let spectra: usize = self.levels.iter().map(HierLevel::spectra_bytes).sum();
        let work = self.levels.iter().map(|l| 4 * 16 * l.plan.fft().len()).max().unwrap_or(0);
        spectra + work + (self.horizon() + 1) * m3 * 8
    }

    /// Human-readable level table.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid {}x{}x{}  lags {}  levels {}", self.dims[0], self.dims[1], self.dims[2], self.ell, self.levels.len());
        let _ = writeln!(s, "{:>5} {:>14} {:>14} {:>10} {:>6} {:>22} {:>12}", "level", "half-widths", "inner", "lags", "block", "plan dims", "spectra MiB");
        for (k, l) in self.levels.iter().enumerate() {
            let g = &l.geometry;
            let inner = g.inner.map_or("-".to_string(), |i| format!("{:?}", i));
            let _ = writeln!(
                s,
                "{:>5} {:>14} {:>14} {:>10} {:>6} {:>22} {:>12.2}",
                k,
                format!("{:?}", g.half),
                inner,
                format!("[{},{}]", g.s, g.e),
                g.block(),
                format!("{:?}", l.plan_dims()),
                l.spectra_bytes() as f64 / (1 << 20) as f64
            );
        }
        let _ = writeln!(s, "predicted memory {:.1} MiB", self.memory_bytes() as f64 / (1 << 20) as f64);
        s
    }
}

/// History engine driven by a [`LevelPlan`].
pub struct HierEngine {
    plan: LevelPlan,
    /// Slot `T mod P` accumulates the history of target step `T`.
    pending: Vec<Vec<f64>>,
    latest: usize,
    ws: FireWorkspace,
}

impl std::fmt::Debug for HierEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HierEngine").field("levels", &self.plan.levels.len()).field("latest", &self.latest).finish()
    }
}

impl HierEngine {
    pub fn new(kernel: &Arc<InteractionKernel>) -> Result<Self> {
        let plan = plan_levels(kernel)?;
        let m3 = 3 * kernel.voxels();
        let slots = plan.horizon() + 1;
        Ok(HierEngine { pending: vec![vec![0.0; m3]; slots], plan, latest: 0, ws: FireWorkspace::default() })
    }

    pub fn plan(&self) -> &LevelPlan {
        &self.plan
    }
}

impl HistoryEngine for HierEngine {
    fn kind(&self) -> EngineKind {
        EngineKind::Hierarchical
    }

    fn history(&mut self, n: usize, _ring: &Ring, out: &mut [f64]) -> Result<()> {
        let p = self.pending.len();
        let slot = &mut self.pending[n % p];
        out.copy_from_slice(slot);
        slot.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }

    fn absorb(&mut self, t: usize, ring: &Ring) -> Result<()> {
        let p = self.pending.len();
        for level in &self.plan.levels {
            let b = level.geometry.block();
            if !t.is_multiple_of(b) {
                continue;
            }
            let block: Vec<&[f64]> = (t + 1 - b..=t)
                .map(|s| ring.get(s).ok_or_else(|| Error::March { step: t, reason: format!("current {s} evicted") }))
                .collect::<Result<_>>()?;
            let contrib = level.fire(t, &block, &mut self.ws)?;
            for (i, c) in contrib.iter().enumerate() {
                let target = t + 1 + i;
                debug_assert!(target > t);
                for (o, x) in self.pending[target % p].iter_mut().zip(c) {
                    *o += x;
                }
            }
        }
        self.latest = t;
        Ok(())
    }

    fn pending(&self) -> Vec<PendingSlot> {
        let p = self.pending.len();
        (self.latest + 1..self.latest + p).map(|t| (t, self.pending[t % p].clone())).collect()
    }

    fn restore(&mut self, n: usize, _ring: &Ring, pending: Vec<PendingSlot>) -> Result<()> {
        let p = self.pending.len();
        for slot in self.pending.iter_mut() {
            slot.iter_mut().for_each(|v| *v = 0.0);
        }
        for (t, v) in pending {
            if t <= n || t >= n + p {
                return Err(Error::Format(format!("pending slot for step {t} outside the horizon after step {n}")));
            }
            if v.len() != self.pending[t % p].len() {
                return Err(Error::Dimension { expected: self.pending[t % p].len(), got: v.len() });
            }
            self.pending[t % p].copy_from_slice(&v);
        }
        self.latest = n;
        Ok(())
    }

    fn ring_capacity(&self) -> usize {
        self.plan.max_block()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_from_lag_one_reach() {
        let g = level_geometry_for([16; 3], [1.0; 3]);
        let halves: Vec<usize> = g.iter().map(|l| l.half[0]).collect();
        assert_eq!(halves, vec![15, 8, 4, 2]);
        let last = g.last().unwrap();
        assert_eq!((last.s, last.block()), (1, 1));
        assert!(last.inner.is_none());
    }

    #[test]
    fn tiny_grid_is_one_level() {
        let g = level_geometry_for([2; 3], [1.0; 3]);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].half, [1; 3]);
    }

    #[test]
    fn level_count_grows_logarithmically() {
        for n in [4usize, 8, 16, 32, 64] {
            let k = level_geometry_for([n; 3], [1.0; 3]).len();
            assert!(k <= (n as f64).log2().ceil() as usize + 1, "{n}: {k}");
        }
    }

    #[test]
    fn shells_partition_the_lag_support() {
        for dims in [[12, 12, 12], [9, 5, 3], [16, 2, 7], [1, 1, 6]] {
            for h in [[1.0; 3], [0.5, 0.5, 0.5], [2.0, 1.0, 1.0]] {
                let levels = level_geometry_for(dims, h);
                let ell = lag_count(dims, h);
                for w in 0..dims[2] {
                    for v in 0..dims[1] {
                        for u in 0..dims[0] {
                            let d = [u, v, w];
                            let b = lag_band(d.map(|x| x as i64), h, ell);
                            for lag in b[0].max(1)..=b[1] {
                                let owners = levels.iter().filter(|l| l.contains(d) && lag >= l.s && lag <= l.e).count();
                                assert_eq!(owners, 1, "{dims:?} {h:?} {d:?} lag {lag}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fired_impulse_reaches_only_its_shell_and_band() {
        use crate::grid::VoxelGrid;
        use crate::kernel::{assemble_kernel, QuadratureSpec};
        let g = VoxelGrid::empty([8, 4, 3], [0.01; 3]);
        let k = assemble_kernel(&g, 0.01 / crate::C0, QuadratureSpec::default()).unwrap();
        let plan = plan_levels(&k).unwrap();
        let m = k.voxels();
        let coords = |i: usize| [i % 8, (i / 8) % 4, i / 32].map(|x| x as i64);
        let mut ws = FireWorkspace::default();
        for level in &plan.levels {
            let geo = level.geometry;
            let b = geo.block();
            let t = 3 * b;
            let src = 1 + 8 * 2;
            for slot in [0, b - 1] {
                for alpha in 0..3 {
                    let mut block = vec![vec![0.0; 3 * m]; b];
                    block[slot][alpha * m + src] = 1.0;
                    let refs: Vec<&[f64]> = block.iter().map(Vec::as_slice).collect();
                    let out = level.fire(t, &refs, &mut ws).unwrap();
                    assert_eq!(out.len(), geo.e);
                    let from = t - b + 1 + slot;
                    for (q, y) in out.iter().enumerate() {
                        let lag = t + q + 1 - from;
                        for r in 0..m {
                            let d = [0, 1, 2].map(|a| coords(r)[a] - coords(src)[a]);
                            let inside = geo.contains(d.map(|x| x.unsigned_abs() as usize)) && lag >= geo.s && lag <= geo.e;
                            for beta in 0..3 {
                                let want = if inside { k.get(beta, alpha, d, lag) } else { 0.0 };
                                let got = y[beta * m + r];
                                assert!((got - want).abs() < 1e-13, "level s={} lag {lag} {d:?}: {got} vs {want}", geo.s);
                            }
                        }
                    }
                }
            }
            if b > 1 {
                let block = vec![vec![0.0; 3 * m]; b];
                let refs: Vec<&[f64]> = block.iter().map(Vec::as_slice).collect();
                assert!(matches!(level.fire(t + 1, &refs, &mut ws), Err(Error::March { .. })));
            }
            assert!(level.fire(0, &[], &mut ws).is_err());
        }
    }
}
