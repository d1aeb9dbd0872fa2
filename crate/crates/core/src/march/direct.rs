//! Explicit offset-indexed summation of the history field, the oracle engine.

use std::sync::Arc;

use super::{EngineKind, HistoryEngine, PendingSlot, Ring};
use crate::error::Result;
use crate::kernel::InteractionKernel;

#[derive(Debug)]
pub struct DirectEngine {
    kernel: Arc<InteractionKernel>,
}

impl DirectEngine {
    pub fn new(kernel: Arc<InteractionKernel>) -> Self {
        DirectEngine { kernel }
    }
}

/// Signed offsets `±d` of an octant offset, without duplicates on zero axes.
pub(crate) fn reflections(d: [usize; 3]) -> impl Iterator<Item = [i64; 3]> {
    (0..8u8).filter_map(move |s| {
        let mut out = [0i64; 3];
        for a in 0..3 {
            let neg = s & (1 << a) != 0;
            if neg && d[a] == 0 {
                return None;
            }
            out[a] = if neg { -(d[a] as i64) } else { d[a] as i64 };
        }
        Some(out)
    })
}

/// `out[β] += Σ_α S̃^{βα}_k(d) ⊛ x[α]` over all offsets, component-major.
pub(crate) fn lag_apply(kernel: &InteractionKernel, k: usize, x: &[f64], out: &mut [f64]) {
    let dims = kernel.dims;
    let m = kernel.voxels();
    for dw in 0..dims[2] {
        for dv in 0..dims[1] {
            for du in 0..dims[0] {
                let oct = [du, dv, dw];
                let band = kernel.band(oct);
                if k < band[0] || k > band[1] {
                    continue;
                }
                for d in reflections(oct) {
                    let mut c = [[0.0; 3]; 3];
                    let mut any = false;
                    for (b, row) in c.iter_mut().enumerate() {
                        for (a, v) in row.iter_mut().enumerate() {
                            *v = kernel.get(b, a, d, k);
                            any |= *v != 0.0;
                        }
                    }
                    if any {
                        shifted_block(dims, m, d, &c, x, out);
                    }
                }
            }
        }
    }
}

/// `out[β][r] += Σ_α c[β][α] x[α][r − d]` over the overlap of the lattice
/// with its shift by `d`.
fn shifted_block(dims: [usize; 3], m: usize, d: [i64; 3], c: &[[f64; 3]; 3], x: &[f64], out: &mut [f64]) {
    let range = |a: usize| -> (usize, usize) {
        let n = dims[a] as i64;
        ((d[a].max(0)) as usize, (n + d[a].min(0)) as usize)
    };
    let (u0, u1) = range(0);
    let (v0, v1) = range(1);
    let (w0, w1) = range(2);
    let run = u1 - u0;
    let shift = d[0] + dims[0] as i64 * (d[1] + dims[1] as i64 * d[2]);
    for w in w0..w1 {
        for v in v0..v1 {
            let t = u0 + dims[0] * (v + dims[1] * w);
            let s = (t as i64 - shift) as usize;
            for b in 0..3 {
                let dst = &mut out[b * m + t..b * m + t + run];
                for a in 0..3 {
                    let cba = c[b][a];
                    if cba == 0.0 {
                        continue;
                    }
                    let src = &x[a * m + s..a * m + s + run];
                    for (o, xi) in dst.iter_mut().zip(src) {
                        *o += cba * xi;
                    }
                }
            }
        }
    }
}

impl HistoryEngine for DirectEngine {
    fn kind(&self) -> EngineKind {
        EngineKind::Direct
    }

    fn history(&mut self, n: usize, ring: &Ring, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 1..=self.kernel.ell.min(n.saturating_sub(1)) {
            if let Some(j) = ring.get(n - k) {
                lag_apply(&self.kernel, k, j, out);
            }
        }
        Ok(())
    }

    fn absorb(&mut self, _n: usize, _ring: &Ring) -> Result<()> {
        Ok(())
    }

    fn restore(&mut self, _n: usize, _ring: &Ring, _pending: Vec<PendingSlot>) -> Result<()> {
        Ok(())
    }

    fn ring_capacity(&self) -> usize {
        self.kernel.ell
    }
}
