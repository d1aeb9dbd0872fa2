//! History field by three-level block-Toeplitz products per lag.
//!
//! Each lag's kernel is embedded once into a `(2U−1)×(2V−1)×(2W−1)`
//! circulant. The kernel is even in the offset, so its spectra are real and
//! stored as such. The spectrum of each current vector is computed once when
//! it is produced and reused for all `ℓ` lags it takes part in; per step, all
//! lags are accumulated in the frequency domain and transformed back once per
//! component.

use std::sync::Arc;

use num_complex::Complex64;

use super::{EngineKind, HistoryEngine, PendingSlot, Ring};
use crate::error::Result;
use crate::kernel::{InteractionKernel, PAIR_ORDER};
use crate::toeplitz::{gather_add, scatter, Level, NdFft, ToeplitzPlan};

pub struct SpatialEngine {
    kernel: Arc<InteractionKernel>,
    fft: Arc<NdFft<f64>>,
    /// `kspec[k−1][pair]`, real spectra.
    kspec: Vec<[Vec<f64>; 6]>,
    /// Spectra of the last `ℓ` currents, slot `n mod ℓ`.
    jspec: Vec<[Vec<Complex64>; 3]>,
    acc: [Vec<Complex64>; 3],
}

impl std::fmt::Debug for SpatialEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialEngine").field("fft", &self.fft).field("lags", &self.kspec.len()).finish()
    }
}

impl SpatialEngine {
    pub fn new(kernel: &Arc<InteractionKernel>) -> Result<Self> {
        let dims = kernel.dims;
        let levels = dims.map(|n| Level::padded(n, n));
        let fft = Arc::new(NdFft::new(&levels.map(|l| l.n)));
        let blocks = (0..3).map(|b| (0..3).map(|a| Some(crate::kernel::pair_index(b, a))).collect()).collect::<Vec<_>>();
        let mut kspec = Vec::with_capacity(kernel.ell);
        for k in 1..=kernel.ell {
            let plan = ToeplitzPlan::embed_with(&levels, fft.clone(), blocks.clone(), 6, |g, o| {
                let (b, a) = PAIR_ORDER[g];
                kernel.get(b, a, [o[0], o[1], o[2]], k)
            })?;
            let spectra = plan.spectra();
            kspec.push(std::array::from_fn(|g| spectra[g].iter().map(|c| c.re).collect()));
        }
        let len = fft.len();
        let slots = kernel.ell.max(1);
        Ok(SpatialEngine {
            kernel: kernel.clone(),
            jspec: (0..slots).map(|_| std::array::from_fn(|_| vec![Complex64::default(); len])).collect(),
            acc: std::array::from_fn(|_| vec![Complex64::default(); len]),
            fft,
            kspec,
        })
    }

    /// Bytes held in kernel and current spectra.
    pub fn memory_bytes(&self) -> usize {
        let n = self.fft.len();
        self.kspec.len() * 6 * n * 8 + self.jspec.len() * 3 * n * 16 + 3 * n * 16
    }

    fn transform(&mut self, n: usize, j: &[f64]) {
        let m = self.kernel.voxels();
        let slot = n % self.jspec.len();
        let dims = self.kernel.dims;
        for a in 0..3 {
            let buf = &mut self.jspec[slot][a];
            buf.iter_mut().for_each(|c| *c = Complex64::default());
            scatter(&j[a * m..(a + 1) * m], &dims, self.fft.dims(), buf);
            self.fft.forward(buf);
        }
    }
}

impl HistoryEngine for SpatialEngine {
    fn kind(&self) -> EngineKind {
        EngineKind::Spatial
    }

    fn history(&mut self, n: usize, _ring: &Ring, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let kmax = self.kernel.ell.min(n.saturating_sub(1));
        if kmax == 0 {
            return Ok(());
        }
        for a in self.acc.iter_mut() {
            a.iter_mut().for_each(|c| *c = Complex64::default());
        }
        let [ax, ay, az] = &mut self.acc;
        for k in 1..=kmax {
            let [jx, jy, jz] = &self.jspec[(n - k) % self.jspec.len()];
            let [sxx, syy, szz, sxy, sxz, syz] = &self.kspec[k - 1];
            for i in 0..ax.len() {
                let (x, y, z) = (jx[i], jy[i], jz[i]);
                ax[i] += x * sxx[i] + y * sxy[i] + z * sxz[i];
                ay[i] += x * sxy[i] + y * syy[i] + z * syz[i];
                az[i] += x * sxz[i] + y * syz[i] + z * szz[i];
            }
        }
        let m = self.kernel.voxels();
        let dims = self.kernel.dims;
        let scale = 1.0 / self.fft.len() as f64;
        for (b, acc) in self.acc.iter_mut().enumerate() {
            self.fft.inverse(acc);
            gather_add(acc, self.fft.dims(), &dims, scale, &mut out[b * m..(b + 1) * m]);
        }
        Ok(())
    }

    fn absorb(&mut self, n: usize, ring: &Ring) -> Result<()> {
        let j = ring.get(n).expect("current just stored").to_vec();
        self.transform(n, &j);
        Ok(())
    }

    fn restore(&mut self, n: usize, ring: &Ring, _pending: Vec<PendingSlot>) -> Result<()> {
        let first = n.saturating_sub(self.jspec.len() - 1).max(1);
        for step in first..=n {
            if let Some(j) = ring.get(step) {
                let j = j.to_vec();
                self.transform(step, &j);
            }
        }
        Ok(())
    }

    fn ring_capacity(&self) -> usize {
        self.kernel.ell
    }
}
