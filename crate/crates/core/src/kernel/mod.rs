//! Tested space-time interaction kernel, Gram term and plane-wave excitation.

mod assemble;
pub mod cache;
pub mod excitation;
pub mod moments;
pub mod spline;

pub use excitation::{excitation_vector, incident_spectrum_magnitude, PlaneWaveSpec};

use crate::error::{Error, Result};
use crate::grid::{pair_distance_bounds, VoxelGrid};
use crate::C0;

/// Component order of the six stored symmetric pairs.
pub const PAIR_ORDER: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Index into [`PAIR_ORDER`] of the unordered pair `{β, α}`.
pub fn pair_index(beta: usize, alpha: usize) -> usize {
    match (beta.min(alpha), beta.max(alpha)) {
        (a, b) if a == b => a,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

/// Nodal values of the spline basis against itself.
pub const GRAM: [f64; 2] = [0.5, 0.5];

/// Accuracy request for kernel assembly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    /// Relative tolerance of each radial moment quadrature.
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { rel_tol: 1e-13 }
    }
}

/// Offset-indexed tested kernel `S̃[β][α][d][k]` of a voxel lattice.
///
/// Only the octant `d ≥ 0` is stored; the other octants follow from
/// reflection parity, and `S̃^{βα} = S̃^{αβ}` since the kernel is even in `d`.
/// The identity part `gram[k] + δ_k` of the interaction matrices (spline Gram
/// values plus any filter regularization) is kept separately, as is the
/// per-voxel contrast `(ε−1)/ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionKernel {
    pub dims: [usize; 3],
    /// Voxel edges in meters.
    pub spacing: [f64; 3],
    /// Time step in seconds.
    pub dt: f64,
    /// Voxel edges in units of `cΔt`.
    pub h: [f64; 3],
    pub ell: usize,
    pub tolerance: f64,
    values: Vec<f64>,
    bands: Vec<[usize; 2]>,
    /// `gram[k] + δ_k` for `k = 0..=ell`.
    pub identity: Vec<f64>,
    pub contrast: Vec<f64>,
}

/// Lag count `ℓ = ⌊diag/(cΔt)⌋ + 2` of a lattice with normalized edges `h`.
pub fn lag_count(dims: [usize; 3], h: [f64; 3]) -> usize {
    let d2: f64 = (0..3).map(|a| (dims[a] as f64 * h[a]).powi(2)).sum();
    d2.sqrt().floor() as usize + 2
}

/// Voxel edges in units of `c·dt`, snapped to integers within rounding.
pub fn normalized_spacing(spacing: [f64; 3], dt: f64) -> [f64; 3] {
    spacing.map(|s| {
        let x = s / (C0 * dt);
        if (x - x.round()).abs() < 1e-12 * x.max(1.0) { x.round() } else { x }
    })
}

/// Non-zero lag range `[⌊d_min⌋, ⌊d_max⌋ + 2]` of an offset, clipped to `ell`.
pub fn lag_band(offset: [i64; 3], h: [f64; 3], ell: usize) -> [usize; 2] {
    let (lo, hi) = pair_distance_bounds(offset, h);
    [(lo.floor() as usize).min(ell + 1), (hi.floor() as usize + 2).min(ell)]
}

pub fn assemble_kernel(grid: &VoxelGrid, dt: f64, quad: QuadratureSpec) -> Result<InteractionKernel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let h = normalized_spacing(grid.spacing, dt);
    let dims = grid.dims;
    let ell = lag_count(dims, h);
    let oct = assemble::octant_values(dims, h, ell, quad.rel_tol);
    if let Some(offset) = oct.unconverged {
        let lag = lag_band(offset, h, ell)[0];
        return Err(Error::Assembly { offset, lag });
    }
    let mut values = oct.values;
    let n_off = dims.iter().product::<usize>();
    let bands: Vec<[usize; 2]> = (0..n_off)
        .map(|o| {
            let d = [o % dims[0], (o / dims[0]) % dims[1], o / (dims[0] * dims[1])];
            lag_band(d.map(|x| x as i64), h, ell)
        })
        .collect();
    for (o, band) in bands.iter().enumerate() {
        for k in 0..=ell {
            if k < band[0] || k > band[1] {
                values[(o * (ell + 1) + k) * 6..][..6].fill(0.0);
            }
        }
    }
    for (k, g) in GRAM.iter().enumerate() {
        for c in 0..3 {
            values[k * 6 + c] += g;
        }
    }
    let mut identity = vec![0.0; ell + 1];
    identity[..2].copy_from_slice(&GRAM);
    Ok(InteractionKernel {
        dims,
        spacing: grid.spacing,
        dt,
        h,
        ell,
        tolerance: quad.rel_tol,
        values,
        bands,
        identity,
        contrast: grid.contrast(),
    })
}

impl InteractionKernel {
    pub(crate) fn from_parts(
        dims: [usize; 3],
        spacing: [f64; 3],
        dt: f64,
        tolerance: f64,
        values: Vec<f64>,
        contrast: Vec<f64>,
    ) -> Self {
        let h = normalized_spacing(spacing, dt);
        let ell = lag_count(dims, h);
        let n_off = dims.iter().product::<usize>();
        let bands = (0..n_off)
            .map(|o| {
                let d = [o % dims[0], (o / dims[0]) % dims[1], o / (dims[0] * dims[1])];
                lag_band(d.map(|x| x as i64), h, ell)
            })
            .collect();
        let mut identity = vec![0.0; ell + 1];
        identity[..2].copy_from_slice(&GRAM);
        InteractionKernel { dims, spacing, dt, h, ell, tolerance, values, bands, identity, contrast }
    }

    pub fn voxels(&self) -> usize {
        self.contrast.len()
    }

    pub fn gram(&self, k: usize) -> f64 {
        GRAM.get(k).copied().unwrap_or(0.0)
    }

    fn octant(&self, d: [usize; 3]) -> usize {
        d[0] + self.dims[0] * (d[1] + self.dims[1] * d[2])
    }

    /// The six stored components at a non-negative offset.
    pub fn octant_slice(&self, d: [usize; 3], k: usize) -> &[f64] {
        let o = self.octant(d);
        &self.values[(o * (self.ell + 1) + k) * 6..][..6]
    }

    /// Non-zero lag range of a non-negative offset.
    pub fn band(&self, d: [usize; 3]) -> [usize; 2] {
        self.bands[self.octant(d)]
    }

    /// `S̃[β][α][d][k]`; zero outside the lattice or for `k > ℓ`.
    pub fn get(&self, beta: usize, alpha: usize, d: [i64; 3], k: usize) -> f64 {
        if k > self.ell || (0..3).any(|a| d[a].unsigned_abs() as usize >= self.dims[a]) {
            return 0.0;
        }
        let mut sign = 1.0;
        for a in 0..3 {
            if d[a] < 0 && ((beta == a) ^ (alpha == a)) {
                sign = -sign;
            }
        }
        let ad = d.map(|x| x.unsigned_abs() as usize);
        sign * self.octant_slice(ad, k)[pair_index(beta, alpha)]
    }

    /// Matrix element `Z^{βα}_{m,m',k}` between zero-based voxels.
    pub fn z_element(&self, beta: usize, alpha: usize, m: usize, mp: usize, k: usize) -> f64 {
        let c = |i: usize| [i % self.dims[0], (i / self.dims[0]) % self.dims[1], i / (self.dims[0] * self.dims[1])];
        let (a, b) = (c(m), c(mp));
        let d = [0, 1, 2].map(|x| a[x] as i64 - b[x] as i64);
        let id = if m == mp && beta == alpha { self.identity.get(k).copied().unwrap_or(0.0) } else { 0.0 };
        id - self.contrast[m] * self.get(beta, alpha, d, k)
    }

    /// Raw octant storage, `(offset·(ℓ+1) + k)·6 + component`.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn raw_values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Replace the contrast, e.g. to reuse one kernel for another material.
    pub fn with_contrast(mut self, grid: &VoxelGrid) -> Result<Self> {
        if grid.dims != self.dims {
            return Err(Error::Dimension { expected: self.voxels(), got: grid.len() });
        }
        self.contrast = grid.contrast();
        Ok(self)
    }

    /// Kernel of a smaller lattice whose voxels, measured in `c·dt`, match.
    ///
    /// Kernel values depend only on the offset and the normalized voxel
    /// edges, so the sub-lattice kernel is a restriction with a shorter lag
    /// count, whatever the physical scale.
    pub fn restrict(&self, grid: &VoxelGrid, dt: f64) -> Result<Self> {
        if (0..3).any(|a| grid.dims[a] > self.dims[a]) {
            return Err(Error::Config(format!("cannot restrict {:?} to larger {:?}", self.dims, grid.dims)));
        }
        let h = normalized_spacing(grid.spacing, dt);
        if h != self.h {
            return Err(Error::Config("voxel size differs from the assembled kernel".into()));
        }
        let dims = grid.dims;
        let ell = lag_count(dims, h);
        let n_off = dims.iter().product::<usize>();
        let mut values = vec![0.0; n_off * (ell + 1) * 6];
        for o in 0..n_off {
            let d = [o % dims[0], (o / dims[0]) % dims[1], o / (dims[0] * dims[1])];
            for k in 0..=ell {
                values[(o * (ell + 1) + k) * 6..][..6].copy_from_slice(self.octant_slice(d, k));
            }
        }
        let mut out = Self::from_parts(dims, grid.spacing, dt, self.tolerance, values, grid.contrast());
        let keep = out.identity.len().min(self.identity.len());
        out.identity[..keep].copy_from_slice(&self.identity[..keep]);
        Ok(out)
    }
}
