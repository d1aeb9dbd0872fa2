//! Gaussian plane-wave excitation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::{C0, EPS0};

/// Gaussian plane wave `E⁰ p̂ · 4/(σ√π) · exp(−(4/σ·((t−t₀) − r·k̂))²)`
/// with `t`, `σ`, `t₀` in lightmeters and `r` in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneWaveSpec {
    pub e0: f64,
    pub sigma: f64,
    pub t0: f64,
    pub k_hat: [f64; 3],
    pub p_hat: [f64; 3],
}

impl Default for PlaneWaveSpec {
    fn default() -> Self {
        PlaneWaveSpec { e0: 1.0, sigma: 2.0, t0: 3.42, k_hat: [0.0, 0.0, -1.0], p_hat: [1.0, 0.0, 0.0] }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl PlaneWaveSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: [f64; 3]| (dot(v, v).sqrt() - 1.0).abs() < 1e-9;
        if !unit(self.k_hat) || !unit(self.p_hat) {
            return Err(Error::Config("propagation and polarization must be unit vectors".into()));
        }
        if dot(self.k_hat, self.p_hat).abs() > 1e-9 {
            return Err(Error::Config("polarization must be orthogonal to propagation".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("pulse width must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Scalar envelope at `r` (meters) and time `t_lm` (lightmeters).
    pub fn envelope(&self, r: [f64; 3], t_lm: f64) -> f64 {
        let x = 4.0 / self.sigma * ((t_lm - self.t0) - dot(r, self.k_hat));
        4.0 * self.e0 / (self.sigma * PI.sqrt()) * (-x * x).exp()
    }

    pub fn field(&self, r: [f64; 3], t_lm: f64) -> [f64; 3] {
        let e = self.envelope(r, t_lm);
        self.p_hat.map(|p| p * e)
    }
}

/// `|e^i(f)| = E₀ exp(−(π f σ_s / 4)²)`, `σ_s = σ/c₀`.
pub fn incident_spectrum_magnitude(wave: &PlaneWaveSpec, f: f64) -> f64 {
    let sigma_s = wave.sigma / C0;
    let x = PI * f * sigma_s / 4.0;
    wave.e0 * (-x * x).exp()
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                if n == 1 {
                    p0 = 1.0;
                    p1 = x;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Tested excitation `(contrast·ε₀/V)∫_voxel β̂·E^i(r, nΔt) dV` for all voxels,
/// voxel-major (`3m + β`), with a `order³` product Gauss rule.
pub fn excitation_vector(grid: &VoxelGrid, wave: &PlaneWaveSpec, dt: f64, n: usize, order: usize) -> Vec<f64> {
    let rule = gauss_legendre(order.max(1));
    let t_lm = n as f64 * dt * C0;
    let contrast = grid.contrast();
    let mut out = vec![0.0; 3 * grid.len()];
    for (m, &c) in contrast.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let center = grid.center(m);
        let mut acc = 0.0;
        for &(x, wx) in &rule {
            for &(y, wy) in &rule {
                for &(z, wz) in &rule {
                    let r = [
                        center[0] + 0.5 * x * grid.spacing[0],
                        center[1] + 0.5 * y * grid.spacing[1],
                        center[2] + 0.5 * z * grid.spacing[2],
                    ];
                    acc += wx * wy * wz * wave.envelope(r, t_lm);
                }
            }
        }
        // weights sum to 8 on [−1,1]³
        let mean = acc / 8.0;
        for b in 0..3 {
            out[3 * m + b] = c * EPS0 * mean * wave.p_hat[b];
        }
    }
    out
}
