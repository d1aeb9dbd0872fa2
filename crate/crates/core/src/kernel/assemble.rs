//! Per-offset evaluation of the tested retarded interaction.
//!
//! With lengths in units of `cΔt` and times in units of `Δt`, the tested
//! kernel of an offset `d` at lag `k` is
//!
//! ```text
//!   S̃^{βα} = −1/(4πV) Σ_{s,s'=±} s s' ∫_{face β,s} ∫_{face α,s'} B₂(k+1−R)/R
//!            − δ_{αβ}/(4πV) ∫_test ∫_source B₂''(k+1−R)/R
//!            + δ_{αβ} δ_{d,0} gram[k]
//! ```
//!
//! The gradient-divergence part is moved onto voxel faces by the divergence
//! theorem on both the test and the source side, the second time derivative
//! comes from the wave-equation substitution and the last term is the local
//! source of `∇×∇×`. Each double integral depends on the difference vector
//! only through separable one-dimensional weights (triangles for volume
//! pairs, a point mass for parallel faces, boxcars for perpendicular faces),
//! so it reduces to the radial shell moments of [`super::moments`].

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::moments::{shell_moments, Moments, Piece, Profile};
use super::spline::{shell_piece_second, shell_weights};

/// One-dimensional weight family, keyed by exact lattice data so identical
/// integrals are shared between offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Weight {
    /// Overlap of two intervals of width `h` whose centers are `c·h` apart.
    Tri { h: u64, c: u64 },
    /// Point mass at `c·h` (two parallel faces).
    Delta { h: u64, c: u64 },
    /// `+1` on `[d h, (d+1) h)`, `−1` on `[(d−1) h, d h)`.
    Dip { h: u64, d: u64 },
}

impl Weight {
    fn profile(self) -> Profile {
        match self {
            Weight::Tri { h, c } => {
                let h = f64::from_bits(h);
                Profile::triangle(c as f64 * h, h)
            }
            Weight::Delta { h, c } => Profile::Delta(c as f64 * f64::from_bits(h)),
            Weight::Dip { h, d } => {
                let h = f64::from_bits(h);
                let d = d as f64;
                Profile::Pieces(vec![
                    Piece { lo: (d - 1.0) * h, hi: d * h, c0: -1.0, c1: 0.0 },
                    Piece { lo: d * h, hi: (d + 1.0) * h, c0: 1.0, c1: 0.0 },
                ])
            }
        }
    }
}

/// The integral is symmetric in the coordinate order.
type Key = [Weight; 3];

fn key(mut w: [Weight; 3]) -> Key {
    w.sort();
    w
}

/// Integrals needed by one octant offset `d ≥ 0`.
struct OffsetKeys {
    vv: Key,
    /// Parallel faces along each axis at plane separations `|d−1|, d, d+1`.
    faces: [[Key; 3]; 3],
    /// Perpendicular faces for pairs (x,y), (x,z), (y,z); `None` when odd.
    cross: [Option<Key>; 3],
}

const PAIRS: [(usize, usize, usize); 3] = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];

fn offset_keys(d: [u64; 3], h: [u64; 3]) -> OffsetKeys {
    let tri = |a: usize| Weight::Tri { h: h[a], c: d[a] };
    let faces = [0, 1, 2].map(|a| {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        [d[a].abs_diff(1), d[a], d[a] + 1]
            .map(|p| key([Weight::Delta { h: h[a], c: p }, tri(b), tri(c)]))
    });
    let cross = PAIRS.map(|(b, a, g)| {
        (d[b] > 0 && d[a] > 0).then(|| {
            key([Weight::Dip { h: h[b], d: d[b] }, Weight::Dip { h: h[a], d: d[a] }, tri(g)])
        })
    });
    OffsetKeys { vv: key([tri(0), tri(1), tri(2)]), faces, cross }
}

/// `∫ w B₂(k+1−R)/R` from the shell moments of `w`.
fn retarded(m: &[[f64; 3]], k: usize) -> f64 {
    let j0 = k.saturating_sub(2);
    let j1 = k.min(m.len().saturating_sub(1));
    (j0..=j1)
        .filter(|&j| j < m.len())
        .map(|j| {
            let e = shell_weights(k as i64, j);
            e[0] * m[j][0] + e[1] * m[j][1] + e[2] * m[j][2]
        })
        .sum()
}

/// `∫ w B₂''(k+1−R)/R`.
fn retarded_second(m: &[[f64; 3]], k: usize) -> f64 {
    let j0 = k.saturating_sub(2);
    (j0..=k)
        .filter(|&j| j < m.len())
        .map(|j| shell_piece_second(k as i64 - j as i64) * m[j][0])
        .sum()
}

/// Tested kernel values of every octant offset of a `dims` lattice.
pub(crate) struct OctantValues {
    /// `(offset·(ell+1) + k)·6 + component`, components xx, yy, zz, xy, xz, yz.
    pub values: Vec<f64>,
    /// First offset whose moment quadrature missed the tolerance, if any.
    pub unconverged: Option<[i64; 3]>,
}

pub(crate) fn octant_values(dims: [usize; 3], h: [f64; 3], ell: usize, rel_tol: f64) -> OctantValues {
    let hb = h.map(f64::to_bits);
    let n_off = dims.iter().product::<usize>();
    let offset = |o: usize| [o % dims[0], (o / dims[0]) % dims[1], o / (dims[0] * dims[1])].map(|x| x as u64);
    let keys: Vec<OffsetKeys> = (0..n_off).map(|o| offset_keys(offset(o), hb)).collect();

    let mut unique: Vec<Key> = keys
        .iter()
        .flat_map(|k| {
            std::iter::once(k.vv)
                .chain(k.faces.iter().flatten().copied())
                .chain(k.cross.iter().flatten().copied())
        })
        .collect();
    unique.sort();
    unique.dedup();
    let table: HashMap<Key, Moments> = unique
        .into_par_iter()
        .map(|k| {
            let p = k.map(Weight::profile);
            (k, shell_moments([&p[0], &p[1], &p[2]], rel_tol))
        })
        .collect();

    let scale = 1.0 / (4.0 * PI * h.iter().product::<f64>());
    let nl = ell + 1;
    let mut values = vec![0.0; n_off * nl * 6];
    let mut unconverged = None;
    for (o, k) in keys.iter().enumerate() {
        let all_ok = std::iter::once(&k.vv)
            .chain(k.faces.iter().flatten())
            .chain(k.cross.iter().flatten())
            .all(|key| table[key].converged);
        if !all_ok && unconverged.is_none() {
            unconverged = Some(offset(o).map(|x| x as i64));
        }
        let vv = &table[&k.vv].shells;
        let faces = k.faces.map(|f| f.map(|key| &table[&key].shells));
        let cross = k.cross.map(|c| c.map(|key| &table[&key].shells));
        for lag in 0..nl {
            let base = (o * nl + lag) * 6;
            let volume = scale * retarded_second(vv, lag);
            for a in 0..3 {
                let [lo, mid, hi] = faces[a].map(|m| retarded(m, lag));
                values[base + a] = -scale * (2.0 * mid - lo - hi) - volume;
            }
            for (c, m) in cross.iter().enumerate() {
                if let Some(m) = m {
                    values[base + 3 + c] = scale * retarded(m, lag);
                }
            }
        }
    }
    OctantValues { values, unconverged }
}
