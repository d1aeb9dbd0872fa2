//! Regular voxel lattice, material sampling and index arithmetic.

use crate::error::{Error, Result};

/// Geometry of the scatterer sampled onto the grid.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    /// Axis-aligned cube of edge length `edge` centered at `center`.
    Cube { center: [f64; 3], edge: f64, eps: f64 },
    /// Ball of the given diameter.
    Sphere { center: [f64; 3], diameter: f64, eps: f64 },
    /// Layers stacked along `axis`; layer `i` spans `[bounds[i], bounds[i+1])`
    /// measured from the box origin and has permittivity `eps[i]`.
    LayeredSlab { axis: usize, bounds: Vec<f64>, eps: Vec<f64> },
    /// One permittivity per voxel in linear-index order.
    ExplicitMap(Vec<f64>),
}

/// Regular `U×V×W` lattice with one relative permittivity per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub eps_r: Vec<f64>,
}

pub fn build_grid(shape: &ShapeSpec, dims: [usize; 3], extent: [f64; 3]) -> Result<VoxelGrid> {
    build_grid_at(shape, dims, extent, [0.0; 3])
}

/// Sample `shape` at the voxel centers of the box `[origin, origin + extent]`.
pub fn build_grid_at(
    shape: &ShapeSpec,
    dims: [usize; 3],
    extent: [f64; 3],
    origin: [f64; 3],
) -> Result<VoxelGrid> {
    if dims.contains(&0) {
        return Err(Error::Config(format!("voxel counts must be positive, got {dims:?}")));
    }
    if extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Config(format!("box extents must be positive, got {extent:?}")));
    }
    let spacing = [0, 1, 2].map(|i| extent[i] / dims[i] as f64);
    let m = dims.iter().product::<usize>();
    let mut grid = VoxelGrid { dims, spacing, origin, eps_r: vec![1.0; m] };
    if let ShapeSpec::ExplicitMap(values) = shape {
        if values.len() != m {
            return Err(Error::Config(format!("explicit map has {} values, grid has {m}", values.len())));
        }
        grid.eps_r.copy_from_slice(values);
    } else {
        for i in 0..m {
            let r = grid.center(i);
            grid.eps_r[i] = sample(shape, r, origin);
        }
    }
    if let Some(bad) = grid.eps_r.iter().find(|e| !(**e >= 1.0)) {
        return Err(Error::Config(format!("relative permittivity {bad} below 1")));
    }
    Ok(grid)
}

fn sample(shape: &ShapeSpec, r: [f64; 3], origin: [f64; 3]) -> f64 {
    match shape {
        ShapeSpec::Cube { center, edge, eps } => {
            let half = 0.5 * edge * (1.0 + 1e-12);
            if (0..3).all(|i| (r[i] - center[i]).abs() <= half) { *eps } else { 1.0 }
        }
        ShapeSpec::Sphere { center, diameter, eps } => {
            let d2: f64 = (0..3).map(|i| (r[i] - center[i]).powi(2)).sum();
            if d2.sqrt() <= 0.5 * diameter { *eps } else { 1.0 }
        }
        ShapeSpec::LayeredSlab { axis, bounds, eps } => {
            let x = r[*axis] - origin[*axis];
            bounds
                .windows(2)
                .zip(eps)
                .find(|(b, _)| x >= b[0] && x < b[1])
                .map_or(1.0, |(_, e)| *e)
        }
        ShapeSpec::ExplicitMap(_) => unreachable!(),
    }
}

impl VoxelGrid {
    /// Background-only grid.
    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        VoxelGrid { dims, spacing, origin: [0.0; 3], eps_r: vec![1.0; dims.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.eps_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_r.is_empty()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// 1-based linear index `m = (w−1)UV + (v−1)U + u`.
    pub fn linear_index(&self, u: usize, v: usize, w: usize) -> Result<usize> {
        let [nu, nv, nw] = self.dims;
        if u == 0 || v == 0 || w == 0 || u > nu || v > nv || w > nw {
            return Err(Error::Index { u, v, w, dims: self.dims });
        }
        Ok((w - 1) * nu * nv + (v - 1) * nu + u)
    }

    /// Inverse of [`VoxelGrid::linear_index`].
    pub fn inverse_index(&self, m: usize) -> Result<[usize; 3]> {
        if m == 0 || m > self.len() {
            return Err(Error::LinearIndex(m, self.len()));
        }
        let [c0, c1, c2] = self.coords(m - 1);
        Ok([c0 + 1, c1 + 1, c2 + 1])
    }

    /// Zero-based lattice coordinates of zero-based voxel `i`.
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nu, nv, _] = self.dims;
        [i % nu, (i / nu) % nv, i / (nu * nv)]
    }

    /// Center of zero-based voxel `i`.
    pub fn center(&self, i: usize) -> [f64; 3] {
        let c = self.coords(i);
        [0, 1, 2].map(|a| self.origin[a] + (c[a] as f64 + 0.5) * self.spacing[a])
    }

    /// `(ε−1)/ε` per voxel.
    pub fn contrast(&self) -> Vec<f64> {
        self.eps_r.iter().map(|e| (e - 1.0) / e).collect()
    }

    /// Zero-based voxel whose center is nearest to `p`.
    pub fn nearest_voxel(&self, p: [f64; 3]) -> usize {
        let c = [0, 1, 2].map(|a| {
            let x = (p[a] - self.origin[a]) / self.spacing[a] - 0.5;
            (x.round().max(0.0) as usize).min(self.dims[a] - 1)
        });
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn pair_distance_bounds(&self, offset: [i64; 3]) -> (f64, f64) {
        pair_distance_bounds(offset, self.spacing)
    }
}

/// Minimum and maximum point distance between two voxels whose centers differ
/// by `offset` cells.
pub fn pair_distance_bounds(offset: [i64; 3], spacing: [f64; 3]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for a in 0..3 {
        let d = offset[a].unsigned_abs() as f64;
        let gap = ((d - 1.0).max(0.0)) * spacing[a];
        let span = (d + 1.0) * spacing[a];
        lo += gap * gap;
        hi += span * span;
    }
    (lo.sqrt(), hi.sqrt())
}
