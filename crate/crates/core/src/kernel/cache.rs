//! Binary kernel cache.
//!
//! Header: magic `MOTJVIEK`, version, `U V W` (u64), `dx dy dz dt` (f64),
//! `ℓ` (u64), tolerance (f64); then `9·(2U−1)(2V−1)(2W−1)(ℓ+1)` values as
//! little-endian f64, offset-major (`du` fastest, offsets from `−(U−1)`),
//! then component pair `3β + α`, lag innermost.

use std::io::{Read, Write};

use super::InteractionKernel;
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

const MAGIC: &[u8; 8] = b"MOTJVIEK";
pub const VERSION: u64 = 1;

pub fn write_kernel<W: Write>(kernel: &InteractionKernel, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for d in kernel.dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    for x in kernel.spacing.iter().chain([&kernel.dt]) {
        out.write_all(&x.to_le_bytes())?;
    }
    out.write_all(&(kernel.ell as u64).to_le_bytes())?;
    out.write_all(&kernel.tolerance.to_le_bytes())?;
    let [u, v, w] = kernel.dims.map(|n| n as i64);
    let mut buf = Vec::with_capacity(9 * (kernel.ell + 1) * 8);
    for dw in -(w - 1)..w {
        for dv in -(v - 1)..v {
            for du in -(u - 1)..u {
                buf.clear();
                for b in 0..3 {
                    for a in 0..3 {
                        for k in 0..=kernel.ell {
                            buf.extend_from_slice(&kernel.get(b, a, [du, dv, dw], k).to_le_bytes());
                        }
                    }
                }
                out.write_all(&buf)?;
            }
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Read a cached kernel and attach the contrast of `grid`.
pub fn read_kernel<R: Read>(mut input: R, grid: &VoxelGrid) -> Result<InteractionKernel> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a kernel cache".into()));
    }
    let version = read_u64(&mut input)?;
    if version != VERSION {
        return Err(Error::Format(format!("kernel cache version {version}, expected {VERSION}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = read_u64(&mut input)? as usize;
    }
    let mut spacing = [0.0; 3];
    for s in &mut spacing {
        *s = read_f64(&mut input)?;
    }
    let dt = read_f64(&mut input)?;
    let ell = read_u64(&mut input)? as usize;
    let tolerance = read_f64(&mut input)?;
    if dims != grid.dims {
        return Err(Error::Format(format!("cache is for {dims:?}, grid is {:?}", grid.dims)));
    }
    if (0..3).any(|a| (spacing[a] - grid.spacing[a]).abs() > 1e-12 * grid.spacing[a]) {
        return Err(Error::Format("cache voxel size differs from grid".into()));
    }
    let n_oct = dims.iter().product::<usize>();
    let mut values = vec![0.0; n_oct * (ell + 1) * 6];
    let [u, v, w] = dims.map(|n| n as i64);
    let mut buf = vec![0u8; 9 * (ell + 1) * 8];
    for dw in -(w - 1)..w {
        for dv in -(v - 1)..v {
            for du in -(u - 1)..u {
                input.read_exact(&mut buf)?;
                if du < 0 || dv < 0 || dw < 0 {
                    continue;
                }
                let o = du as usize + dims[0] * (dv as usize + dims[1] * dw as usize);
                for (c, (b, a)) in super::PAIR_ORDER.iter().enumerate() {
                    for k in 0..=ell {
                        let at = ((3 * b + a) * (ell + 1) + k) * 8;
                        let x = f64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
                        values[(o * (ell + 1) + k) * 6 + c] = x;
                    }
                }
            }
        }
    }
    let kernel = InteractionKernel::from_parts(dims, spacing, dt, tolerance, values, grid.contrast());
    if kernel.ell != ell {
        return Err(Error::Format(format!("cache lag count {ell}, expected {}", kernel.ell)));
    }
    Ok(kernel)
}
