//! Binary restart files.
//!
//! Layout (little endian): magic `MOTJVIEC`, format version (u64, shared
//! with the kernel cache), engine code (u8), `3M` (u64), step `n` (u64), ring
//! entry count (u64) followed by `(step u64, 3M × f64)` entries, pending slot
//! count (u64) followed by `(target step u64, 3M × f64)` entries.

use std::io::{Read, Write};
use std::sync::Arc;

use super::{EngineKind, MarchState, SolverKind};
use crate::error::{Error, Result};
use crate::kernel::cache::VERSION;
use crate::kernel::InteractionKernel;

const MAGIC: &[u8; 8] = b"MOTJVIEC";

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_vec(w: &mut impl Write, v: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(v.len() * 8);
    for x in v {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn get_vec(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_checkpoint(state: &MarchState, mut w: impl Write) -> Result<()> {
    let len = state.ring.vector_len();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[state.engine_kind().code()])?;
    put_u64(&mut w, len as u64)?;
    put_u64(&mut w, state.n as u64)?;
    let steps: Vec<usize> = (1..=state.n).filter(|&s| state.ring.get(s).is_some()).collect();
    put_u64(&mut w, steps.len() as u64)?;
    for s in steps {
        put_u64(&mut w, s as u64)?;
        put_vec(&mut w, state.ring.get(s).unwrap())?;
    }
    let pending = state.pending();
    put_u64(&mut w, pending.len() as u64)?;
    for (t, v) in pending {
        put_u64(&mut w, t as u64)?;
        put_vec(&mut w, &v)?;
    }
    Ok(())
}

/// Rebuild a march state from a checkpoint written for the same kernel.
pub fn read_checkpoint(mut r: impl Read, kernel: Arc<InteractionKernel>, solver: SolverKind) -> Result<MarchState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a march checkpoint".into()));
    }
    let version = get_u64(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let engine = EngineKind::from_code(code[0]).ok_or_else(|| Error::Format(format!("unknown engine code {}", code[0])))?;
    let len = get_u64(&mut r)? as usize;
    if len != 3 * kernel.voxels() {
        return Err(Error::Dimension { expected: 3 * kernel.voxels(), got: len });
    }
    let n = get_u64(&mut r)? as usize;
    let count = get_u64(&mut r)? as usize;
    let mut ring = Vec::with_capacity(count);
    for _ in 0..count {
        let s = get_u64(&mut r)? as usize;
        ring.push((s, get_vec(&mut r, len)?));
    }
    let count = get_u64(&mut r)? as usize;
    let mut pending = Vec::with_capacity(count);
    for _ in 0..count {
        let t = get_u64(&mut r)? as usize;
        pending.push((t, get_vec(&mut r, len)?));
    }
    let mut state = MarchState::new(kernel, engine, solver)?;
    if ring.iter().any(|(s, _)| *s > n || *s + state.ring.capacity() <= n) {
        return Err(Error::Format("ring entry outside the stored window".into()));
    }
    state.restore(n, ring, pending)?;
    Ok(state)
}
