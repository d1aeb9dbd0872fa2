//! Marching-on-in-time driver.
//!
//! Step `n` solves `Z₀ J_n = E_n − P_{n−1}` with the history field
//!
//! ```text
//!   P_{n−1} = Σ_{k=1}^{ℓ} Z_k J_{n−k},   Z_k = id[k]·I − C·S̃_k.
//! ```
//!
//! The identity part is applied here; the engines only evaluate the
//! translation-invariant lag convolution `Q_n = Σ_{k≥1} S̃_k ⊛ J_{n−k}`.
//! Vectors are stored component-major (`α·M + m`) internally; the public
//! step interface is voxel-major (`3m + α`) like the excitation.

pub mod checkpoint;
mod direct;
pub mod solve;
mod spatial;

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::hier::HierEngine;
use crate::kernel::InteractionKernel;

pub use direct::DirectEngine;
pub use solve::{SolverKind, Z0Solver};
pub use spatial::SpatialEngine;

/// History-field evaluation strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Direct,
    Spatial,
    Hierarchical,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Direct => "direct",
            EngineKind::Spatial => "spatial",
            EngineKind::Hierarchical => "hierarchical",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [EngineKind::Direct, EngineKind::Spatial, EngineKind::Hierarchical].get(c as usize).copied()
    }
}

impl std::str::FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(EngineKind::Direct),
            "spatial" | "spatial-fft" | "fft" => Ok(EngineKind::Spatial),
            "hierarchical" | "hier" => Ok(EngineKind::Hierarchical),
            other => Err(Error::Config(format!("unknown engine '{other}'"))),
        }
    }
}

/// The last `capacity` current vectors, component-major.
#[derive(Clone, Debug)]
pub struct Ring {
    len: usize,
    slots: Vec<Vec<f64>>,
    latest: usize,
}

impl Ring {
    pub fn new(len: usize, capacity: usize) -> Self {
        Ring { len, slots: vec![vec![0.0; len]; capacity.max(1)], latest: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Length of each stored vector (`3M`).
    pub fn vector_len(&self) -> usize {
        self.len
    }

    /// Last stored step, zero before the first.
    pub fn latest(&self) -> usize {
        self.latest
    }

    /// `J_n`, or `None` when `n ≤ 0`, not yet computed or already evicted.
    pub fn get(&self, n: usize) -> Option<&[f64]> {
        let cap = self.slots.len();
        (n >= 1 && n <= self.latest && self.latest - n < cap).then(|| self.slots[n % cap].as_slice())
    }

    /// Store `J_n`; steps must arrive in order.
    pub fn push(&mut self, n: usize, j: &[f64]) {
        debug_assert_eq!(n, self.latest + 1);
        let cap = self.slots.len();
        self.slots[n % cap].copy_from_slice(j);
        self.latest = n;
    }

    fn slot_mut(&mut self, n: usize) -> &mut Vec<f64> {
        let cap = self.slots.len();
        &mut self.slots[n % cap]
    }
}

/// A scheduled contribution `(target step, values)` awaiting its step.
pub type PendingSlot = (usize, Vec<f64>);

/// Evaluates `Q_n = Σ_{k≥1} S̃_k ⊛ J_{n−k}` for the march.
pub trait HistoryEngine: Send {
    fn kind(&self) -> EngineKind;

    /// Write `Q_n` (component-major) into `out`; `J_1..J_{n−1}` are in `ring`.
    fn history(&mut self, n: usize, ring: &Ring, out: &mut [f64]) -> Result<()>;

    /// `J_n` has just been stored in `ring`.
    fn absorb(&mut self, n: usize, ring: &Ring) -> Result<()>;

    /// Scheduled future contributions, for checkpoints.
    fn pending(&self) -> Vec<PendingSlot> {
        Vec::new()
    }

    /// Rebuild internal state after a restart at step `n`.
    fn restore(&mut self, n: usize, ring: &Ring, pending: Vec<PendingSlot>) -> Result<()>;

    /// Longest history, in steps, any firing reads back.
    fn ring_capacity(&self) -> usize;
}

pub fn make_engine(kind: EngineKind, kernel: &Arc<InteractionKernel>) -> Result<Box<dyn HistoryEngine>> {
    Ok(match kind {
        EngineKind::Direct => Box::new(DirectEngine::new(kernel.clone())),
        EngineKind::Spatial => Box::new(SpatialEngine::new(kernel)?),
        EngineKind::Hierarchical => Box::new(HierEngine::new(kernel)?),
    })
}

/// Wall time spent in the two halves of the completed steps.
#[derive(Clone, Debug, Default)]
pub struct StepTiming {
    /// History evaluation plus engine bookkeeping, per step.
    pub history: Vec<Duration>,
    pub solve: Vec<Duration>,
}

/// Current history, scheduled contributions and the factorized step operator.
pub struct MarchState {
    kernel: Arc<InteractionKernel>,
    z0: Z0Solver,
    engine: Box<dyn HistoryEngine>,
    ring: Ring,
    n: usize,
    q: Vec<f64>,
    rhs: Vec<f64>,
    /// Right-hand side `E_n − P_{n−1}` of the last solve.
    last_rhs: Vec<f64>,
    pub timing: StepTiming,
}

impl std::fmt::Debug for MarchState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarchState").field("step", &self.n).field("engine", &self.engine.kind()).finish()
    }
}

impl MarchState {
    pub fn new(kernel: Arc<InteractionKernel>, engine: EngineKind, solver: SolverKind) -> Result<Self> {
        let z0 = Z0Solver::new(&kernel, solver)?;
        let engine = make_engine(engine, &kernel)?;
        Ok(Self::with_parts(kernel, z0, engine))
    }

    /// Assemble a state from a prebuilt solver and engine.
    pub fn with_parts(kernel: Arc<InteractionKernel>, z0: Z0Solver, engine: Box<dyn HistoryEngine>) -> Self {
        let len = 3 * kernel.voxels();
        let cap = kernel.ell.max(engine.ring_capacity());
        MarchState {
            ring: Ring::new(len, cap),
            kernel,
            z0,
            engine,
            n: 0,
            q: vec![0.0; len],
            rhs: vec![0.0; len],
            last_rhs: vec![0.0; len],
            timing: StepTiming::default(),
        }
    }

    pub fn kernel(&self) -> &Arc<InteractionKernel> {
        &self.kernel
    }

    pub fn engine_kind(&self) -> EngineKind {
        self.engine.kind()
    }

    pub fn solver(&self) -> &Z0Solver {
        &self.z0
    }

    /// Last completed step.
    pub fn step_index(&self) -> usize {
        self.n
    }

    pub fn ring(&self) -> &Ring {
        &self.ring
    }

    /// `J_n` of a completed recent step, voxel-major.
    pub fn current(&self, n: usize) -> Option<Vec<f64>> {
        self.ring.get(n).map(|j| to_voxel_major(j))
    }

    /// `P_{n−1}` for the next step `n`, component-major.
    fn history_field(&mut self, n: usize) -> Result<()> {
        self.engine.history(n, &self.ring, &mut self.q)?;
        let m = self.kernel.voxels();
        let (q, rhs) = (&self.q, &mut self.rhs);
        for b in 0..3 {
            for i in 0..m {
                rhs[b * m + i] = -self.kernel.contrast[i] * q[b * m + i];
            }
        }
        for k in 1..=self.kernel.ell.min(n - 1) {
            let id = self.kernel.identity[k];
            if id != 0.0 {
                if let Some(j) = self.ring.get(n - k) {
                    for (r, x) in rhs.iter_mut().zip(j) {
                        *r += id * x;
                    }
                }
            }
        }
        Ok(())
    }

    /// Advance one step with excitation `E_n` (voxel-major) and return `J_n`
    /// (voxel-major).
    pub fn step(&mut self, excitation: &[f64]) -> Result<Vec<f64>> {
        let mut j = vec![0.0; excitation.len()];
        self.step_into(excitation, &mut j)?;
        Ok(j)
    }

    /// As [`MarchState::step`], writing `J_n` into `out`.
    pub fn step_into(&mut self, excitation: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.kernel.voxels();
        if excitation.len() != 3 * m || out.len() != 3 * m {
            return Err(Error::Dimension { expected: 3 * m, got: excitation.len().min(out.len()) });
        }
        let n = self.n + 1;
        let t0 = Instant::now();
        self.history_field(n)?;
        let t1 = Instant::now();
        for i in 0..m {
            for b in 0..3 {
                self.rhs[b * m + i] = excitation[3 * i + b] - self.rhs[b * m + i];
            }
        }
        self.last_rhs.copy_from_slice(&self.rhs);
        self.z0.solve(&mut self.rhs).map_err(|e| Error::March { step: n, reason: e.to_string() })?;
        if let Some(bad) = self.rhs.iter().position(|x| !x.is_finite()) {
            return Err(Error::March { step: n, reason: format!("non-finite current at unknown {bad}") });
        }
        let t2 = Instant::now();
        self.ring.push(n, &self.rhs);
        self.engine.absorb(n, &self.ring)?;
        self.n = n;
        let t3 = Instant::now();
        self.timing.history.push((t1 - t0) + (t3 - t2));
        self.timing.solve.push(t2 - t1);
        for i in 0..m {
            for b in 0..3 {
                out[3 * i + b] = self.rhs[b * m + i];
            }
        }
        Ok(())
    }

    /// Relative residual `‖Z₀J_n − b‖ / ‖b‖` of the last solve, with `Z₀`
    /// applied by explicit summation.
    pub fn last_residual(&self) -> Result<f64> {
        let j = self.ring.get(self.n).ok_or_else(|| Error::Undefined("no completed step".into()))?;
        let m = self.kernel.voxels();
        let mut s0j = vec![0.0; 3 * m];
        direct::lag_apply(&self.kernel, 0, j, &mut s0j);
        let (mut num, mut den) = (0.0, 0.0);
        for b in 0..3 {
            for i in 0..m {
                let r = self.kernel.identity[0] * j[b * m + i] - self.kernel.contrast[i] * s0j[b * m + i];
                num += (r - self.last_rhs[b * m + i]).powi(2);
                den += self.last_rhs[b * m + i].powi(2);
            }
        }
        Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
    }

    /// Scheduled contributions held by the engine.
    pub fn pending(&self) -> Vec<PendingSlot> {
        self.engine.pending()
    }

    fn restore(&mut self, n: usize, ring: Vec<(usize, Vec<f64>)>, pending: Vec<PendingSlot>) -> Result<()> {
        for (step, j) in ring {
            if j.len() != self.ring.vector_len() {
                return Err(Error::Dimension { expected: self.ring.vector_len(), got: j.len() });
            }
            self.ring.slot_mut(step).copy_from_slice(&j);
        }
        self.ring.latest = n;
        self.n = n;
        self.engine.restore(n, &self.ring, pending)
    }
}

/// Component-major to voxel-major.
pub fn to_voxel_major(j: &[f64]) -> Vec<f64> {
    let m = j.len() / 3;
    let mut out = vec![0.0; j.len()];
    for i in 0..m {
        for b in 0..3 {
            out[3 * i + b] = j[b * m + i];
        }
    }
    out
}

/// Voxel-major to component-major.
pub fn to_component_major(j: &[f64]) -> Vec<f64> {
    let m = j.len() / 3;
    let mut out = vec![0.0; j.len()];
    for i in 0..m {
        for b in 0..3 {
            out[b * m + i] = j[3 * i + b];
        }
    }
    out
}

/// Run `steps` steps with excitation `excite(n)` and return every `J_n`
/// (voxel-major).
pub fn run_march(
    state: &mut MarchState,
    steps: usize,
    mut excite: impl FnMut(usize) -> Vec<f64>,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let n = state.step_index() + 1;
        out.push(state.step(&excite(n))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_evicts_old_steps() {
        let mut r = Ring::new(2, 3);
        for n in 1..=5 {
            r.push(n, &[n as f64, 0.0]);
        }
        assert!(r.get(2).is_none());
        assert_eq!(r.get(3).unwrap()[0], 3.0);
        assert_eq!(r.get(5).unwrap()[0], 5.0);
        assert!(r.get(6).is_none());
        assert!(r.get(0).is_none());
    }

    #[test]
    fn layout_roundtrip() {
        let v: Vec<f64> = (0..12).map(f64::from).collect();
        assert_eq!(to_component_major(&to_voxel_major(&v)), v);
        assert_eq!(to_voxel_major(&v)[..3], [0.0, 4.0, 8.0]);
    }

    #[test]
    fn engine_names_parse() {
        for k in [EngineKind::Direct, EngineKind::Spatial, EngineKind::Hierarchical] {
            assert_eq!(k.name().parse::<EngineKind>().unwrap(), k);
            assert_eq!(EngineKind::from_code(k.code()), Some(k));
        }
        assert!("fmm".parse::<EngineKind>().is_err());
    }
}
