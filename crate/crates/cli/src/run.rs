//! Run orchestration: assemble, optionally perturb, march, probe, write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::sync::Arc;
use std::time::{Duration, Instant};

use motjvie::grid::VoxelGrid;
use motjvie::kernel::cache::{read_kernel, write_kernel};
use motjvie::kernel::{assemble_kernel, excitation_vector, InteractionKernel, QuadratureSpec};
use motjvie::march::MarchState;
use motjvie::post::{probe, write_time_series, ProbeRecord};
use motjvie::stability::{inject_truncation, make_fir_with, regularize};
use motjvie::{Error, Result};

use crate::config::{Regularization, RunConfig};

/// Kernel of the configured grid, loaded from the cache when it matches.
pub fn load_or_assemble(cfg: &RunConfig, grid: &VoxelGrid) -> Result<InteractionKernel> {
    let dt = cfg.dt()?;
    let quad = QuadratureSpec { rel_tol: cfg.kernel.tolerance.unwrap_or(QuadratureSpec::default().rel_tol) };
    if let Some(path) = &cfg.kernel.cache {
        if path.exists() {
            let k = read_kernel(BufReader::new(File::open(path)?), grid)?;
            if (k.dt - dt).abs() <= 1e-12 * dt && k.tolerance <= quad.rel_tol {
                return Ok(k);
            }
        }
        let k = assemble_kernel(grid, dt, quad)?;
        let mut w = BufWriter::new(File::create(path)?);
        write_kernel(&k, &mut w)?;
        w.flush()?;
        return Ok(k);
    }
    assemble_kernel(grid, dt, quad)
}

/// Apply the configured truncation and regularization.
pub fn prepare_kernel(cfg: &RunConfig, kernel: InteractionKernel) -> Result<(InteractionKernel, Option<Regularization>)> {
    let mut k = kernel;
    if let Some(t) = &cfg.truncation {
        k = inject_truncation(&k, t.eps)?;
    }
    let reg = cfg.regularization_for(k.voxels())?;
    if let Some(r) = reg {
        k = regularize(&k, &make_fir_with(r.order, r.delta, r.literal_fir4)?)?;
    }
    Ok((k, reg))
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dims: [usize; 3],
    pub voxels: usize,
    pub ell: usize,
    pub steps: usize,
    pub engine: &'static str,
    pub regularization: Option<Regularization>,
    pub assembly: Duration,
    pub setup: Duration,
    /// History time per step: mean, median, 90th and 99th percentile.
    pub history: [Duration; 4],
    pub solve: [Duration; 4],
    /// Kernel, history ring and lag-0 factor storage.
    pub memory_bytes: usize,
    pub max_abs_current: f64,
}

fn stats(mut d: Vec<Duration>) -> [Duration; 4] {
    if d.is_empty() {
        return [Duration::ZERO; 4];
    }
    let mean = d.iter().sum::<Duration>() / d.len() as u32;
    d.sort();
    let q = |p: f64| d[((p * (d.len() - 1) as f64).round() as usize).min(d.len() - 1)];
    [mean, q(0.5), q(0.9), q(0.99)]
}

impl RunSummary {
    pub fn render(&self) -> String {
        let f = |d: &[Duration; 4]| {
            format!(
                "mean {:.3e} s  p50 {:.3e} s  p90 {:.3e} s  p99 {:.3e} s",
                d[0].as_secs_f64(),
                d[1].as_secs_f64(),
                d[2].as_secs_f64(),
                d[3].as_secs_f64()
            )
        };
        let reg = self.regularization.map_or("none".to_string(), |r| format!("FIR{} delta={:e}", r.order, r.delta));
        format!(
            "grid {:?} ({} voxels), lags {}, steps {}, engine {}\n\
             regularization {reg}\n\
             assembly {:.3} s, setup {:.3} s\n\
             history per step: {}\n\
             solve per step:   {}\n\
             memory {:.1} MiB\n\
             max |J| {:.6e}\n",
            self.dims,
            self.voxels,
            self.ell,
            self.steps,
            self.engine,
            self.assembly.as_secs_f64(),
            self.setup.as_secs_f64(),
            f(&self.history),
            f(&self.solve),
            self.memory_bytes as f64 / (1 << 20) as f64,
            self.max_abs_current
        )
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub grid: VoxelGrid,
    pub probes: ProbeRecord,
    /// Every `J_n`, voxel-major, when requested.
    pub history: Option<Vec<Vec<f64>>>,
    pub summary: RunSummary,
}

/// Execute a configured run and write its outputs.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    run_with(cfg, false)
}

/// As [`run`]; `keep_history` retains every current vector in memory.
pub fn run_with(cfg: &RunConfig, keep_history: bool) -> Result<RunOutput> {
    let grid = cfg.build_grid()?;
    let dt = cfg.dt()?;
    let wave = cfg.wave()?;
    let t = Instant::now();
    let kernel = load_or_assemble(cfg, &grid)?;
    let assembly = t.elapsed();
    let (kernel, reg) = prepare_kernel(cfg, kernel)?;
    let t = Instant::now();
    let kernel = Arc::new(kernel);
    let mut state = MarchState::new(kernel.clone(), cfg.engine()?, cfg.solver_kind()?)?;
    let setup = t.elapsed();
    let order = cfg.quadrature_order();
    let m = grid.len();
    let probe_voxels: Vec<usize> = cfg.probes.points.iter().map(|&p| grid.nearest_voxel(p)).collect();
    // keep only the probe voxels unless the full history was asked for
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(cfg.time.steps);
    let mut full = keep_history.then(Vec::new);
    let mut j = vec![0.0; 3 * m];
    let mut max_abs: f64 = 0.0;
    for n in 1..=cfg.time.steps {
        state.step_into(&excitation_vector(&grid, &wave, dt, n, order), &mut j)?;
        max_abs = j.iter().fold(max_abs, |a, x| a.max(x.abs()));
        let mut slim = vec![0.0; 3 * m];
        for &i in &probe_voxels {
            slim[3 * i..3 * i + 3].copy_from_slice(&j[3 * i..3 * i + 3]);
        }
        kept.push(slim);
        if let Some(f) = full.as_mut() {
            f.push(j.clone());
        }
    }
    let probes = probe(&kept, &grid, dt, &cfg.probes.points)?;
    let kernel_bytes = kernel.raw_values().len() * 8;
    let ring_bytes = state.ring().capacity() * 3 * m * 8;
    let factor_bytes = state.solver().factor_nnz() * 8;
    let summary = RunSummary {
        dims: grid.dims,
        voxels: m,
        ell: kernel.ell,
        steps: cfg.time.steps,
        engine: state.engine_kind().name(),
        regularization: reg,
        assembly,
        setup,
        history: stats(state.timing.history.clone()),
        solve: stats(state.timing.solve.clone()),
        memory_bytes: kernel_bytes + ring_bytes + factor_bytes,
        max_abs_current: max_abs,
    };
    if let Some(p) = &cfg.output.series {
        write_time_series(&probes.spline, BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &cfg.output.raw {
        write_time_series(&probes.raw, BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &cfg.output.summary {
        std::fs::write(p, summary.render()).map_err(Error::from)?;
    }
    Ok(RunOutput { grid, probes, history: full, summary })
}
