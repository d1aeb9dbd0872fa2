//! Per-step history timing across grid sizes.

use std::sync::Arc;
use std::time::{Duration, Instant};

use motjvie::grid::VoxelGrid;
use motjvie::kernel::{assemble_kernel, InteractionKernel, QuadratureSpec};
use motjvie::march::{make_engine, EngineKind, Ring};
use motjvie::{Result, C0};

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub voxels: usize,
    pub ell: usize,
    pub engine: EngineKind,
    pub build: Duration,
    pub steps: usize,
    /// Mean wall time of history evaluation plus engine bookkeeping.
    pub per_step: f64,
}

/// Timing controls.
#[derive(Clone, Copy, Debug)]
pub struct BenchSpec {
    /// Minimum number of timed steps.
    pub min_steps: usize,
    /// Keep timing until this much wall time has been spent...
    pub min_time: Duration,
    /// ...but never beyond this many steps.
    pub max_steps: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec { min_steps: 3, min_time: Duration::from_millis(500), max_steps: 200 }
    }
}

/// Uniform `ε_r` cube of `n³` unit voxels (`Δ = cΔt = 1 cm`).
pub fn bench_kernel(n: usize, eps: f64) -> Result<InteractionKernel> {
    let h = 0.01;
    let mut g = VoxelGrid::empty([n; 3], [h; 3]);
    g.eps_r.fill(eps);
    assemble_kernel(&g, h / C0, QuadratureSpec::default())
}

fn pseudo_current(len: usize, s: usize) -> Vec<f64> {
    (0..len).map(|i| (((i * 31 + s * 7) % 17) as f64 - 8.0) / 8.0).collect()
}

/// Time the history evaluation of one engine on a prebuilt kernel.
///
/// The driver's lag-0 solve is replaced by synthetic currents, so only the
/// history work is measured. Timing starts once the history ring is full;
/// the FFT-based engines are timed over at least two lag spans so every
/// level fires several times.
pub fn bench_engine(kernel: &Arc<InteractionKernel>, engine: EngineKind, spec: BenchSpec) -> Result<BenchRow> {
    let t = Instant::now();
    let mut e = make_engine(engine, kernel)?;
    let build = t.elapsed();
    let len = 3 * kernel.voxels();
    let ell = kernel.ell;
    let mut ring = Ring::new(len, ell.max(e.ring_capacity()));
    let mut q = vec![0.0; len];
    let mut timed = Duration::ZERO;
    let mut count = 0;
    if engine == EngineKind::Direct {
        // the direct sum keeps no state beyond the ring
        for s in 1..=ell {
            ring.push(s, &pseudo_current(len, s));
        }
        while count < spec.max_steps && (count < spec.min_steps || timed < spec.min_time) {
            let t = Instant::now();
            e.history(ell + 1, &ring, &mut q)?;
            timed += t.elapsed();
            count += 1;
        }
    } else {
        let window = (2 * ell).max(spec.min_steps);
        let mut s = 0;
        loop {
            s += 1;
            let t = Instant::now();
            e.history(s, &ring, &mut q)?;
            let j = pseudo_current(len, s);
            ring.push(s, &j);
            e.absorb(s, &ring)?;
            if s > ell {
                timed += t.elapsed();
                count += 1;
                if count >= window && (timed >= spec.min_time || count >= spec.max_steps.max(window)) {
                    break;
                }
            }
        }
    }
    Ok(BenchRow {
        n: kernel.dims[0],
        voxels: kernel.voxels(),
        ell,
        engine,
        build,
        steps: count,
        per_step: timed.as_secs_f64() / count as f64,
    })
}

/// Least-squares slope of `ln y` against `ln x`; `None` for fewer than two points.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Reference complexity of an engine at `M` voxels.
pub fn complexity(engine: EngineKind, m: usize) -> f64 {
    let m = m as f64;
    match engine {
        EngineKind::Direct => m * m,
        _ => m * m.ln().powi(2),
    }
}

pub fn complexity_label(engine: EngineKind) -> &'static str {
    match engine {
        EngineKind::Direct => "M^2",
        _ => "M log^2 M",
    }
}

/// Slope of the per-step time against the engine's reference complexity.
pub fn scaling_slope(rows: &[BenchRow]) -> Option<f64> {
    let engine = rows.first()?.engine;
    let x: Vec<f64> = rows.iter().map(|r| complexity(engine, r.voxels)).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.per_step).collect();
    fit_slope(&x, &y)
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut s = String::from("engine        n       M    lags  build_s   steps  per_step_s\n");
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>3} {:>7} {:>7} {:>8.3} {:>7} {:>11.4e}\n",
            r.engine.name(),
            r.n,
            r.voxels,
            r.ell,
            r.build.as_secs_f64(),
            r.steps,
            r.per_step
        ));
    }
    let mut engines: Vec<EngineKind> = rows.iter().map(|r| r.engine).collect();
    engines.dedup();
    for e in engines {
        let sub: Vec<BenchRow> = rows.iter().filter(|r| r.engine == e).cloned().collect();
        match scaling_slope(&sub) {
            Some(k) => s.push_str(&format!("{}: log-log slope vs {} = {k:.3}\n", e.name(), complexity_label(e))),
            None => s.push_str(&format!("{}: single grid, no fit\n", e.name())),
        }
    }
    s
}
