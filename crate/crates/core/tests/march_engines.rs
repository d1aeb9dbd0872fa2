use std::sync::Arc;

use motjvie::grid::{build_grid, ShapeSpec, VoxelGrid};
use motjvie::kernel::{assemble_kernel, excitation_vector, InteractionKernel, PlaneWaveSpec, QuadratureSpec};
use motjvie::march::checkpoint::{read_checkpoint, write_checkpoint};
use motjvie::march::{run_march, DirectEngine, EngineKind, HistoryEngine, MarchState, Ring, SolverKind};
use motjvie::C0;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 0.01;

fn kernel(dims: [usize; 3], eps: f64) -> (VoxelGrid, Arc<InteractionKernel>) {
    let mut g = VoxelGrid::empty(dims, [H; 3]);
    g.eps_r.fill(eps);
    let k = assemble_kernel(&g, H / C0, QuadratureSpec::default()).unwrap();
    (g, Arc::new(k))
}

fn short_pulse() -> PlaneWaveSpec {
    PlaneWaveSpec { sigma: 0.2, t0: 0.342, ..PlaneWaveSpec::default() }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|y| y * y).sum::<f64>().sqrt()
}

/// Worst `‖a_n − b_n‖ / max_{n'≤n} ‖b_{n'}‖` over a run.
fn run_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut peak: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        peak = peak.max(norm(y));
        let d = norm(&x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
        worst = worst.max(if peak == 0.0 { d } else { d / peak });
    }
    worst
}

fn march(k: &Arc<InteractionKernel>, engine: EngineKind, steps: usize, ex: &dyn Fn(usize) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut s = MarchState::new(k.clone(), engine, SolverKind::Auto).unwrap();
    run_march(&mut s, steps, ex).unwrap()
}

#[test]
fn engines_agree_on_plane_wave() {
    let (g, k) = kernel([4, 3, 2], 2.0);
    let w = short_pulse();
    let ex = |n: usize| excitation_vector(&g, &w, H / C0, n, 2);
    let d = march(&k, EngineKind::Direct, 60, &ex);
    assert!(d.iter().flatten().any(|&x| x != 0.0));
    for e in [EngineKind::Spatial, EngineKind::Hierarchical] {
        let o = march(&k, e, 60, &ex);
        assert!(run_diff(&o, &d) <= 1e-10, "{e:?}: {}", run_diff(&o, &d));
    }
}

#[test]
fn engines_agree_on_random_excitation_and_inhomogeneous_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = [5, 4, 3];
    let mut g = VoxelGrid::empty(dims, [H; 3]);
    for e in g.eps_r.iter_mut() {
        *e = if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(1.5..12.0) };
    }
    let k = Arc::new(assemble_kernel(&g, H / C0, QuadratureSpec::default()).unwrap());
    let exc: Vec<Vec<f64>> = (0..55)
        .map(|_| g.eps_r.iter().flat_map(|&e| [0; 3].map(|_| if e > 1.0 { rng.gen_range(-1.0..1.0) } else { 0.0 })).collect())
        .collect();
    let ex = |n: usize| exc[n - 1].clone();
    let d = march(&k, EngineKind::Direct, 55, &ex);
    for e in [EngineKind::Spatial, EngineKind::Hierarchical] {
        let o = march(&k, e, 55, &ex);
        assert!(run_diff(&o, &d) <= 1e-10, "{e:?}: {}", run_diff(&o, &d));
    }
}

#[test]
fn zero_excitation_gives_exact_zero() {
    let (_, k) = kernel([3, 3, 2], 12.0);
    for e in [EngineKind::Direct, EngineKind::Spatial, EngineKind::Hierarchical] {
        let out = march(&k, e, 20, &|_| vec![0.0; 3 * 18]);
        assert!(out.iter().flatten().all(|&x| x == 0.0));
    }
}

#[test]
fn single_impulse_reproduces_kernel_columns() {
    let (g, k) = kernel([3, 2, 2], 3.0);
    let m = g.len();
    // with J_1 = e_(m,α) and nothing else, the direct history at step k+1 is
    // column (m, α) of S̃_k
    let src = 4;
    let alpha = 1;
    let mut ring = Ring::new(3 * m, k.ell);
    let mut j1 = vec![0.0; 3 * m];
    j1[alpha * m + src] = 1.0;
    ring.push(1, &j1);
    let mut engine = DirectEngine::new(k.clone());
    let mut q = vec![0.0; 3 * m];
    for lag in 1..=k.ell {
        engine.history(lag + 1, &ring, &mut q).unwrap();
        let sc = g.coords(src);
        for t in 0..m {
            let tc = g.coords(t);
            let d = [0, 1, 2].map(|a| tc[a] as i64 - sc[a] as i64);
            for beta in 0..3 {
                assert_eq!(q[beta * m + t], k.get(beta, alpha, d, lag), "lag {lag} voxel {t}");
            }
        }
        ring.push(lag + 1, &vec![0.0; 3 * m]);
    }
}

#[test]
fn solve_residual_is_at_round_off() {
    let (g, k) = kernel([4, 3, 3], 12.0);
    let w = short_pulse();
    let mut s = MarchState::new(k.clone(), EngineKind::Spatial, SolverKind::Auto).unwrap();
    for n in 1..=40 {
        s.step(&excitation_vector(&g, &w, H / C0, n, 2)).unwrap();
        if n > 20 {
            assert!(s.last_residual().unwrap() < 1e-12, "step {n}");
        }
    }
}

#[test]
fn background_only_solve_scales_by_two() {
    let g = VoxelGrid::empty([2, 2, 2], [H; 3]);
    let k = Arc::new(assemble_kernel(&g, H / C0, QuadratureSpec::default()).unwrap());
    let mut s = MarchState::new(k, EngineKind::Direct, SolverKind::Auto).unwrap();
    let e: Vec<f64> = (0..24).map(|i| i as f64).collect();
    let j = s.step(&e).unwrap();
    for (a, b) in j.iter().zip(&e) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn impulse_response_drive_of_every_engine() {
    let (g, k) = kernel([3, 2, 2], 3.0);
    let m = g.len();
    let mut e1 = vec![0.0; 3 * m];
    e1[3 * 4 + 1] = 1.0;
    let ex = |n: usize| if n == 1 { e1.clone() } else { vec![0.0; 3 * m] };
    let d = march(&k, EngineKind::Direct, 30, &ex);
    for e in [EngineKind::Spatial, EngineKind::Hierarchical] {
        assert!(run_diff(&march(&k, e, 30, &ex), &d) < 1e-12);
    }
}

#[test]
fn causality_of_perturbations() {
    let (g, k) = kernel([3, 3, 3], 4.0);
    let w = short_pulse();
    let base = |n: usize| excitation_vector(&g, &w, H / C0, n, 2);
    let a = march(&k, EngineKind::Hierarchical, 30, &base);
    let pert = |n: usize| {
        let mut v = base(n);
        if n == 17 {
            v[5] += 1e-3;
        }
        v
    };
    let b = march(&k, EngineKind::Hierarchical, 30, &pert);
    for n in 0..16 {
        assert_eq!(a[n], b[n]);
    }
    assert_ne!(a[16], b[16]);
}

#[test]
fn iterative_solver_matches_direct_factor() {
    let (g, k) = kernel([4, 4, 3], 12.0);
    let w = short_pulse();
    let ex = |n: usize| excitation_vector(&g, &w, H / C0, n, 2);
    let mut s1 = MarchState::new(k.clone(), EngineKind::Spatial, SolverKind::Direct).unwrap();
    let mut s2 = MarchState::new(k.clone(), EngineKind::Spatial, SolverKind::Iterative).unwrap();
    assert!(s1.solver().is_direct() && !s2.solver().is_direct());
    let a = run_march(&mut s1, 50, ex).unwrap();
    let b = run_march(&mut s2, 50, ex).unwrap();
    assert!(run_diff(&b, &a) < 1e-10);
}

#[test]
fn checkpoint_restart_continues_bit_identically() {
    let shape = ShapeSpec::Cube { center: [0.02; 3], edge: 0.02, eps: 6.0 };
    let g = build_grid(&shape, [4; 3], [0.04; 3]).unwrap();
    let k = Arc::new(assemble_kernel(&g, H / C0, QuadratureSpec::default()).unwrap());
    let w = short_pulse();
    let ex = |n: usize| excitation_vector(&g, &w, H / C0, n, 2);
    for engine in [EngineKind::Direct, EngineKind::Spatial, EngineKind::Hierarchical] {
        let full = march(&k, engine, 40, &ex);
        let mut s = MarchState::new(k.clone(), engine, SolverKind::Auto).unwrap();
        run_march(&mut s, 23, ex).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&s, &mut bytes).unwrap();
        let mut r = read_checkpoint(bytes.as_slice(), k.clone(), SolverKind::Auto).unwrap();
        assert_eq!(r.step_index(), 23);
        let rest = run_march(&mut r, 17, ex).unwrap();
        assert!(run_diff(&rest, &full[23..]) < 1e-13, "{engine:?}");
    }
    assert!(read_checkpoint(&b"garbage!"[..], k, SolverKind::Auto).is_err());
}
