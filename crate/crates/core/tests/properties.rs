use std::sync::OnceLock;

use motjvie::grid::{pair_distance_bounds, VoxelGrid};
use motjvie::kernel::{assemble_kernel, InteractionKernel, QuadratureSpec};
use motjvie::post::{combined_magnitude, dft_at, taper, TimeSeries};
use motjvie::stability::{
    dense_smallest_eigenvalue, inject_truncation, make_fir, pdsa_coefficients, DnOperator,
};
use motjvie::C0;
use proptest::prelude::*;

fn small_kernel() -> &'static InteractionKernel {
    static K: OnceLock<InteractionKernel> = OnceLock::new();
    K.get_or_init(|| {
        let mut g = VoxelGrid::empty([2, 2, 2], [0.01; 3]);
        g.eps_r.fill(6.0);
        g.eps_r[5] = 1.0;
        assemble_kernel(&g, 0.01 / C0, QuadratureSpec::default()).unwrap()
    })
}

fn series(samples: Vec<Vec<[f64; 3]>>) -> TimeSeries {
    let probes = vec![[0.0; 3]; samples.len()];
    let eps_r = vec![4.0; samples.len()];
    TimeSeries { dt: 1e-11, start: 1, probes, eps_r, samples }
}

fn energy(s: &TimeSeries) -> f64 {
    s.samples.iter().flatten().flat_map(|v| v.iter()).map(|x| x * x).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_index_is_a_bijection(nu in 1usize..7, nv in 1usize..7, nw in 1usize..7, seed in any::<u64>()) {
        let g = VoxelGrid::empty([nu, nv, nw], [1.0; 3]);
        let m = (seed as usize % g.len()) + 1;
        let [u, v, w] = g.inverse_index(m).unwrap();
        prop_assert_eq!(g.linear_index(u, v, w).unwrap(), m);
        prop_assert_eq!(g.coords(m - 1), [u - 1, v - 1, w - 1]);
        prop_assert!(g.inverse_index(g.len() + 1).is_err());
        prop_assert!(g.linear_index(nu + 1, v, w).is_err());
    }

    #[test]
    fn distance_bounds_enclose_sampled_pairs(
        d in prop::array::uniform3(-4i64..5),
        h in prop::array::uniform3(0.5f64..2.0),
        a in prop::array::uniform3(-0.5f64..0.5),
        b in prop::array::uniform3(-0.5f64..0.5),
    ) {
        let (lo, hi) = pair_distance_bounds(d, h);
        let r = (0..3).map(|k| ((d[k] as f64 + a[k] - b[k]) * h[k]).powi(2)).sum::<f64>().sqrt();
        prop_assert!(lo <= r + 1e-12 && r <= hi + 1e-12, "{} {} {}", lo, r, hi);
        let centre = (0..3).map(|k| (d[k] as f64 * h[k]).powi(2)).sum::<f64>().sqrt();
        prop_assert!(lo <= centre && centre <= hi);
    }

    #[test]
    fn fir_filters_hit_the_alternating_target(order in 2usize..5, delta in 0.0f64..1.0, theta in 0.0f64..std::f64::consts::PI) {
        let f = make_fir(order, delta).unwrap();
        prop_assert!((f.alternating_sum() - delta).abs() <= 1e-15);
        prop_assert!(f.magnitude(0.0) <= 1e-15);
        prop_assert!((f.magnitude(std::f64::consts::PI) - delta).abs() <= 1e-14);
        // a binomial high pass never exceeds its Nyquist gain
        prop_assert!(f.magnitude(theta) <= delta + 1e-14);
    }

    #[test]
    fn taper_never_adds_energy(
        raw in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..60),
        fraction in 0.0f64..1.0,
    ) {
        let s = series(vec![raw.clone()]);
        let t = taper(&s, fraction);
        prop_assert!(energy(&t) <= energy(&s));
        prop_assert_eq!(t.samples[0].last().copied(), Some([0.0; 3]));
        let keep = raw.len() - ((fraction * raw.len() as f64).ceil() as usize).clamp(1, raw.len());
        prop_assert_eq!(&t.samples[0][..keep], &raw[..keep]);
    }

    #[test]
    fn dft_is_linear_and_conjugate_symmetric(
        x in prop::collection::vec(-1.0f64..1.0, 1..40),
        y in prop::collection::vec(-1.0f64..1.0, 40),
        a in -3.0f64..3.0,
        f in 0.0f64..1e9,
        start in 0usize..4,
    ) {
        let y = &y[..x.len()];
        let dt = 1e-11;
        let z: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + q).collect();
        let (xr, xi) = dft_at(&x, dt, start, f);
        let (yr, yi) = dft_at(y, dt, start, f);
        let (zr, zi) = dft_at(&z, dt, start, f);
        prop_assert!((zr - (a * xr + yr)).abs() < 1e-12 && (zi - (a * xi + yi)).abs() < 1e-12);
        let (nr, ni) = dft_at(&x, dt, start, -f);
        prop_assert!((nr - xr).abs() < 1e-12 && (ni + xi).abs() < 1e-12);
        let (dc, _) = dft_at(&x, dt, start, 0.0);
        prop_assert!((dc - x.iter().sum::<f64>() * dt * C0).abs() < 1e-12);
    }

    #[test]
    fn combined_magnitude_is_the_euclidean_norm(h in prop::array::uniform3(-1e3f64..1e3), s in 0.0f64..10.0) {
        let c = combined_magnitude(h[0], h[1], h[2]);
        prop_assert!((c * c - (h[0] * h[0] + h[1] * h[1] + h[2] * h[2])).abs() <= 1e-9 * (1.0 + c * c));
        prop_assert!(c >= h.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        prop_assert!((combined_magnitude(s * h[0], s * h[1], s * h[2]) - s * c).abs() <= 1e-9 * (1.0 + s * c));
    }

    #[test]
    fn pdsa_coefficients_are_normalized(ell in 1usize..60, frac in 0.0f64..1.0) {
        let n = ((ell as f64 * frac) as usize).min(ell);
        let c = pdsa_coefficients(ell, n);
        prop_assert_eq!(c.len(), n + 1);
        prop_assert!((c.iter().fold(0.0f64, |m, x| m.max(x.abs())) - 1.0).abs() < 1e-15);
        for (j, v) in c.iter().enumerate() {
            prop_assert_eq!(v.signum(), if j % 2 == 0 { 1.0 } else { -1.0 });
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn truncation_stays_on_the_grid(exp in 3i32..13) {
        let eps = 10f64.powi(-exp);
        let k = small_kernel();
        let t = inject_truncation(k, eps).unwrap();
        for (a, b) in k.raw_values().iter().zip(t.raw_values()) {
            prop_assert!((a - b).abs() <= 0.5 * eps * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pdsa_is_scale_invariant(scale in 1e-3f64..1e3, n_frac in 0.0f64..1.0) {
        let k = small_kernel();
        let n = ((k.ell as f64 * n_frac) as usize).min(k.ell);
        let base = dense_smallest_eigenvalue(DnOperator::new(k, n, 1.0).unwrap().dense());
        let scaled = dense_smallest_eigenvalue(DnOperator::new(k, n, scale).unwrap().dense());
        prop_assert!((scaled - scale * base).abs() <= 1e-10 * scale * (1.0 + base.abs()));
    }

    #[test]
    fn truncation_shift_obeys_the_row_sum_bound(exp in 3i32..10, n_frac in 0.0f64..1.0) {
        // every entry of D_n moves by at most Σ|c_j|·ε/2, so no eigenvalue
        // moves by more than the dimension times that
        let eps = 10f64.powi(-exp);
        let k = small_kernel();
        let n = ((k.ell as f64 * n_frac) as usize).min(k.ell);
        let t = inject_truncation(k, eps).unwrap();
        let op = DnOperator::new(k, n, 1.0).unwrap();
        let base = dense_smallest_eigenvalue(op.dense());
        let moved = dense_smallest_eigenvalue(DnOperator::new(&t, n, 1.0).unwrap().dense());
        let weight: f64 = pdsa_coefficients(k.ell, n).iter().map(|c| c.abs()).sum();
        prop_assert!((moved - base).abs() <= op.dim() as f64 * weight * 0.5 * eps * (1.0 + 1e-9));
    }
}
