//! Brute-force reference for the tested retarded kernel.
//!
//! Integrates the face-face and volume-volume forms of the tested curl-curl
//! interaction directly in Cartesian difference coordinates with nested
//! adaptive Gauss–Kronrod quadrature. Interval overlaps and the quadratic
//! spline are evaluated from their definitions; nothing is shared with the
//! production assembly.

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss–Kronrod (7/15) panel: integral and error estimate.
fn gk_panel(lo: f64, hi: f64, n: usize, f: &mut dyn FnMut(f64, &mut [f64])) -> (Vec<f64>, f64) {
    let c = 0.5 * (lo + hi);
    let hw = 0.5 * (hi - lo);
    let mut k = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..8 {
        let pts: &[f64] = if i == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for s in pts {
            v.iter_mut().for_each(|x| *x = 0.0);
            f(c + s * hw * XGK[i], &mut v);
            for j in 0..n {
                k[j] += WGK[i] * v[j];
                if i % 2 == 1 {
                    g[j] += WG[i / 2] * v[j];
                }
            }
        }
    }
    let err = k.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) * hw;
    (k.iter().map(|x| x * hw).collect(), err)
}

/// Globally adaptive vector quadrature over the panels between breakpoints:
/// the panel with the largest error estimate is bisected until the summed
/// estimate drops below `tol`.
fn split_integral(
    mut brk: Vec<f64>,
    n: usize,
    tol: f64,
    f: &mut dyn FnMut(f64, &mut [f64]),
) -> Vec<f64> {
    brk.retain(|x| x.is_finite());
    brk.sort_by(f64::total_cmp);
    brk.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let mut panels: Vec<(f64, f64, Vec<f64>, f64)> = Vec::new();
    for w in brk.windows(2) {
        if w[1] - w[0] >= 1e-14 {
            let (v, e) = gk_panel(w[0], w[1], n, f);
            panels.push((w[0], w[1], v, e));
        }
    }
    for _ in 0..4000 {
        let total: f64 = panels.iter().map(|p| p.3).sum();
        if total <= tol || panels.is_empty() {
            break;
        }
        let worst = (0..panels.len()).max_by(|&a, &b| panels[a].3.total_cmp(&panels[b].3)).unwrap();
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        for (a, b) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk_panel(a, b, n, f);
            panels.push((a, b, v, e));
        }
    }
    let mut out = vec![0.0; n];
    for p in &panels {
        for (o, v) in out.iter_mut().zip(&p.2) {
            *o += v;
        }
    }
    out
}

/// Piecewise-linear weight given by a closure and its support knots.
pub struct Weight1 {
    pub eval: Box<dyn Fn(f64) -> f64 + Sync>,
    pub knots: Vec<f64>,
}

impl Weight1 {
    fn support(&self) -> (f64, f64) {
        let lo = self.knots.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.knots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn shells(r_max: f64) -> Vec<f64> {
    (1..=(r_max.ceil() as usize + 1)).map(|j| j as f64).collect()
}

fn inside(lo: f64, hi: f64, v: f64) -> bool {
    v > lo && v < hi
}

fn with_sphere_crossings(base: &[f64], js: &[f64], offsets2: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut brk = vec![lo, hi, 0.0];
    brk.extend(base.iter().copied());
    for &j in js {
        for &o2 in offsets2 {
            let q = j * j - o2;
            if q > 0.0 {
                brk.push(q.sqrt());
                brk.push(-q.sqrt());
            }
        }
    }
    brk.retain(|&x| x == lo || x == hi || inside(lo, hi, x));
    brk
}

/// `∫ w₀(x) w₁(y) w₂(z) f(|r|) d³r`.
pub fn integrate_3d(
    w: [&Weight1; 3],
    f: &dyn Fn(f64, &mut [f64]),
    n: usize,
    tol: f64,
) -> Vec<f64> {
    let (x0, x1) = w[0].support();
    let (y0, y1) = w[1].support();
    let (z0, z1) = w[2].support();
    let r_max = [x0, x1].iter().map(|v| v * v).fold(0.0, f64::max)
        + [y0, y1].iter().map(|v| v * v).fold(0.0, f64::max)
        + [z0, z1].iter().map(|v| v * v).fold(0.0, f64::max);
    let js = shells(r_max.sqrt());
    let yk2: Vec<f64> = w[1].knots.iter().map(|v| v * v).collect();
    let zk2: Vec<f64> = w[2].knots.iter().map(|v| v * v).collect();
    let mut combos = vec![0.0];
    combos.extend(yk2.iter());
    combos.extend(zk2.iter());
    for a in &yk2 {
        for b in &zk2 {
            combos.push(a + b);
        }
    }
    let brk_x = with_sphere_crossings(&w[0].knots, &js, &combos, x0, x1);
    let mut outer = |x: f64, out: &mut [f64]| {
        let wx = (w[0].eval)(x);
        if wx == 0.0 {
            return;
        }
        let mut o2 = vec![x * x];
        o2.extend(zk2.iter().map(|z| z + x * x));
        let brk_y = with_sphere_crossings(&w[1].knots, &js, &o2, y0, y1);
        let mut middle = |y: f64, out: &mut [f64]| {
            let wy = (w[1].eval)(y);
            if wy == 0.0 {
                return;
            }
            let brk_z = with_sphere_crossings(&w[2].knots, &js, &[x * x + y * y], z0, z1);
            let mut inner = |z: f64, out: &mut [f64]| {
                let wz = (w[2].eval)(z);
                if wz == 0.0 {
                    return;
                }
                let r = (x * x + y * y + z * z).sqrt();
                f(r, out);
                out.iter_mut().for_each(|o| *o *= wz);
            };
            let v = split_integral(brk_z, n, tol, &mut inner);
            for (o, x) in out.iter_mut().zip(v) {
                *o = wy * x;
            }
        };
        let v = split_integral(brk_y, n, tol, &mut middle);
        for (o, x) in out.iter_mut().zip(v) {
            *o = wx * x;
        }
    };
    split_integral(brk_x, n, tol, &mut outer)
}

/// `∫ w₀(x) w₁(y) f(√(x² + y² + c²)) d²r`.
pub fn integrate_2d(w: [&Weight1; 2], c: f64, f: &dyn Fn(f64, &mut [f64]), n: usize, tol: f64) -> Vec<f64> {
    let (x0, x1) = w[0].support();
    let (y0, y1) = w[1].support();
    let r_max = [x0, x1].iter().map(|v| v * v).fold(0.0, f64::max)
        + [y0, y1].iter().map(|v| v * v).fold(0.0, f64::max)
        + c * c;
    let js = shells(r_max.sqrt());
    let mut combos = vec![c * c];
    combos.extend(w[1].knots.iter().map(|v| v * v + c * c));
    let brk_x = with_sphere_crossings(&w[0].knots, &js, &combos, x0, x1);
    let mut outer = |x: f64, out: &mut [f64]| {
        let wx = (w[0].eval)(x);
        if wx == 0.0 {
            return;
        }
        let brk_y = with_sphere_crossings(&w[1].knots, &js, &[x * x + c * c], y0, y1);
        let mut inner = |y: f64, out: &mut [f64]| {
            let wy = (w[1].eval)(y);
            if wy == 0.0 {
                return;
            }
            f((x * x + y * y + c * c).sqrt(), out);
            out.iter_mut().for_each(|o| *o *= wy);
        };
        let v = split_integral(brk_y, n, tol, &mut inner);
        for (o, x) in out.iter_mut().zip(v) {
            *o = wx * x;
        }
    };
    split_integral(brk_x, n, tol, &mut outer)
}

/// Quadratic B-spline from its definition.
pub fn spline(x: f64) -> f64 {
    if (0.0..1.0).contains(&x) {
        x * x / 2.0
    } else if (1.0..2.0).contains(&x) {
        (-2.0 * x * x + 6.0 * x - 3.0) / 2.0
    } else if (2.0..3.0).contains(&x) {
        (3.0 - x) * (3.0 - x) / 2.0
    } else {
        0.0
    }
}

pub fn spline_second(x: f64) -> f64 {
    if (0.0..1.0).contains(&x) || (2.0..3.0).contains(&x) {
        1.0
    } else if (1.0..2.0).contains(&x) {
        -2.0
    } else {
        0.0
    }
}

/// Length of `[a0, a1] ∩ [b0, b1]`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Reference kernel for voxels of edges `h` (units of `cΔt`).
pub struct KernelOracle {
    pub h: [f64; 3],
    pub ell: usize,
    pub tol: f64,
}

impl KernelOracle {
    /// Weight of the difference coordinate along `axis` for two volumes.
    fn volume_weight(&self, axis: usize, d: i64) -> Weight1 {
        let h = self.h[axis];
        let c = d as f64 * h;
        Weight1 {
            eval: Box::new(move |x| overlap(c - h / 2.0, c + h / 2.0, x - h / 2.0, x + h / 2.0)),
            knots: vec![c - h, c, c + h],
        }
    }

    /// `S̃[β][α][k]` for every lag `0..=ℓ` at offset `d` (test minus source).
    pub fn element(&self, d: [i64; 3]) -> [[Vec<f64>; 3]; 3] {
        let n = self.ell + 1;
        let vol = self.h.iter().product::<f64>();
        let scale = 1.0 / (4.0 * PI * vol);
        let retarded = |r: f64, out: &mut [f64]| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = spline(k as f64 + 1.0 - r) / r;
            }
        };
        let retarded2 = |r: f64, out: &mut [f64]| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = spline_second(k as f64 + 1.0 - r) / r;
            }
        };
        let mut s: [[Vec<f64>; 3]; 3] = Default::default();
        let wv = [0, 1, 2].map(|a| self.volume_weight(a, d[a]));
        let vv = integrate_3d([&wv[0], &wv[1], &wv[2]], &retarded2, n, self.tol);
        for b in 0..3 {
            for a in 0..3 {
                let ff = if a == b {
                    let (p, q) = ((b + 1) % 3, (b + 2) % 3);
                    let mut acc = vec![0.0; n];
                    for (ts, ss) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let c = d[b] as f64 * self.h[b] + (ts - ss) * self.h[b] / 2.0;
                        let v = integrate_2d([&wv[p], &wv[q]], c, &retarded, n, self.tol);
                        for (o, x) in acc.iter_mut().zip(v) {
                            *o += ts * ss * x;
                        }
                    }
                    acc
                } else {
                    let g = 3 - a - b;
                    let (hb, ha) = (self.h[b], self.h[a]);
                    let (cb, ca) = (d[b] as f64 * hb, d[a] as f64 * ha);
                    // test face ⊥β at cb + s·hb/2 against the source extent;
                    // source face ⊥α at s'·ha/2 against the test extent
                    let wb = Weight1 {
                        eval: Box::new(move |x| {
                            let mut v = 0.0;
                            for s in [1.0, -1.0] {
                                let face = cb + s * hb / 2.0;
                                if x > face - hb / 2.0 && x < face + hb / 2.0 {
                                    v += s;
                                }
                            }
                            v
                        }),
                        knots: vec![cb - hb, cb, cb + hb],
                    };
                    let wa = Weight1 {
                        eval: Box::new(move |x| {
                            let mut v = 0.0;
                            for s in [1.0, -1.0] {
                                let r = x + s * ha / 2.0;
                                if r > ca - ha / 2.0 && r < ca + ha / 2.0 {
                                    v += s;
                                }
                            }
                            v
                        }),
                        knots: vec![ca - ha, ca, ca + ha],
                    };
                    let mut w: [&Weight1; 3] = [&wv[0], &wv[1], &wv[2]];
                    w[b] = &wb;
                    w[a] = &wa;
                    let _ = g;
                    integrate_3d(w, &retarded, n, self.tol)
                };
                s[b][a] = (0..n)
                    .map(|k| {
                        let mut v = -scale * ff[k];
                        if a == b {
                            v -= scale * vv[k];
                            if d == [0, 0, 0] && k < 2 {
                                v += 0.5;
                            }
                        }
                        v
                    })
                    .collect();
            }
        }
        s
    }
}
