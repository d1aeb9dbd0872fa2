//! Radial shell moments of separable piecewise-linear weights.
//!
//! Every tested interaction integral reduces to the form
//!
//! ```text
//!   I = ∫ w_x(x) w_y(y) w_z(z) f(|r|) d³r ,   r = (x, y, z)
//! ```
//!
//! where the one-dimensional weights are interval correlations (triangles or
//! boxcars) or a point mass, and `f` is piecewise `c₋₁/R + c₀ + c₁·R` on unit
//! shells `j ≤ R < j+1` (lengths measured in units of `c·Δt`). This module
//! computes the shell moments
//!
//! ```text
//!   m[j][p] = ∫_{j ≤ |r| < j+1} w(r) |r|^p d³r ,   p ∈ {−1, 0, 1}
//! ```
//!
//! in cylindrical coordinates around the axial profile. The angular integral
//! over a circle of the two in-plane weights and the axial integral across a
//! shell are both closed form; only the radial coordinate `s` is integrated
//! numerically, with double-exponential quadrature on intervals split at every
//! point where the integrand loses smoothness.

use std::f64::consts::{FRAC_PI_2, PI};

/// Linear piece `c0 + c1·x` on `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub c0: f64,
    pub c1: f64,
}

/// One-dimensional weight of a separable integrand.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// Sorted, non-overlapping linear pieces; zero outside.
    Pieces(Vec<Piece>),
    /// Unit point mass at the given coordinate.
    Delta(f64),
}

impl Profile {
    /// Indicator of `[lo, hi)`.
    pub fn boxcar(lo: f64, hi: f64) -> Self {
        Profile::Pieces(vec![Piece { lo, hi, c0: 1.0, c1: 0.0 }])
    }

    /// `max(0, half − |x − center|)`: the overlap length of two intervals of
    /// width `half` whose centers differ by `x − center`.
    pub fn triangle(center: f64, half: f64) -> Self {
        Profile::Pieces(vec![
            Piece { lo: center - half, hi: center, c0: half - center, c1: 1.0 },
            Piece { lo: center, hi: center + half, c0: half + center, c1: -1.0 },
        ])
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Pieces(p) => p
                .iter()
                .find(|q| x >= q.lo && x < q.hi)
                .map_or(0.0, |q| q.c0 + q.c1 * x),
            Profile::Delta(_) => 0.0,
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Profile::Pieces(p) => {
                let mut k: Vec<f64> = p.iter().flat_map(|q| [q.lo, q.hi]).collect();
                k.sort_by(f64::total_cmp);
                k.dedup();
                k
            }
            Profile::Delta(c) => vec![*c],
        }
    }

    fn max_abs(&self) -> f64 {
        self.knots().iter().fold(0.0_f64, |m, k| m.max(k.abs()))
    }

    /// Smallest `|x|` over the support.
    fn min_abs(&self) -> f64 {
        match self {
            Profile::Delta(c) => c.abs(),
            Profile::Pieces(p) => {
                let lo = p.first().map_or(0.0, |q| q.lo);
                let hi = p.last().map_or(0.0, |q| q.hi);
                if lo <= 0.0 && hi >= 0.0 {
                    0.0
                } else {
                    lo.abs().min(hi.abs())
                }
            }
        }
    }

    /// `∫ |w|`.
    fn l1(&self) -> f64 {
        match self {
            Profile::Pieces(p) => p
                .iter()
                .map(|q| {
                    let (a, b) = (q.c0 + q.c1 * q.lo, q.c0 + q.c1 * q.hi);
                    let w = q.hi - q.lo;
                    if a * b >= 0.0 {
                        0.5 * w * (a.abs() + b.abs())
                    } else {
                        0.5 * w * (a * a + b * b) / (a.abs() + b.abs())
                    }
                })
                .sum(),
            Profile::Delta(_) => 1.0,
        }
    }

    fn is_delta(&self) -> bool {
        matches!(self, Profile::Delta(_))
    }
}

/// Shell moments `m[j] = [∫ w/R, ∫ w, ∫ w·R]` over `j ≤ R < j+1`.
pub type ShellMoments = Vec<[f64; 3]>;

/// Result of [`shell_moments`] with the quadrature convergence flag.
#[derive(Clone, Debug)]
pub struct Moments {
    pub shells: ShellMoments,
    pub converged: bool,
}

/// Radial shell moments of `w_x(x)·w_y(y)·w_z(z)`.
///
/// At most one profile may be a point mass. The result has one entry per
/// shell from `j = 0` to the outermost shell touched by the support.
pub fn shell_moments(profiles: [&Profile; 3], rel_tol: f64) -> Moments {
    let n_delta = profiles.iter().filter(|p| p.is_delta()).count();
    assert!(n_delta <= 1, "at most one point-mass profile is supported");
    // Axial profile: the point mass if present, otherwise the one with the most
    // pieces (keeps the angular part cheap).
    let axial = profiles
        .iter()
        .enumerate()
        .max_by_key(|(i, p)| match p {
            Profile::Delta(_) => (usize::MAX, 3 - *i),
            Profile::Pieces(q) => (q.len(), 3 - *i),
        })
        .map(|(i, _)| i)
        .unwrap();
    let plane: Vec<&Profile> = (0..3).filter(|&i| i != axial).map(|i| profiles[i]).collect();
    let (px, py, pz) = (plane[0], plane[1], profiles[axial]);

    let r_max = (px.max_abs().powi(2) + py.max_abs().powi(2) + pz.max_abs().powi(2)).sqrt();
    let r_min = (px.min_abs().powi(2) + py.min_abs().powi(2) + pz.min_abs().powi(2)).sqrt();
    let j_max = r_max.floor() as usize;
    let j_min = (r_min.floor() as usize).min(j_max);
    let n_shell = j_max + 1;

    let plane_max = (px.max_abs().powi(2) + py.max_abs().powi(2)).sqrt();
    let s_max = plane_max.min(r_max);

    let xk = px.knots();
    let yk = py.knots();
    let zk = pz.knots();

    let mut brk = vec![0.0, s_max];
    for a in xk.iter().chain(yk.iter()) {
        brk.push(a.abs());
    }
    for a in &xk {
        for b in &yk {
            brk.push(a.hypot(*b));
        }
    }
    for j in j_min..=n_shell {
        let jj = j as f64;
        brk.push(jj);
        for z in &zk {
            if z.abs() <= jj {
                brk.push(((jj - z.abs()) * (jj + z.abs())).sqrt());
            }
        }
    }
    brk.retain(|b| b.is_finite() && *b >= 0.0 && *b <= s_max);
    brk.sort_by(f64::total_cmp);
    brk.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));

    let abs_tol = rel_tol * px.l1() * py.l1() * pz.l1();
    let plane_knots = (xk, yk);
    let mut acc = vec![0.0; 3 * n_shell];
    let mut converged = true;
    let mut buf = vec![0.0; 3 * n_shell];
    for seg in brk.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b - a <= 1e-15 * (1.0 + b) {
            continue;
        }
        let (part, ok) = tanh_sinh(a, b, 3 * n_shell, rel_tol, abs_tol, |s, out| {
            let c = angular_weight(px, py, &plane_knots, s);
            if c == 0.0 {
                return;
            }
            buf.iter_mut().for_each(|v| *v = 0.0);
            axial_shells(pz, s, j_min, j_max, &mut buf);
            let f = s * c;
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += f * v;
            }
        });
        converged &= ok;
        for (x, p) in acc.iter_mut().zip(part) {
            *x += p;
        }
    }
    Moments { shells: acc.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(), converged }
}

/// `∫₀^{2π} w_x(s cos θ) w_y(s sin θ) dθ`, exact for piecewise-linear weights.
fn angular_weight(px: &Profile, py: &Profile, knots: &(Vec<f64>, Vec<f64>), s: f64) -> f64 {
    let (Profile::Pieces(qx), Profile::Pieces(qy)) = (px, py) else {
        unreachable!("in-plane profiles are never point masses")
    };
    let mut ang: [f64; 40] = [0.0; 40];
    let mut n = 0;
    let mut push = |t: f64| {
        if n < ang.len() {
            ang[n] = t.rem_euclid(2.0 * PI);
            n += 1;
        }
    };
    push(0.0);
    for a in &knots.0 {
        if a.abs() < s {
            let t = ((s - a) * (s + a)).sqrt().atan2(*a);
            push(t);
            push(-t);
        }
    }
    for b in &knots.1 {
        if b.abs() < s {
            let t = b.atan2(((s - b) * (s + b)).sqrt());
            push(t);
            push(PI - t);
        }
    }
    let ang = &mut ang[..n];
    ang.sort_by(f64::total_cmp);

    let mut total = 0.0;
    for i in 0..n {
        let t1 = ang[i];
        let t2 = if i + 1 < n { ang[i + 1] } else { 2.0 * PI };
        if t2 <= t1 {
            continue;
        }
        let mid = 0.5 * (t1 + t2);
        let (sm, cm) = mid.sin_cos();
        let (x, y) = (s * cm, s * sm);
        let Some(p) = qx.iter().find(|q| x >= q.lo && x < q.hi) else {
            continue;
        };
        let Some(q) = qy.iter().find(|q| y >= q.lo && y < q.hi) else {
            continue;
        };
        // Expand both weights about the arc midpoint so that large offsets
        // `c0` never cancel against `c1·s`.
        let half = 0.5 * (t2 - t1);
        let (xm, ym) = (p.c0 + p.c1 * x, q.c0 + q.c1 * y);
        let (g, r) = arc_moments(half);
        total += xm * ym * 2.0 * half
            - (xm * q.c1 * s * sm + ym * p.c1 * s * cm) * g
            + p.c1 * q.c1 * s * s * sm * cm * r;
    }
    total
}

/// For an arc `[m−δ, m+δ]`: `g = 2δ − 2 sin δ`, so that
/// `∫(cos t − cos m) = −g cos m`, and `r = 2δ − 4 sin δ + sin 2δ`, so that
/// `∫(cos t − cos m)(sin t − sin m) = r sin m cos m`.
fn arc_moments(d: f64) -> (f64, f64) {
    if d < 0.05 {
        let d2 = d * d;
        let g = d * d2 * (1.0 / 3.0 - d2 * (1.0 / 60.0 - d2 * (1.0 / 2520.0 - d2 / 181_440.0)));
        let r = d * d2 * (-2.0 / 3.0 + d2 * (7.0 / 30.0 - d2 * (31.0 / 1260.0 - d2 * 127.0 / 90_720.0)));
        (g, r)
    } else {
        (2.0 * d - 2.0 * d.sin(), 2.0 * d - 4.0 * d.sin() + (2.0 * d).sin())
    }
}

/// Adds `∫ w_z(z) 1[j ≤ R < j+1] R^p dz`, `R = √(s² + z²)`, for every shell.
fn axial_shells(pz: &Profile, s: f64, j_min: usize, j_max: usize, out: &mut [f64]) {
    let q = s * s;
    match pz {
        Profile::Delta(c) => {
            let r = (q + c * c).sqrt();
            let j = r.floor() as usize;
            if j <= j_max {
                out[3 * j] += 1.0 / r;
                out[3 * j + 1] += 1.0;
                out[3 * j + 2] += r;
            }
        }
        Profile::Pieces(pieces) => {
            let j_first = (s.floor() as usize).max(j_min);
            for j in j_first..=j_max {
                let inner = (j as f64).powi(2) - q;
                let outer = (j as f64 + 1.0).powi(2) - q;
                if outer <= 0.0 {
                    continue;
                }
                let zlo = inner.max(0.0).sqrt();
                let zhi = outer.sqrt();
                let mut m = [0.0; 3];
                for p in pieces {
                    for (lo, hi) in [(zlo, zhi), (-zhi, -zlo)] {
                        let a = lo.max(p.lo);
                        let b = hi.min(p.hi);
                        if b > a {
                            let ga = axial_antiderivative(p, s, a);
                            let gb = axial_antiderivative(p, s, b);
                            for k in 0..3 {
                                m[k] += gb[k] - ga[k];
                            }
                        }
                    }
                }
                out[3 * j] += m[0];
                out[3 * j + 1] += m[1];
                out[3 * j + 2] += m[2];
            }
        }
    }
}

/// Antiderivatives in `z` of `(c0 + c1 z)·R^p`, `p = −1, 0, 1`.
fn axial_antiderivative(p: &Piece, s: f64, z: f64) -> [f64; 3] {
    let q = s * s;
    let r = (q + z * z).sqrt();
    let ash = if s > 0.0 { (z / s).asinh() } else { z.signum() * f64::INFINITY };
    [
        p.c0 * ash + p.c1 * r,
        p.c0 * z + 0.5 * p.c1 * z * z,
        0.5 * p.c0 * (z * r + if q > 0.0 { q * ash } else { 0.0 }) + p.c1 * r * r * r / 3.0,
    ]
}

/// Vector-valued tanh-sinh quadrature on `[a, b]` with level doubling.
/// Returns the estimate and whether the level-to-level change met `rel_tol`
/// (relative to the largest component) or `abs_tol`.
///
/// Integrable endpoint singularities of algebraic or logarithmic type do not
/// degrade convergence, which is why every breakpoint above sits on an
/// interval end.
pub(crate) fn tanh_sinh<F>(a: f64, b: f64, n: usize, rel_tol: f64, abs_tol: f64, mut f: F) -> (Vec<f64>, bool)
where
    F: FnMut(f64, &mut [f64]),
{
    const T_MAX: f64 = 3.5;
    const MAX_LEVEL: u32 = 8;
    let half = 0.5 * (b - a);
    let mut sum = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut vals = vec![0.0; n];

    // Σ|w f| bounds the rounding noise of the weighted sums.
    let mut mass = vec![0.0; n];
    let mut eval = |t: f64, sum: &mut [f64], mass: &mut [f64], vals: &mut [f64]| {
        let u = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // distance from the nearer endpoint, and sech²(u)
        let d = half * 2.0 * e / (1.0 + e);
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        let w = half * FRAC_PI_2 * t.cosh() * sech2;
        if w == 0.0 || d == 0.0 {
            return;
        }
        let x = if u >= 0.0 { b - d } else { a + d };
        vals.iter_mut().for_each(|v| *v = 0.0);
        f(x, vals);
        for ((s, m), v) in sum.iter_mut().zip(mass.iter_mut()).zip(vals.iter()) {
            *s += w * v;
            *m += (w * v).abs();
        }
    };

    // level 0: h = 1
    let mut h = 1.0;
    let k_max = (T_MAX / h) as i64;
    for k in -k_max..=k_max {
        eval(k as f64 * h, &mut sum, &mut mass, &mut vals);
    }
    let mut est: Vec<f64> = sum.iter().map(|s| s * h).collect();
    for level in 1..=MAX_LEVEL {
        prev.copy_from_slice(&est);
        h *= 0.5;
        let k_max = (T_MAX / h) as i64;
        let mut k = -k_max + if k_max % 2 == 0 { 1 } else { 0 };
        while k <= k_max {
            eval(k as f64 * h, &mut sum, &mut mass, &mut vals);
            k += 2;
        }
        est.iter_mut().zip(sum.iter()).for_each(|(e, s)| *e = s * h);
        if level >= 3 {
            let scale = est.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let diff = est
                .iter()
                .zip(prev.iter())
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            let noise = 64.0 * f64::EPSILON * h * mass.iter().fold(0.0_f64, |m, v| m.max(*v));
            if diff <= (rel_tol * scale).max(noise).max(abs_tol).max(1e-300) {
                return (est, true);
            }
        }
    }
    (est, false)
}
