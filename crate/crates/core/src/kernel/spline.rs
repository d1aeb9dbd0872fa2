//! Quadratic B-spline temporal basis.

/// `B₂(x)`: `x²/2` on `[0,1)`, `(−2x²+6x−3)/2` on `[1,2)`, `(3−x)²/2` on
/// `[2,3)`, zero elsewhere.
pub fn b2(x: f64) -> f64 {
    if !(0.0..3.0).contains(&x) {
        0.0
    } else if x < 1.0 {
        0.5 * x * x
    } else if x < 2.0 {
        0.5 * (-2.0 * x * x + 6.0 * x - 3.0)
    } else {
        0.5 * (3.0 - x) * (3.0 - x)
    }
}

/// Second derivative of [`b2`], piecewise constant `1, −2, 1`.
pub fn b2_second(x: f64) -> f64 {
    if !(0.0..3.0).contains(&x) {
        0.0
    } else if x < 1.0 {
        1.0
    } else if x < 2.0 {
        -2.0
    } else {
        1.0
    }
}

/// Value of basis `T_{n'}` at test time `nΔt` for lag `k = n − n'`.
pub fn nodal_value(lag: i64) -> f64 {
    b2(lag as f64 + 1.0)
}

/// Retarded signature `B₂(k + 1 − R)` on shell `j ≤ R < j+1` written as
/// `b0 + b1·u + b2·u²` with `u = R − j`; piece index `i = k − j`.
pub(crate) fn shell_piece(i: i64) -> Option<[f64; 3]> {
    match i {
        0 => Some([0.5, -1.0, 0.5]),
        1 => Some([0.5, 1.0, -1.0]),
        2 => Some([0.0, 0.0, 0.5]),
        _ => None,
    }
}

/// `B₂''(k + 1 − R)` on shell `j`, piece `i = k − j`.
pub(crate) fn shell_piece_second(i: i64) -> f64 {
    match i {
        0 | 2 => 1.0,
        1 => -2.0,
        _ => 0.0,
    }
}

/// Weights `(e₋₁, e₀, e₁)` such that `∫_shell w·B₂(k+1−R)/R = Σ e_p m_p`.
pub(crate) fn shell_weights(lag: i64, shell: usize) -> [f64; 3] {
    let j = shell as f64;
    match shell_piece(lag - shell as i64) {
        Some([b0, b1, b2]) => [b0 - b1 * j + b2 * j * j, b1 - 2.0 * b2 * j, b2],
        None => [0.0; 3],
    }
}
