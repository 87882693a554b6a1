//! Small helpers on `[f64; 3]`.

pub type Vec3 = [f64; 3];

pub const E: [Vec3; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// `a + s b`.
#[inline]
pub fn axpy(a: Vec3, s: f64, b: Vec3) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

pub fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(1.0 / n, a))
}

/// A unit vector orthogonal to the unit vector `t`.
pub fn any_orthogonal(t: Vec3) -> Vec3 {
    let pick = if t[0].abs() <= t[1].abs() && t[0].abs() <= t[2].abs() {
        E[0]
    } else if t[1].abs() <= t[2].abs() {
        E[1]
    } else {
        E[2]
    };
    let v = axpy(pick, -dot(pick, t), t);
    scale(1.0 / norm(v), v)
}

/// Right-handed orthonormal frame `[e1, e2, t]` with `e1` along the part of
/// `hint` orthogonal to `t` (or an arbitrary orthogonal direction when that
/// part vanishes).
pub fn frame_from(t: Vec3, hint: Vec3) -> [Vec3; 3] {
    let perp = axpy(hint, -dot(hint, t), t);
    let n = norm(perp);
    let e1 = if n > 1e-12 * norm(hint).max(1e-300) && n > 0.0 {
        scale(1.0 / n, perp)
    } else {
        any_orthogonal(t)
    };
    let e2 = cross(t, e1);
    [e1, e2, t]
}
