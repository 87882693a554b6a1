//! Compactly supported test fields with exact derivatives.
//!
//! Every field is a finite combination of smooth bumps
//! `a · P(y - c) · exp(-|y - c|²/w²) · χ(|y - c|)`, where `χ` is a C^∞ cutoff
//! equal to one for `|y - c| ≤ 5w` and zero beyond `6w`. Derivatives come
//! from [`Jet`] arithmetic, Fourier transforms from a radial reduction.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_ORDER};
use crate::quadrature::{gauss_legendre_cached, integrate, Tolerance};
use crate::vec3::{self, Vec3, E};

/// Cutoff plateau and support, in units of the bump width.
pub const PLATEAU: f64 = 5.0;
pub const SUPPORT: f64 = 6.0;

const SHELL_RHO: f64 = (PLATEAU * PLATEAU) / (SUPPORT * SUPPORT);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarField {
    /// `a · exp(-|y-c|²/w²) · χ`.
    Bump {
        center: Vec3,
        width: f64,
        amplitude: f64,
    },
    /// `a · m·(y-c) · exp(-|y-c|²/w²) · χ`.
    LinearBump {
        center: Vec3,
        width: f64,
        amplitude: f64,
        slope: Vec3,
    },
    Sum(Vec<ScalarField>),
    Scaled(f64, Box<ScalarField>),
    /// `∂^β f`.
    Partial([u8; 3], Box<ScalarField>),
}

pub fn make_bump_scalar(center: Vec3, width: f64, amplitude: f64) -> Result<ScalarField> {
    check_bump(center, width, amplitude)?;
    Ok(ScalarField::Bump {
        center,
        width,
        amplitude,
    })
}

pub fn make_linear_bump(
    center: Vec3,
    width: f64,
    amplitude: f64,
    slope: Vec3,
) -> Result<ScalarField> {
    check_bump(center, width, amplitude)?;
    if slope.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("slope must be finite".into()));
    }
    Ok(ScalarField::LinearBump {
        center,
        width,
        amplitude,
        slope,
    })
}

fn check_bump(center: Vec3, width: f64, amplitude: f64) -> Result<()> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bump width must be positive, got {width}"
        )));
    }
    if center.iter().any(|v| !v.is_finite()) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(
            "bump center and amplitude must be finite".into(),
        ));
    }
    Ok(())
}

/// Scalar value of the cutoff as a function of `ρ = |z|²/(6w)²`.
fn cutoff_value(rho: f64) -> f64 {
    if rho <= SHELL_RHO {
        return 1.0;
    }
    if rho >= 1.0 {
        return 0.0;
    }
    let s = (1.0 - rho) / (1.0 - SHELL_RHO);
    let h1 = (-1.0 / s).exp();
    let h2 = (-1.0 / (1.0 - s)).exp();
    h1 / (h1 + h2)
}

/// Cutoff jet about offset `z` from the bump center, valid in the shell.
fn cutoff_jet(z: Vec3, width: f64, order: usize) -> Jet {
    let scale = 1.0 / (SUPPORT * width).powi(2);
    let r2 = Jet::from_fn(order, |e| match (e[0], e[1], e[2]) {
        (0, 0, 0) => vec3::dot(z, z),
        (1, 0, 0) => 2.0 * z[0],
        (0, 1, 0) => 2.0 * z[1],
        (0, 0, 1) => 2.0 * z[2],
        (2, 0, 0) | (0, 2, 0) | (0, 0, 2) => 1.0,
        _ => 0.0,
    });
    let rho = r2 * scale;
    let s = (Jet::constant(1.0, order) - rho) * (1.0 / (1.0 - SHELL_RHO));
    let h1 = (-s.recip()).exp();
    let h2 = (-(Jet::constant(1.0, order) - s).recip()).exp();
    h1 * (h1 + h2).recip()
}

/// Taylor coefficients of `exp(-(y + h)²/w²)` in `h`, up to `order`.
fn gaussian_taylor_1d(y: f64, width: f64, order: usize, out: &mut [f64]) {
    let k2 = 2.0 / (width * width);
    out[0] = (-(y * y) / (width * width)).exp();
    if order >= 1 {
        out[1] = -k2 * y * out[0];
    }
    for k in 1..order {
        out[k + 1] = -k2 * (y * out[k] + out[k - 1]) / (k + 1) as f64;
    }
}

/// Jet of `exp(-|z + h|²/w²) · χ` about `z`.
fn bump_jet(z: Vec3, width: f64, order: usize) -> Jet {
    let r2 = vec3::dot(z, z);
    let lim = SUPPORT * width;
    if r2 >= lim * lim {
        return Jet::zero(order);
    }
    let mut g = [[0.0; MAX_ORDER + 1]; 3];
    for j in 0..3 {
        gaussian_taylor_1d(z[j], width, order, &mut g[j]);
    }
    let gauss = Jet::from_fn(order, |e| {
        g[0][e[0] as usize] * g[1][e[1] as usize] * g[2][e[2] as usize]
    });
    if r2 <= SHELL_RHO * lim * lim {
        gauss
    } else {
        gauss * cutoff_jet(z, width, order)
    }
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

fn sinc_prime(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        let z2 = z * z;
        z * (-1.0 / 3.0 + z2 / 30.0 - z2 * z2 / 840.0)
    } else {
        (z * z.cos() - z.sin()) / (z * z)
    }
}

/// `4π ∫ e^{-r²/w²} (1 - χ) r^{2+p} K(kr) dr` over the cutoff shell and beyond,
/// with `K = sinc` for `p = 0` and `K = sinc'` for `p = 1`.
fn shell_correction(k: f64, width: f64, p: i32) -> f64 {
    let w = width;
    let f = |r: f64| {
        let rho = (r / (SUPPORT * w)).powi(2);
        let kern = if p == 0 {
            sinc(k * r)
        } else {
            sinc_prime(k * r)
        };
        (-(r * r) / (w * w)).exp() * (1.0 - cutoff_value(rho)) * r.powi(2 + p) * kern
    };
    let scale = w.powi(3 + p);
    let tol = Tolerance {
        abs: 1e-17 * scale,
        rel: 1e-10,
        max_evals: 50_000,
    };
    // The Gaussian factor is below e^{-144} past 12w.
    let v = integrate(f, PLATEAU * w, 12.0 * w, tol).unwrap_or_else(|_| {
        integrate(
            f,
            PLATEAU * w,
            12.0 * w,
            Tolerance {
                abs: 1e-15 * scale,
                rel: 1e-6,
                max_evals: 400_000,
            },
        )
        .unwrap_or(0.0)
    });
    4.0 * PI * v
}

/// Radial Fourier transform of the cut-off Gaussian profile.
fn radial_transform(k: f64, width: f64) -> f64 {
    let w = width;
    PI.powf(1.5) * w.powi(3) * (-(k * k * w * w) / 4.0).exp() - shell_correction(k, w, 0)
}

/// Derivative in `k` of [`radial_transform`].
fn radial_transform_prime(k: f64, width: f64) -> f64 {
    let w = width;
    let h = PI.powf(1.5) * w.powi(3) * (-(k * k * w * w) / 4.0).exp();
    -0.5 * k * w * w * h - shell_correction(k, w, 1)
}

/// A bump term `P(y - c) · exp(-|y - c|²/w²)` with its cutoff dropped. Beyond
/// the plateau the Gaussian is below `e^{-25}`, so this is the fast path used
/// for tensor-grid evaluation.
#[derive(Clone, Debug)]
pub struct GaussTerm {
    pub center: Vec3,
    pub width: f64,
    /// Polynomial in `z = y - c`, stored as a jet at the origin.
    pub poly: Jet,
}

impl GaussTerm {
    pub fn scaled(&self, s: f64) -> GaussTerm {
        GaussTerm {
            poly: self.poly * s,
            ..self.clone()
        }
    }

    /// `(d·∇)` applied to the term.
    pub fn directional(&self, d: Vec3) -> GaussTerm {
        let deg = self.poly.degree();
        assert!(
            deg < MAX_ORDER,
            "polynomial degree {deg} too high to differentiate"
        );
        let p = self.poly.raise(deg + 1);
        let k2 = 2.0 / (self.width * self.width);
        let mut out = Jet::zero(deg + 1);
        for (j, &dj) in d.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            out.axpy(dj, &self.poly.partial(j).raise(deg + 1));
            out.axpy(-k2 * dj, &(p * Jet::coordinate(j, 0.0, deg + 1)));
        }
        GaussTerm {
            poly: out,
            ..self.clone()
        }
    }

    pub fn partial(&self, axis: usize) -> GaussTerm {
        self.directional(E[axis])
    }

    pub fn laplacian(&self) -> GaussTerm {
        let mut out = self.partial(0).partial(0);
        let yy = self.partial(1).partial(1);
        let zz = self.partial(2).partial(2);
        let order = out.poly.order().max(yy.poly.order()).max(zz.poly.order());
        let mut p = out.poly.raise(order);
        p.axpy(1.0, &yy.poly.raise(order));
        p.axpy(1.0, &zz.poly.raise(order));
        out.poly = p;
        out
    }

    pub fn value(&self, y: Vec3) -> f64 {
        let z = vec3::sub(y, self.center);
        self.poly.eval_at(z) * (-vec3::dot(z, z) / (self.width * self.width)).exp()
    }

    /// Rewrites the term in the coordinates `u_k = frame[k]·y`.
    pub fn rotated(&self, frame: &[Vec3; 3]) -> RotatedTerm {
        let center = [
            vec3::dot(frame[0], self.center),
            vec3::dot(frame[1], self.center),
            vec3::dot(frame[2], self.center),
        ];
        let deg = self.poly.degree();
        // z_j = Σ_k frame[k][j] v_k
        let zj: Vec<Jet> = (0..3)
            .map(|j| {
                Jet::from_fn(deg, |e| match (e[0], e[1], e[2]) {
                    (1, 0, 0) => frame[0][j],
                    (0, 1, 0) => frame[1][j],
                    (0, 0, 1) => frame[2][j],
                    _ => 0.0,
                })
            })
            .collect();
        let mut powers = vec![[Jet::constant(1.0, deg); MAX_ORDER + 1]; 3];
        for j in 0..3 {
            for p in 1..=deg {
                powers[j][p] = powers[j][p - 1] * zj[j];
            }
        }
        let mut q = Jet::zero(deg);
        let coeffs = self.poly.coeffs();
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let e = Jet::exponents(k);
            let m = powers[0][e[0] as usize] * powers[1][e[1] as usize] * powers[2][e[2] as usize];
            q.axpy(c, &m);
        }
        RotatedTerm {
            center,
            width: self.width,
            poly: q,
        }
    }
}

/// A [`GaussTerm`] expressed in a rotated frame, ready for tensor-grid
/// evaluation.
#[derive(Clone, Debug)]
pub struct RotatedTerm {
    pub center: Vec3,
    pub width: f64,
    pub poly: Jet,
}

impl RotatedTerm {
    /// Adds the term's samples on the tensor grid `axes[0] × axes[1] × axes[2]`
    /// to `out`, laid out with the last axis fastest.
    pub fn accumulate(&self, axes: [&[f64]; 3], out: &mut [f64]) {
        let deg = self.poly.degree();
        let d1 = deg + 1;
        let n = [axes[0].len(), axes[1].len(), axes[2].len()];
        debug_assert_eq!(out.len(), n[0] * n[1] * n[2]);
        let inv_w2 = 1.0 / (self.width * self.width);
        let tables: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                let mut t = vec![0.0; d1 * n[k]];
                for (i, &u) in axes[k].iter().enumerate() {
                    let v = u - self.center[k];
                    let g = (-v * v * inv_w2).exp();
                    let mut p = g;
                    for d in 0..d1 {
                        t[d * n[k] + i] = p;
                        p *= v;
                    }
                }
                t
            })
            .collect();
        // Row ranges where the Gaussian factor is not negligible.
        let live = |k: usize| -> (usize, usize) {
            let t = &tables[k];
            let lo = (0..n[k]).find(|&i| t[i] > 1e-300).unwrap_or(n[k]);
            let hi = (0..n[k])
                .rev()
                .find(|&i| t[i] > 1e-300)
                .map_or(0, |i| i + 1);
            (lo, hi.max(lo))
        };
        let (l0, h0) = live(0);
        let (l1, h1) = live(1);
        let (l2, h2) = live(2);
        if l0 >= h0 || l1 >= h1 || l2 >= h2 {
            return;
        }
        // T[a0][a1][i2] = Σ_{a2} p_{a0 a1 a2} X2[a2][i2]
        let mut tmat = vec![0.0; d1 * d1 * n[2]];
        let mut any = false;
        for (k, &c) in self.poly.coeffs().iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            any = true;
            let e = Jet::exponents(k);
            let (a0, a1, a2) = (e[0] as usize, e[1] as usize, e[2] as usize);
            let base = (a0 * d1 + a1) * n[2];
            let x2 = &tables[2][a2 * n[2]..(a2 + 1) * n[2]];
            for i2 in l2..h2 {
                tmat[base + i2] += c * x2[i2];
            }
        }
        if !any {
            return;
        }
        let mut umat = vec![0.0; d1 * n[2]];
        for i0 in l0..h0 {
            umat.iter_mut().for_each(|v| *v = 0.0);
            for a0 in 0..d1 {
                let x0 = tables[0][a0 * n[0] + i0];
                for a1 in 0..(d1 - a0) {
                    let src = &tmat[(a0 * d1 + a1) * n[2]..(a0 * d1 + a1 + 1) * n[2]];
                    let dst = &mut umat[a1 * n[2]..(a1 + 1) * n[2]];
                    for i2 in l2..h2 {
                        dst[i2] += x0 * src[i2];
                    }
                }
            }
            for i1 in l1..h1 {
                let row = &mut out[(i0 * n[1] + i1) * n[2]..(i0 * n[1] + i1 + 1) * n[2]];
                for a1 in 0..d1 {
                    let x1 = tables[1][a1 * n[1] + i1];
                    if x1 == 0.0 {
                        continue;
                    }
                    let src = &umat[a1 * n[2]..(a1 + 1) * n[2]];
                    for i2 in l2..h2 {
                        row[i2] += x1 * src[i2];
                    }
                }
            }
        }
    }

    /// Half-width of the region where the term exceeds `tau` times its scale.
    pub fn effective_radius(&self, tau: f64) -> f64 {
        let s = ((1.0 / tau).ln() + 2.0 + self.poly.degree() as f64).max(1.0);
        (self.width * s.sqrt()).min(SUPPORT * self.width)
    }
}

impl ScalarField {
    pub fn zero() -> ScalarField {
        ScalarField::Sum(Vec::new())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Bump { amplitude, .. } | ScalarField::LinearBump { amplitude, .. } => {
                *amplitude == 0.0
            }
            ScalarField::Sum(v) => v.iter().all(|f| f.is_zero()),
            ScalarField::Scaled(s, f) => *s == 0.0 || f.is_zero(),
            ScalarField::Partial(_, f) => f.is_zero(),
        }
    }

    pub fn scaled(self, s: f64) -> ScalarField {
        ScalarField::Scaled(s, Box::new(self))
    }

    pub fn partial(self, beta: [u8; 3]) -> ScalarField {
        ScalarField::Partial(beta, Box::new(self))
    }

    /// Number of derivatives consumed by `Partial` wrappers (worst branch).
    pub fn derivative_depth(&self) -> usize {
        match self {
            ScalarField::Bump { .. } | ScalarField::LinearBump { .. } => 0,
            ScalarField::Sum(v) => v.iter().map(|f| f.derivative_depth()).max().unwrap_or(0),
            ScalarField::Scaled(_, f) => f.derivative_depth(),
            ScalarField::Partial(b, f) => (b[0] + b[1] + b[2]) as usize + f.derivative_depth(),
        }
    }

    /// Highest jet order available at every point.
    pub fn max_jet_order(&self) -> usize {
        MAX_ORDER - self.derivative_depth()
    }

    pub fn support_radius(&self) -> f64 {
        match self {
            ScalarField::Bump { center, width, .. }
            | ScalarField::LinearBump { center, width, .. } => {
                vec3::norm(*center) + SUPPORT * width
            }
            ScalarField::Sum(v) => v.iter().map(|f| f.support_radius()).fold(0.0, f64::max),
            ScalarField::Scaled(_, f) | ScalarField::Partial(_, f) => f.support_radius(),
        }
    }

    pub fn value(&self, x: Vec3) -> f64 {
        match self {
            ScalarField::Bump {
                center,
                width,
                amplitude,
            } => *amplitude * bump_value(vec3::sub(x, *center), *width),
            ScalarField::LinearBump {
                center,
                width,
                amplitude,
                slope,
            } => {
                let z = vec3::sub(x, *center);
                *amplitude * vec3::dot(*slope, z) * bump_value(z, *width)
            }
            ScalarField::Sum(v) => v.iter().map(|f| f.value(x)).sum(),
            ScalarField::Scaled(s, f) => s * f.value(x),
            ScalarField::Partial(b, f) => {
                let order = (b[0] + b[1] + b[2]) as usize;
                f.jet(x, order)
                    .derivative([b[0] as usize, b[1] as usize, b[2] as usize])
            }
        }
    }

    /// Taylor jet of the field about `x`.
    pub fn jet(&self, x: Vec3, order: usize) -> Jet {
        assert!(
            order <= MAX_ORDER,
            "jet order {order} exceeds the supported maximum {MAX_ORDER}"
        );
        match self {
            ScalarField::Bump {
                center,
                width,
                amplitude,
            } => bump_jet(vec3::sub(x, *center), *width, order) * *amplitude,
            ScalarField::LinearBump {
                center,
                width,
                amplitude,
                slope,
            } => {
                let z = vec3::sub(x, *center);
                let lin = Jet::from_fn(order, |e| match (e[0], e[1], e[2]) {
                    (0, 0, 0) => vec3::dot(*slope, z),
                    (1, 0, 0) => slope[0],
                    (0, 1, 0) => slope[1],
                    (0, 0, 1) => slope[2],
                    _ => 0.0,
                });
                bump_jet(z, *width, order) * lin * *amplitude
            }
            ScalarField::Sum(v) => {
                let mut acc = Jet::zero(order);
                for f in v {
                    acc += f.jet(x, order);
                }
                acc
            }
            ScalarField::Scaled(s, f) => f.jet(x, order) * *s,
            ScalarField::Partial(b, f) => {
                let extra = (b[0] + b[1] + b[2]) as usize;
                assert!(
                    order + extra <= MAX_ORDER,
                    "derivative order {} exceeds the supported maximum {MAX_ORDER}",
                    order + extra
                );
                f.jet(x, order + extra).partial_multi(*b)
            }
        }
    }

    pub fn grad(&self, x: Vec3) -> Vec3 {
        self.jet(x, 1).grad()
    }

    pub fn hessian(&self, x: Vec3) -> [[f64; 3]; 3] {
        self.jet(x, 2).hessian()
    }

    /// Fourier transform `∫ e^{-iξ·y} f(y) dy` by radial reduction: exact
    /// Gaussian transforms minus a one-dimensional cutoff-shell correction.
    pub fn spectrum(&self, xi: Vec3) -> Complex64 {
        match self {
            ScalarField::Bump {
                center,
                width,
                amplitude,
            } => {
                if *amplitude == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let k = vec3::norm(xi);
                let phase = Complex64::from_polar(1.0, -vec3::dot(xi, *center));
                phase * (*amplitude * radial_transform(k, *width))
            }
            ScalarField::LinearBump {
                center,
                width,
                amplitude,
                slope,
            } => {
                let k = vec3::norm(xi);
                if *amplitude == 0.0 || k == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let phase = Complex64::from_polar(1.0, -vec3::dot(xi, *center));
                let mk = vec3::dot(*slope, xi) / k;
                phase * Complex64::new(0.0, *amplitude * mk * radial_transform_prime(k, *width))
            }
            ScalarField::Sum(v) => v.iter().map(|f| f.spectrum(xi)).sum(),
            ScalarField::Scaled(s, f) => f.spectrum(xi) * *s,
            ScalarField::Partial(b, f) => {
                let mut m = Complex64::new(1.0, 0.0);
                for j in 0..3 {
                    for _ in 0..b[j] {
                        m *= Complex64::new(0.0, xi[j]);
                    }
                }
                m * f.spectrum(xi)
            }
        }
    }

    /// The field as a list of cutoff-free Gaussian terms.
    pub fn gauss_terms(&self) -> Vec<GaussTerm> {
        let mut out = Vec::new();
        self.push_terms(1.0, &mut out);
        out
    }

    fn push_terms(&self, s: f64, out: &mut Vec<GaussTerm>) {
        match self {
            ScalarField::Bump {
                center,
                width,
                amplitude,
            } => {
                if *amplitude != 0.0 {
                    out.push(GaussTerm {
                        center: *center,
                        width: *width,
                        poly: Jet::constant(s * amplitude, 0),
                    });
                }
            }
            ScalarField::LinearBump {
                center,
                width,
                amplitude,
                slope,
            } => {
                if *amplitude != 0.0 {
                    let a = s * amplitude;
                    let poly = Jet::from_fn(1, |e| match (e[0], e[1], e[2]) {
                        (1, 0, 0) => a * slope[0],
                        (0, 1, 0) => a * slope[1],
                        (0, 0, 1) => a * slope[2],
                        _ => 0.0,
                    });
                    out.push(GaussTerm {
                        center: *center,
                        width: *width,
                        poly,
                    });
                }
            }
            ScalarField::Sum(v) => v.iter().for_each(|f| f.push_terms(s, out)),
            ScalarField::Scaled(t, f) => f.push_terms(s * t, out),
            ScalarField::Partial(b, f) => {
                let mut inner = Vec::new();
                f.push_terms(s, &mut inner);
                for mut t in inner {
                    for j in 0..3 {
                        for _ in 0..b[j] {
                            t = t.partial(j);
                        }
                    }
                    out.push(t);
                }
            }
        }
    }
}

fn bump_value(z: Vec3, width: f64) -> f64 {
    let r2 = vec3::dot(z, z);
    let lim2 = (SUPPORT * width).powi(2);
    if r2 >= lim2 {
        return 0.0;
    }
    (-r2 / (width * width)).exp() * cutoff_value(r2 / lim2)
}

/// Vector field as a sum of `direction · scalar` terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub terms: Vec<(Vec3, ScalarField)>,
}

impl VectorField {
    pub fn zero() -> VectorField {
        VectorField { terms: Vec::new() }
    }

    pub fn from_components(c: [ScalarField; 3]) -> VectorField {
        let [a, b, d] = c;
        VectorField {
            terms: vec![(E[0], a), (E[1], b), (E[2], d)],
        }
    }

    pub fn term(direction: Vec3, f: ScalarField) -> VectorField {
        VectorField {
            terms: vec![(direction, f)],
        }
    }

    pub fn plus(mut self, other: VectorField) -> VectorField {
        self.terms.extend(other.terms);
        self
    }

    pub fn scaled(self, s: f64) -> VectorField {
        VectorField {
            terms: self
                .terms
                .into_iter()
                .map(|(d, f)| (vec3::scale(s, d), f))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms
            .iter()
            .all(|(d, f)| vec3::norm(*d) == 0.0 || f.is_zero())
    }

    /// The scalar field `d · A`.
    pub fn project(&self, d: Vec3) -> ScalarField {
        ScalarField::Sum(
            self.terms
                .iter()
                .filter_map(|(dir, f)| {
                    let s = vec3::dot(d, *dir);
                    (s != 0.0).then(|| f.clone().scaled(s))
                })
                .collect(),
        )
    }

    pub fn component(&self, j: usize) -> ScalarField {
        self.project(E[j])
    }

    pub fn support_radius(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, f)| f.support_radius())
            .fold(0.0, f64::max)
    }

    pub fn max_jet_order(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, f)| f.max_jet_order())
            .min()
            .unwrap_or(MAX_ORDER)
    }

    pub fn value(&self, x: Vec3) -> Vec3 {
        let mut v = [0.0; 3];
        for (d, f) in &self.terms {
            v = vec3::axpy(v, f.value(x), *d);
        }
        v
    }

    /// Jets of the three Cartesian components.
    pub fn jets(&self, x: Vec3, order: usize) -> [Jet; 3] {
        let mut out = [Jet::zero(order); 3];
        for (d, f) in &self.terms {
            let j = f.jet(x, order);
            for k in 0..3 {
                if d[k] != 0.0 {
                    out[k].axpy(d[k], &j);
                }
            }
        }
        out
    }

    /// Jet of `d · A`.
    pub fn projected_jet(&self, d: Vec3, x: Vec3, order: usize) -> Jet {
        let mut out = Jet::zero(order);
        for (dir, f) in &self.terms {
            let s = vec3::dot(d, *dir);
            if s != 0.0 {
                out.axpy(s, &f.jet(x, order));
            }
        }
        out
    }

    pub fn spectrum(&self, xi: Vec3) -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (d, f) in &self.terms {
            let s = f.spectrum(xi);
            for k in 0..3 {
                out[k] += s * d[k];
            }
        }
        out
    }

    /// Spectrum of `d · A`.
    pub fn projected_spectrum(&self, d: Vec3, xi: Vec3) -> Complex64 {
        self.terms
            .iter()
            .map(|(dir, f)| {
                let s = vec3::dot(d, *dir);
                if s == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    f.spectrum(xi) * s
                }
            })
            .sum()
    }

    /// Gaussian terms of `d · A`.
    pub fn projected_terms(&self, d: Vec3) -> Vec<GaussTerm> {
        self.project(d).gauss_terms()
    }
}

/// The perturbation pair `(A, V)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub a: VectorField,
    pub v: ScalarField,
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::zero()
    }
}

impl FieldPair {
    pub fn new(a: VectorField, v: ScalarField) -> FieldPair {
        FieldPair { a, v }
    }

    pub fn zero() -> FieldPair {
        FieldPair::new(VectorField::zero(), ScalarField::zero())
    }

    pub fn support_radius(&self) -> f64 {
        self.a.support_radius().max(self.v.support_radius())
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.v.is_zero()
    }
}

/// `∇φ` as a vector field.
pub fn gradient_field(phi: &ScalarField) -> VectorField {
    VectorField {
        terms: (0..3)
            .map(|j| {
                let mut b = [0u8; 3];
                b[j] = 1;
                (E[j], phi.clone().partial(b))
            })
            .collect(),
    }
}

/// `Δφ` as a scalar field.
pub fn laplacian_field(phi: &ScalarField) -> ScalarField {
    ScalarField::Sum(vec![
        phi.clone().partial([2, 0, 0]),
        phi.clone().partial([0, 2, 0]),
        phi.clone().partial([0, 0, 2]),
    ])
}

/// `(A + ∇φ, V + ½Δφ)`.
pub fn gauge_transform(pair: &FieldPair, phi: &ScalarField) -> FieldPair {
    if phi.is_zero() {
        return pair.clone();
    }
    FieldPair {
        a: pair.a.clone().plus(gradient_field(phi)),
        v: ScalarField::Sum(vec![pair.v.clone(), laplacian_field(phi).scaled(0.5)]),
    }
}

pub fn curl(field: &VectorField, x: Vec3) -> Vec3 {
    let mut c = [0.0; 3];
    for (d, f) in &field.terms {
        c = vec3::add(c, vec3::cross(f.grad(x), *d));
    }
    c
}

pub fn divergence(field: &VectorField, x: Vec3) -> f64 {
    field
        .terms
        .iter()
        .map(|(d, f)| vec3::dot(*d, f.grad(x)))
        .sum()
}

pub fn laplacian(field: &ScalarField, x: Vec3) -> f64 {
    field.jet(x, 2).laplacian_value()
}

/// `V - ½∇·A`, the gauge-invariant scalar.
pub fn invariant_scalar(pair: &FieldPair, x: Vec3) -> f64 {
    pair.v.value(x) - 0.5 * divergence(&pair.a, x)
}

const QUAD_ORDER: usize = 8;
const QUAD_BUDGET: usize = 20_000_000;

/// Composite tensor Gauss–Legendre sum over `[-r, r]³` with `panels` panels
/// per axis. Returns the sums of `f` and of `|f|` (the mass).
fn tensor_sum<T, F>(r: f64, panels: usize, f: &F) -> (T, f64)
where
    T: Copy + Send + std::iter::Sum<T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(Vec3) -> (T, f64) + Sync,
{
    let gl = gauss_legendre_cached(QUAD_ORDER);
    let (gx, gw) = (&gl.0, &gl.1);
    let h = 2.0 * r / panels as f64;
    let mut nodes = Vec::with_capacity(panels * QUAD_ORDER);
    for p in 0..panels {
        let a = -r + p as f64 * h;
        for q in 0..QUAD_ORDER {
            nodes.push((a + 0.5 * h * (gx[q] + 1.0), 0.5 * h * gw[q]));
        }
    }
    let slabs: Vec<(T, f64)> = nodes
        .par_iter()
        .map(|&(x, wx)| {
            let mut acc: Option<T> = None;
            let mut mass = 0.0;
            for &(y, wy) in &nodes {
                for &(z, wz) in &nodes {
                    let (v, m) = f([x, y, z]);
                    let w = wx * wy * wz;
                    acc = Some(match acc {
                        None => v * w,
                        Some(a) => a + v * w,
                    });
                    mass += m * w;
                }
            }
            (acc.expect("non-empty node list"), mass)
        })
        .collect();
    let mut mass = 0.0;
    let mut vals = Vec::with_capacity(slabs.len());
    for (v, m) in slabs {
        vals.push(v);
        mass += m;
    }
    (vals.into_iter().sum(), mass)
}

/// Refines the panel count until two successive tensor sums agree to
/// `tol` relative to the integrand's L¹ mass.
fn adaptive_cube<T, F>(r: f64, tol: f64, f: F, dist: impl Fn(T, T) -> f64) -> Result<T>
where
    T: Copy + Send + std::iter::Sum<T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(Vec3) -> (T, f64) + Sync,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut panels = 2;
    let (mut prev, mut prev_mass) = tensor_sum(r, panels, &f);
    let mut evals = (panels * QUAD_ORDER).pow(3);
    loop {
        panels *= 2;
        let cost = (panels * QUAD_ORDER).pow(3);
        if evals + cost > QUAD_BUDGET {
            return Err(Error::Accuracy {
                estimate: dist(prev, prev),
                target: tol * prev_mass,
                evaluations: evals,
            });
        }
        let (cur, mass) = tensor_sum(r, panels, &f);
        evals += cost;
        let diff = dist(cur, prev);
        let scale = mass.max(prev_mass);
        if diff <= tol * scale || scale == 0.0 {
            return Ok(cur);
        }
        if evals + (2 * panels * QUAD_ORDER).pow(3) > QUAD_BUDGET {
            return Err(Error::Accuracy {
                estimate: diff,
                target: tol * scale,
                evaluations: evals,
            });
        }
        prev = cur;
        prev_mass = mass;
    }
}

/// Direct Fourier transform `∫ e^{-iξ·y} f(y) dy` by adaptive tensor
/// Gauss–Legendre quadrature over the support cube. This is the
/// independent route used to validate [`ScalarField::spectrum`].
pub fn fourier_transform(field: &ScalarField, xi: Vec3, tol: f64) -> Result<Complex64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if field.is_zero() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let r = field.support_radius();
    adaptive_cube(
        r,
        tol,
        |y| {
            let v = field.value(y);
            if v == 0.0 {
                return (Complex64::new(0.0, 0.0), 0.0);
            }
            (Complex64::from_polar(v, -vec3::dot(xi, y)), v.abs())
        },
        |a: Complex64, b: Complex64| (a - b).norm(),
    )
}

/// Weighted norm `(∫ (1+|x|)^{δp} (|f|^p + [s=1]|∇f|^p))^{1/p}`; only `p = 2`
/// and `s ∈ {0, 1}` are supported.
pub fn weighted_norm(field: &ScalarField, delta: f64, p: u32, s: u32) -> Result<f64> {
    if p != 2 {
        return Err(Error::InvalidParameter(format!("p must be 2, got {p}")));
    }
    if s > 1 {
        return Err(Error::InvalidParameter(format!(
            "s must be 0 or 1, got {s}"
        )));
    }
    if field.is_zero() {
        return Ok(0.0);
    }
    let r = field.support_radius();
    let pf = p as f64;
    let integral = adaptive_cube(
        r,
        1e-10,
        |y| {
            let wgt = (1.0 + vec3::norm(y)).powf(delta * pf);
            let v = if s == 1 {
                let j = field.jet(y, 1);
                j.value().abs().powf(pf) + vec3::norm(j.grad()).powf(pf)
            } else {
                field.value(y).abs().powf(pf)
            };
            (wgt * v, wgt * v)
        },
        |a: f64, b: f64| (a - b).abs(),
    )?;
    Ok(integral.powf(1.0 / pf))
}

/// Named scalar presets for configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarPreset {
    Zero,
    Bump {
        center: Vec3,
        width: f64,
        amplitude: f64,
    },
    LinearBump {
        center: Vec3,
        width: f64,
        amplitude: f64,
        slope: Vec3,
    },
}

impl ScalarPreset {
    pub fn build(&self) -> Result<ScalarField> {
        match self {
            ScalarPreset::Zero => Ok(ScalarField::zero()),
            ScalarPreset::Bump {
                center,
                width,
                amplitude,
            } => make_bump_scalar(*center, *width, *amplitude),
            ScalarPreset::LinearBump {
                center,
                width,
                amplitude,
                slope,
            } => make_linear_bump(*center, *width, *amplitude, *slope),
        }
    }
}

/// Named vector presets for configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorPreset {
    Zero,
    /// `direction · bump`.
    VectorBump {
        center: Vec3,
        width: f64,
        amplitude: f64,
        direction: Vec3,
    },
    /// `axis × (y - c) · bump`, whose curl at the center is `2·amplitude·axis`.
    RotationBump {
        center: Vec3,
        width: f64,
        amplitude: f64,
        axis: Vec3,
    },
    /// `∇φ`.
    Gradient {
        potential: ScalarPreset,
    },
}

impl VectorPreset {
    pub fn build(&self) -> Result<VectorField> {
        match self {
            VectorPreset::Zero => Ok(VectorField::zero()),
            VectorPreset::VectorBump {
                center,
                width,
                amplitude,
                direction,
            } => Ok(VectorField::term(
                *direction,
                make_bump_scalar(*center, *width, *amplitude)?,
            )),
            VectorPreset::RotationBump {
                center,
                width,
                amplitude,
                axis,
            } => rotation_bump(*center, *width, *amplitude, *axis),
            VectorPreset::Gradient { potential } => Ok(gradient_field(&potential.build()?)),
        }
    }
}

pub fn rotation_bump(center: Vec3, width: f64, amplitude: f64, axis: Vec3) -> Result<VectorField> {
    let mut terms = Vec::new();
    for j in 0..3 {
        let d = vec3::cross(axis, E[j]);
        if vec3::norm(d) > 0.0 {
            terms.push((d, make_linear_bump(center, width, amplitude, E[j])?));
        }
    }
    Ok(VectorField { terms })
}

/// A field pair described by presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPreset {
    #[serde(default)]
    pub a: Vec<VectorPreset>,
    #[serde(default)]
    pub v: Vec<ScalarPreset>,
}

impl PairPreset {
    pub fn build(&self) -> Result<FieldPair> {
        let mut a = VectorField::zero();
        for p in &self.a {
            a = a.plus(p.build()?);
        }
        let v = ScalarField::Sum(self.v.iter().map(|p| p.build()).collect::<Result<_>>()?);
        Ok(FieldPair::new(a, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(f: &ScalarField, x: Vec3, h: f64) -> Vec3 {
        let mut g = [0.0; 3];
        for j in 0..3 {
            let mut p = x;
            let mut m = x;
            p[j] += h;
            m[j] -= h;
            g[j] = (f.value(p) - f.value(m)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn bump_basics() {
        let f = make_bump_scalar([0.0; 3], 1.0, 1.0).unwrap();
        assert_eq!(f.value([0.0; 3]), 1.0);
        assert_eq!(f.grad([0.0; 3]), [0.0; 3]);
        assert_eq!(f.value([7.0 + 1e-9, 0.0, 0.0]), 0.0);
        assert!(make_bump_scalar([0.0; 3], 0.0, 1.0).is_err());
        let z = make_bump_scalar([0.3, 0.0, 0.0], 0.5, 0.0).unwrap();
        assert_eq!(z.value([0.3, 0.1, 0.0]), 0.0);
        assert_eq!(z.grad([0.3, 0.1, 0.0]), [0.0; 3]);
    }

    #[test]
    fn cutoff_jet_matches_finite_differences_in_shell() {
        let f = make_bump_scalar([0.1, -0.2, 0.0], 0.4, 2.0).unwrap();
        // Radius 5.5 w lies inside the cutoff shell.
        let x = [0.1 + 2.2 * 0.6, -0.2 + 2.2 * 0.8, 0.0];
        let g = f.grad(x);
        let fd = fd_grad(&f, x, 1e-5);
        for j in 0..3 {
            assert!(
                (g[j] - fd[j]).abs() <= 1e-6 * g[j].abs().max(1e-18),
                "{g:?} {fd:?}"
            );
        }
    }

    #[test]
    fn laplacian_of_unit_gaussian_at_origin() {
        let f = make_bump_scalar([0.0; 3], 1.0, 1.0).unwrap();
        assert!((laplacian(&f, [0.0; 3]) + 6.0).abs() < 1e-13);
    }

    #[test]
    fn rotation_field_curl_at_center() {
        let a = rotation_bump([0.0; 3], 1.0, 1.0, [0.0, 0.0, 1.0]).unwrap();
        let v = a.value([0.2, 0.1, 0.0]);
        let g = (-0.05f64).exp();
        assert!((v[0] + 0.1 * g).abs() < 1e-15 && (v[1] - 0.2 * g).abs() < 1e-15);
        let c = curl(&a, [0.0; 3]);
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15 && (c[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_terms_reproduce_values_inside_plateau() {
        let phi = make_linear_bump([0.2, 0.0, -0.1], 0.5, 1.5, [0.3, -1.0, 0.5]).unwrap();
        let f = ScalarField::Sum(vec![
            phi.clone().partial([1, 2, 0]),
            laplacian_field(&phi).scaled(0.5),
        ]);
        let terms = f.gauss_terms();
        for x in [[0.3, 0.1, 0.0], [-0.2, 0.4, 0.3], [0.0, 0.0, 0.0]] {
            let direct = f.value(x);
            let fast: f64 = terms.iter().map(|t| t.value(x)).sum();
            assert!((direct - fast).abs() < 1e-11 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn rotated_terms_evaluate_consistently() {
        let phi = make_linear_bump([0.2, 0.1, -0.1], 0.5, 1.0, [0.3, -1.0, 0.5]).unwrap();
        let terms = phi.clone().partial([0, 1, 1]).gauss_terms();
        let frame = vec3::frame_from(vec3::normalize([0.3, -0.4, 0.8]).unwrap(), [1.0, 0.2, 0.0]);
        let axes: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                (0..7)
                    .map(|i| -0.6 + 0.2 * i as f64 + 0.01 * k as f64)
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; 7 * 7 * 7];
        for t in &terms {
            t.rotated(&frame)
                .accumulate([&axes[0], &axes[1], &axes[2]], &mut out);
        }
        for (i0, &u0) in axes[0].iter().enumerate() {
            for (i1, &u1) in axes[1].iter().enumerate() {
                for (i2, &u2) in axes[2].iter().enumerate() {
                    let y = vec3::add(
                        vec3::add(vec3::scale(u0, frame[0]), vec3::scale(u1, frame[1])),
                        vec3::scale(u2, frame[2]),
                    );
                    let want: f64 = terms.iter().map(|t| t.value(y)).sum();
                    let got = out[(i0 * 7 + i1) * 7 + i2];
                    assert!((want - got).abs() < 1e-12, "{want} vs {got}");
                }
            }
        }
    }

    #[test]
    fn spectrum_of_bump_matches_gaussian_closed_form() {
        let f = make_bump_scalar([0.0; 3], 1.0, 1.0).unwrap();
        let s0 = f.spectrum([0.0; 3]);
        assert!((s0.re - PI.powf(1.5)).abs() < 1e-9);
        let s = f.spectrum([2.0, 0.0, 0.0]);
        assert!((s.re - PI.powf(1.5) * (-1.0f64).exp()).abs() < 1e-9);
        assert!(s.im.abs() < 1e-15);
    }

    #[test]
    fn presets_build() {
        let p = PairPreset {
            a: vec![VectorPreset::Gradient {
                potential: ScalarPreset::Bump {
                    center: [0.0; 3],
                    width: 0.5,
                    amplitude: 1.0,
                },
            }],
            v: vec![ScalarPreset::Zero],
        };
        let pair = p.build().unwrap();
        let c = curl(&pair.a, [0.1, 0.2, -0.1]);
        assert!(vec3::norm(c) < 1e-12);
    }
}
