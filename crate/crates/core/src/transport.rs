//! Transport coefficients along rays `x + sθ`.
//!
//! `a₂` is a quarter of the X-ray transform of `θ·A`; `a₃` has a closed form
//! as a single line integral; `transport_integrate` solves the raw transport
//! recursion with spectral collocation and serves as the independent check.

use num_complex::Complex64;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::jet::Jet;
use crate::quadrature::{chebyshev_cumulative_matrix, chebyshev_lobatto, integrate_gk, Tolerance};
use crate::vec3::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub x: Vec3,
    pub theta: Vec3,
}

impl Ray {
    pub fn new(x: Vec3, theta: Vec3) -> Result<Ray> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "ray endpoint must be finite".into(),
            ));
        }
        if (vec3::norm(theta) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "ray direction must be a unit vector, |θ| = {}",
                vec3::norm(theta)
            )));
        }
        Ok(Ray { x, theta })
    }

    pub fn at(&self, s: f64) -> Vec3 {
        vec3::axpy(self.x, s, self.theta)
    }

    /// Parameter interval `[s_in, s_out]` where the ray lies in the ball of
    /// radius `r`, if any.
    pub fn chord(&self, r: f64) -> Option<(f64, f64)> {
        let b = vec3::dot(self.x, self.theta);
        let c = vec3::dot(self.x, self.x) - r * r;
        let disc = b * b - c;
        if r <= 0.0 || disc <= 0.0 {
            return None;
        }
        let q = disc.sqrt();
        Some((-b - q, -b + q))
    }
}

/// Quadrature tolerances for line integrals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransportSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Largest number of collocation panels tried by [`transport_integrate`].
    pub max_panels: usize,
    /// Agreement required between successive collocation levels, for
    /// orders 2, 3 and 4. Higher orders differentiate the cutoff shell more
    /// often, which slows spectral convergence.
    pub collocation_tol: [f64; 3],
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_panels: 256,
            collocation_tol: [1e-11, 1e-9, 1e-8],
        }
    }
}

impl TransportSettings {
    fn tolerance(&self) -> Tolerance {
        Tolerance {
            abs: self.abs_tol,
            rel: self.rel_tol,
            max_evals: 400_000,
        }
    }
}

/// Part of the ray's support chord with `s ≤ 0`.
fn upstream_chord(pair: &FieldPair, ray: &Ray) -> Option<(f64, f64)> {
    let (s_in, s_out) = ray.chord(pair.support_radius())?;
    if s_in >= 0.0 {
        return None;
    }
    Some((s_in, s_out.min(0.0)))
}

/// `a₂(x, θ) = ¼ ∫_{-∞}^0 θ·A(x + sθ) ds`.
pub fn xray_a2(pair: &FieldPair, ray: &Ray) -> Result<f64> {
    xray_a2_with(pair, ray, &TransportSettings::default())
}

pub fn xray_a2_with(pair: &FieldPair, ray: &Ray, settings: &TransportSettings) -> Result<f64> {
    let Some((lo, hi)) = upstream_chord(pair, ray) else {
        return Ok(0.0);
    };
    let ta = pair.a.project(ray.theta);
    let est = integrate_gk(|s| [ta.value(ray.at(s))], lo, hi, settings.tolerance())?;
    Ok(0.25 * est.value[0])
}

/// `Δa₂(x, θ) = ¼ ∫_{-∞}^0 Δ(θ·A)(x + sθ) ds`, differentiating under the
/// integral sign.
pub fn laplacian_a2(pair: &FieldPair, ray: &Ray, settings: &TransportSettings) -> Result<f64> {
    let Some((lo, hi)) = upstream_chord(pair, ray) else {
        return Ok(0.0);
    };
    let est = integrate_gk(
        |s| {
            [pair
                .a
                .projected_jet(ray.theta, ray.at(s), 2)
                .laplacian_value()]
        },
        lo,
        hi,
        settings.tolerance(),
    )?;
    Ok(0.25 * est.value[0])
}

/// `a₃ = (1/4i) ∫_{-∞}^0 (V - 2Δa₂)(x + sθ) ds + (i/4) θ·A(x)`, with the
/// iterated integral of `Δa₂` folded into a single weighted line integral.
pub fn a3_closed_form(pair: &FieldPair, ray: &Ray) -> Result<Complex64> {
    a3_closed_form_with(pair, ray, &TransportSettings::default())
}

pub fn a3_closed_form_with(
    pair: &FieldPair,
    ray: &Ray,
    settings: &TransportSettings,
) -> Result<Complex64> {
    let local = pair.a.projected_jet(ray.theta, ray.x, 0).value();
    let integral = match upstream_chord(pair, ray) {
        None => 0.0,
        Some((lo, hi)) => {
            integrate_gk(
                |s| {
                    let y = ray.at(s);
                    let lap = pair.a.projected_jet(ray.theta, y, 2).laplacian_value();
                    [pair.v.value(y) + 0.5 * s * lap]
                },
                lo,
                hi,
                settings.tolerance(),
            )?
            .value[0]
        }
    };
    // (1/4i) I + (i/4) θ·A = (i/4)(θ·A - I)
    Ok(Complex64::new(0.0, 0.25 * (local - integral)))
}

/// `(Δ + 2(θ·∇)²) J`.
fn transverse_operator(j: &Jet, theta: Vec3) -> Jet {
    j.laplacian() + j.directional(theta).directional(theta) * 2.0
}

/// Composite Chebyshev–Lobatto layout: `panels` equal panels on `[s_in, 0]`
/// with `m` nodes each (panel endpoints are duplicated).
struct Layout {
    panels: usize,
    m: usize,
    q: std::sync::Arc<Vec<f64>>,
    half: f64,
}

impl Layout {
    fn new(s_in: f64, panels: usize, m: usize) -> Layout {
        Layout {
            panels,
            m,
            q: chebyshev_cumulative_matrix(m),
            half: -0.5 * s_in / panels as f64,
        }
    }

    fn nodes(&self, s_in: f64) -> Vec<f64> {
        let t = chebyshev_lobatto(self.m);
        let mut out = Vec::with_capacity(self.panels * self.m);
        for p in 0..self.panels {
            let a = s_in + 2.0 * self.half * p as f64;
            out.extend(t.iter().map(|x| a + (x + 1.0) * self.half));
        }
        out
    }

    /// Running integral from `s_in` of the jets, scaled by `scale`.
    fn cumulative(&self, scale: f64, jets: &[Jet]) -> Vec<Jet> {
        let order = jets[0].order();
        let m = self.m;
        let mut out = Vec::with_capacity(jets.len());
        let mut offset = Jet::zero(order);
        for p in 0..self.panels {
            let f = &jets[p * m..(p + 1) * m];
            for i in 0..m {
                let mut acc = offset;
                for (w, j) in self.q[i * m..(i + 1) * m].iter().zip(f) {
                    if *w != 0.0 {
                        acc.axpy(scale * self.half * w, j);
                    }
                }
                out.push(acc);
            }
            offset = out[out.len() - 1];
        }
        out
    }
}

fn collocate(pair: &FieldPair, ray: &Ray, order: u8, s_in: f64, panels: usize) -> Complex64 {
    let layout = Layout::new(s_in, panels, PANEL_NODES);
    let pts: Vec<Vec3> = layout.nodes(s_in).into_iter().map(|s| ray.at(s)).collect();
    let n = pts.len();
    let theta = ray.theta;
    // Jet orders needed per stage: a₄ applies L to b₃, which applies L to a₂.
    let (ga_order, v_order) = match order {
        2 => (0, 0),
        3 => (2, 0),
        _ => (4, 2),
    };
    let ta: Vec<Jet> = pts
        .iter()
        .map(|&y| pair.a.projected_jet(theta, y, ga_order))
        .collect();
    let a2 = layout.cumulative(0.25, &ta);
    if order == 2 {
        return Complex64::new(a2[n - 1].value(), 0.0);
    }
    let r3: Vec<Jet> = pts
        .iter()
        .zip(&a2)
        .map(|(&y, a)| pair.v.jet(y, v_order) - transverse_operator(a, theta) * 2.0)
        .collect();
    // a₃ = i b₃ with 4i∂a₃ = r₃, so b₃ = -¼ C[r₃].
    let b3 = layout.cumulative(-0.25, &r3);
    if order == 3 {
        return Complex64::new(0.0, b3[n - 1].value());
    }
    let r4: Vec<Jet> = (0..n)
        .map(|i| {
            let lb = transverse_operator(&b3[i], theta).value();
            let m =
                4.0 * a2[i].laplacian().directional(theta).value() + ta[i].value() * a2[i].value();
            Jet::constant(-2.0 * lb + m, 0)
        })
        .collect();
    let a4 = layout.cumulative(0.25, &r4);
    Complex64::new(a4[n - 1].value(), 0.0)
}

const PANEL_NODES: usize = 25;

/// Integrates the `order`-th transport equation along the ray from zero data
/// at `s = -∞`, reusing lower-order coefficients as sources:
///
/// * `4(θ·∇)a₂ = θ·A`
/// * `4i(θ·∇)a₃ = -2(Δ + 2(θ·∇)²)a₂ + V`
/// * `4i(θ·∇)a₄ = -2(Δ + 2(θ·∇)²)a₃ + i(4(θ·∇)Δ + θ·A)a₂`
///
/// Coefficients are carried as jets transverse to the ray, and the line
/// integrals use composite Chebyshev–Lobatto collocation on `[s_in, 0]` with
/// the panel count doubled until two levels agree.
pub fn transport_integrate(pair: &FieldPair, ray: &Ray, order: u8) -> Result<Complex64> {
    transport_integrate_with(pair, ray, order, &TransportSettings::default())
}

pub fn transport_integrate_with(
    pair: &FieldPair,
    ray: &Ray,
    order: u8,
    settings: &TransportSettings,
) -> Result<Complex64> {
    if !(2..=4).contains(&order) {
        return Err(Error::InvalidParameter(format!(
            "transport order must be 2, 3 or 4, got {order}"
        )));
    }
    let needed = match order {
        2 => 0,
        3 => 2,
        _ => 4,
    };
    if pair.a.max_jet_order() < needed || pair.v.max_jet_order() < needed.saturating_sub(2) {
        return Err(Error::InvalidParameter(format!(
            "fields do not expose enough derivatives for order {order}"
        )));
    }
    let Some((s_in, _)) = upstream_chord(pair, ray) else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let mut n = 4;
    let mut prev = collocate(pair, ray, order, s_in, n);
    loop {
        let next_n = 2 * n;
        if next_n > settings.max_panels {
            return Err(Error::Accuracy {
                estimate: f64::NAN,
                target: settings.abs_tol,
                evaluations: n,
            });
        }
        let cur = collocate(pair, ray, order, s_in, next_n);
        let diff = (cur - prev).norm();
        let target = settings.collocation_tol[order as usize - 2] * cur.norm().max(1.0);
        if diff <= target {
            return Ok(cur);
        }
        if next_n * 2 > settings.max_panels {
            return Err(Error::Accuracy {
                estimate: diff,
                target,
                evaluations: n + next_n,
            });
        }
        prev = cur;
        n = next_n;
    }
}

/// [`transport_integrate`] with a fixed number of collocation panels.
pub fn transport_integrate_fixed(
    pair: &FieldPair,
    ray: &Ray,
    order: u8,
    panels: usize,
) -> Complex64 {
    match upstream_chord(pair, ray) {
        None => Complex64::new(0.0, 0.0),
        Some((s_in, _)) => collocate(pair, ray, order.clamp(2, 4), s_in, panels.max(1)),
    }
}

/// Magnitude of the defect in the order-2 or order-3 transport equation at
/// `x`, with the ray derivative taken by central differences of step `h`.
pub fn transport_residual(pair: &FieldPair, x: Vec3, theta: Vec3, order: u8) -> Result<f64> {
    transport_residual_with_step(pair, x, theta, order, 1e-4)
}

pub fn transport_residual_with_step(
    pair: &FieldPair,
    x: Vec3,
    theta: Vec3,
    order: u8,
    h: f64,
) -> Result<f64> {
    let ray = Ray::new(x, theta)?;
    let fwd = Ray::new(ray.at(h), theta)?;
    let bwd = Ray::new(ray.at(-h), theta)?;
    let settings = TransportSettings::default();
    match order {
        2 => {
            let d = (xray_a2_with(pair, &fwd, &settings)? - xray_a2_with(pair, &bwd, &settings)?)
                / (2.0 * h);
            let ta = pair.a.projected_jet(theta, x, 0).value();
            Ok((4.0 * d - ta).abs())
        }
        3 => {
            let d = (a3_closed_form_with(pair, &fwd, &settings)?
                - a3_closed_form_with(pair, &bwd, &settings)?)
                / (2.0 * h);
            let lhs = Complex64::new(0.0, 4.0) * d;
            // (θ·∇)²a₂ = ¼ (θ·∇)(θ·A)
            let ta = pair.a.projected_jet(theta, x, 1);
            let dd_a2 = 0.25 * vec3::dot(ta.grad(), theta);
            let lap_a2 = laplacian_a2(pair, &ray, &settings)?;
            let rhs = -2.0 * (lap_a2 + 2.0 * dd_a2) + pair.v.value(x);
            Ok((lhs - rhs).norm())
        }
        _ => Err(Error::InvalidParameter(format!(
            "residual is defined for orders 2 and 3, got {order}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_bump_scalar, ScalarField, VectorField};

    #[test]
    fn chord_of_unit_ball() {
        let r = Ray::new([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.chord(1.0), Some((-1.0, 1.0)));
        let miss = Ray::new([0.0, 2.0, 0.0], [1.0, 0.0, 0.0]).unwrap();
        assert!(miss.chord(1.0).is_none());
        assert!(Ray::new([0.0; 3], [1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn a2_of_aligned_gaussian_is_quarter_root_pi() {
        let theta = [0.0, 0.0, 1.0];
        let g = make_bump_scalar([0.0; 3], 1.0, 1.0).unwrap();
        let pair = FieldPair::new(VectorField::term(theta, g), ScalarField::zero());
        let far = Ray::new([0.0, 0.0, 7.5], theta).unwrap();
        let a2 = xray_a2(&pair, &far).unwrap();
        assert!((a2 - 0.25 * std::f64::consts::PI.sqrt()).abs() < 1e-10);
        let before = Ray::new([0.0, 0.0, -7.0], theta).unwrap();
        assert_eq!(xray_a2(&pair, &before).unwrap(), 0.0);
    }

    #[test]
    fn a3_with_only_a_potential_is_negative_imaginary() {
        let v = make_bump_scalar([0.1, 0.0, 0.0], 0.5, 1.0).unwrap();
        let pair = FieldPair::new(VectorField::zero(), v);
        let ray = Ray::new([0.0, 0.0, 1.0], [0.0, 0.0, 1.0]).unwrap();
        let a3 = a3_closed_form(&pair, &ray).unwrap();
        assert_eq!(a3.re, 0.0);
        assert!(a3.im < 0.0);
        let t = transport_integrate(&pair, &ray, 3).unwrap();
        assert!((t - a3).norm() < 1e-10);
    }
}
