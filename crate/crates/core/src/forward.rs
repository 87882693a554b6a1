//! Scattering amplitudes: the free Green's function, the Born leading term,
//! direct oscillatory quadrature of the amplitude integral with the
//! asymptotic solution, oracles, and remainder diagnostics.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldPair, GaussTerm, RotatedTerm};
use crate::quadrature::{gauss_legendre_cached, loglog_slope, periodic_cumulative_matrix};
use crate::vec3::{self, Vec3};

const UNIT_TOL: f64 = 1e-12;

fn check_unit(name: &str, v: Vec3) -> Result<()> {
    if (vec3::norm(v) - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidParameter(format!(
            "{name} must be a unit vector, |{name}| = {}",
            vec3::norm(v)
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Outgoing fundamental solution of `Δ² - λ⁴`:
/// `(e^{iλr} - e^{-λr}) / (8πλ²r)` with `r = |x - y|`.
pub fn green_g0(x: Vec3, y: Vec3, lambda: f64) -> Result<Complex64> {
    check_lambda(lambda)?;
    let r = vec3::norm(vec3::sub(x, y));
    if r == 0.0 {
        return Err(Error::Singularity("G₀ is singular at x = y".into()));
    }
    let z = lambda * r;
    // Written with expm1 so that the numerator keeps full relative accuracy
    // for small λr.
    let half = (0.5 * z).sin();
    let num = Complex64::new(-2.0 * half * half - (-z).exp_m1(), z.sin());
    Ok(num / (8.0 * PI * lambda * lambda * r))
}

/// `iλ θ·Â(ξ) + V̂(ξ)` with `ξ = λ(ω - θ)`.
pub fn born_leading(pair: &FieldPair, omega: Vec3, theta: Vec3, lambda: f64) -> Result<Complex64> {
    check_unit("omega", omega)?;
    check_unit("theta", theta)?;
    check_lambda(lambda)?;
    let xi = vec3::scale(lambda, vec3::sub(omega, theta));
    let ta = pair.a.projected_spectrum(theta, xi);
    Ok(Complex64::new(0.0, lambda) * ta + pair.v.spectrum(xi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSample {
    pub omega: Vec3,
    pub theta: Vec3,
    pub lambda: f64,
    pub value: Complex64,
}

impl AmplitudeSample {
    pub fn new(omega: Vec3, theta: Vec3, lambda: f64, value: Complex64) -> Result<Self> {
        check_unit("omega", omega)?;
        check_unit("theta", theta)?;
        check_lambda(lambda)?;
        Ok(AmplitudeSample {
            omega,
            theta,
            lambda,
            value,
        })
    }
}

/// Writes samples as CSV with columns
/// `omega_x,omega_y,omega_z,theta_x,theta_y,theta_z,lambda,re,im`.
pub fn write_amplitude_csv<W: Write>(out: W, samples: &[AmplitudeSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "omega_x", "omega_y", "omega_z", "theta_x", "theta_y", "theta_z", "lambda", "re", "im",
    ])?;
    for s in samples {
        let row = [
            s.omega[0], s.omega[1], s.omega[2], s.theta[0], s.theta[1], s.theta[2], s.lambda,
            s.value.re, s.value.im,
        ];
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Resolution controls for the tensor trapezoid rule.
///
/// The rule runs in a frame aligned with the incoming direction on a box
/// that holds every Gaussian term down to `tail`. Along each axis it places
/// enough points to resolve the phase plus `bandwidth / w_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub tail: f64,
    pub bandwidth: f64,
    pub max_points_per_axis: usize,
}

impl QuadratureSettings {
    /// Near machine precision; used by [`amplitude_quadrature`].
    pub fn accurate() -> Self {
        QuadratureSettings {
            tail: 1e-13,
            bandwidth: 15.0,
            max_points_per_axis: 1024,
        }
    }

    /// Looser rule for the correction terms, which enter divided by `λ`:
    /// below `1e-4` relative error on the corrections at about half the
    /// cost of the accurate rule.
    pub fn corrections() -> Self {
        QuadratureSettings {
            tail: 1e-6,
            bandwidth: 10.0,
            max_points_per_axis: 1024,
        }
    }
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self::accurate()
    }
}

const AXIS_NAMES: [&str; 3] = ["transverse-1", "transverse-2", "incident"];

struct Grid {
    axes: [Vec<f64>; 3],
    step: [f64; 3],
}

impl Grid {
    fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    fn period_t(&self) -> f64 {
        self.step[2] * self.axes[2].len() as f64
    }
}

fn build_grid(
    terms: &[RotatedTerm],
    xi: Vec3,
    settings: &QuadratureSettings,
    cumulative: bool,
) -> Result<Option<Grid>> {
    if terms.is_empty() {
        return Ok(None);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut w_min = f64::INFINITY;
    for t in terms {
        let r = t.effective_radius(settings.tail);
        for k in 0..3 {
            lo[k] = lo[k].min(t.center[k] - r);
            hi[k] = hi[k].max(t.center[k] + r);
        }
        w_min = w_min.min(t.width);
    }
    let band = settings.bandwidth / w_min;
    let mut axes: [Vec<f64>; 3] = Default::default();
    let mut step = [0.0; 3];
    for k in 0..3 {
        let len = hi[k] - lo[k];
        let mut n = (len * (xi[k].abs() + band) / (2.0 * PI)).ceil() as usize;
        if cumulative && k == 2 {
            // The cumulative integral uses the trigonometric interpolant,
            // which needs the band resolved rather than just aliasing kept
            // away from the phase.
            n = n.max((len * band / PI).ceil() as usize);
        }
        n = n.max(8);
        if k == 2 {
            n |= 1;
        }
        if n > settings.max_points_per_axis {
            let ppw = if xi[k] == 0.0 {
                f64::INFINITY
            } else {
                n as f64 * 2.0 * PI / (len * xi[k].abs())
            };
            return Err(Error::Resolution {
                axis: AXIS_NAMES[k],
                required: n,
                limit: settings.max_points_per_axis,
                wavenumber: xi[k].abs(),
                points_per_wavelength: ppw,
            });
        }
        let h = len / n as f64;
        axes[k] = (0..n).map(|j| lo[k] + j as f64 * h).collect();
        step[k] = h;
    }
    Ok(Some(Grid { axes, step }))
}

/// Merges terms sharing a centre and width into one polynomial.
fn merge_terms(terms: Vec<GaussTerm>) -> Vec<GaussTerm> {
    let mut out: Vec<GaussTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        match out
            .iter_mut()
            .find(|o| o.center == t.center && o.width == t.width)
        {
            Some(o) => {
                let order = o.poly.order().max(t.poly.order());
                let mut p = o.poly.raise(order);
                p.axpy(1.0, &t.poly.raise(order));
                o.poly = p;
            }
            None => out.push(t),
        }
    }
    out
}

fn rotate_all(terms: &[GaussTerm], frame: &[Vec3; 3]) -> Vec<RotatedTerm> {
    terms.iter().map(|t| t.rotated(frame)).collect()
}

fn map_terms(terms: &[GaussTerm], f: impl Fn(&GaussTerm) -> GaussTerm) -> Vec<GaussTerm> {
    terms.iter().map(f).collect()
}

/// Samples a sum of terms on the grid, last axis fastest.
fn sample(terms: &[RotatedTerm], grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; n];
    if terms.is_empty() {
        return out;
    }
    let plane = grid.axes[1].len() * grid.axes[2].len();
    let rows = grid.axes[0].len();
    // Parallel over slabs only when the grid is large enough to pay for it.
    let slab = if n > 200_000 { 4 } else { rows };
    out.par_chunks_mut(slab * plane)
        .enumerate()
        .for_each(|(c, chunk)| {
            let r0 = c * slab;
            let r1 = (r0 + slab).min(rows);
            let ax0 = &grid.axes[0][r0..r1];
            for t in terms {
                t.accumulate([ax0, &grid.axes[1], &grid.axes[2]], chunk);
            }
        });
    out
}

/// Running integral along the incident axis from the upstream box face.
fn cumulative(f: &[f64], grid: &Grid) -> Vec<f64> {
    let n2 = grid.axes[2].len();
    let m = periodic_cumulative_matrix(n2);
    let period = grid.period_t();
    let mut out = vec![0.0; f.len()];
    for (src, dst) in f.chunks(n2).zip(out.chunks_mut(n2)) {
        if src.iter().all(|v| *v == 0.0) {
            continue;
        }
        for i in 0..n2 {
            let row = &m[i * n2..(i + 1) * n2];
            dst[i] = period * row.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// `∫_{-∞}^{t} (t - τ) h(τ) dτ` along the incident axis.
fn moment(f: &[f64], grid: &Grid) -> Vec<f64> {
    let n2 = grid.axes[2].len();
    let t = &grid.axes[2];
    let tf: Vec<f64> = f.iter().enumerate().map(|(i, v)| v * t[i % n2]).collect();
    let c = cumulative(f, grid);
    let ct = cumulative(&tf, grid);
    c.iter()
        .zip(&ct)
        .enumerate()
        .map(|(i, (a, b))| t[i % n2] * a - b)
        .collect()
}

/// Trapezoid sum of `g e^{-iξ·u}` over the grid, `g = re + i·im`.
fn fourier_sum(re: &[f64], im: &[f64], grid: &Grid, xi: Vec3) -> Complex64 {
    let phase = |k: usize| -> Vec<Complex64> {
        grid.axes[k]
            .iter()
            .map(|u| Complex64::from_polar(1.0, -xi[k] * u))
            .collect()
    };
    let (p0, p1, p2) = (phase(0), phase(1), phase(2));
    let n1 = p1.len();
    let n2 = p2.len();
    let plane = n1 * n2;
    let inner = |i0: usize| -> Complex64 {
        let mut acc0 = Complex64::new(0.0, 0.0);
        for (i1, q1) in p1.iter().enumerate() {
            let base = i0 * plane + i1 * n2;
            let (r, m) = (&re[base..base + n2], &im[base..base + n2]);
            let mut acc = Complex64::new(0.0, 0.0);
            for ((a, b), q) in r.iter().zip(m).zip(&p2) {
                if *a != 0.0 || *b != 0.0 {
                    acc += Complex64::new(*a, *b) * q;
                }
            }
            acc0 += acc * q1;
        }
        acc0 * p0[i0]
    };
    let total: Complex64 = if re.len() > 200_000 {
        (0..p0.len()).into_par_iter().map(inner).sum()
    } else {
        (0..p0.len()).map(inner).sum()
    };
    total * (grid.step[0] * grid.step[1] * grid.step[2])
}

/// Frame `[e1, e2, θ]` with `e1` along the part of `ξ` orthogonal to `θ`, so
/// the phase has no `e2` component.
fn incident_frame(theta: Vec3, xi: Vec3) -> [Vec3; 3] {
    vec3::frame_from(theta, xi)
}

fn frame_coords(frame: &[Vec3; 3], v: Vec3) -> Vec3 {
    [
        vec3::dot(frame[0], v),
        vec3::dot(frame[1], v),
        vec3::dot(frame[2], v),
    ]
}

/// Real and imaginary integrands of the expanded amplitude on the grid.
struct Integrand {
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Builds `(A·∇ + V)u e^{-iλθ·y}` for the truncated expansion
/// `u = e^{iλθ·y}(1 + a₂/λ² + a₃/λ³)`, optionally without the plane-wave part.
///
/// With `a₃ = i b₃` the integrand is
/// `iλθA + V + (i/λ)θA a₂ + (V a₂ + A·∇a₂ - θA b₃)/λ² + i(V b₃ + A·∇b₃)/λ³`.
#[allow(clippy::too_many_arguments)]
fn expanded_integrand(
    pair: &FieldPair,
    frame: &[Vec3; 3],
    xi_frame: Vec3,
    lambda: f64,
    order: u8,
    leading: bool,
    settings: &QuadratureSettings,
) -> Result<Option<(Integrand, Grid)>> {
    let [e1, e2, theta] = *frame;
    let ta = merge_terms(pair.a.projected_terms(theta));
    let v = merge_terms(pair.v.gauss_terms());
    let with2 = order >= 2;
    let with3 = order >= 3;

    let mut all: Vec<GaussTerm> = Vec::new();
    all.extend(ta.iter().cloned());
    all.extend(v.iter().cloned());
    let (a1, a2c, ta1, ta2, tat) = if with2 {
        (
            merge_terms(pair.a.projected_terms(e1)),
            merge_terms(pair.a.projected_terms(e2)),
            map_terms(&ta, |t| t.directional(e1)),
            map_terms(&ta, |t| t.directional(e2)),
            map_terms(&ta, |t| t.directional(theta)),
        )
    } else {
        Default::default()
    };
    let (lta, lta1, lta2, v1, v2) = if with3 {
        let lta = map_terms(&ta, GaussTerm::laplacian);
        (
            lta.clone(),
            map_terms(&lta, |t| t.directional(e1)),
            map_terms(&lta, |t| t.directional(e2)),
            map_terms(&v, |t| t.directional(e1)),
            map_terms(&v, |t| t.directional(e2)),
        )
    } else {
        Default::default()
    };
    for set in [&a1, &a2c, &ta1, &ta2, &tat, &lta, &lta1, &lta2, &v1, &v2] {
        all.extend(set.iter().cloned());
    }
    let rotated_all = rotate_all(&all, frame);
    let Some(grid) = build_grid(&rotated_all, xi_frame, settings, with2)? else {
        return Ok(None);
    };
    let s = |terms: &[GaussTerm]| sample(&rotate_all(terms, frame), &grid);
    let n = grid.len();
    let ta_g = s(&ta);
    let v_g = s(&v);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    if leading {
        for i in 0..n {
            re[i] = v_g[i];
            im[i] = lambda * ta_g[i];
        }
    }
    if !with2 {
        return Ok(Some((Integrand { re, im }, grid)));
    }
    let a1_g = s(&a1);
    let a2_g = s(&a2c);
    let ta1_g = s(&ta1);
    let ta2_g = s(&ta2);
    let c_ta = cumulative(&ta_g, &grid);
    let c_ta1 = cumulative(&ta1_g, &grid);
    let c_ta2 = cumulative(&ta2_g, &grid);
    drop((ta1_g, ta2_g));
    let l2 = lambda * lambda;
    for i in 0..n {
        let a2 = 0.25 * c_ta[i];
        // A·∇a₂ with ∂_t a₂ = ¼θA.
        let grad_a2 =
            a1_g[i] * 0.25 * c_ta1[i] + a2_g[i] * 0.25 * c_ta2[i] + ta_g[i] * 0.25 * ta_g[i];
        im[i] += ta_g[i] * a2 / lambda;
        re[i] += (v_g[i] * a2 + grad_a2) / l2;
    }
    drop((c_ta, c_ta1, c_ta2));
    if !with3 {
        return Ok(Some((Integrand { re, im }, grid)));
    }
    let tat_g = s(&tat);
    let lta_g = s(&lta);
    let c_v = cumulative(&v_g, &grid);
    let c_lta = cumulative(&lta_g, &grid);
    let d_lta = moment(&lta_g, &grid);
    drop(lta_g);
    let (c_v1, d_lta1) = {
        let v1_g = s(&v1);
        let l1_g = s(&lta1);
        (cumulative(&v1_g, &grid), moment(&l1_g, &grid))
    };
    let (c_v2, d_lta2) = {
        let v2_g = s(&v2);
        let l2_g = s(&lta2);
        (cumulative(&v2_g, &grid), moment(&l2_g, &grid))
    };
    let ta1_g = s(&ta1);
    let ta2_g = s(&ta2);
    let l3 = l2 * lambda;
    for i in 0..n {
        let b3 = 0.25 * (ta_g[i] - c_v[i] + 0.5 * d_lta[i]);
        let b3_1 = 0.25 * (ta1_g[i] - c_v1[i] + 0.5 * d_lta1[i]);
        let b3_2 = 0.25 * (ta2_g[i] - c_v2[i] + 0.5 * d_lta2[i]);
        let b3_t = 0.25 * (tat_g[i] - v_g[i] + 0.5 * c_lta[i]);
        let grad_b3 = a1_g[i] * b3_1 + a2_g[i] * b3_2 + ta_g[i] * b3_t;
        re[i] -= ta_g[i] * b3 / l2;
        im[i] += (v_g[i] * b3 + grad_b3) / l3;
    }
    Ok(Some((Integrand { re, im }, grid)))
}

fn check_order(order: u8) -> Result<()> {
    if !matches!(order, 0 | 2 | 3) {
        return Err(Error::InvalidParameter(format!(
            "expansion order must be 0, 2 or 3, got {order}"
        )));
    }
    Ok(())
}

/// Direct oscillatory quadrature of `∫e^{-iλω·y}(A·∇ + V)u dy` with `u` the
/// plane wave (`order = 0`) or its expansion through `a₂` or `a₃`.
pub fn amplitude_quadrature(
    pair: &FieldPair,
    omega: Vec3,
    theta: Vec3,
    lambda: f64,
    order: u8,
) -> Result<Complex64> {
    amplitude_quadrature_with(
        pair,
        omega,
        theta,
        lambda,
        order,
        &QuadratureSettings::accurate(),
    )
}

pub fn amplitude_quadrature_with(
    pair: &FieldPair,
    omega: Vec3,
    theta: Vec3,
    lambda: f64,
    order: u8,
    settings: &QuadratureSettings,
) -> Result<Complex64> {
    check_unit("omega", omega)?;
    check_unit("theta", theta)?;
    check_lambda(lambda)?;
    check_order(order)?;
    let xi = vec3::scale(lambda, vec3::sub(omega, theta));
    let frame = incident_frame(theta, xi);
    let xf = frame_coords(&frame, xi);
    match expanded_integrand(pair, &frame, xf, lambda, order, true, settings)? {
        None => Ok(Complex64::new(0.0, 0.0)),
        Some((g, grid)) => Ok(fourier_sum(&g.re, &g.im, &grid, xf)),
    }
}

/// The part of [`amplitude_quadrature`] beyond the plane wave:
/// `amplitude_quadrature(order) - amplitude_quadrature(0)`.
pub fn amplitude_corrections(
    pair: &FieldPair,
    omega: Vec3,
    theta: Vec3,
    lambda: f64,
    order: u8,
    settings: &QuadratureSettings,
) -> Result<Complex64> {
    check_unit("omega", omega)?;
    check_unit("theta", theta)?;
    check_lambda(lambda)?;
    check_order(order)?;
    if order == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let xi = vec3::scale(lambda, vec3::sub(omega, theta));
    let frame = incident_frame(theta, xi);
    let xf = frame_coords(&frame, xi);
    match expanded_integrand(pair, &frame, xf, lambda, order, false, settings)? {
        None => Ok(Complex64::new(0.0, 0.0)),
        Some((g, grid)) => Ok(fourier_sum(&g.re, &g.im, &grid, xf)),
    }
}

/// First Born iterate of the scattered field,
/// `-∫G₀(x,y,λ)(iλθ·A + V)(y) e^{iλθ·y} dy`, for `x` outside the support.
pub fn lippmann_schwinger_first_iterate(
    pair: &FieldPair,
    x: Vec3,
    theta: Vec3,
    lambda: f64,
) -> Result<Complex64> {
    check_unit("theta", theta)?;
    check_lambda(lambda)?;
    let r = pair.support_radius();
    if vec3::norm(x) <= r {
        return Err(Error::Domain(format!(
            "observation point {x:?} lies inside the support ball of radius {r}"
        )));
    }
    let ta = rotate_all(
        &merge_terms(pair.a.projected_terms(theta)),
        &[vec3::E[0], vec3::E[1], vec3::E[2]],
    );
    let v = rotate_all(
        &merge_terms(pair.v.gauss_terms()),
        &[vec3::E[0], vec3::E[1], vec3::E[2]],
    );
    if ta.is_empty() && v.is_empty() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let tail = 1e-13;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut w_min = f64::INFINITY;
    for t in ta.iter().chain(&v) {
        let rad = t.effective_radius(tail);
        for k in 0..3 {
            lo[k] = lo[k].min(t.center[k] - rad);
            hi[k] = hi[k].max(t.center[k] + rad);
        }
        w_min = w_min.min(t.width);
    }
    // Gauss–Legendre resolves roughly one wavelength per π nodes; the
    // integrand carries e^{iλθ·y} and the outgoing kernel.
    let mut axes: [Vec<f64>; 3] = Default::default();
    let mut weights: [Vec<f64>; 3] = Default::default();
    for k in 0..3 {
        let len = hi[k] - lo[k];
        let n = ((len * (2.0 * lambda + 15.0 / w_min) / PI).ceil() as usize + 8).max(24);
        if n > 2048 {
            return Err(Error::Resolution {
                axis: ["x", "y", "z"][k],
                required: n,
                limit: 2048,
                wavenumber: 2.0 * lambda,
                points_per_wavelength: n as f64 * PI / (len * lambda),
            });
        }
        let gl = gauss_legendre_cached(n);
        let half = 0.5 * len;
        let mid = 0.5 * (hi[k] + lo[k]);
        axes[k] = gl.0.iter().map(|t| mid + half * t).collect();
        weights[k] = gl.1.iter().map(|w| half * w).collect();
    }
    let grid = Grid {
        axes: axes.clone(),
        step: [1.0; 3],
    };
    let ta_g = sample(&ta, &grid);
    let v_g = sample(&v, &grid);
    let (n1, n2) = (axes[1].len(), axes[2].len());
    let total: Complex64 = (0..axes[0].len())
        .into_par_iter()
        .map(|i0| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let idx = (i0 * n1 + i1) * n2 + i2;
                    let src = Complex64::new(v_g[idx], lambda * ta_g[idx]);
                    if src.re == 0.0 && src.im == 0.0 {
                        continue;
                    }
                    let y = [axes[0][i0], axes[1][i1], axes[2][i2]];
                    let g = green_g0(x, y, lambda).expect("x lies outside the integration box");
                    let w = weights[0][i0] * weights[1][i1] * weights[2][i2];
                    acc += g * src * Complex64::from_polar(w, lambda * vec3::dot(theta, y));
                }
            }
            acc
        })
        .sum();
    Ok(-total)
}

/// Least-squares slope of `log|residual|` against `log λ`.
pub fn remainder_scaling(samples: &[(f64, Complex64)]) -> Result<f64> {
    if samples.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "remainder fit needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    let mut lambdas: Vec<f64> = samples.iter().map(|s| s.0).collect();
    lambdas.sort_by(f64::total_cmp);
    if lambdas.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(
            "frequencies must be distinct".into(),
        ));
    }
    if samples.iter().any(|s| s.1.norm() == 0.0) {
        return Err(Error::DegenerateFit("zero residual".into()));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1.norm()).collect();
    loglog_slope(&x, &y)
}

/// A callable amplitude source.
#[derive(Clone)]
pub enum AmplitudeOracle {
    /// The remainder-free leading term.
    BornLeading(Arc<FieldPair>),
    /// Exact leading term plus grid quadrature of the expansion corrections.
    AsymptoticQuadrature {
        pair: Arc<FieldPair>,
        order: u8,
        settings: QuadratureSettings,
    },
    /// Another oracle with reproducible complex Gaussian noise of relative
    /// size `level`.
    Noisy {
        base: Box<AmplitudeOracle>,
        seed: u64,
        level: f64,
    },
    Custom(Arc<dyn Fn(Vec3, Vec3, f64) -> Result<Complex64> + Send + Sync>),
}

impl fmt::Debug for AmplitudeOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AmplitudeOracle::BornLeading(_) => write!(f, "BornLeading"),
            AmplitudeOracle::AsymptoticQuadrature { order, .. } => {
                write!(f, "AsymptoticQuadrature(order {order})")
            }
            AmplitudeOracle::Noisy { base, seed, level } => {
                write!(f, "Noisy({base:?}, seed {seed}, level {level})")
            }
            AmplitudeOracle::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Serializable description of an oracle's mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    BornLeading,
    AsymptoticQuadrature {
        order: u8,
    },
    Noisy {
        base: Box<OracleMode>,
        seed: u64,
        level: f64,
    },
    Custom,
}

impl AmplitudeOracle {
    pub fn born(pair: FieldPair) -> Self {
        AmplitudeOracle::BornLeading(Arc::new(pair))
    }

    pub fn asymptotic(pair: FieldPair) -> Self {
        AmplitudeOracle::AsymptoticQuadrature {
            pair: Arc::new(pair),
            order: 3,
            settings: QuadratureSettings::corrections(),
        }
    }

    pub fn noisy(self, seed: u64, level: f64) -> Self {
        AmplitudeOracle::Noisy {
            base: Box::new(self),
            seed,
            level,
        }
    }

    pub fn mode(&self) -> OracleMode {
        match self {
            AmplitudeOracle::BornLeading(_) => OracleMode::BornLeading,
            AmplitudeOracle::AsymptoticQuadrature { order, .. } => {
                OracleMode::AsymptoticQuadrature { order: *order }
            }
            AmplitudeOracle::Noisy { base, seed, level } => OracleMode::Noisy {
                base: Box::new(base.mode()),
                seed: *seed,
                level: *level,
            },
            AmplitudeOracle::Custom(_) => OracleMode::Custom,
        }
    }

    pub fn eval(&self, omega: Vec3, theta: Vec3, lambda: f64) -> Result<Complex64> {
        match self {
            AmplitudeOracle::BornLeading(pair) => born_leading(pair, omega, theta, lambda),
            AmplitudeOracle::AsymptoticQuadrature {
                pair,
                order,
                settings,
            } => {
                let born = born_leading(pair, omega, theta, lambda)?;
                Ok(born + amplitude_corrections(pair, omega, theta, lambda, *order, settings)?)
            }
            AmplitudeOracle::Noisy { base, seed, level } => {
                let a = base.eval(omega, theta, lambda)?;
                Ok(apply_noise(a, omega, theta, lambda, *seed, *level))
            }
            AmplitudeOracle::Custom(f) => f(omega, theta, lambda),
        }
    }

    pub fn sample(&self, omega: Vec3, theta: Vec3, lambda: f64) -> Result<AmplitudeSample> {
        AmplitudeSample::new(omega, theta, lambda, self.eval(omega, theta, lambda)?)
    }
}

/// `a` perturbed by relative complex Gaussian noise of size `level`, exactly
/// as the noisy oracle does.
pub fn apply_noise(
    a: Complex64,
    omega: Vec3,
    theta: Vec3,
    lambda: f64,
    seed: u64,
    level: f64,
) -> Complex64 {
    a + noise_sample(omega, theta, lambda, seed) * (level * a.norm())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit-variance complex Gaussian keyed by `(ω, θ, λ, seed)`, independent of
/// evaluation order.
pub fn noise_sample(omega: Vec3, theta: Vec3, lambda: f64, seed: u64) -> Complex64 {
    let mut h = splitmix(seed);
    for v in omega.iter().chain(&theta).chain(std::iter::once(&lambda)) {
        // +0.0 folds -0.0 so equal arguments always hash equally.
        h = splitmix(h ^ (v + 0.0).to_bits());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let re: f64 = StandardNormal.sample(&mut rng);
    let im: f64 = StandardNormal.sample(&mut rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_bump_scalar;

    #[test]
    fn green_small_argument_is_accurate() {
        // (e^{iz} - e^{-z})/z → 1 + i as z → 0.
        let g = green_g0([0.0; 3], [1e-9, 0.0, 0.0], 1.0).unwrap();
        let scaled = g * (8.0 * PI);
        assert!((scaled - Complex64::new(1.0, 1.0)).norm() < 1e-8);
    }

    #[test]
    fn noise_is_deterministic() {
        let a = noise_sample([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 8.0, 3);
        let b = noise_sample([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 8.0, 3);
        let c = noise_sample([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 8.0, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn order_zero_grid_matches_closed_form() {
        let v = make_bump_scalar([0.1, 0.0, 0.2], 0.6, 1.0).unwrap();
        let pair = FieldPair::new(Default::default(), v);
        let om = vec3::normalize([1.0, 0.3, 0.2]).unwrap();
        let th = vec3::normalize([0.2, 1.0, -0.1]).unwrap();
        let q = amplitude_quadrature(&pair, om, th, 4.0, 0).unwrap();
        let b = born_leading(&pair, om, th, 4.0).unwrap();
        assert!((q - b).norm() < 1e-10 * b.norm().max(1e-3), "{q} {b}");
    }
}
