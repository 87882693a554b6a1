//! Reconstruction of `curl A` and `V - ½∇·A` from amplitude data.
//!
//! Each spectral sample `ξ` is probed with direction pairs
//! `ω± = θ cos μ ± ξ̂ sin μ` at `λ = |ξ|/(2 sin μ)`; amplitude differences
//! give `θ·Â(ξ)` and sums give `-iξ·Â + 2V̂`. Physical fields follow by
//! direct inverse Fourier synthesis.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::AmplitudeOracle;
use crate::vec3::{self, Vec3, E};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub xi: Vec3,
    pub theta: Vec3,
    pub mu: f64,
    pub lambda: f64,
    pub omega_plus: Vec3,
    pub omega_minus: Vec3,
}

pub fn build_probe(xi: Vec3, theta: Vec3, lambda: f64) -> Result<ProbePair> {
    let k = vec3::norm(xi);
    if !(k > 0.0) {
        return Err(Error::Geometry("probe needs a nonzero ξ".into()));
    }
    if (vec3::norm(theta) - 1.0).abs() > 1e-12 {
        return Err(Error::Geometry(format!(
            "θ must be a unit vector, |θ| = {}",
            vec3::norm(theta)
        )));
    }
    if vec3::dot(theta, xi).abs() >= 1e-10 * k {
        return Err(Error::Geometry(format!(
            "θ·ξ = {} is not zero",
            vec3::dot(theta, xi)
        )));
    }
    if !(lambda >= k) {
        return Err(Error::FrequencyTooLow { lambda, xi_norm: k });
    }
    let s = k / (2.0 * lambda);
    let mu = s.asin();
    let c = (1.0 - s * s).sqrt();
    let dir = vec3::scale(1.0 / k, xi);
    Ok(ProbePair {
        xi,
        theta,
        mu,
        lambda,
        omega_plus: vec3::axpy(vec3::scale(c, theta), s, dir),
        omega_minus: vec3::axpy(vec3::scale(c, theta), -s, dir),
    })
}

/// `(a(ω⁺, ω⁻, λ), a(-ω⁻, -ω⁺, λ))`.
pub fn probe_amplitudes(oracle: &AmplitudeOracle, p: &ProbePair) -> Result<(Complex64, Complex64)> {
    let a_plus = oracle.eval(p.omega_plus, p.omega_minus, p.lambda)?;
    let a_minus = oracle.eval(
        vec3::scale(-1.0, p.omega_minus),
        vec3::scale(-1.0, p.omega_plus),
        p.lambda,
    )?;
    Ok((a_plus, a_minus))
}

/// Estimate of `θ·Â(ξ)`: `(a⁺ - a⁻)/(2iλ cos μ)`.
pub fn extract_theta_a(a_plus: Complex64, a_minus: Complex64, p: &ProbePair) -> Complex64 {
    (a_plus - a_minus) / Complex64::new(0.0, 2.0 * p.lambda * p.mu.cos())
}

/// Estimate of `-iξ·Â(ξ) + 2V̂(ξ) = F(2V - ∇·A)(ξ)`.
pub fn extract_combo(a_plus: Complex64, a_minus: Complex64) -> Complex64 {
    a_plus + a_minus
}

/// `λ(ξ) = max(floor, factor·|ξ|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRule {
    pub floor: f64,
    pub factor: f64,
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule {
            floor: 16.0,
            factor: 4.0,
        }
    }
}

impl LambdaRule {
    pub fn lambda(&self, xi: Vec3) -> f64 {
        self.floor.max(self.factor * vec3::norm(xi))
    }
}

/// Spectral estimates at one `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// Estimate of `F(curl A)(ξ)`.
    pub curl: [Complex64; 3],
    /// Estimate of `F(2V - ∇·A)(ξ)`.
    pub combo: Complex64,
    /// Amplitude pairs used, one per probe.
    pub probes: Vec3Probes,
}

/// Up to three axis probes with their amplitude pairs.
pub type Vec3Probes = [Option<(ProbePair, Complex64, Complex64)>; 3];

const AXIS_TOL: f64 = 1e-9;

/// Runs the axis probes `θ_α = α×ξ/|α×ξ|` at `ξ` and assembles both spectra.
/// The combination is averaged over the probes.
///
/// At `ξ = 0` the curl spectrum is zero and the combination comes from the
/// forward and backward pairs `a(θ,θ) + a(-θ,-θ)`.
pub fn spectral_estimate(
    oracle: &AmplitudeOracle,
    xi: Vec3,
    lambda: f64,
) -> Result<SpectralEstimate> {
    let zero = Complex64::new(0.0, 0.0);
    let k = vec3::norm(xi);
    if k == 0.0 {
        let th = E[2];
        let a = oracle.eval(th, th, lambda)?
            + oracle.eval(vec3::scale(-1.0, th), vec3::scale(-1.0, th), lambda)?;
        return Ok(SpectralEstimate {
            curl: [zero; 3],
            combo: a,
            probes: [None; 3],
        });
    }
    let mut probes: Vec3Probes = [None; 3];
    for (j, alpha) in E.iter().enumerate() {
        let v = vec3::cross(*alpha, xi);
        let s = vec3::norm(v);
        if s <= AXIS_TOL * k {
            continue;
        }
        let p = build_probe(xi, vec3::scale(1.0 / s, v), lambda)?;
        let (ap, am) = probe_amplitudes(oracle, &p)?;
        probes[j] = Some((p, ap, am));
    }
    let (curl, combo) = assemble_estimate(xi, &probes);
    Ok(SpectralEstimate {
        curl,
        combo,
        probes,
    })
}

/// Combines axis-probe amplitudes at `ξ ≠ 0` into `F(curl A)(ξ)` and
/// `F(2V - ∇·A)(ξ)`. A missing probe marks the axis parallel to `ξ`.
pub fn assemble_estimate(xi: Vec3, probes: &Vec3Probes) -> ([Complex64; 3], Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let k = vec3::norm(xi);
    let mut w = [zero; 3];
    let mut combo = zero;
    let mut used = 0;
    let mut degenerate = None;
    for (j, slot) in probes.iter().enumerate() {
        match slot {
            Some((p, ap, am)) => {
                let s = vec3::norm(vec3::cross(E[j], xi));
                w[j] = extract_theta_a(*ap, *am, p) * s;
                combo += extract_combo(*ap, *am);
                used += 1;
            }
            None => degenerate = Some(j),
        }
    }
    if let Some(j) = degenerate {
        // ξ ∥ e_j, so ξ·(ξ×Â) = 0 fixes the missing component.
        let rest: Complex64 = (0..3).filter(|&i| i != j).map(|i| w[i] * xi[i]).sum();
        w[j] = -rest / xi[j];
    }
    // Project onto ξ^⊥ so ξ·(ξ×Â) vanishes exactly.
    let dot: Complex64 = (0..3).map(|i| w[i] * xi[i]).sum();
    let s = dot / (k * k);
    for i in 0..3 {
        w[i] -= s * xi[i];
    }
    let i = Complex64::new(0.0, 1.0);
    ([i * w[0], i * w[1], i * w[2]], combo / used.max(1) as f64)
}

/// Estimate of `F(curl A)(ξ) = i ξ×Â(ξ)` from the three axis probes.
pub fn reconstruct_curl_spectrum(
    oracle: &AmplitudeOracle,
    xi: Vec3,
    lambda: f64,
) -> Result<[Complex64; 3]> {
    if vec3::norm(xi) == 0.0 {
        return Err(Error::Geometry(
            "the curl spectrum at ξ = 0 is zero and is not probed".into(),
        ));
    }
    Ok(spectral_estimate(oracle, xi, lambda)?.curl)
}

/// Symmetric lattice `[-K, K]³` with `N` (odd) points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub half_extent: f64,
    pub points: usize,
}

impl LatticeSpec {
    pub fn new(half_extent: f64, points: usize) -> Result<Self> {
        if !(half_extent > 0.0) || points < 3 || points.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "lattice needs positive extent and an odd point count ≥ 3, got ({half_extent}, {points})"
            )));
        }
        Ok(LatticeSpec {
            half_extent,
            points,
        })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_extent / (self.points - 1) as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points)
            .map(|j| -self.half_extent + j as f64 * h)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    /// Lattice point of flat index `j` (last axis fastest).
    pub fn point(&self, j: usize) -> Vec3 {
        let n = self.points;
        let h = self.step();
        let c = |i: usize| -self.half_extent + i as f64 * h;
        [c(j / (n * n)), c((j / n) % n), c(j % n)]
    }
}

/// Spectral samples of `F(curl A)` and `F(2V - ∇·A)` on a lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub lattice: LatticeSpec,
    pub curl: [Vec<Complex64>; 3],
    pub combo: Vec<Complex64>,
}

impl SpectralGrid {
    /// Largest `|F(ξ) - conj F(-ξ)|` over the lattice, relative to the
    /// largest sample.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.combo.len();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for s in self.curl.iter().chain(std::iter::once(&self.combo)) {
            for j in 0..n {
                worst = worst.max((s[j] - s[n - 1 - j].conj()).norm());
                scale = scale.max(s[j].norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Fills a spectral grid from the oracle. Only one half of the lattice is
/// probed; the other half is its complex conjugate, as for any real field.
pub fn fill_spectral_grid(
    oracle: &AmplitudeOracle,
    lattice: LatticeSpec,
    rule: LambdaRule,
) -> Result<SpectralGrid> {
    let n = lattice.len();
    let half: Vec<usize> = (0..n).filter(|&j| j <= n - 1 - j).collect();
    let est: Vec<([Complex64; 3], Complex64)> = half
        .par_iter()
        .map(|&j| {
            let xi = lattice.point(j);
            let lambda = rule.lambda(xi);
            if lambda < vec3::norm(xi) {
                return Err(Error::FrequencyTooLow {
                    lambda,
                    xi_norm: vec3::norm(xi),
                });
            }
            let e = spectral_estimate(oracle, xi, lambda)?;
            Ok((e.curl, e.combo))
        })
        .collect::<Result<_>>()?;
    let zero = Complex64::new(0.0, 0.0);
    let mut curl = [vec![zero; n], vec![zero; n], vec![zero; n]];
    let mut combo = vec![zero; n];
    for (&j, (c, m)) in half.iter().zip(&est) {
        let mirror = n - 1 - j;
        for k in 0..3 {
            curl[k][j] = c[k];
            curl[k][mirror] = c[k].conj();
        }
        combo[j] = *m;
        combo[mirror] = m.conj();
    }
    // The centre sample is its own mirror; keep its real part.
    let c = (n - 1) / 2;
    for k in 0..3 {
        curl[k][c] = Complex64::new(curl[k][c].re, 0.0);
    }
    combo[c] = Complex64::new(combo[c].re, 0.0);
    Ok(SpectralGrid {
        lattice,
        curl,
        combo,
    })
}

/// Regular physical grid `[-R, R]³` with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalGrid {
    pub half_extent: f64,
    pub points: usize,
}

impl PhysicalGrid {
    pub fn axis(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![0.0];
        }
        let h = 2.0 * self.half_extent / (self.points - 1) as f64;
        (0..self.points)
            .map(|j| -self.half_extent + j as f64 * h)
            .collect()
    }

    pub fn step(&self) -> f64 {
        if self.points > 1 {
            2.0 * self.half_extent / (self.points - 1) as f64
        } else {
            0.0
        }
    }

    /// Point of flat index `j` (last axis fastest).
    pub fn point(&self, j: usize) -> Vec3 {
        let a = self.axis();
        let n = self.points;
        [a[j / (n * n)], a[(j / n) % n], a[j % n]]
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.points.pow(3)).map(|j| self.point(j)).collect()
    }
}

/// `(2π)^{-3} Δξ³ Σ_ξ F(ξ) e^{iξ·x}` on the physical grid, real part.
///
/// The sum is separable, so it runs as three one-axis contractions in a
/// fixed order.
pub fn synthesize(values: &[Complex64], lattice: &LatticeSpec, grid: &PhysicalGrid) -> Vec<f64> {
    let xi = lattice.axis();
    let xs = grid.axis();
    let (nk, nx) = (xi.len(), xs.len());
    let ph: Vec<Complex64> = xs
        .iter()
        .flat_map(|x| xi.iter().map(move |k| Complex64::from_polar(1.0, k * x)))
        .collect();
    // Contract the last ξ axis: [k0][k1][x2].
    let mut t1 = vec![Complex64::new(0.0, 0.0); nk * nk * nx];
    for r in 0..nk * nk {
        let src = &values[r * nk..(r + 1) * nk];
        for c in 0..nx {
            let p = &ph[c * nk..(c + 1) * nk];
            t1[r * nx + c] = src.iter().zip(p).map(|(a, b)| a * b).sum();
        }
    }
    // [k0][x1][x2]
    let mut t2 = vec![Complex64::new(0.0, 0.0); nk * nx * nx];
    for k0 in 0..nk {
        for x1 in 0..nx {
            let p = &ph[x1 * nk..(x1 + 1) * nk];
            for x2 in 0..nx {
                let mut acc = Complex64::new(0.0, 0.0);
                for k1 in 0..nk {
                    acc += p[k1] * t1[(k0 * nk + k1) * nx + x2];
                }
                t2[(k0 * nx + x1) * nx + x2] = acc;
            }
        }
    }
    let w = (lattice.step() / (2.0 * PI)).powi(3);
    let mut out = vec![0.0; nx * nx * nx];
    for x0 in 0..nx {
        let p = &ph[x0 * nk..(x0 + 1) * nk];
        for j in 0..nx * nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for k0 in 0..nk {
                acc += p[k0] * t2[k0 * nx * nx + j];
            }
            out[x0 * nx * nx + j] = w * acc.re;
        }
    }
    out
}

/// The synthesis sum of [`synthesize`] at a single point.
pub fn synthesize_at(values: &[Complex64], lattice: &LatticeSpec, x: Vec3) -> f64 {
    let axis = lattice.axis();
    let ph = |k: usize| -> Vec<Complex64> {
        axis.iter()
            .map(|v| Complex64::from_polar(1.0, v * x[k]))
            .collect()
    };
    let (p0, p1, p2) = (ph(0), ph(1), ph(2));
    let n = axis.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i0 in 0..n {
        let mut a1 = Complex64::new(0.0, 0.0);
        for i1 in 0..n {
            let row = &values[(i0 * n + i1) * n..(i0 * n + i1 + 1) * n];
            let a2: Complex64 = row.iter().zip(&p2).map(|(a, b)| a * b).sum();
            a1 += a2 * p1[i1];
        }
        acc += a1 * p0[i0];
    }
    (lattice.step() / (2.0 * PI)).powi(3) * acc.re
}

/// Fraction of spectral energy on the lattice boundary shell, as an
/// estimate of the mass the lattice truncates.
pub fn spectral_tail(values: &[[Complex64; 3]], combo: &[Complex64], lattice: &LatticeSpec) -> f64 {
    let n = lattice.points;
    let on_edge = |j: usize| {
        let i = [j / (n * n), (j / n) % n, j % n];
        i.iter().any(|&v| v == 0 || v == n - 1)
    };
    let mut edge = 0.0;
    let mut total = 0.0;
    for j in 0..combo.len() {
        let e = combo[j].norm_sqr() + values[j].iter().map(|c| c.norm_sqr()).sum::<f64>();
        total += e;
        if on_edge(j) {
            edge += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (edge / total).sqrt()
    }
}

/// Tail fraction above which [`reconstruct_fields`] warns.
pub const TAIL_WARNING: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct Reconstruction {
    pub grid: PhysicalGrid,
    /// Samples of `curl A`, last axis fastest.
    pub curl: Vec<Vec3>,
    /// Samples of `V - ½∇·A`.
    pub combo: Vec<f64>,
    pub spectra: SpectralGrid,
    pub tail_estimate: f64,
    pub warnings: Vec<String>,
}

/// Fills the spectral grid through the oracle and synthesizes `curl A` and
/// `V - ½∇·A` on the physical grid.
pub fn reconstruct_fields(
    oracle: &AmplitudeOracle,
    lattice: LatticeSpec,
    rule: LambdaRule,
    grid: PhysicalGrid,
) -> Result<Reconstruction> {
    let spectra = fill_spectral_grid(oracle, lattice, rule)?;
    Ok(synthesize_reconstruction(spectra, grid))
}

pub fn synthesize_reconstruction(spectra: SpectralGrid, grid: PhysicalGrid) -> Reconstruction {
    let lattice = spectra.lattice;
    let comps: Vec<Vec<f64>> = spectra
        .curl
        .par_iter()
        .map(|c| synthesize(c, &lattice, &grid))
        .collect();
    let combo: Vec<f64> = synthesize(&spectra.combo, &lattice, &grid)
        .into_iter()
        .map(|v| 0.5 * v)
        .collect();
    let curl: Vec<Vec3> = (0..combo.len())
        .map(|j| [comps[0][j], comps[1][j], comps[2][j]])
        .collect();
    let packed: Vec<[Complex64; 3]> = (0..spectra.combo.len())
        .map(|j| [spectra.curl[0][j], spectra.curl[1][j], spectra.curl[2][j]])
        .collect();
    let tail_estimate = spectral_tail(&packed, &spectra.combo, &lattice);
    let mut warnings = Vec::new();
    if tail_estimate > TAIL_WARNING {
        warnings.push(format!(
            "spectral truncation: {:.2e} of the spectral mass sits on the lattice boundary |ξ|∞ = {}",
            tail_estimate, lattice.half_extent
        ));
    }
    let period = 2.0 * PI / lattice.step();
    if 2.0 * grid.half_extent >= period {
        warnings.push(format!(
            "physical grid width {} reaches the synthesis period {:.3}; images will alias",
            2.0 * grid.half_extent,
            period
        ));
    }
    Reconstruction {
        grid,
        curl,
        combo,
        spectra,
        tail_estimate,
        warnings,
    }
}

/// Relative discrete L² error `‖f - g‖/‖g‖` over paired samples.
pub fn relative_l2(estimate: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// [`relative_l2`] for vector samples.
pub fn relative_l2_vec(estimate: &[Vec3], truth: &[Vec3]) -> f64 {
    let flat = |v: &[Vec3]| {
        v.iter()
            .flat_map(|p| p.iter().copied())
            .collect::<Vec<f64>>()
    };
    relative_l2(&flat(estimate), &flat(truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_example() {
        let p = build_probe([0.0, 0.0, 2.0], [1.0, 0.0, 0.0], 2.0).unwrap();
        assert!((p.mu - PI / 6.0).abs() < 1e-15);
        let r3 = 3f64.sqrt() / 2.0;
        assert!(vec3::norm(vec3::sub(p.omega_plus, [r3, 0.0, 0.5])) < 1e-15);
        assert!(vec3::norm(vec3::sub(p.omega_minus, [r3, 0.0, -0.5])) < 1e-15);
    }

    #[test]
    fn synthesis_of_a_single_mode_pair() {
        let lat = LatticeSpec::new(2.0, 5).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); lat.len()];
        // δ at ξ = 0 gives the constant (Δξ/2π)³.
        v[lat.len() / 2] = Complex64::new(1.0, 0.0);
        let g = PhysicalGrid {
            half_extent: 1.0,
            points: 3,
        };
        let out = synthesize(&v, &lat, &g);
        let want = (lat.step() / (2.0 * PI)).powi(3);
        assert!(out.iter().all(|x| (x - want).abs() < 1e-15));
    }
}
