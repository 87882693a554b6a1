//! Stability experiments: how amplitude perturbations of size `ε` propagate
//! into the reconstructed spectra.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldPair;
use crate::forward::{apply_noise, born_leading, AmplitudeOracle};
use crate::inversion::{assemble_estimate, spectral_estimate, LambdaRule, ProbePair, Vec3Probes};
use crate::quadrature::loglog_slope;
use crate::vec3::{self, Vec3};

/// Slack on the constant-free bounds at finite `λ`.
pub const C_SLACK: f64 = 2.0;

fn probe_calls(p: &ProbePair) -> [(Vec3, Vec3); 2] {
    [
        (p.omega_plus, p.omega_minus),
        (
            vec3::scale(-1.0, p.omega_minus),
            vec3::scale(-1.0, p.omega_plus),
        ),
    ]
}

/// `max |a₁ - a₂|/λ` over both amplitude calls of every probe.
pub fn epsilon_metric(
    oracle1: &AmplitudeOracle,
    oracle2: &AmplitudeOracle,
    probes: &[ProbePair],
    lambda_floor: f64,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Empty("epsilon needs at least one probe".into()));
    }
    if let Some(p) = probes.iter().find(|p| p.lambda < lambda_floor) {
        return Err(Error::InvalidParameter(format!(
            "probe frequency {} is below the floor {lambda_floor}",
            p.lambda
        )));
    }
    let vals: Vec<f64> = probes
        .par_iter()
        .map(|p| {
            let mut m: f64 = 0.0;
            for (om, th) in probe_calls(p) {
                let d = oracle1.eval(om, th, p.lambda)? - oracle2.eval(om, th, p.lambda)?;
                m = m.max(d.norm() / p.lambda);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// True `F(curl A)(ξ) = iξ×Â` and `F(2V - ∇·A)(ξ) = -iξ·Â + 2V̂`.
pub fn true_spectra(pair: &FieldPair, xi: Vec3) -> ([Complex64; 3], Complex64) {
    let a = pair.a.spectrum(xi);
    let i = Complex64::new(0.0, 1.0);
    let c = [
        i * (a[2] * xi[1] - a[1] * xi[2]),
        i * (a[0] * xi[2] - a[2] * xi[0]),
        i * (a[1] * xi[0] - a[0] * xi[1]),
    ];
    let div: Complex64 = (0..3).map(|j| a[j] * xi[j]).sum();
    (c, -i * div + pair.v.spectrum(xi) * 2.0)
}

fn weight(xi: Vec3) -> f64 {
    1.0 + vec3::norm(xi)
}

fn vec_gap(a: &[Complex64; 3], b: &[Complex64; 3]) -> f64 {
    (0..3).map(|j| (a[j] - b[j]).norm_sqr()).sum::<f64>().sqrt()
}

/// Clean probe amplitudes at one `(ξ, λ)`.
#[derive(Clone, Debug)]
struct ProbeSet {
    xi: Vec3,
    lambda: f64,
    probes: Vec3Probes,
}

impl ProbeSet {
    fn collect(clean: &AmplitudeOracle, xi: Vec3, lambda: f64) -> Result<ProbeSet> {
        Ok(ProbeSet {
            xi,
            lambda,
            probes: spectral_estimate(clean, xi, lambda)?.probes,
        })
    }

    fn noisy(&self, seed: u64, level: f64) -> Vec3Probes {
        let mut out = self.probes;
        for (p, ap, am) in out.iter_mut().flatten() {
            let [(o1, t1), (o2, t2)] = probe_calls(p);
            *ap = apply_noise(*ap, o1, t1, p.lambda, seed, level);
            *am = apply_noise(*am, o2, t2, p.lambda, seed, level);
        }
        out
    }

    /// `max |δa|/λ` for unit noise level.
    fn unit_epsilon(&self, seed: u64) -> f64 {
        let noisy = self.noisy(seed, 1.0);
        let mut m: f64 = 0.0;
        for (a, b) in self.probes.iter().zip(&noisy) {
            if let (Some((_, ap, am)), Some((_, bp, bm))) = (a, b) {
                m = m.max((ap - bp).norm() / self.lambda);
                m = m.max((am - bm).norm() / self.lambda);
            }
        }
        m
    }

    /// `max λ|a - a_born|` over the probe calls.
    fn remainder_constant(&self, pair: &FieldPair) -> Result<f64> {
        let mut m: f64 = 0.0;
        for (p, ap, am) in self.probes.iter().flatten() {
            let [(o1, t1), (o2, t2)] = probe_calls(p);
            m = m.max(self.lambda * (ap - born_leading(pair, o1, t1, p.lambda)?).norm());
            m = m.max(self.lambda * (am - born_leading(pair, o2, t2, p.lambda)?).norm());
        }
        Ok(m)
    }
}

/// Perturbed-data reconstruction errors at a set of spectral samples.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityRun {
    /// `max |a_noisy - a_clean|/λ` over the amplitude pairs used below.
    pub epsilon: f64,
    /// Clean-data remainder constant `max λ|a_clean - a_born|`.
    pub constant: f64,
    pub xi_samples: Vec<Vec3>,
    pub lambdas: Vec<f64>,
    /// `|F(curl A)_est - F(curl A)|/⟨ξ⟩` with `⟨ξ⟩ = 1 + |ξ|`.
    pub curl_errors: Vec<f64>,
    /// `|F(2V - ∇·A)_est - F(2V - ∇·A)|`.
    pub combo_errors: Vec<f64>,
}

/// Relative noise level that makes `ε` equal `target` for the given probes.
/// `ε` is linear in the level, so one unit-level measurement fixes it.
pub fn calibrate_noise_level(
    clean: &AmplitudeOracle,
    xis: &[Vec3],
    rule: LambdaRule,
    seed: u64,
    target: f64,
) -> Result<f64> {
    let sets = collect_sets(clean, xis, |xi| rule.lambda(xi))?;
    let unit = sets
        .iter()
        .map(|s| s.unit_epsilon(seed))
        .fold(0.0, f64::max);
    if unit == 0.0 {
        return Err(Error::DegenerateFit(
            "clean amplitudes vanish on every probe".into(),
        ));
    }
    Ok(target / unit)
}

fn collect_sets(
    clean: &AmplitudeOracle,
    xis: &[Vec3],
    lambda: impl Fn(Vec3) -> f64 + Sync,
) -> Result<Vec<ProbeSet>> {
    if xis.is_empty() {
        return Err(Error::Empty("no spectral samples".into()));
    }
    if xis.iter().any(|x| vec3::norm(*x) == 0.0) {
        return Err(Error::Geometry("stability samples need ξ ≠ 0".into()));
    }
    xis.par_iter()
        .map(|&xi| ProbeSet::collect(clean, xi, lambda(xi)))
        .collect()
}

/// Reconstructs at every `ξ` from clean data perturbed with noise
/// `(seed, level)` and measures the errors against the true spectra of `pair`.
pub fn stability_run(
    pair: &FieldPair,
    clean: &AmplitudeOracle,
    xis: &[Vec3],
    rule: LambdaRule,
    seed: u64,
    level: f64,
) -> Result<StabilityRun> {
    let sets = collect_sets(clean, xis, |xi| rule.lambda(xi))?;
    let mut epsilon: f64 = 0.0;
    let mut constant: f64 = 0.0;
    let mut curl_errors = Vec::with_capacity(sets.len());
    let mut combo_errors = Vec::with_capacity(sets.len());
    for s in &sets {
        epsilon = epsilon.max(level * s.unit_epsilon(seed));
        constant = constant.max(s.remainder_constant(pair)?);
        let (curl, combo) = assemble_estimate(s.xi, &s.noisy(seed, level));
        let (tc, tm) = true_spectra(pair, s.xi);
        curl_errors.push(vec_gap(&curl, &tc) / weight(s.xi));
        combo_errors.push((combo - tm).norm());
    }
    Ok(StabilityRun {
        epsilon,
        constant,
        xi_samples: xis.to_vec(),
        lambdas: sets.iter().map(|s| s.lambda).collect(),
        curl_errors,
        combo_errors,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurlVerdict {
    pub xi: Vec3,
    pub lambda: f64,
    pub discrepancy: f64,
    /// `C_SLACK·(ε + C/λ²)`.
    pub bound: f64,
    pub margin: f64,
    pub passes: bool,
    /// Whether the constant-free bound `< ε` also holds.
    pub within_epsilon: bool,
}

/// Checks `|δF(curl A)(ξ)|/⟨ξ⟩ ≤ 2(ε + C/λ²)` at every sample.
pub fn curl_stability_check(run: &StabilityRun) -> Vec<CurlVerdict> {
    run.xi_samples
        .iter()
        .zip(&run.lambdas)
        .zip(&run.curl_errors)
        .map(|((&xi, &lambda), &d)| {
            let bound = C_SLACK * (run.epsilon + run.constant / (lambda * lambda));
            CurlVerdict {
                xi,
                lambda,
                discrepancy: d,
                bound,
                margin: bound - d,
                passes: d <= bound,
                within_epsilon: d < run.epsilon,
            }
        })
        .collect()
}

/// Combination errors over a sweep of `λ` around `ε^{-1/2}` at one noise level.
#[derive(Clone, Debug, Serialize)]
pub struct ComboSweep {
    pub level: f64,
    pub epsilon: f64,
    pub constant: f64,
    pub lambdas: Vec<f64>,
    /// Mean error over the samples, per `λ`.
    pub mean_errors: Vec<f64>,
    /// Per-sample errors, indexed `[λ][ξ·seed]`.
    pub errors: Vec<Vec<f64>>,
}

impl ComboSweep {
    /// `ε^{-1/2}`, or `None` for clean data.
    pub fn balanced_lambda(&self) -> Option<f64> {
        (self.epsilon > 0.0).then(|| self.epsilon.powf(-0.5))
    }

    pub fn empirical_optimum(&self) -> f64 {
        let (i, _) = self
            .mean_errors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("sweep has at least one frequency");
        self.lambdas[i]
    }

    /// Index of the sweep frequency closest (in log scale) to `ε^{-1/2}`.
    pub fn balanced_index(&self) -> usize {
        let target = self.balanced_lambda().unwrap_or(self.lambdas[0]).ln();
        let mut best = 0;
        for (i, l) in self.lambdas.iter().enumerate() {
            if (l.ln() - target).abs() < (self.lambdas[best].ln() - target).abs() {
                best = i;
            }
        }
        best
    }
}

/// Runs the combination sweep: `λ = ε_target^{-1/2}·f` for each factor `f`,
/// noise level calibrated so `ε = ε_target` over the whole sweep. Errors are
/// averaged over the samples and the noise seeds.
pub fn combo_sweep(
    pair: &FieldPair,
    clean: &AmplitudeOracle,
    xis: &[Vec3],
    epsilon_target: f64,
    factors: &[f64],
    seeds: &[u64],
) -> Result<ComboSweep> {
    if factors.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("no sweep frequencies or seeds".into()));
    }
    if !(epsilon_target > 0.0) {
        return Err(Error::InvalidParameter("target ε must be positive".into()));
    }
    let base = epsilon_target.powf(-0.5);
    let lambdas: Vec<f64> = factors.iter().map(|f| base * f).collect();
    let mut sets = Vec::with_capacity(lambdas.len());
    for &l in &lambdas {
        sets.push(collect_sets(clean, xis, |_| l)?);
    }
    let unit = sets
        .iter()
        .flatten()
        .flat_map(|s| seeds.iter().map(move |&seed| s.unit_epsilon(seed)))
        .fold(0.0, f64::max);
    if unit == 0.0 {
        return Err(Error::DegenerateFit(
            "clean amplitudes vanish on every probe".into(),
        ));
    }
    let level = epsilon_target / unit;
    let mut constant: f64 = 0.0;
    let mut errors = Vec::with_capacity(lambdas.len());
    for row in &sets {
        let mut e = Vec::with_capacity(row.len());
        for s in row {
            constant = constant.max(s.remainder_constant(pair)?);
            let truth = true_spectra(pair, s.xi).1;
            for &seed in seeds {
                let (_, combo) = assemble_estimate(s.xi, &s.noisy(seed, level));
                e.push((combo - truth).norm());
            }
        }
        errors.push(e);
    }
    let mean_errors = errors
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len() as f64)
        .collect();
    Ok(ComboSweep {
        level,
        epsilon: level * unit,
        constant,
        lambdas,
        mean_errors,
        errors,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComboVerdict {
    pub epsilon: f64,
    pub balanced_lambda: Option<f64>,
    pub empirical_optimum: f64,
    /// `C'·ε^{1/2}` with `C' = 2(1 + C)`.
    pub bound: f64,
    /// Largest per-sample error at the sweep frequency nearest `ε^{-1/2}`.
    pub balanced_error: f64,
    pub optimum_ratio: Option<f64>,
    pub passes: bool,
}

/// Checks `|δF(2V - ∇·A)(ξ)| ≤ C'ε^{1/2}` at `λ ≈ ε^{-1/2}` and locates the
/// empirical optimum.
///
/// The bound follows from `|δa⁺| + |δa⁻| ≤ 2ελ` and a clean combination
/// remainder of at most `2C/λ`.
pub fn combo_stability_check(sweep: &ComboSweep) -> ComboVerdict {
    let i = sweep.balanced_index();
    let balanced_error = sweep.errors[i].iter().cloned().fold(0.0, f64::max);
    let opt = sweep.empirical_optimum();
    match sweep.balanced_lambda() {
        None => ComboVerdict {
            epsilon: 0.0,
            balanced_lambda: None,
            empirical_optimum: opt,
            bound: 0.0,
            balanced_error,
            optimum_ratio: None,
            passes: true,
        },
        Some(bl) => {
            let l = sweep.lambdas[i];
            // Evaluate the envelope at the sweep frequency actually used.
            let bound = 2.0 * sweep.epsilon * l + 2.0 * sweep.constant / l;
            let ratio = opt / bl;
            ComboVerdict {
                epsilon: sweep.epsilon,
                balanced_lambda: Some(bl),
                empirical_optimum: opt,
                bound,
                balanced_error,
                optimum_ratio: Some(ratio),
                passes: balanced_error <= bound && (1.0 / 3.0..=3.0).contains(&ratio),
            }
        }
    }
}

/// Log-log slope of the achievable error (mean error at `λ ≈ ε^{-1/2}`)
/// against `ε` across sweeps.
pub fn sqrt_law_exponent(sweeps: &[ComboSweep]) -> Result<f64> {
    let eps: Vec<f64> = sweeps.iter().map(|s| s.epsilon).collect();
    let err: Vec<f64> = sweeps
        .iter()
        .map(|s| s.mean_errors[s.balanced_index()])
        .collect();
    loglog_slope(&eps, &err)
}
