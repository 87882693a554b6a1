use biharm_core::fields::{gauge_transform, FieldPair};
use biharm_core::forward::{
    amplitude_quadrature, born_leading, remainder_scaling, write_amplitude_csv, AmplitudeOracle,
    AmplitudeSample,
};
use biharm_core::inversion::{
    reconstruct_fields, relative_l2, relative_l2_vec, spectral_estimate, LatticeSpec,
};
use biharm_core::nearfield::gauge_orbit_report;
use biharm_core::stability::{
    calibrate_noise_level, combo_stability_check, combo_sweep, curl_stability_check,
    sqrt_law_exponent, stability_run,
};
use biharm_core::vec3::{self, Vec3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, OracleKind};
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Check {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Serialize)]
struct Verdict<'a, T: Serialize> {
    command: &'a str,
    verdict: &'static str,
    checks: &'a [Check],
    report: T,
}

fn write_verdict<T: Serialize>(
    out: &mut OutDir,
    command: &str,
    checks: &[Check],
    report: T,
) -> Result<bool, CliError> {
    let passed = checks.iter().all(|c| c.passed);
    out.write_json(
        "verdict.json",
        &Verdict {
            command,
            verdict: if passed { "pass" } else { "fail" },
            checks,
            report,
        },
    )?;
    Ok(passed)
}

fn clean_oracle(kind: OracleKind, pair: FieldPair) -> AmplitudeOracle {
    match kind {
        OracleKind::Born => AmplitudeOracle::born(pair),
        OracleKind::Asymptotic => AmplitudeOracle::asymptotic(pair),
    }
}

fn oracle(cfg: &LoadedConfig, pair: FieldPair) -> AmplitudeOracle {
    let c = &cfg.config;
    let o = clean_oracle(c.oracle.kind, pair);
    if c.oracle.noise_level > 0.0 {
        o.noisy(c.seed, c.oracle.noise_level)
    } else {
        o
    }
}

/// Amplitude table over every configured direction pair and frequency.
pub fn forward(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Option<bool>, CliError> {
    let c = &cfg.config;
    let o = oracle(cfg, cfg.build_pair(&c.pair, "pair")?);
    let jobs: Vec<(Vec3, Vec3, f64)> = c
        .forward
        .directions
        .iter()
        .flat_map(|d| {
            let (om, th) = d.unit().expect("validated");
            c.forward.lambdas.iter().map(move |&l| (om, th, l))
        })
        .collect();
    let samples: Vec<AmplitudeSample> = jobs
        .par_iter()
        .map(|&(om, th, l)| AmplitudeSample::new(om, th, l, o.eval(om, th, l)?))
        .collect::<biharm_core::Result<_>>()?;
    out.write_with("amplitudes.csv", |w| {
        write_amplitude_csv(w, &samples).map_err(CliError::from)
    })?;
    Ok(None)
}

#[derive(Serialize)]
struct InvertSummary {
    oracle: biharm_core::forward::OracleMode,
    tail_estimate: f64,
    warnings: Vec<String>,
    curl_relative_l2: Option<f64>,
    combo_relative_l2: Option<f64>,
}

/// Reconstructs `curl A` and `V - ½∇·A`; compares against `truth` if given.
pub fn invert(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Option<bool>, CliError> {
    let c = &cfg.config;
    let o = oracle(cfg, cfg.build_pair(&c.pair, "pair")?);
    let lattice = LatticeSpec::new(c.invert.k, c.invert.n)?;
    let grid = c.invert.grid();
    let rec = reconstruct_fields(&o, lattice, c.invert.rule(), grid)?;
    let pts = grid.points();
    let curl_rows: Vec<Vec<f64>> = pts
        .iter()
        .zip(&rec.curl)
        .map(|(x, v)| vec![x[0], x[1], x[2], v[0], v[1], v[2]])
        .collect();
    out.write_table(
        "curl.csv",
        &["x", "y", "z", "curl_x", "curl_y", "curl_z"],
        &curl_rows,
    )?;
    let combo_rows: Vec<Vec<f64>> = pts
        .iter()
        .zip(&rec.combo)
        .map(|(x, v)| vec![x[0], x[1], x[2], *v])
        .collect();
    out.write_table("combo.csv", &["x", "y", "z", "value"], &combo_rows)?;

    let mut summary = InvertSummary {
        oracle: o.mode(),
        tail_estimate: rec.tail_estimate,
        warnings: rec.warnings.clone(),
        curl_relative_l2: None,
        combo_relative_l2: None,
    };
    let mut checks = Vec::new();
    if let Some(t) = &c.truth {
        let truth = cfg.build_pair(t, "truth")?;
        let tc: Vec<Vec3> = pts
            .iter()
            .map(|&x| biharm_core::fields::curl(&truth.a, x))
            .collect();
        let tv: Vec<f64> = pts
            .iter()
            .map(|&x| biharm_core::fields::invariant_scalar(&truth, x))
            .collect();
        let ec = relative_l2_vec(&rec.curl, &tc);
        let ev = relative_l2(&rec.combo, &tv);
        summary.curl_relative_l2 = Some(ec);
        summary.combo_relative_l2 = Some(ev);
        let limit = c.tolerances.reconstruction_l2;
        checks.push(Check::new(
            "curl_relative_l2",
            ec <= limit,
            format!("{ec:.3e} ≤ {limit}"),
        ));
        checks.push(Check::new(
            "combo_relative_l2",
            ev <= limit,
            format!("{ev:.3e} ≤ {limit}"),
        ));
    }
    out.write_json("summary.json", &summary)?;
    if checks.is_empty() {
        return Ok(None);
    }
    write_verdict(out, "invert", &checks, &summary).map(Some)
}

#[derive(Serialize)]
struct GaugeEntry {
    generator: usize,
    fitted_exponent: Option<f64>,
    vanishes_identically: bool,
    max_differences: Vec<f64>,
    curl_agreement: f64,
    combo_agreement: f64,
    spectral_agreement: f64,
}

/// Near-field traces and probe-level spectra of the pair and its gauge
/// transforms.
pub fn gauge_test(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Option<bool>, CliError> {
    let c = &cfg.config;
    let pair = cfg.build_pair(&c.pair, "pair")?;
    let gens = cfg.generators()?;
    cfg.check(
        !gens.is_empty(),
        "gauge",
        "generators",
        "gauge-test needs at least one generator",
    )?;
    let theta = vec3::normalize(c.gauge.theta).expect("validated");
    let base = AmplitudeOracle::born(pair.clone());
    let tol = &c.tolerances;
    let mut checks = Vec::new();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (i, phi) in gens.iter().enumerate() {
        let gauged = gauge_transform(&pair, phi);
        let r = gauged.support_radius().max(pair.support_radius()) + c.gauge.clearance;
        let rep = gauge_orbit_report(&pair, phi, theta, r, &c.gauge.lambdas)?;
        let other = AmplitudeOracle::born(gauged);
        let mut spectral: f64 = 0.0;
        for &xi in &c.stability.xis {
            let lambda = c.invert.rule().lambda(xi);
            let a = spectral_estimate(&base, xi, lambda)?;
            let b = spectral_estimate(&other, xi, lambda)?;
            spectral = spectral.max((a.combo - b.combo).norm());
            for j in 0..3 {
                spectral = spectral.max((a.curl[j] - b.curl[j]).norm());
            }
        }
        for (l, d) in c.gauge.lambdas.iter().zip(&rep.max_differences) {
            rows.push(vec![i as f64, *l, *d]);
        }
        let decay = rep.fitted_exponent.is_none_or(|e| e <= tol.gauge_exponent);
        checks.push(Check::new(
            format!("generator {i} near-field decay"),
            decay,
            match rep.fitted_exponent {
                Some(e) => format!("exponent {e:.3} ≤ {}", tol.gauge_exponent),
                None => "differences vanish identically".into(),
            },
        ));
        let agree = rep.curl_agreement.max(rep.combo_agreement).max(spectral);
        checks.push(Check::new(
            format!("generator {i} invariants"),
            agree < tol.gauge_agreement,
            format!("max disagreement {agree:.3e} < {}", tol.gauge_agreement),
        ));
        entries.push(GaugeEntry {
            generator: i,
            fitted_exponent: rep.fitted_exponent,
            vanishes_identically: rep.vanishes_identically,
            max_differences: rep.max_differences,
            curl_agreement: rep.curl_agreement,
            combo_agreement: rep.combo_agreement,
            spectral_agreement: spectral,
        });
    }
    out.write_table(
        "gauge_traces.csv",
        &["generator", "lambda", "max_difference"],
        &rows,
    )?;
    write_verdict(out, "gauge-test", &checks, &entries).map(Some)
}

#[derive(Serialize)]
struct StabilityLevel {
    epsilon_target: f64,
    epsilon: f64,
    constant: f64,
    worst_curl_ratio: f64,
    balanced_lambda: Option<f64>,
    empirical_optimum: f64,
    combo_bound: f64,
    combo_balanced_error: f64,
    optimum_ratio: Option<f64>,
}

#[derive(Serialize)]
struct StabilityReport {
    levels: Vec<StabilityLevel>,
    sqrt_law_exponent: Option<f64>,
}

/// Curl envelope and combination sweep at every configured noise target.
pub fn stability(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Option<bool>, CliError> {
    let c = &cfg.config;
    let st = &c.stability;
    let pair = cfg.build_pair(&c.pair, "pair")?;
    let clean = clean_oracle(c.oracle.kind, pair.clone());
    let rule = c.invert.rule();
    let seeds: Vec<u64> = (0..st.draws).map(|k| c.seed.wrapping_add(k)).collect();
    let mut checks = Vec::new();
    let mut levels = Vec::new();
    let mut sweeps = Vec::new();
    let mut curl_rows = Vec::new();
    let mut combo_rows = Vec::new();
    for &eps in &st.epsilons {
        let level = calibrate_noise_level(&clean, &st.xis, rule, c.seed, eps)?;
        let run = stability_run(&pair, &clean, &st.xis, rule, c.seed, level)?;
        let verdicts = curl_stability_check(&run);
        let mut worst: f64 = 0.0;
        for (v, combo) in verdicts.iter().zip(&run.combo_errors) {
            worst = worst.max(v.discrepancy / v.bound);
            curl_rows.push(vec![
                run.epsilon,
                v.xi[0],
                v.xi[1],
                v.xi[2],
                v.lambda,
                v.discrepancy,
                v.bound,
                *combo,
            ]);
        }
        checks.push(Check::new(
            format!("curl envelope at ε = {eps:e}"),
            verdicts.iter().all(|v| v.passes),
            format!("largest discrepancy/bound {worst:.3}"),
        ));
        let sweep = combo_sweep(&pair, &clean, &st.xis, eps, &st.factors, &seeds)?;
        let cv = combo_stability_check(&sweep);
        for (l, e) in sweep.lambdas.iter().zip(&sweep.mean_errors) {
            combo_rows.push(vec![sweep.epsilon, *l, *e]);
        }
        checks.push(Check::new(
            format!("combination bound at ε = {eps:e}"),
            cv.passes,
            format!(
                "error {:.3e} vs bound {:.3e}, optimum λ {:.3} vs ε^-1/2 = {:.3}",
                cv.balanced_error,
                cv.bound,
                cv.empirical_optimum,
                cv.balanced_lambda.unwrap_or(f64::NAN)
            ),
        ));
        levels.push(StabilityLevel {
            epsilon_target: eps,
            epsilon: run.epsilon,
            constant: run.constant.max(sweep.constant),
            worst_curl_ratio: worst,
            balanced_lambda: cv.balanced_lambda,
            empirical_optimum: cv.empirical_optimum,
            combo_bound: cv.bound,
            combo_balanced_error: cv.balanced_error,
            optimum_ratio: cv.optimum_ratio,
        });
        sweeps.push(sweep);
    }
    let exponent = if sweeps.len() >= 2 {
        let e = sqrt_law_exponent(&sweeps)?;
        let tol = &c.tolerances;
        checks.push(Check::new(
            "square-root law",
            (e - tol.sqrt_exponent).abs() <= tol.sqrt_exponent_tolerance,
            format!(
                "exponent {e:.3} within {} of {}",
                tol.sqrt_exponent_tolerance, tol.sqrt_exponent
            ),
        ));
        Some(e)
    } else {
        None
    };
    out.write_table(
        "stability_curl.csv",
        &[
            "epsilon",
            "xi_x",
            "xi_y",
            "xi_z",
            "lambda",
            "curl_discrepancy",
            "curl_bound",
            "combo_error",
        ],
        &curl_rows,
    )?;
    out.write_table(
        "stability_combo.csv",
        &["epsilon", "lambda", "mean_error"],
        &combo_rows,
    )?;
    let report = StabilityReport {
        levels,
        sqrt_law_exponent: exponent,
    };
    write_verdict(out, "stability", &checks, &report).map(Some)
}

#[derive(Serialize)]
struct ScalingEntry {
    omega: Vec3,
    theta: Vec3,
    exponent: f64,
}

/// Fitted decay of `|a - a_born|` in `λ` for each configured direction pair.
pub fn scaling(cfg: &LoadedConfig, out: &mut OutDir) -> Result<Option<bool>, CliError> {
    let c = &cfg.config;
    let pair = cfg.build_pair(&c.pair, "pair")?;
    let [lo, hi] = c.tolerances.scaling_slope;
    let mut checks = Vec::new();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (i, d) in c.scaling.directions.iter().enumerate() {
        let (omega, theta) = d.unit().expect("validated");
        let samples = c
            .scaling
            .lambdas
            .par_iter()
            .map(|&l| {
                let q = amplitude_quadrature(&pair, omega, theta, l, 3)?;
                Ok((l, q - born_leading(&pair, omega, theta, l)?))
            })
            .collect::<biharm_core::Result<Vec<_>>>()?;
        for (l, r) in &samples {
            rows.push(vec![i as f64, *l, r.norm()]);
        }
        let e = remainder_scaling(&samples)?;
        checks.push(Check::new(
            format!("direction pair {i} remainder exponent"),
            (lo..=hi).contains(&e),
            format!("{e:.3} in [{lo}, {hi}]"),
        ));
        entries.push(ScalingEntry {
            omega,
            theta,
            exponent: e,
        });
    }
    out.write_table("scaling.csv", &["pair", "lambda", "remainder"], &rows)?;
    write_verdict(out, "scaling", &checks, &entries).map(Some)
}
