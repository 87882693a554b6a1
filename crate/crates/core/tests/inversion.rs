mod common;

use biharm_core::fields::{fourier_transform, gauge_transform, gradient_field, FieldPair};
use biharm_core::forward::{born_leading, AmplitudeOracle};
use biharm_core::inversion::{
    build_probe, extract_combo, extract_theta_a, fill_spectral_grid, probe_amplitudes,
    reconstruct_curl_spectrum, reconstruct_fields, relative_l2, relative_l2_vec, spectral_estimate,
    synthesize_at, LambdaRule, LatticeSpec, PhysicalGrid,
};
use biharm_core::quadrature::loglog_slope;
use biharm_core::vec3::{self, Vec3};
use biharm_core::{Complex64, Error};
use common::{bump_pairs, curl_component, gauge_generators, reconstruction_pair, rng, truth, unit};
use rand::Rng;

fn orthogonal_unit(rng: &mut impl Rng, xi: Vec3) -> Vec3 {
    let [e1, e2, _] = vec3::frame_from(vec3::normalize(xi).unwrap(), [1.0, 0.0, 0.0]);
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    vec3::axpy(vec3::scale(a.cos(), e1), a.sin(), e2)
}

#[test]
fn probe_invariants_hold_for_random_geometry() {
    let mut r = rng(1);
    for _ in 0..1000 {
        let xi = vec3::scale(r.random_range(0.01..20.0), unit(&mut r));
        let theta = orthogonal_unit(&mut r, xi);
        let lambda = vec3::norm(xi) * r.random_range(1.0..10.0);
        let p = build_probe(xi, theta, lambda).unwrap();
        assert!(p.mu > 0.0 && p.mu <= std::f64::consts::FRAC_PI_6 + 1e-12);
        let d = vec3::scale(lambda, vec3::sub(p.omega_plus, p.omega_minus));
        assert!(vec3::norm(vec3::sub(d, xi)) < 1e-10 * (1.0 + vec3::norm(xi)));
        assert!((vec3::norm(p.omega_plus) - 1.0).abs() < 1e-12);
        assert!((vec3::norm(p.omega_minus) - 1.0).abs() < 1e-12);
        let dir = vec3::scale(1.0 / vec3::norm(xi), xi);
        let want = vec3::axpy(vec3::scale(p.mu.cos(), theta), p.mu.sin(), dir);
        assert!(vec3::norm(vec3::sub(want, p.omega_plus)) < 1e-12);
    }
}

#[test]
fn probe_errors_and_limits() {
    assert!(matches!(
        build_probe([0.0; 3], [1.0, 0.0, 0.0], 2.0),
        Err(Error::Geometry(_))
    ));
    assert!(matches!(
        build_probe([0.0, 0.0, 2.0], [0.0, 0.6, 0.8], 4.0),
        Err(Error::Geometry(_))
    ));
    assert!(matches!(
        build_probe([0.0, 0.0, 2.0], [1.0, 0.0, 0.0], 1.5),
        Err(Error::FrequencyTooLow { .. })
    ));
    let p = build_probe([0.0, 0.0, 2.0], [1.0, 0.0, 0.0], 1e6).unwrap();
    assert!(vec3::norm(vec3::sub(p.omega_plus, [1.0, 0.0, 0.0])) < 1e-5);
    assert!(vec3::norm(vec3::sub(p.omega_minus, [1.0, 0.0, 0.0])) < 1e-5);
}

#[test]
fn born_probes_recover_spectra_exactly() {
    let mut r = rng(2);
    let pairs = bump_pairs();
    for t in 0..100 {
        let pair = &pairs[t % 3];
        let oracle = AmplitudeOracle::born(pair.clone());
        let xi = vec3::scale(r.random_range(0.1..6.0), unit(&mut r));
        let theta = orthogonal_unit(&mut r, xi);
        let lambda = vec3::norm(xi).max(1.0) * r.random_range(1.0..8.0);
        let p = build_probe(xi, theta, lambda).unwrap();
        let (ap, am) = probe_amplitudes(&oracle, &p).unwrap();
        let direct = born_leading(pair, p.omega_plus, p.omega_minus, lambda).unwrap();
        assert_eq!(ap, direct);
        let ta = pair.a.projected_spectrum(theta, xi);
        let sa = pair.a.spectrum(xi);
        let xa: Complex64 = (0..3).map(|j| sa[j] * xi[j]).sum();
        let combo = Complex64::new(0.0, -1.0) * xa + pair.v.spectrum(xi) * 2.0;
        let scale = 1.0 + ta.norm() + combo.norm();
        assert!((extract_theta_a(ap, am, &p) - ta).norm() < 1e-6 * scale);
        assert!((extract_combo(ap, am) - combo).norm() < 1e-6 * scale);
    }
    let zero = AmplitudeOracle::born(FieldPair::zero());
    let p = build_probe([0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 3.0).unwrap();
    let z = Complex64::new(0.0, 0.0);
    assert_eq!(probe_amplitudes(&zero, &p).unwrap(), (z, z));
    assert_eq!(extract_theta_a(z, z, &p), z);
}

#[test]
fn curl_spectrum_matches_independent_transform() {
    let pair = &bump_pairs()[0];
    let oracle = AmplitudeOracle::born(pair.clone());
    let comps: Vec<_> = (0..3).map(|j| curl_component(&pair.a, j)).collect();
    for xi in [
        [0.7, -1.2, 0.4],
        [0.0, 0.0, 2.0],
        [1.5, 0.0, 0.0],
        [0.3, 2.0, -1.0],
    ] {
        let est = reconstruct_curl_spectrum(&oracle, xi, 16.0).unwrap();
        for j in 0..3 {
            let want = fourier_transform(&comps[j], xi, 1e-7).unwrap();
            assert!(
                (est[j] - want).norm() < 1e-5 * (1.0 + want.norm()),
                "ξ={xi:?} j={j}: {} vs {want}",
                est[j]
            );
        }
        let dot: Complex64 = (0..3).map(|j| est[j] * xi[j]).sum();
        assert!(dot.norm() < 1e-12 * (1.0 + est.iter().map(|c| c.norm()).sum::<f64>()));
    }
    assert!(reconstruct_curl_spectrum(&oracle, [0.0; 3], 16.0).is_err());
}

#[test]
fn gradient_fields_have_no_curl_spectrum() {
    let phi = &gauge_generators()[1];
    let pair = FieldPair::new(gradient_field(phi), Default::default());
    let oracle = AmplitudeOracle::born(pair);
    for xi in [[0.5, 1.0, -0.5], [0.0, 3.0, 0.0]] {
        let est = reconstruct_curl_spectrum(&oracle, xi, 16.0).unwrap();
        assert!(est.iter().all(|c| c.norm() < 1e-12), "{est:?}");
    }
}

#[test]
fn dc_sample_uses_forward_and_backward_pairs() {
    let pair = &bump_pairs()[1];
    let oracle = AmplitudeOracle::born(pair.clone());
    let e = spectral_estimate(&oracle, [0.0; 3], 16.0).unwrap();
    assert!((e.combo - pair.v.spectrum([0.0; 3]) * 2.0).norm() < 1e-12);
    assert!(e.curl.iter().all(|c| c.norm() == 0.0));
}

#[test]
fn gauge_pairs_give_identical_combos() {
    let pair = &bump_pairs()[2];
    let oracle = AmplitudeOracle::born(pair.clone());
    for phi in gauge_generators() {
        let g = AmplitudeOracle::born(gauge_transform(pair, &phi));
        for xi in [[0.4, -0.3, 1.1], [2.0, 1.0, 0.0]] {
            let a = spectral_estimate(&oracle, xi, 16.0).unwrap();
            let b = spectral_estimate(&g, xi, 16.0).unwrap();
            assert!((a.combo - b.combo).norm() < 1e-12 * (1.0 + a.combo.norm()));
            for j in 0..3 {
                assert!((a.curl[j] - b.curl[j]).norm() < 1e-12 * (1.0 + a.curl[j].norm()));
            }
        }
    }
}

#[test]
fn asymptotic_theta_a_error_decays() {
    let pair = &bump_pairs()[0];
    let oracle = AmplitudeOracle::asymptotic(pair.clone());
    let xi = [0.8, -0.5, 1.0];
    let theta = vec3::normalize(vec3::cross([1.0, 0.0, 0.0], xi)).unwrap();
    let want = pair.a.projected_spectrum(theta, xi);
    let lambdas = [8.0, 16.0, 32.0, 64.0];
    let errs: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let p = build_probe(xi, theta, l).unwrap();
            let (ap, am) = probe_amplitudes(&oracle, &p).unwrap();
            (extract_theta_a(ap, am, &p) - want).norm()
        })
        .collect();
    let slope = loglog_slope(&lambdas, &errs).unwrap();
    assert!(slope <= -1.0, "slope {slope}, errors {errs:?}");
}

#[test]
fn zero_pair_reconstructs_zero() {
    let oracle = AmplitudeOracle::born(FieldPair::zero());
    let rec = reconstruct_fields(
        &oracle,
        LatticeSpec::new(4.0, 9).unwrap(),
        LambdaRule::default(),
        PhysicalGrid {
            half_extent: 2.0,
            points: 5,
        },
    )
    .unwrap();
    assert!(rec.combo.iter().all(|v| *v == 0.0));
    assert!(rec.curl.iter().all(|v| *v == [0.0; 3]));
}

#[test]
fn born_reconstruction_of_bump_pair() {
    let pair = reconstruction_pair();
    let oracle = AmplitudeOracle::born(pair.clone());
    let lattice = LatticeSpec::new(8.0, 33).unwrap();
    let grid = PhysicalGrid {
        half_extent: 3.0,
        points: 25,
    };
    let rec = reconstruct_fields(&oracle, lattice, LambdaRule::default(), grid).unwrap();
    assert!(rec.spectra.hermitian_defect() == 0.0);
    let pts = grid.points();
    let (tc, tv) = truth(&pair, &pts);
    let ec = relative_l2_vec(&rec.curl, &tc);
    let ev = relative_l2(&rec.combo, &tv);
    assert!(ec < 0.05 && ev < 0.05, "curl {ec}, combo {ev}");

    // Divergence of the synthesized curl by central differences of the
    // synthesis sum itself.
    let mut r = rng(4);
    let (mut div2, mut mag2) = (0.0, 0.0);
    let h = 1e-3;
    for _ in 0..40 {
        let x = common::ball(&mut r, 1.5);
        let mut div = 0.0;
        for k in 0..3 {
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            div += (synthesize_at(&rec.spectra.curl[k], &lattice, p)
                - synthesize_at(&rec.spectra.curl[k], &lattice, m))
                / (2.0 * h);
            mag2 += synthesize_at(&rec.spectra.curl[k], &lattice, x).powi(2);
        }
        div2 += div * div;
    }
    assert!(
        div2.sqrt() <= 1e-3 * mag2.sqrt(),
        "{} vs {}",
        div2.sqrt(),
        mag2.sqrt()
    );
}

#[test]
fn truncated_lattice_warns() {
    let pair = &bump_pairs()[1];
    let oracle = AmplitudeOracle::born(pair.clone());
    let rec = reconstruct_fields(
        &oracle,
        LatticeSpec::new(2.0, 9).unwrap(),
        LambdaRule::default(),
        PhysicalGrid {
            half_extent: 2.0,
            points: 5,
        },
    )
    .unwrap();
    assert!(rec.tail_estimate > 1e-3);
    assert!(rec
        .warnings
        .iter()
        .any(|w| w.contains("spectral truncation")));
}

#[test]
fn asymptotic_spectra_approach_born_spectra() {
    let pair = reconstruction_pair();
    let lattice = LatticeSpec::new(4.0, 7).unwrap();
    let born = fill_spectral_grid(
        &AmplitudeOracle::born(pair.clone()),
        lattice,
        LambdaRule::default(),
    )
    .unwrap();
    let asym = AmplitudeOracle::asymptotic(pair);
    let mut gaps = Vec::new();
    for floor in [16.0, 32.0, 64.0] {
        let rule = LambdaRule { floor, factor: 4.0 };
        let s = fill_spectral_grid(&asym, lattice, rule).unwrap();
        let mut d = 0.0f64;
        for j in 0..lattice.len() {
            d = d.max((s.combo[j] - born.combo[j]).norm());
            for k in 0..3 {
                d = d.max((s.curl[k][j] - born.curl[k][j]).norm());
            }
        }
        gaps.push(d);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}
