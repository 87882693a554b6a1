mod common;

use biharm_core::fields::gauge_transform;
use biharm_core::nearfield::{delta_a2, delta_a3, delta_a4};
use biharm_core::transport::*;
use common::*;

#[test]
fn collocation_matches_closed_forms() {
    let mut r = rng(7);
    for pair in bump_pairs() {
        for _ in 0..5 {
            let ray = Ray::new(ball(&mut r, 1.0), unit(&mut r)).unwrap();
            let a2 = xray_a2(&pair, &ray).unwrap();
            let t2 = transport_integrate(&pair, &ray, 2).unwrap();
            assert!((t2.re - a2).abs() < 1e-9, "{} vs {}", t2.re, a2);
            let a3 = a3_closed_form(&pair, &ray).unwrap();
            let t3 = transport_integrate(&pair, &ray, 3).unwrap();
            assert!((t3 - a3).norm() < 1e-7, "{t3} vs {a3}");
        }
    }
}

#[test]
fn gauge_shifts_match_transport_recursion() {
    let mut r = rng(11);
    let pair = &bump_pairs()[0];
    for phi in gauge_generators() {
        let gauged = gauge_transform(pair, &phi);
        for _ in 0..4 {
            let x = ball(&mut r, 0.8);
            let theta = unit(&mut r);
            let ray = Ray::new(x, theta).unwrap();
            let d2 = xray_a2(&gauged, &ray).unwrap() - xray_a2(pair, &ray).unwrap();
            assert!((d2 - delta_a2(&phi, x)).abs() < 1e-8);
            let d3 = a3_closed_form(&gauged, &ray).unwrap() - a3_closed_form(pair, &ray).unwrap();
            assert!((d3 - delta_a3(&phi, theta, x)).norm() < 1e-7);
            let d4 = transport_integrate(&gauged, &ray, 4).unwrap()
                - transport_integrate(pair, &ray, 4).unwrap();
            let want = delta_a4(&phi, pair, theta, x).unwrap();
            assert!((d4 - want).norm() < 1e-6, "{d4} vs {want}");
        }
    }
}

#[test]
fn residuals_are_small() {
    let mut r = rng(3);
    for pair in bump_pairs() {
        for _ in 0..5 {
            let x = ball(&mut r, 1.0);
            let theta = unit(&mut r);
            assert!(transport_residual(&pair, x, theta, 2).unwrap() < 1e-5);
            assert!(transport_residual(&pair, x, theta, 3).unwrap() < 1e-4);
        }
    }
}
