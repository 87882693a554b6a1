#![allow(dead_code)]

use biharm_core::fields::{
    make_bump_scalar, make_linear_bump, rotation_bump, FieldPair, ScalarField, VectorField,
};
use biharm_core::vec3::{self, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = vec3::norm(v);
        if n > 0.1 && n <= 1.0 {
            return vec3::scale(1.0 / n, v);
        }
    }
}

pub fn ball(rng: &mut impl Rng, r: f64) -> Vec3 {
    loop {
        let v = [
            rng.random_range(-r..r),
            rng.random_range(-r..r),
            rng.random_range(-r..r),
        ];
        if vec3::norm(v) <= r {
            return v;
        }
    }
}

/// Three structurally different bump pairs.
pub fn bump_pairs() -> Vec<FieldPair> {
    let p1 = FieldPair::new(
        rotation_bump([0.2, -0.1, 0.1], 0.6, 1.0, [0.3, 0.5, 0.8])
            .unwrap()
            .plus(VectorField::term(
                [1.0, -0.5, 0.2],
                make_bump_scalar([-0.3, 0.2, 0.0], 0.5, 0.8).unwrap(),
            )),
        make_bump_scalar([0.1, 0.3, -0.2], 0.55, 1.2).unwrap(),
    );
    let p2 = FieldPair::new(
        VectorField::from_components([
            make_bump_scalar([0.0, 0.2, 0.1], 0.45, 0.7).unwrap(),
            make_linear_bump([0.1, 0.0, -0.2], 0.5, 1.1, [0.4, -0.3, 1.0]).unwrap(),
            make_bump_scalar([-0.2, -0.1, 0.3], 0.6, -0.5).unwrap(),
        ]),
        make_linear_bump([0.2, 0.1, 0.0], 0.5, 0.9, [1.0, 0.5, -0.4]).unwrap(),
    );
    let p3 = FieldPair::new(
        rotation_bump([-0.1, 0.1, 0.0], 0.7, 0.6, [0.0, 0.0, 1.0])
            .unwrap()
            .plus(biharm_core::fields::gradient_field(
                &make_bump_scalar([0.3, 0.0, 0.1], 0.5, 0.9).unwrap(),
            )),
        ScalarField::Sum(vec![
            make_bump_scalar([0.0, 0.0, 0.0], 0.6, 0.8).unwrap(),
            make_bump_scalar([0.4, -0.3, 0.1], 0.4, -0.6).unwrap(),
        ]),
    );
    vec![p1, p2, p3]
}

/// Three gauge generators.
pub fn gauge_generators() -> Vec<ScalarField> {
    vec![
        make_bump_scalar([0.1, 0.0, -0.1], 0.5, 1.3).unwrap(),
        make_linear_bump([-0.2, 0.1, 0.0], 0.55, 0.9, [0.5, -1.0, 0.3]).unwrap(),
        ScalarField::Sum(vec![
            make_bump_scalar([0.3, 0.2, 0.0], 0.4, -0.7).unwrap(),
            make_bump_scalar([-0.1, -0.3, 0.2], 0.6, 0.5).unwrap(),
        ]),
    ]
}

/// Wider bump pair whose spectrum is negligible beyond `|ξ| = 8`.
pub fn reconstruction_pair() -> FieldPair {
    FieldPair::new(
        rotation_bump([0.2, -0.1, 0.1], 0.7, 1.0, [0.3, 0.5, 0.8])
            .unwrap()
            .plus(VectorField::term(
                [1.0, -0.5, 0.2],
                make_bump_scalar([-0.3, 0.2, 0.0], 0.7, 0.8).unwrap(),
            )),
        make_bump_scalar([0.1, 0.3, -0.2], 0.7, 1.2).unwrap(),
    )
}

/// Component `j` of `curl A` as an explicit scalar field.
pub fn curl_component(a: &VectorField, j: usize) -> ScalarField {
    // (∇f × d)_j = ∂_k f d_l - ∂_l f d_k with (j, k, l) cyclic.
    let (k, l) = ((j + 1) % 3, (j + 2) % 3);
    let mut parts = Vec::new();
    for (d, f) in &a.terms {
        let mut bk = [0u8; 3];
        bk[k] = 1;
        let mut bl = [0u8; 3];
        bl[l] = 1;
        if d[l] != 0.0 {
            parts.push(f.clone().partial(bk).scaled(d[l]));
        }
        if d[k] != 0.0 {
            parts.push(f.clone().partial(bl).scaled(-d[k]));
        }
    }
    ScalarField::Sum(parts)
}

/// `curl A` and `V - ½∇·A` sampled at the given points.
pub fn truth(pair: &FieldPair, pts: &[Vec3]) -> (Vec<Vec3>, Vec<f64>) {
    let c = pts
        .iter()
        .map(|&x| biharm_core::fields::curl(&pair.a, x))
        .collect();
    let v = pts
        .iter()
        .map(|&x| biharm_core::fields::invariant_scalar(pair, x))
        .collect();
    (c, v)
}
