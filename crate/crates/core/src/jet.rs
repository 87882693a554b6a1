//! Truncated multivariate Taylor polynomials in three variables.
//!
//! A [`Jet`] of order `D` at a point `x0` stores the Taylor coefficients
//! `c_α = ∂^α f(x0) / α!` for every multi-index `|α| ≤ D`. Arithmetic on jets
//! propagates exact derivatives (forward-mode differentiation), which is how
//! the field library supplies analytic derivatives of arbitrary order up to
//! [`MAX_ORDER`] without finite differences.

use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::LazyLock;

pub const MAX_ORDER: usize = 6;
pub const MAX_TERMS: usize = 84;

/// Number of monomials of total degree at most `order` in three variables.
pub const fn n_terms(order: usize) -> usize {
    (order + 1) * (order + 2) * (order + 3) / 6
}

struct Tables {
    exps: [[u8; 3]; MAX_TERMS],
    index: [[[u16; MAX_ORDER + 1]; MAX_ORDER + 1]; MAX_ORDER + 1],
    factorial: [f64; 2 * MAX_ORDER + 1],
    products: Vec<Vec<(u8, u8, u8)>>,
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let mut exps = [[0u8; 3]; MAX_TERMS];
    let mut index = [[[u16::MAX; MAX_ORDER + 1]; MAX_ORDER + 1]; MAX_ORDER + 1];
    let mut n = 0;
    for d in 0..=MAX_ORDER {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                let c = d - a - b;
                exps[n] = [a as u8, b as u8, c as u8];
                index[a][b][c] = n as u16;
                n += 1;
            }
        }
    }
    debug_assert_eq!(n, MAX_TERMS);
    let mut factorial = [1.0; 2 * MAX_ORDER + 1];
    for k in 1..factorial.len() {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let mut products = Vec::with_capacity(MAX_ORDER + 1);
    for order in 0..=MAX_ORDER {
        let len = n_terms(order);
        let mut list = Vec::new();
        for i in 0..len {
            for j in 0..len {
                let e = [
                    exps[i][0] + exps[j][0],
                    exps[i][1] + exps[j][1],
                    exps[i][2] + exps[j][2],
                ];
                if (e[0] + e[1] + e[2]) as usize <= order {
                    let k = index[e[0] as usize][e[1] as usize][e[2] as usize];
                    list.push((i as u8, j as u8, k as u8));
                }
            }
        }
        products.push(list);
    }
    Tables {
        exps,
        index,
        factorial,
        products,
    }
});

fn idx(e: [usize; 3]) -> usize {
    TABLES.index[e[0]][e[1]][e[2]] as usize
}

fn multi_factorial(e: [u8; 3]) -> f64 {
    let f = &TABLES.factorial;
    f[e[0] as usize] * f[e[1] as usize] * f[e[2] as usize]
}

#[derive(Clone, Copy, Debug)]
pub struct Jet {
    order: u8,
    c: [f64; MAX_TERMS],
}

impl Jet {
    pub fn zero(order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        Jet {
            order: order as u8,
            c: [0.0; MAX_TERMS],
        }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut j = Jet::zero(order);
        j.c[0] = value;
        j
    }

    /// The coordinate function `x_axis` expanded about a point whose
    /// `axis`-coordinate is `value`.
    pub fn coordinate(axis: usize, value: f64, order: usize) -> Self {
        let mut j = Jet::constant(value, order);
        if order > 0 {
            let mut e = [0; 3];
            e[axis] = 1;
            j.c[idx(e)] = 1.0;
        }
        j
    }

    /// Builds a jet from a closure over multi-indices returning `c_α`.
    pub fn from_fn(order: usize, mut f: impl FnMut([u8; 3]) -> f64) -> Self {
        let mut j = Jet::zero(order);
        for k in 0..n_terms(order) {
            j.c[k] = f(TABLES.exps[k]);
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn len(&self) -> usize {
        n_terms(self.order as usize)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..self.len()]
    }

    pub fn exponents(k: usize) -> [u8; 3] {
        TABLES.exps[k]
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Taylor coefficient `c_α`, zero beyond the jet's order.
    pub fn coeff(&self, e: [usize; 3]) -> f64 {
        if e[0] + e[1] + e[2] > self.order as usize {
            0.0
        } else {
            self.c[idx(e)]
        }
    }

    /// Partial derivative `∂^α f(x0)`.
    pub fn derivative(&self, e: [usize; 3]) -> f64 {
        let f = &TABLES.factorial;
        self.coeff(e) * f[e[0]] * f[e[1]] * f[e[2]]
    }

    pub fn grad(&self) -> [f64; 3] {
        [
            self.coeff([1, 0, 0]),
            self.coeff([0, 1, 0]),
            self.coeff([0, 0, 1]),
        ]
    }

    pub fn hessian(&self) -> [[f64; 3]; 3] {
        let mut h = [[0.0; 3]; 3];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let mut e = [0; 3];
                e[i] += 1;
                e[j] += 1;
                *v = self.derivative(e);
            }
        }
        h
    }

    pub fn laplacian_value(&self) -> f64 {
        2.0 * (self.coeff([2, 0, 0]) + self.coeff([0, 2, 0]) + self.coeff([0, 0, 2]))
    }

    /// `∇Δf(x0)`.
    pub fn grad_laplacian(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..3 {
                let mut e = [0; 3];
                e[i] += 1;
                e[j] += 2;
                *o += self.derivative(e);
            }
        }
        out
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order as usize);
        let mut j = Jet::zero(order);
        let n = n_terms(order);
        j.c[..n].copy_from_slice(&self.c[..n]);
        j
    }

    /// Zero-pads to a higher order; the result is the same polynomial.
    pub fn raise(&self, order: usize) -> Jet {
        assert!(order <= MAX_ORDER);
        let mut j = Jet::zero(order.max(self.order as usize));
        let n = self.len();
        j.c[..n].copy_from_slice(&self.c[..n]);
        j
    }

    /// Highest total degree carrying a nonzero coefficient (0 for the zero jet).
    pub fn degree(&self) -> usize {
        (0..self.len())
            .rev()
            .find(|&k| self.c[k] != 0.0)
            .map(|k| {
                let e = TABLES.exps[k];
                (e[0] + e[1] + e[2]) as usize
            })
            .unwrap_or(0)
    }

    /// Evaluates the truncated Taylor polynomial at offset `h`.
    pub fn eval_at(&self, h: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len() {
            if self.c[k] != 0.0 {
                let e = TABLES.exps[k];
                s += self.c[k]
                    * h[0].powi(e[0] as i32)
                    * h[1].powi(e[1] as i32)
                    * h[2].powi(e[2] as i32);
            }
        }
        s
    }

    /// `∂f/∂x_axis` as a jet of one order lower.
    pub fn partial(&self, axis: usize) -> Jet {
        if self.order == 0 {
            return Jet::zero(0);
        }
        let order = self.order as usize - 1;
        let mut out = Jet::zero(order);
        for k in 0..n_terms(order) {
            let mut e = TABLES.exps[k].map(|v| v as usize);
            e[axis] += 1;
            out.c[k] = e[axis] as f64 * self.c[idx(e)];
        }
        out
    }

    /// `∂^β f` as a jet of order `order - |β|`.
    pub fn partial_multi(&self, beta: [u8; 3]) -> Jet {
        let lost = (beta[0] + beta[1] + beta[2]) as usize;
        if lost > self.order as usize {
            return Jet::zero(0);
        }
        let order = self.order as usize - lost;
        let mut out = Jet::zero(order);
        for k in 0..n_terms(order) {
            let a = TABLES.exps[k];
            let s = [a[0] + beta[0], a[1] + beta[1], a[2] + beta[2]];
            let ratio = multi_factorial(s) / multi_factorial(a);
            out.c[k] = ratio * self.c[idx(s.map(|v| v as usize))];
        }
        out
    }

    /// `(d·∇) f`.
    pub fn directional(&self, d: [f64; 3]) -> Jet {
        let mut out = self.partial(0) * d[0];
        out += self.partial(1) * d[1];
        out += self.partial(2) * d[2];
        out
    }

    /// `Δf` as a jet of order `order - 2`.
    pub fn laplacian(&self) -> Jet {
        let mut out = self.partial_multi([2, 0, 0]);
        out += self.partial_multi([0, 2, 0]);
        out += self.partial_multi([0, 0, 2]);
        out
    }

    /// Composes a univariate function with this jet. `taylor[k]` must hold
    /// `g^{(k)}(u0) / k!` where `u0 = self.value()`, for `k = 0..=order`.
    pub fn compose(&self, taylor: &[f64]) -> Jet {
        let order = self.order as usize;
        debug_assert!(taylor.len() > order);
        let mut delta = *self;
        delta.c[0] = 0.0;
        let mut r = Jet::constant(taylor[order], order);
        for k in (0..order).rev() {
            r = r * delta;
            r.c[0] += taylor[k];
        }
        r
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.c[0].exp();
        let f = &TABLES.factorial;
        let taylor: Vec<f64> = (0..=self.order as usize).map(|k| e0 / f[k]).collect();
        self.compose(&taylor)
    }

    pub fn recip(&self) -> Jet {
        let u0 = self.c[0];
        let inv = 1.0 / u0;
        let mut taylor = Vec::with_capacity(self.order as usize + 1);
        let mut p = inv;
        for _ in 0..=self.order {
            taylor.push(p);
            p *= -inv;
        }
        self.compose(&taylor)
    }

    pub fn axpy(&mut self, a: f64, other: &Jet) {
        let n = n_terms(self.order.min(other.order) as usize);
        for k in 0..n {
            self.c[k] += a * other.c[k];
        }
        self.order = self.order.min(other.order);
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self += rhs;
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        self.axpy(1.0, &rhs);
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self -= rhs;
        self
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        self.axpy(-1.0, &rhs);
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, s: f64) -> Jet {
        self *= s;
        self
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, s: f64) {
        let n = self.len();
        for v in &mut self.c[..n] {
            *v *= s;
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order) as usize;
        let mut out = Jet::zero(order);
        for &(i, j, k) in &TABLES.products[order] {
            out.c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_jet(x: [f64; 3], order: usize) -> Jet {
        // f = x^2 y + 3 y z^3 - z
        let (xj, yj, zj) = (
            Jet::coordinate(0, x[0], order),
            Jet::coordinate(1, x[1], order),
            Jet::coordinate(2, x[2], order),
        );
        xj * xj * yj + yj * zj * zj * zj * 3.0 - zj
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        let x = [0.7, -1.3, 0.4];
        let j = poly_jet(x, 4);
        let (a, b, c) = (x[0], x[1], x[2]);
        assert!((j.value() - (a * a * b + 3.0 * b * c.powi(3) - c)).abs() < 1e-14);
        let g = j.grad();
        assert!((g[0] - 2.0 * a * b).abs() < 1e-14);
        assert!((g[1] - (a * a + 3.0 * c.powi(3))).abs() < 1e-14);
        assert!((g[2] - (9.0 * b * c * c - 1.0)).abs() < 1e-14);
        assert!((j.derivative([0, 1, 3]) - 18.0).abs() < 1e-13);
        assert!((j.derivative([2, 1, 0]) - 2.0).abs() < 1e-13);
        assert_eq!(j.derivative([1, 1, 1]), 0.0);
        let lap = j.laplacian();
        assert!((lap.value() - (2.0 * b + 18.0 * b * c)).abs() < 1e-13);
    }

    #[test]
    fn exp_and_recip_match_closed_forms() {
        let x = [0.3, 0.2, -0.5];
        let xj = Jet::coordinate(0, x[0], 5);
        let yj = Jet::coordinate(1, x[1], 5);
        // e^{x y}: d^3/dx^3 = y^3 e^{xy}
        let e = (xj * yj).exp();
        let v = (x[0] * x[1]).exp();
        assert!((e.derivative([3, 0, 0]) - x[1].powi(3) * v).abs() < 1e-14);
        // 1/(1+x): d^4/dx^4 = 24/(1+x)^5
        let r = (xj + Jet::constant(1.0, 5)).recip();
        assert!((r.derivative([4, 0, 0]) - 24.0 / (1.0 + x[0]).powi(5)).abs() < 1e-12);
    }

    #[test]
    fn partial_multi_matches_repeated_partials() {
        let j = poly_jet([0.1, 0.9, -0.6], 6);
        let a = j.partial(2).partial(2).partial(1);
        let b = j.partial_multi([0, 1, 2]);
        assert_eq!(a.order(), b.order());
        for (p, q) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
