//! Quadrature building blocks: Gauss–Legendre nodes, globally adaptive
//! Gauss–Kronrod on vector-valued integrands, and cumulative integration
//! matrices for Chebyshev–Lobatto and uniform periodic samples.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, LazyLock, Mutex};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        x[0] = 0.0;
        w[0] = 2.0;
    }
    (x, w)
}

/// Gauss-Legendre nodes and weights.
pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

static GL_CACHE: LazyLock<Mutex<HashMap<usize, Rule>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Cached [`gauss_legendre`].
pub fn gauss_legendre_cached(n: usize) -> Rule {
    let mut cache = GL_CACHE.lock().expect("quadrature cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| Arc::new(gauss_legendre(n)))
        .clone()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_evals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_evals: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: f64,
    pub evaluations: usize,
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> Panel<N> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let fc = f(c);
    for k in 0..N {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        for k in 0..N {
            let s = f1[k] + f2[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for k in 0..N {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    Panel {
        a,
        b,
        value: kron,
        error: err,
    }
}

fn norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Globally adaptive 15-point Gauss–Kronrod quadrature of a vector-valued
/// integrand over `[a, b]`. The error is measured in the max-norm.
pub fn integrate_gk<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Estimate<N>> {
    if a == b {
        return Ok(Estimate {
            value: [0.0; N],
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let mut e = integrate_gk(f, b, a, tol)?;
        e.value.iter_mut().for_each(|v| *v = -*v);
        return Ok(e);
    }
    let mut heap = BinaryHeap::new();
    let first = gk15(&mut f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    let mut evals = 15;
    heap.push(first);
    loop {
        let target = tol.abs.max(tol.rel * norm(&total));
        if err <= target {
            break;
        }
        if evals + 30 > tol.max_evals {
            return Err(Error::Accuracy {
                estimate: err,
                target,
                evaluations: evals,
            });
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            return Err(Error::Accuracy {
                estimate: err,
                target,
                evaluations: evals,
            });
        }
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        evals += 30;
        for k in 0..N {
            total[k] += left.value[k] + right.value[k] - worst.value[k];
        }
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Periodically resum to keep round-off from drifting.
        if heap.len() % 64 == 0 {
            total = [0.0; N];
            err = 0.0;
            for p in heap.iter() {
                for k in 0..N {
                    total[k] += p.value[k];
                }
                err += p.error;
            }
        }
    }
    let mut value = [0.0; N];
    let mut error = 0.0;
    for p in heap.iter() {
        for k in 0..N {
            value[k] += p.value[k];
        }
        error += p.error;
    }
    Ok(Estimate {
        value,
        error,
        evaluations: evals,
    })
}

/// Scalar convenience wrapper over [`integrate_gk`].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    Ok(integrate_gk(|x| [f(x)], a, b, tol)?.value[0])
}

/// Chebyshev–Lobatto points `cos(πj/(n-1))` sorted ascending on `[-1, 1]`.
pub fn chebyshev_lobatto(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|j| -(PI * j as f64 / (n - 1) as f64).cos())
        .collect()
}

static CHEB_CACHE: LazyLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Row-major `n×n` matrix `Q` with `Σ_j Q[i][j] f(x_j) = ∫_{-1}^{x_i} p(s) ds`,
/// where `p` is the polynomial interpolant through the ascending
/// Chebyshev–Lobatto points.
pub fn chebyshev_cumulative_matrix(n: usize) -> Arc<Vec<f64>> {
    if let Some(m) = CHEB_CACHE.lock().expect("cache poisoned").get(&n) {
        return m.clone();
    }
    let m = Arc::new(build_chebyshev_cumulative(n));
    CHEB_CACHE
        .lock()
        .expect("cache poisoned")
        .insert(n, m.clone());
    m
}

fn build_chebyshev_cumulative(n: usize) -> Vec<f64> {
    let deg = n - 1;
    let x = chebyshev_lobatto(n);
    // Values -> Chebyshev coefficients (type-I DCT on Lobatto points).
    // Node x_j = cos(π(deg-j)/deg) with our ascending ordering.
    let mut to_coeff = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..n {
            let jj = deg - j;
            let mut w = 2.0 / deg as f64;
            if jj == 0 || jj == deg {
                w *= 0.5;
            }
            if k == 0 || k == deg {
                w *= 0.5;
            }
            to_coeff[k * n + j] = w * (PI * (k * jj) as f64 / deg as f64).cos();
        }
    }
    // Antiderivatives of T_k evaluated at the nodes, anchored at -1.
    // ∫T_0 = T_1, ∫T_1 = T_2/4, ∫T_k = T_{k+1}/(2(k+1)) - T_{k-1}/(2(k-1)).
    let cheb = |k: usize, t: f64| -> f64 {
        let th = t.clamp(-1.0, 1.0).acos();
        (k as f64 * th).cos()
    };
    let anti = |k: usize, t: f64| -> f64 {
        match k {
            0 => cheb(1, t),
            1 => 0.25 * cheb(2, t),
            _ => cheb(k + 1, t) / (2.0 * (k + 1) as f64) - cheb(k - 1, t) / (2.0 * (k - 1) as f64),
        }
    };
    let mut int_basis = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            int_basis[i * n + k] = anti(k, x[i]) - anti(k, -1.0);
        }
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let b = int_basis[i * n + k];
            if b == 0.0 {
                continue;
            }
            for j in 0..n {
                q[i * n + j] += b * to_coeff[k * n + j];
            }
        }
    }
    q
}

static PERIODIC_CACHE: LazyLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Row-major `n×n` matrix (for odd `n`) integrating the trigonometric
/// interpolant of samples `f(lo + j·h)`, `h = period / n`, from `lo` to each
/// node. Returned for unit period; scale by the actual period.
pub fn periodic_cumulative_matrix(n: usize) -> Arc<Vec<f64>> {
    assert!(n % 2 == 1, "periodic cumulative matrix needs odd n");
    if let Some(m) = PERIODIC_CACHE.lock().expect("cache poisoned").get(&n) {
        return m.clone();
    }
    let half = (n - 1) / 2;
    let nf = n as f64;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = i as f64 / nf;
            for k in 1..=half {
                let th = 2.0 * PI * k as f64 / nf;
                s += ((th * (i as f64 - j as f64)).sin() + (th * j as f64).sin()) / (PI * k as f64);
            }
            m[i * n + j] = s / nf;
        }
    }
    let m = Arc::new(m);
    PERIODIC_CACHE
        .lock()
        .expect("cache poisoned")
        .insert(n, m.clone());
    m
}

/// Least-squares slope of `log|y|` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two paired samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut lx = Vec::with_capacity(x.len());
    let mut ly = Vec::with_capacity(y.len());
    for (&a, &b) in x.iter().zip(y) {
        if !(a > 0.0) || b == 0.0 || !b.is_finite() {
            return Err(Error::DegenerateFit(format!(
                "cannot take logarithms of sample ({a}, {b})"
            )));
        }
        lx.push(a.ln());
        ly.push(b.abs().ln());
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}
