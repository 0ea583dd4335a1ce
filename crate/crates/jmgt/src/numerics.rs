//! Small numerical utilities: Gauss rules, adaptive quadrature, grids and
//! straight-line least squares.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
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
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
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

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over [a, b].
pub fn adaptive_quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let scale = gk15(&f, a, b).0.abs().max(f64::MIN_POSITIVE);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        if err <= tol * scale * ((hi - lo) / (b - a)).max(1e-3) || depth > 50 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `n` points log-spaced between `a` and `b` (both > 0), endpoints included.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    linspace(la, lb, n).into_iter().map(f64::exp).collect()
}

/// Least-squares line y = intercept + slope·x.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    LineFit {
        slope,
        intercept,
        r2,
    }
}

/// Lagrange basis polynomial `k` through `nodes`, evaluated at `x`.
pub fn lagrange_basis(nodes: &[f64], k: usize, x: f64) -> f64 {
    let mut p = 1.0;
    for (i, &nd) in nodes.iter().enumerate() {
        if i != k {
            p *= (x - nd) / (nodes[k] - nd);
        }
    }
    p
}

/// Weights of the first derivative at 0 from samples at integer `offsets`.
pub fn fd_weights(offsets: &[i64]) -> Vec<f64> {
    let n = offsets.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut fact = 1.0;
    for k in 0..n {
        if k > 0 {
            fact *= k as f64;
        }
        for (j, &o) in offsets.iter().enumerate() {
            a[(k, j)] = (o as f64).powi(k as i32) / fact;
        }
    }
    let mut e = nalgebra::DVector::<f64>::zeros(n);
    e[1] = 1.0;
    a.lu().solve(&e).expect("distinct offsets").iter().copied().collect()
}
