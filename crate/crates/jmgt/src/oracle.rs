//! Brute-force reference implementations for tests: matrix exponentials by
//! eigen-decomposition, polynomial roots from companion matrices, the memory
//! term by direct time convolution, and finite-difference operators.
//!
//! None of these share numerical code with the modules they check. Eigen
//! problems go through nalgebra's Schur form and inverse iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;

use crate::error::{Error, Result};
use crate::medium_kernel::MemoryKernel;

/// A reference value with an estimate of its error.
#[derive(Debug, Clone)]
pub struct OracleResult<T> {
    pub value: T,
    /// Estimated absolute error of `value` (largest entry).
    pub error_bound: f64,
    /// Per-item residuals, where the oracle has them (|p(root)| for roots).
    pub residuals: Vec<f64>,
    /// The primary method was not applicable and a fallback produced `value`.
    pub fallback: bool,
}

/// Condition number beyond which `expm_eigen` switches to Taylor.
pub const EXPM_COND_MAX: f64 = 1e12;

fn complex_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NoConvergence("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn norm1(m: &DMatrix<C>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Unit eigenvector for λ by inverse iteration on A − (λ+δ)I.
fn eigenvector(a: &DMatrix<C>, lam: C) -> Option<DVector<C>> {
    let n = a.nrows();
    let scale = 1.0 + a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let shift = lam + C::new(1e-10 * scale, 1e-11 * scale);
    let m = a - DMatrix::<C>::identity(n, n) * shift;
    let lu = m.lu();
    let mut x = DVector::from_fn(n, |i, _| C::new(1.0 + 0.1 * i as f64, 0.05 * (i as f64).sin()));
    for _ in 0..4 {
        x = lu.solve(&x)?;
        let nx = x.norm();
        if !(nx.is_finite() && nx > 0.0) {
            return None;
        }
        x /= C::new(nx, 0.0);
    }
    Some(x)
}

fn taylor_expm(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = a.nrows();
    let na = a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let s = if na > 0.5 { (na / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(s);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..60 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    let bound = f64::EPSILON * (n as f64) * 2f64.powi(s.max(0)) * sum.amax();
    (sum, bound)
}

/// e^{tA} as V·diag(e^{λt})·V⁻¹. Falls back to scaled Taylor, flagged, when
/// the eigenvector matrix has condition number above `EXPM_COND_MAX`.
pub fn expm_eigen(a: &DMatrix<f64>, t: f64) -> Result<OracleResult<DMatrix<f64>>> {
    if !a.is_square() {
        return Err(Error::InvalidParams("expm_eigen needs a square matrix".into()));
    }
    if !t.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParams("expm_eigen needs finite input".into()));
    }
    let n = a.nrows();
    let taylor = |a: &DMatrix<f64>| {
        let (value, error_bound) = taylor_expm(&(a * t));
        OracleResult {
            value,
            error_bound,
            residuals: vec![],
            fallback: true,
        }
    };
    let lam = complex_eigenvalues(a)?;
    let ac = a.map(|x| C::new(x, 0.0));
    let mut v = DMatrix::<C>::zeros(n, n);
    for (k, l) in lam.iter().enumerate() {
        match eigenvector(&ac, *l) {
            Some(x) => v.set_column(k, &x),
            None => return Ok(taylor(a)),
        }
    }
    let Some(vinv) = v.clone().try_inverse() else {
        return Ok(taylor(a));
    };
    let cond = norm1(&v) * norm1(&vinv);
    if !(cond <= EXPM_COND_MAX) {
        return Ok(taylor(a));
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(n, lam.iter().map(|l| (l * t).exp())));
    let e = &v * d * &vinv;
    let value = e.map(|z| z.re);
    let error_bound = cond * f64::EPSILON * (n as f64) * (1.0 + (a.amax() * t).abs()) * value.amax();
    Ok(OracleResult {
        value,
        error_bound,
        residuals: vec![],
        fallback: false,
    })
}

/// Horner evaluation, coefficients highest degree first.
pub fn poly_eval(coeffs: &[f64], z: C) -> C {
    coeffs.iter().fold(C::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Roots of Σ coeffs[i]·x^{d−i} as eigenvalues of the companion matrix, with
/// |p(root)| as residuals.
pub fn poly_roots(coeffs: &[f64]) -> Result<OracleResult<Vec<C>>> {
    let Some(&lead) = coeffs.first() else {
        return Err(Error::InvalidParams("empty polynomial".into()));
    };
    if lead == 0.0 || !lead.is_finite() {
        return Err(Error::InvalidParams("leading coefficient must be nonzero".into()));
    }
    let d = coeffs.len() - 1;
    if d == 0 {
        return Ok(OracleResult {
            value: vec![],
            error_bound: 0.0,
            residuals: vec![],
            fallback: false,
        });
    }
    let comp = DMatrix::from_fn(d, d, |i, j| {
        if i == 0 {
            -coeffs[j + 1] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let roots = complex_eigenvalues(&comp)?;
    let residuals: Vec<f64> = roots.iter().map(|r| poly_eval(coeffs, *r).norm()).collect();
    Ok(OracleResult {
        value: roots,
        error_bound: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
        fallback: false,
    })
}

fn check_uniform(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InsufficientData("need at least two trajectory samples".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times[0] != 0.0 {
        return Err(Error::UnsupportedRepresentation("trajectory must start at t = 0 with dt > 0".into()));
    }
    for (i, t) in times.iter().enumerate() {
        if (t - i as f64 * dt).abs() > 1e-9 * dt * (1.0 + i as f64) {
            return Err(Error::UnsupportedRepresentation(format!(
                "trajectory is not uniform at sample {i}"
            )));
        }
    }
    Ok(dt)
}

/// Composite trapezoid weights on m intervals of width h.
fn trapezoid(m: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; m + 1];
    w[0] = 0.5 * h;
    w[m] = 0.5 * h;
    w
}

/// Weights for ∫₀^{nh} on n intervals: trapezoid on steps h and 2h combined
/// by Richardson extrapolation, with Simpson's 3/8 on the last three
/// intervals when n is odd.
fn convolution_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    if n == 1 {
        return trapezoid(1, h);
    }
    let (even, tail) = if n % 2 == 0 { (n, 0) } else { (n - 3, 3) };
    if even > 0 {
        let fine = trapezoid(even, h);
        let coarse = trapezoid(even / 2, 2.0 * h);
        for i in 0..=even {
            w[i] += 4.0 / 3.0 * fine[i];
        }
        for i in 0..=even / 2 {
            w[2 * i] -= coarse[i] / 3.0;
        }
    }
    if tail == 3 {
        for (i, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[even + i] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

/// ∫₀ᵗ g(r) ψ(t−r) dr at t = times.last() from a uniformly sampled ψ
/// trajectory (one field per sample, starting at t = 0).
pub fn direct_convolution(
    times: &[f64],
    psi_history: &[Vec<f64>],
    kernel: &MemoryKernel,
) -> Result<OracleResult<Vec<f64>>> {
    if times.len() != psi_history.len() {
        return Err(Error::InvalidParams("times and trajectory differ in length".into()));
    }
    let dt = check_uniform(times)?;
    let n = times.len() - 1;
    let len = psi_history[0].len();
    let w = convolution_weights(n, dt);
    let mut out = vec![0.0; len];
    for (i, wi) in w.iter().enumerate() {
        // age r = i·dt pairs with sample n − i
        let gw = wi * kernel.g(i as f64 * dt);
        for (o, p) in out.iter_mut().zip(&psi_history[n - i]) {
            *o += gw * p;
        }
    }
    let scale = out.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(OracleResult {
        value: out,
        error_bound: dt.powi(4) * times[n] * scale.max(1.0),
        residuals: vec![],
        fallback: false,
    })
}

/// ∫₀ᵗ g(r) Δψ(t−r) dr on a periodic [0, L)^dim grid with N points per axis,
/// using the finite-difference Laplacian.
pub fn direct_convolution_memory(
    times: &[f64],
    psi_history: &[Vec<f64>],
    kernel: &MemoryKernel,
    dim: usize,
    n: usize,
    l: f64,
) -> Result<OracleResult<Vec<f64>>> {
    let conv = direct_convolution(times, psi_history, kernel)?;
    let value = fd_laplacian(&conv.value, dim, n, l)?;
    let h = l / n as f64;
    Ok(OracleResult {
        error_bound: conv.error_bound / (h * h),
        value,
        residuals: vec![],
        fallback: false,
    })
}

/// Eighth-order central stencils for the first and second derivative.
const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
const D2: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

fn check_field(f: &[f64], dim: usize, n: usize, l: f64) -> Result<()> {
    if !(1..=3).contains(&dim) || n < 9 || f.len() != n.pow(dim as u32) || !(l > 0.0) {
        return Err(Error::InvalidParams(format!(
            "field of length {} does not match a {dim}D grid with N = {n}",
            f.len()
        )));
    }
    Ok(())
}

/// Periodic shift along `axis` (row-major, last axis fastest).
fn neighbour(idx: usize, axis: usize, dim: usize, n: usize, off: i64) -> usize {
    let stride = n.pow((dim - 1 - axis) as u32);
    let coord = (idx / stride) % n;
    let shifted = (coord as i64 + off).rem_euclid(n as i64) as usize;
    idx - coord * stride + shifted * stride
}

/// ∂f/∂x_axis on a periodic grid, eighth order.
pub fn fd_derivative(f: &[f64], dim: usize, n: usize, l: f64, axis: usize) -> Result<Vec<f64>> {
    check_field(f, dim, n, l)?;
    if axis >= dim {
        return Err(Error::Index(format!("axis {axis} out of range for {dim}D")));
    }
    let h = l / n as f64;
    Ok((0..f.len())
        .map(|i| {
            D1.iter()
                .enumerate()
                .map(|(k, c)| {
                    let o = k as i64 + 1;
                    c * (f[neighbour(i, axis, dim, n, o)] - f[neighbour(i, axis, dim, n, -o)])
                })
                .sum::<f64>()
                / h
        })
        .collect())
}

/// Δf on a periodic grid, eighth order.
pub fn fd_laplacian(f: &[f64], dim: usize, n: usize, l: f64) -> Result<Vec<f64>> {
    check_field(f, dim, n, l)?;
    let h2 = (l / n as f64).powi(2);
    Ok((0..f.len())
        .map(|i| {
            (0..dim)
                .map(|a| {
                    D2[0] * f[i]
                        + (1..5)
                            .map(|k| {
                                let o = k as i64;
                                D2[k] * (f[neighbour(i, a, dim, n, o)] + f[neighbour(i, a, dim, n, -o)])
                            })
                            .sum::<f64>()
                })
                .sum::<f64>()
                / h2
        })
        .collect())
}
