//! Dense linear algebra helpers: balancing, eigenvalues, characteristic
//! polynomials, Newton polishing and the Padé matrix exponential.

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DVector, DefaultAllocator, Dim, DimMin, OMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Parlett–Reinsch balancing by powers of two. Returns the balanced matrix
/// and the diagonal scaling d with balanced = D⁻¹·A·D.
pub fn balance(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![1.0; n];
    let radix = 2.0f64;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let mut rr = r;
            while cc < rr / radix {
                cc *= radix;
                rr /= radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix;
                rr *= radix;
                f /= radix;
            }
            if (cc + rr) < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}

/// Eigenvalues of a real square matrix via balancing and the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericOverflow("non-finite generator entry".into()));
    }
    let (b, _) = balance(a);
    let n = b.nrows();
    let schur = nalgebra::Schur::try_new(b, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::NoConvergence(format!("Schur iteration on {n}×{n} matrix")))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Coefficients of det(λI − A), highest degree first (monic), by
/// Faddeev–LeVerrier. Intended for small matrices.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    let mut c = 1.0;
    for k in 1..=n {
        m = a * &m + &id * c;
        let am = a * &m;
        c = -am.trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Horner evaluation of p and p′ (coefficients highest degree first).
pub fn poly_eval(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Σ|a_k||z|^k, the natural scale for residuals of p(z).
pub fn poly_scale(coeffs: &[f64], z: Complex64) -> f64 {
    let r = z.norm();
    coeffs.iter().fold(0.0, |acc, &c| acc * r + c.abs())
}

/// Newton refinement of approximate roots; a step is kept only when it
/// reduces |p|.
pub fn polish_roots(coeffs: &[f64], roots: &mut [Complex64]) {
    for z in roots.iter_mut() {
        let (mut p, _) = poly_eval(coeffs, *z);
        for _ in 0..8 {
            let (_, dp) = poly_eval(coeffs, *z);
            if dp.norm() == 0.0 {
                break;
            }
            let cand = *z - p / dp;
            let (pc, _) = poly_eval(coeffs, cand);
            if pc.norm() < p.norm() {
                *z = cand;
                p = pc;
            } else {
                break;
            }
        }
    }
}

/// Sorts eigenvalues by descending real part, then by imaginary part.
pub fn sort_by_real_desc(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

fn norm1<D: Dim>(a: &OMatrix<f64, D, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with Padé approximants
/// (degrees 3–13 chosen by the 1-norm).
pub fn expm<D>(a: &OMatrix<f64, D, D>) -> Result<OMatrix<f64, D, D>>
where
    D: Dim + DimMin<D, Output = D>,
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericOverflow("non-finite matrix entry".into()));
    }
    let (nr, nc) = a.shape_generic();
    let id = OMatrix::<f64, D, D>::identity_generic(nr, nc);
    let nrm = norm1(a);
    let a2 = a * a;
    let (u, v, squarings) = if nrm <= THETA[0] {
        let (u, v) = pade_low(a, &a2, &id, &PADE3);
        (u, v, 0)
    } else if nrm <= THETA[1] {
        let (u, v) = pade_low(a, &a2, &id, &PADE5);
        (u, v, 0)
    } else if nrm <= THETA[2] {
        let (u, v) = pade_low(a, &a2, &id, &PADE7);
        (u, v, 0)
    } else if nrm <= THETA[3] {
        let (u, v) = pade_low(a, &a2, &id, &PADE9);
        (u, v, 0)
    } else {
        let s = ((nrm / THETA[4]).log2().ceil()).max(0.0) as i32;
        let scale = 0.5f64.powi(s);
        let a1 = a * scale;
        let a2 = &a1 * &a1;
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let b = &PADE13;
        let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
        let u = &a1 * (&a6 * &inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
        let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
        let v = &a6 * &inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
        (u, v, s)
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::NumericOverflow("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericOverflow("matrix exponential overflow".into()));
    }
    Ok(r)
}

fn pade_low<D>(
    a: &OMatrix<f64, D, D>,
    a2: &OMatrix<f64, D, D>,
    id: &OMatrix<f64, D, D>,
    b: &[f64],
) -> (OMatrix<f64, D, D>, OMatrix<f64, D, D>)
where
    D: Dim,
    DefaultAllocator: Allocator<D, D>,
{
    let m = b.len() - 1;
    let mut pw = id.clone();
    let mut u_in = id * b[1];
    let mut v = id * b[0];
    for k in 1..=m / 2 {
        pw = &pw * a2;
        if 2 * k + 1 <= m {
            u_in += &pw * b[2 * k + 1];
        }
        v += &pw * b[2 * k];
    }
    (a * u_in, v)
}

/// Complex eigen-decomposition of a small real matrix: eigenvalues with
/// right eigenvectors (unit 2-norm) from inverse iteration.
pub fn eigen_decomposition(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, Vec<DVector<Complex64>>)> {
    let mut vals = eigenvalues(a)?;
    let n = a.nrows();
    let poly = char_poly(a);
    if n <= 8 {
        polish_roots(&poly, &mut vals);
    }
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let scale = a.norm().max(1.0);
    let mut vecs = Vec::with_capacity(n);
    for &lam in &vals {
        let shift = lam + Complex64::new(scale * 1e-13, scale * 1e-13);
        let m = &ac - DMatrix::<Complex64>::identity(n, n) * shift;
        let lu = m.lu();
        let mut x = DVector::<Complex64>::from_element(n, Complex64::new(1.0, 0.3));
        for _ in 0..3 {
            x = lu
                .solve(&x)
                .ok_or_else(|| Error::NoConvergence("inverse iteration".into()))?;
            let nx = x.norm();
            x /= Complex64::new(nx, 0.0);
        }
        vecs.push(x);
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    #[test]
    fn expm_of_rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 3.0, 0.0]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - 3f64.cos()).abs() < 1e-14);
        assert!((e[(1, 0)] - 3f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn expm_fixed_and_dynamic_agree() {
        let m = Matrix4::new(
            0.1, 1.0, 0.0, -2.0, 0.3, -1.0, 0.5, 0.0, 0.0, 2.0, -3.0, 1.0, 0.7, 0.0, 0.2, -0.4,
        );
        let d = DMatrix::from_iterator(4, 4, m.iter().copied());
        let e1 = expm(&m).unwrap();
        let e2 = expm(&d).unwrap();
        for (x, y) in e1.iter().zip(e2.iter()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn char_poly_of_companion() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, -1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let c = char_poly(&a);
        for (x, y) in c.iter().zip([1.0, 1.0, 1.0, 1.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
