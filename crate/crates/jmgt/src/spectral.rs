//! Periodic grids on [0, L)^n, n-dimensional FFTs with cached plans,
//! wavenumber tables and the 2/3 dealiasing rule.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Grid {
    /// Spatial dimension (1–3).
    pub dim: usize,
    /// Points per dimension.
    pub n: usize,
    /// Box length.
    pub l: f64,
    /// |ξ|² per mode, row-major over the full complex spectrum.
    pub rho_sq: Vec<f64>,
    /// Integer wavenumber triple per mode (unused axes are 0).
    pub kint: Vec<[i64; 3]>,
    dealias: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("l", &self.l)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub l: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, l: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("dimension must be 1..3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!("N must be a power of two ≥ 8, got {n}")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("box length must be positive, got {l}")));
        }
        let total = n.pow(dim as u32);
        let k0 = 2.0 * PI / l;
        let kmax = 2.0 / 3.0 * (PI * n as f64 / l);
        let mut rho_sq = Vec::with_capacity(total);
        let mut kint = Vec::with_capacity(total);
        let mut dealias = Vec::with_capacity(total);
        for idx in 0..total {
            let mut kk = [0i64; 3];
            let mut rem = idx;
            for a in (0..dim).rev() {
                let i = rem % n;
                rem /= n;
                kk[a] = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
            }
            let r2: f64 = kk.iter().map(|&k| (k0 * k as f64).powi(2)).sum();
            rho_sq.push(r2);
            dealias.push(kk.iter().all(|&k| (k0 * k as f64).abs() <= kmax * (1.0 + 1e-12)));
            kint.push(kk);
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            dim,
            n,
            l,
            rho_sq,
            kint,
            dealias,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            n: self.n,
            l: self.l,
        }
    }

    /// Number of grid points (= number of modes).
    pub fn len(&self) -> usize {
        self.rho_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho_sq.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Cell volume dx^n.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Coordinates of point `idx` (unused axes are 0).
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let mut rem = idx;
        for a in (0..self.dim).rev() {
            x[a] = (rem % self.n) as f64 * self.dx();
            rem /= self.n;
        }
        x
    }

    /// Wavenumber ξ_a of mode `idx`.
    pub fn xi(&self, idx: usize, axis: usize) -> f64 {
        2.0 * PI / self.l * self.kint[idx][axis] as f64
    }

    /// True when mode `idx` sits on the Nyquist plane of `axis`.
    pub fn is_nyquist(&self, idx: usize, axis: usize) -> bool {
        self.kint[idx][axis] == (self.n / 2) as i64
    }

    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias
    }

    pub fn apply_dealias(&self, hat: &mut [Complex64]) {
        for (h, &keep) in hat.iter_mut().zip(&self.dealias) {
            if !keep {
                *h = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let total = data.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let lines = total / n;
            let mut buf = vec![Complex64::new(0.0, 0.0); total];
            let block = stride * n;
            for line in 0..lines {
                let (outer, inner) = (line / stride, line % stride);
                let base = outer * block + inner;
                for i in 0..n {
                    buf[line * n + i] = data[base + i * stride];
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for line in 0..lines {
                let (outer, inner) = (line / stride, line % stride);
                let base = outer * block + inner;
                for i in 0..n {
                    data[base + i * stride] = buf[line * n + i];
                }
            }
        }
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        assert_eq!(field.len(), self.len());
        let mut d: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut d, &self.fwd);
        d
    }

    /// Inverse transform (normalized by N^n), real part.
    pub fn inverse(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut d = hat.to_vec();
        self.transform(&mut d, &self.inv);
        let s = 1.0 / self.len() as f64;
        d.iter().map(|z| z.re * s).collect()
    }

    /// Spectral derivative ∂_axis, with the Nyquist coefficient zeroed.
    pub fn derivative(&self, hat: &[Complex64], axis: usize) -> Vec<Complex64> {
        hat.iter()
            .enumerate()
            .map(|(i, &h)| {
                if self.is_nyquist(i, axis) {
                    Complex64::new(0.0, 0.0)
                } else {
                    h * Complex64::new(0.0, self.xi(i, axis))
                }
            })
            .collect()
    }

    /// Σ weight(ρ²)·|f̂|² scaled so that weight ≡ 1 gives ‖f‖²_{L²}.
    pub fn weighted_norm_sq<F: Fn(f64) -> f64>(&self, hat: &[Complex64], weight: F) -> f64 {
        let s = self.l.powi(self.dim as i32) / (self.len() as f64).powi(2);
        hat.iter()
            .zip(&self.rho_sq)
            .map(|(h, &r2)| weight(r2) * h.norm_sqr())
            .sum::<f64>()
            * s
    }

    /// Σ weight(ρ²)·Re(f̂ ĝ*) scaled like [`Grid::weighted_norm_sq`].
    pub fn weighted_inner<F: Fn(f64) -> f64>(&self, f: &[Complex64], g: &[Complex64], weight: F) -> f64 {
        let s = self.l.powi(self.dim as i32) / (self.len() as f64).powi(2);
        f.iter()
            .zip(g)
            .zip(&self.rho_sq)
            .map(|((a, b), &r2)| weight(r2) * (a * b.conj()).re)
            .sum::<f64>()
            * s
    }

    /// Unique |ξ|² values (as integer shells) and the shell index of each mode.
    pub fn shells(&self) -> (Vec<f64>, Vec<usize>) {
        let k0 = (2.0 * PI / self.l).powi(2);
        let key: Vec<i64> = self.kint.iter().map(|k| k.iter().map(|x| x * x).sum()).collect();
        let mut uniq: Vec<i64> = key.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let idx = key.iter().map(|k| uniq.binary_search(k).unwrap()).collect();
        (uniq.iter().map(|&k| k as f64 * k0).collect(), idx)
    }
}

/// L² norm of a real-space field.
pub fn l2_norm(grid: &Grid, f: &[f64]) -> f64 {
    (f.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
