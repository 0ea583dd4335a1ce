//! Per-frequency linear analysis: generator assembly, spectra, the
//! Routh–Hurwitz test without memory, abscissa sweeps and exact propagation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::medium_kernel::{KernelConstants, MediumParams, MemoryKernel};
use crate::numerics::{fd_weights, fit_line};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Representation {
    /// 4×4 system over (ψ̂, v̂, ŵ, ẑ); exponential kernels only.
    Reduced,
    /// (3+N_r)×(3+N_r) system with η̂ sampled at r_j = j·r_max/N_r, j = 1..N_r.
    HistoryGrid { n_r: usize, r_max: f64 },
}

#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub rho_sq: f64,
    pub generator: DMatrix<f64>,
    pub params: MediumParams,
    pub kernel: MemoryKernel,
    pub representation: Representation,
}

/// Generator of the reduced system at |ξ|² = `rho_sq`.
pub fn reduced_generator(p: &MediumParams, kc: &KernelConstants, rho_sq: f64) -> DMatrix<f64> {
    let tau = p.tau;
    #[rustfmt::skip]
    let g = DMatrix::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        -kc.cg2 * rho_sq / tau, -p.b * rho_sq / tau, -1.0 / tau, -rho_sq / tau,
        0.0, kc.big_g, 0.0, -kc.mu,
    ]);
    g
}

/// det(λI − A) of the reduced generator, highest degree first:
/// λ⁴ + (1+τμ)/τ λ³ + (μ+bρ²)/τ λ² + ρ²(bμ+c²)/τ λ + μc_g²ρ²/τ.
pub fn reduced_char_poly(p: &MediumParams, kc: &KernelConstants, rho_sq: f64) -> [f64; 5] {
    let (tau, mu, b, c2) = (p.tau, kc.mu, p.b, p.c * p.c);
    [
        1.0,
        (1.0 + tau * mu) / tau,
        (mu + b * rho_sq) / tau,
        rho_sq * (b * mu + c2) / tau,
        mu * kc.cg2 * rho_sq / tau,
    ]
}

/// Quadrature weights q_j (j = 1..N_r) with ∫₀^∞ g η dr ≈ Σ q_j η_j on the
/// uniform age grid, η_0 = 0: trapezoid with fourth-order Gregory end
/// corrections plus the tail ∫_{r_max}^∞ g · η_{N_r}.
pub fn history_grid_weights(kernel: &MemoryKernel, n_r: usize, r_max: f64) -> Vec<f64> {
    let h = r_max / n_r as f64;
    let mut w = vec![h; n_r + 1];
    let corr = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    if n_r >= 6 {
        for (i, c) in corr.iter().enumerate() {
            w[i] = h * c;
            w[n_r - i] = h * c;
        }
    } else {
        w[0] = 0.5 * h;
        w[n_r] = 0.5 * h;
    }
    let mut q: Vec<f64> = (0..=n_r).map(|j| w[j] * kernel.g(j as f64 * h)).collect();
    q[n_r] += kernel.tail_integral(r_max);
    q.remove(0);
    q
}

/// Transport operator D with (Dη)_j ≈ ∂_r η at r_j, j = 1..N_r, using
/// fourth-order upwind-biased stencils and η_0 = 0.
pub fn history_grid_transport(n_r: usize, r_max: f64) -> DMatrix<f64> {
    let h = r_max / n_r as f64;
    let interior: [i64; 5] = [-3, -2, -1, 0, 1];
    let first: [i64; 5] = [-1, 0, 1, 2, 3];
    let last: [i64; 5] = [-4, -3, -2, -1, 0];
    let n = n_r as i64;
    let mut d = DMatrix::<f64>::zeros(n_r, n_r);
    for j in 1..=n {
        let base: &[i64] = if j == 1 {
            &first
        } else if j == n {
            &last
        } else {
            &interior
        };
        let mut offs: Vec<i64> = base.to_vec();
        let lo = j + offs.iter().min().unwrap();
        if lo < 0 {
            offs.iter_mut().for_each(|o| *o -= lo);
        }
        let hi = j + offs.iter().max().unwrap();
        if hi > n {
            offs.iter_mut().for_each(|o| *o -= hi - n);
        }
        let w = fd_weights(&offs);
        for (o, c) in offs.iter().zip(w) {
            let k = j + o;
            if k >= 1 {
                d[((j - 1) as usize, (k - 1) as usize)] += c / h;
            }
        }
    }
    d
}

pub fn assemble_mode_system(
    params: &MediumParams,
    kernel: &MemoryKernel,
    rho_sq: f64,
    representation: Representation,
) -> Result<ModeSystem> {
    if !(rho_sq >= 0.0 && rho_sq.is_finite()) {
        return Err(Error::InvalidParams(format!("rho_sq must be ≥ 0, got {rho_sq}")));
    }
    let kc = KernelConstants::new(kernel, params)?;
    let generator = match representation {
        Representation::Reduced => {
            if !kernel.is_exponential() {
                return Err(Error::UnsupportedRepresentation(
                    "reduced 4×4 system requires an exponential kernel".into(),
                ));
            }
            reduced_generator(params, &kc, rho_sq)
        }
        Representation::HistoryGrid { n_r, r_max } => {
            if n_r < 8 || !(r_max > 0.0) {
                return Err(Error::Config("history grid needs n_r ≥ 8 and r_max > 0".into()));
            }
            let tau = params.tau;
            let n = 3 + n_r;
            let mut m = DMatrix::<f64>::zeros(n, n);
            m[(0, 1)] = 1.0;
            m[(1, 2)] = 1.0;
            m[(2, 0)] = -kc.cg2 * rho_sq / tau;
            m[(2, 1)] = -params.b * rho_sq / tau;
            m[(2, 2)] = -1.0 / tau;
            let q = history_grid_weights(kernel, n_r, r_max);
            for (j, qj) in q.iter().enumerate() {
                m[(2, 3 + j)] = -rho_sq / tau * qj;
            }
            let d = history_grid_transport(n_r, r_max);
            for i in 0..n_r {
                m[(3 + i, 1)] = 1.0;
                for j in 0..n_r {
                    m[(3 + i, 3 + j)] = -d[(i, j)];
                }
            }
            m
        }
    };
    Ok(ModeSystem {
        rho_sq,
        generator,
        params: *params,
        kernel: kernel.clone(),
        representation,
    })
}

impl ModeSystem {
    /// Eigenvalues sorted by descending real part. The reduced system's
    /// values are Newton-polished on its characteristic quartic.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let mut ev = linalg::eigenvalues(&self.generator)?;
        if self.representation == Representation::Reduced {
            let poly = self.char_poly();
            linalg::polish_roots(&poly, &mut ev);
        }
        linalg::sort_by_real_desc(&mut ev);
        Ok(ev)
    }

    /// Monic characteristic polynomial; closed form for the reduced system.
    pub fn char_poly(&self) -> Vec<f64> {
        match self.representation {
            Representation::Reduced => {
                let kc = KernelConstants::new(&self.kernel, &self.params)
                    .expect("validated at assembly");
                reduced_char_poly(&self.params, &kc, self.rho_sq).to_vec()
            }
            _ => linalg::char_poly(&self.generator),
        }
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    /// Initial mode state for data (ψ̂₀, ψ̂₁, ψ̂₂): ẑ(0) = Gψ̂₀ (reduced) or
    /// η̂_j(0) = ψ̂₀ (history grid).
    pub fn initial_state(&self, psi0: f64, psi1: f64, psi2: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        x[0] = psi0;
        x[1] = psi1;
        x[2] = psi2;
        match self.representation {
            Representation::Reduced => {
                let g = self.params.c * self.params.c
                    - KernelConstants::new(&self.kernel, &self.params).unwrap().cg2;
                x[3] = g * psi0;
            }
            Representation::HistoryGrid { .. } => {
                for i in 3..self.dim() {
                    x[i] = psi0;
                }
            }
        }
        x
    }
}

/// exp(t·A) of the mode generator.
pub fn propagator(system: &ModeSystem, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t must be ≥ 0, got {t}")));
    }
    if t == 0.0 {
        let n = system.dim();
        return Ok(DMatrix::identity(n, n));
    }
    linalg::expm(&(&system.generator * t))
}

/// exp(t·A)·state0.
pub fn propagate_mode(system: &ModeSystem, state0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if state0.len() != system.dim() {
        return Err(Error::InvalidParams("state dimension mismatch".into()));
    }
    if t == 0.0 {
        return Ok(state0.clone());
    }
    let out = propagator(system, t)? * state0;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericOverflow("propagated state not finite".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    AsymptoticallyStable,
    Marginal,
    Unstable,
}

/// Coefficients of τλ³ + λ² + bρ²λ + c²ρ² (highest degree first).
pub fn no_memory_cubic(params: &MediumParams, rho_sq: f64) -> [f64; 4] {
    [params.tau, 1.0, params.b * rho_sq, params.c * params.c * rho_sq]
}

/// Routh–Hurwitz test of the memory-free cubic. All coefficients are
/// positive for ρ > 0, so the sign of the Hurwitz determinant
/// a₂a₁ − a₃a₀ = ρ²(b − τc²) decides.
pub fn routh_hurwitz_no_memory(params: &MediumParams, rho_sq: f64) -> Result<Stability> {
    if !(rho_sq > 0.0) {
        return Err(Error::DegenerateMode("routh_hurwitz needs rho_sq > 0".into()));
    }
    let [a3, a2, a1, a0] = no_memory_cubic(params, rho_sq);
    let h2 = a2 * a1 - a3 * a0;
    let scale = a3 * a0;
    Ok(if h2.abs() <= crate::medium_kernel::CRITICAL_TOL * scale {
        Stability::Marginal
    } else if h2 > 0.0 {
        Stability::AsymptoticallyStable
    } else {
        Stability::Unstable
    })
}

/// Roots of the memory-free cubic from its balanced companion matrix,
/// Newton-polished.
pub fn no_memory_roots(params: &MediumParams, rho_sq: f64) -> Result<Vec<Complex64>> {
    let c = no_memory_cubic(params, rho_sq);
    let monic: Vec<f64> = c.iter().map(|x| x / c[0]).collect();
    let mut comp = DMatrix::<f64>::zeros(3, 3);
    for j in 0..3 {
        comp[(0, j)] = -monic[j + 1];
    }
    comp[(1, 0)] = 1.0;
    comp[(2, 1)] = 1.0;
    let mut r = linalg::eigenvalues(&comp)?;
    linalg::polish_roots(&monic, &mut r);
    linalg::sort_by_real_desc(&mut r);
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSample {
    pub rho: f64,
    pub eigenvalues: Vec<Complex64>,
    pub abscissa: f64,
    /// False when the eigen solver failed; the sample is then not used in fits.
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbscissaCurve {
    pub samples: Vec<SpectrumSample>,
    /// λ_low in abscissa ≈ −λ_low·ρ² over the lowest decade.
    pub low_coef: f64,
    /// λ_high in abscissa ≈ −λ_high/ρ² over the highest decade.
    pub high_coef: f64,
    /// Log-log slope of −abscissa over the lowest decade.
    pub low_slope: f64,
    /// Log-log slope of −abscissa over the highest decade.
    pub high_slope: f64,
    /// Mean abscissa over the highest decade.
    pub high_limit: f64,
}

/// Spectral abscissa over `rho_grid` with the reduced representation.
pub fn abscissa_sweep(
    params: &MediumParams,
    kernel: &MemoryKernel,
    rho_grid: &[f64],
) -> Result<AbscissaCurve> {
    if rho_grid.len() < 20 {
        return Err(Error::Config("abscissa sweep needs at least 20 points".into()));
    }
    if rho_grid.windows(2).any(|w| w[1] <= w[0]) || rho_grid[0] <= 0.0 {
        return Err(Error::Config("rho grid must be positive and increasing".into()));
    }
    let (lo, hi) = (rho_grid[0], *rho_grid.last().unwrap());
    if hi / lo < 1e4 * (1.0 - 1e-12) {
        return Err(Error::Config("rho grid must span at least 4 decades".into()));
    }
    KernelConstants::new(kernel, params)?;
    let samples: Vec<SpectrumSample> = rho_grid
        .par_iter()
        .map(|&rho| {
            let res = assemble_mode_system(params, kernel, rho * rho, Representation::Reduced)
                .and_then(|s| s.eigenvalues());
            match res {
                Ok(ev) => SpectrumSample {
                    rho,
                    abscissa: ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
                    eigenvalues: ev,
                    converged: true,
                },
                Err(_) => SpectrumSample {
                    rho,
                    eigenvalues: vec![],
                    abscissa: f64::NAN,
                    converged: false,
                },
            }
        })
        .collect();
    let ok: Vec<&SpectrumSample> = samples.iter().filter(|s| s.converged).collect();
    let low: Vec<&&SpectrumSample> = ok.iter().filter(|s| s.rho <= lo * 10.0 * (1.0 + 1e-12)).collect();
    let high: Vec<&&SpectrumSample> = ok.iter().filter(|s| s.rho >= hi / 10.0 * (1.0 - 1e-12)).collect();
    let coef = |set: &[&&SpectrumSample], p: i32| {
        let num: f64 = set.iter().map(|s| -s.abscissa * s.rho.powi(p)).sum();
        let den: f64 = set.iter().map(|s| s.rho.powi(2 * p)).sum();
        num / den
    };
    let slope = |set: &[&&SpectrumSample]| {
        let (x, y): (Vec<f64>, Vec<f64>) = set
            .iter()
            .filter(|s| s.abscissa < 0.0)
            .map(|s| (s.rho.ln(), (-s.abscissa).ln()))
            .unzip();
        if x.len() >= 2 {
            fit_line(&x, &y).slope
        } else {
            f64::NAN
        }
    };
    Ok(AbscissaCurve {
        low_coef: coef(&low, 2),
        high_coef: coef(&high, -2),
        low_slope: slope(&low),
        high_slope: slope(&high),
        high_limit: high.iter().map(|s| s.abscissa).sum::<f64>() / high.len() as f64,
        samples,
    })
}

impl AbscissaCurve {
    /// CSV with columns rho, re_lambda_1..4, im_lambda_1..4, abscissa
    /// (eigenvalues ordered by descending real part).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "rho,re_lambda_1,re_lambda_2,re_lambda_3,re_lambda_4,im_lambda_1,im_lambda_2,im_lambda_3,im_lambda_4,abscissa\n",
        );
        for smp in &self.samples {
            let mut row = vec![format!("{:.17e}", smp.rho)];
            for k in 0..4 {
                row.push(smp.eigenvalues.get(k).map_or("nan".into(), |z| format!("{:.17e}", z.re)));
            }
            for k in 0..4 {
                row.push(smp.eigenvalues.get(k).map_or("nan".into(), |z| format!("{:.17e}", z.im)));
            }
            row.push(format!("{:.17e}", smp.abscissa));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (MediumParams, MemoryKernel) {
        (
            MediumParams::critical(1.0, 1.0, 0.0).unwrap(),
            MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn closed_form_quartic_matches_faddeev_leverrier() {
        let (p, k) = setup();
        for r2 in [0.0, 0.3, 7.0, 1e4] {
            let s = assemble_mode_system(&p, &k, r2, Representation::Reduced).unwrap();
            let fl = linalg::char_poly(&s.generator);
            for (a, b) in fl.iter().zip(s.char_poly()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn transport_stencil_differentiates_cubics_exactly() {
        let d = history_grid_transport(32, 4.0);
        let h = 4.0 / 32.0;
        let f = |r: f64| r * r * r - 2.0 * r;
        let df = |r: f64| 3.0 * r * r - 2.0;
        let eta = DVector::from_iterator(32, (1..=32).map(|j| f(j as f64 * h)));
        let de = &d * &eta;
        for j in 0..32 {
            assert!((de[j] - df((j + 1) as f64 * h)).abs() < 1e-9);
        }
    }
}
