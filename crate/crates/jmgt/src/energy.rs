//! Sobolev-type norms, tailored energies, auxiliary functionals, the
//! Lyapunov functional and the time-weighted norms, all evaluated
//! spectrally on torus snapshots.
//!
//! Per mode, with a = ψ+τv and b = v+τw, every quantity is a weighted sum of
//! |â|², |b̂|², |v̂|², |ŵ|², Re(ẑ v̂*) and the age moments ∫ω(r)|η̂(r)|²dr for
//! ω ∈ {g, −g′, g″}. The H^s-labelled terms use the ladder weight
//! L_s(ρ) = Σ_{κ<s} ρ^{2κ}(1+ρ²) so that the κ-sums of the per-order energies
//! reproduce the full norms exactly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history_state::{AgeQuadrature, HistoryField, Memory, StateField};
use crate::medium_kernel::{KernelConstants, MediumParams, MemoryKernel};
use crate::numerics::adaptive_quad;
use crate::solver::{nonlinear_hat, NonlinearityForm, Trajectory};
use crate::spectral::{sup_norm, Grid};

type C = Complex64;

/// Age slices handled per parallel task when forming η moments.
const SLICE_CHUNK: usize = 16;

/// Fraction of a norm allowed outside the dealiased band.
const RESOLUTION_FRACTION: f64 = 1e-3;

/// Which F₃ enters 𝓕^(κ) for κ ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F3Order {
    /// F₃^(0), as printed.
    #[default]
    Literal,
    /// F₃^(κ).
    Matched,
}

/// Shared inputs of every energy evaluation.
#[derive(Debug, Clone)]
pub struct EnergyContext<'a> {
    pub grid: &'a Grid,
    pub params: MediumParams,
    pub kernel: &'a MemoryKernel,
    pub kc: KernelConstants,
    /// Nonlinearity entering the R functionals; `None` for linear runs.
    pub nonlinearity: Option<NonlinearityForm>,
    pub dealias: bool,
    pub lyapunov: Option<LyapunovCoeffs>,
    pub f3_order: F3Order,
    /// Sign flip on F₃ and F₄ (fault injection for the verifier).
    pub f3_sign: f64,
}

impl<'a> EnergyContext<'a> {
    pub fn new(grid: &'a Grid, params: &MediumParams, kernel: &'a MemoryKernel) -> Result<Self> {
        Ok(EnergyContext {
            grid,
            params: *params,
            kernel,
            kc: KernelConstants::new(kernel, params)?,
            nonlinearity: None,
            dealias: true,
            lyapunov: None,
            f3_order: F3Order::Literal,
            f3_sign: 1.0,
        })
    }

    pub fn with_nonlinearity(mut self, form: NonlinearityForm, dealias: bool) -> Self {
        self.nonlinearity = Some(form);
        self.dealias = dealias;
        self
    }

    pub fn with_lyapunov(mut self, coeffs: LyapunovCoeffs) -> Self {
        self.lyapunov = Some(coeffs);
        self
    }
}

/// Per-mode age moments ∫ω|η̂|² in unnormalized FFT units.
#[derive(Debug, Clone)]
pub struct EtaMoments {
    pub g: Vec<f64>,
    pub neg_dg: Vec<f64>,
    pub d2g: Vec<f64>,
}

/// Quadrature against −g′ on the same age grid.
pub fn neg_dg_quadrature(kernel: &MemoryKernel, n_r: usize, r_max: f64) -> Result<AgeQuadrature> {
    AgeQuadrature::with_weight(|r| kernel.neg_dg(r), kernel.g(r_max), n_r, r_max)
}

/// Quadrature against g″ on the same age grid.
pub fn d2g_quadrature(kernel: &MemoryKernel, n_r: usize, r_max: f64) -> Result<AgeQuadrature> {
    AgeQuadrature::with_weight(|r| kernel.d2g(r), kernel.neg_dg(r_max), n_r, r_max)
}

/// ∫ω(r)|η̂(ξ, r)|²dr for ω = g, −g′, g″, one FFT per age slice.
pub fn eta_moments(grid: &Grid, hist: &HistoryField, kernel: &MemoryKernel) -> Result<EtaMoments> {
    let n_r = hist.n_r();
    let r_max = hist.quad.r_max();
    let rules = [
        hist.quad.rule(hist.jump),
        neg_dg_quadrature(kernel, n_r, r_max)?.rule(hist.jump),
        d2g_quadrature(kernel, n_r, r_max)?.rule(hist.jump),
    ];
    let m = grid.len();
    let chunks: Vec<usize> = (0..=n_r).step_by(SLICE_CHUNK).collect();
    let partial: Vec<[Vec<f64>; 3]> = chunks
        .par_iter()
        .map(|&lo| {
            let mut acc = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
            for j in lo..(lo + SLICE_CHUNK).min(n_r + 1) {
                let cs = [rules[0].coeffs[j], rules[1].coeffs[j], rules[2].coeffs[j]];
                if cs.iter().all(|c| *c == 0.0) {
                    continue;
                }
                let e = grid.forward(hist.slice(j));
                for (q, c) in cs.iter().enumerate() {
                    acc[q].iter_mut().zip(&e).for_each(|(a, x)| *a += c * x.norm_sqr());
                }
            }
            acc
        })
        .collect();
    let mut out = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for p in &partial {
        for q in 0..3 {
            out[q].iter_mut().zip(&p[q]).for_each(|(o, x)| *o += x);
        }
    }
    if hist.jump <= n_r {
        let e = grid.forward(hist.slice(hist.jump));
        let p0 = grid.forward(&hist.psi0);
        for q in 0..3 {
            let r = rules[q].right;
            for i in 0..m {
                out[q][i] += r * ((e[i] + p0[i]).norm_sqr() - e[i].norm_sqr());
            }
        }
    }
    let [g, neg_dg, d2g] = out;
    Ok(EtaMoments { g, neg_dg, d2g })
}

/// Spectral view of one state: transforms, per-mode powers and age moments.
#[derive(Debug, Clone)]
pub struct Spectra {
    pub rho_sq: Vec<f64>,
    pub psi: Vec<C>,
    pub v: Vec<C>,
    pub w: Vec<C>,
    /// ẑ = ∫g η̂ dr.
    pub z: Vec<C>,
    pub a: Vec<C>,
    pub bb: Vec<C>,
    pub eta: Option<EtaMoments>,
    /// F̂ (the unscaled nonlinearity, before division by τ), if nonlinear.
    pub f: Option<Vec<C>>,
    dealias: Vec<bool>,
    /// Parseval factor Lⁿ/N^{2n}.
    scale: f64,
    tau: f64,
    cg2: f64,
    delta_g: f64,
}

pub fn spectra(ctx: &EnergyContext<'_>, state: &StateField) -> Result<Spectra> {
    let g = ctx.grid;
    let tau = ctx.params.tau;
    let psi = g.forward(&state.psi);
    let v = g.forward(&state.v);
    let w = g.forward(&state.w);
    let (z, eta) = match &state.memory {
        Memory::ReducedZ { z } => (g.forward(z), None),
        Memory::History(h) => (
            g.forward(&h.apply_rule(&h.quad.rule(h.jump))),
            Some(eta_moments(g, h, ctx.kernel)?),
        ),
    };
    let a: Vec<C> = psi.iter().zip(&v).map(|(p, q)| p + q * tau).collect();
    let bb: Vec<C> = v.iter().zip(&w).map(|(p, q)| p + q * tau).collect();
    let f = match ctx.nonlinearity {
        Some(form) => {
            let h = nonlinear_hat(g, &ctx.params, form, ctx.dealias, &psi, &v, &w)?;
            Some(h.into_iter().map(|x| x * tau).collect())
        }
        None => None,
    };
    Ok(Spectra {
        rho_sq: g.rho_sq.clone(),
        psi,
        v,
        w,
        z,
        a,
        bb,
        eta,
        f,
        dealias: g.dealias_mask().to_vec(),
        scale: g.l.powi(g.dim as i32) / (g.len() as f64).powi(2),
        tau,
        cg2: ctx.kc.cg2,
        delta_g: ctx.params.b - tau * ctx.kc.cg2,
    })
}

/// Per-mode weights of a quadratic form in the state.
#[derive(Debug, Clone, Copy, Default)]
struct Weights {
    a: f64,
    bb: f64,
    v: f64,
    w: f64,
    /// On ∫(−g′)|η̂|².
    eta_ng: f64,
}

fn s_sum(r2: f64, m: i64) -> f64 {
    (0..=m.max(-1)).map(|j| r2.powi(j as i32)).sum()
}

fn ladder(r2: f64, s: usize) -> f64 {
    (0..s).map(|k| r2.powi(k as i32) * (1.0 + r2)).sum()
}

impl Spectra {
    fn sum<F: Fn(usize) -> f64 + Sync>(&self, f: F) -> f64 {
        (0..self.rho_sq.len()).map(f).sum::<f64>() * self.scale
    }

    fn eta_or_nan(&self) -> Option<&EtaMoments> {
        self.eta.as_ref()
    }

    fn form(&self, wf: impl Fn(f64) -> Weights + Sync) -> f64 {
        let eta = self.eta_or_nan();
        self.sum(|i| {
            let w = wf(self.rho_sq[i]);
            let mut x = w.a * self.a[i].norm_sqr()
                + w.bb * self.bb[i].norm_sqr()
                + w.v * self.v[i].norm_sqr()
                + w.w * self.w[i].norm_sqr();
            if w.eta_ng != 0.0 {
                x += w.eta_ng * eta.map_or(f64::NAN, |e| e.neg_dg[i]);
            }
            x
        })
    }

    /// Σρ^{2p}·moment for ω ∈ {g, −g′, g″} (NaN without a history).
    pub fn eta_norm_sq(&self, p: i32, which: AgeWeight) -> f64 {
        match &self.eta {
            None => f64::NAN,
            Some(e) => {
                let m = match which {
                    AgeWeight::G => &e.g,
                    AgeWeight::NegDg => &e.neg_dg,
                    AgeWeight::D2g => &e.d2g,
                };
                self.sum(|i| self.rho_sq[i].powi(p) * m[i])
            }
        }
    }

    /// Σρ^{2p}|f̂|².
    pub fn field_norm_sq(&self, f: &[C], p: i32) -> f64 {
        self.sum(|i| self.rho_sq[i].powi(p) * f[i].norm_sqr())
    }

    fn cross(&self, f: &[C], g: &[C], p: i32) -> f64 {
        self.sum(|i| self.rho_sq[i].powi(p) * (f[i] * g[i].conj()).re)
    }

    fn weights_e(kappa: usize) -> impl Fn(f64) -> Weights {
        let k = kappa as i32;
        move |r2| {
            let hi = r2.powi(k + 1) + r2.powi(k + 2) * (1.0 + r2);
            Weights {
                a: hi,
                bb: r2.powi(k) + r2.powi(k + 1) * (1.0 + r2),
                v: hi,
                w: r2.powi(k),
                eta_ng: hi,
            }
        }
    }

    fn weights_d(kappa: usize) -> impl Fn(f64) -> Weights {
        let k = kappa as i32;
        move |r2| Weights {
            a: r2.powi(k + 2),
            bb: r2.powi(k + 1),
            v: r2.powi(k + 1) + r2.powi(k + 2),
            w: r2.powi(k),
            eta_ng: r2.powi(k + 1) * (1.0 + r2 + r2 * r2) + r2.powi(k + 2) * (1.0 + r2),
        }
    }

    /// 𝐄^(κ).
    pub fn e_bold(&self, kappa: usize) -> f64 {
        self.form(Self::weights_e(kappa))
    }

    /// 𝐃^(κ).
    pub fn d_bold(&self, kappa: usize) -> f64 {
        self.form(Self::weights_d(kappa))
    }

    /// |||∇^shift Ψ|||²_{H^s}.
    pub fn triple_norm_sq(&self, s: usize, shift: usize) -> f64 {
        let sh = shift as i32;
        self.form(move |r2| {
            let p = r2.powi(sh);
            let low = s_sum(r2, s as i64 - 1);
            let lad = ladder(r2, s);
            Weights {
                a: p * (r2 * low + r2 * r2 * lad),
                bb: p * (low + r2 * lad),
                v: p * (r2 * low + r2 * r2 * lad),
                w: p * low,
                eta_ng: p * (r2 * low + r2 * r2 * lad),
            }
        })
    }

    /// |∇^shift Ψ|²_{H^s}.
    pub fn seminorm_sq(&self, s: usize, shift: usize) -> f64 {
        let sh = shift as i32;
        self.form(move |r2| {
            let p = r2.powi(sh);
            let low = s_sum(r2, s as i64 - 1);
            let lad = ladder(r2, s);
            Weights {
                a: p * r2 * r2 * low,
                bb: p * r2 * low,
                v: p * (r2 + r2 * r2) * low,
                w: p * low,
                eta_ng: p * (r2 * low + 2.0 * r2 * r2 * lad),
            }
        })
    }

    /// ‖∇ʲU‖² with U = (v+τw, ∇(ψ+τv), ∇v).
    pub fn u_norm_sq(&self, j: usize) -> f64 {
        let j = j as i32;
        self.form(move |r2| Weights {
            a: r2.powi(j + 1),
            bb: r2.powi(j),
            v: r2.powi(j + 1),
            ..Default::default()
        })
    }

    /// ‖∇ʲΨ‖²_H.
    pub fn h_norm_sq(&self, j: usize) -> f64 {
        let j = j as i32;
        self.form(move |r2| Weights {
            a: r2.powi(j + 1),
            bb: r2.powi(j),
            v: r2.powi(j + 1),
            eta_ng: r2.powi(j + 1),
            ..Default::default()
        })
    }

    /// Fraction of |||Ψ|||²_{H^s} carried by modes outside the dealiased band.
    pub fn unresolved_fraction(&self, s: usize) -> f64 {
        let full = self.triple_norm_sq(s, 0);
        let mut masked = self.clone();
        for i in 0..masked.rho_sq.len() {
            if self.dealias[i] {
                masked.a[i] = C::new(0.0, 0.0);
                masked.bb[i] = C::new(0.0, 0.0);
                masked.v[i] = C::new(0.0, 0.0);
                masked.w[i] = C::new(0.0, 0.0);
                if let Some(e) = &mut masked.eta {
                    e.neg_dg[i] = 0.0;
                }
            }
        }
        let out = masked.triple_norm_sq(s, 0);
        if full > 0.0 {
            out / full
        } else {
            0.0
        }
    }

    /// E₁^(κ).
    pub fn e1(&self, kappa: usize) -> f64 {
        let k = kappa as i32;
        0.5 * (self.cg2 * self.field_norm_sq(&self.a, k + 1)
            + self.tau * self.delta_g * self.field_norm_sq(&self.v, k + 1)
            + self.field_norm_sq(&self.bb, k)
            + self.tau * self.eta_norm_sq(k + 1, AgeWeight::NegDg)
            + self.eta_norm_sq(k + 1, AgeWeight::G)
            + 2.0 * self.tau * self.cross(&self.z, &self.v, k + 1))
    }

    /// E₂^(κ).
    pub fn e2(&self, kappa: usize) -> f64 {
        let k = kappa as i32;
        0.5 * (self.cg2 * self.field_norm_sq(&self.a, k + 2)
            + self.tau * self.delta_g * self.field_norm_sq(&self.v, k + 2)
            + self.field_norm_sq(&self.bb, k + 1)
            + self.tau * self.eta_norm_sq(k + 2, AgeWeight::NegDg)
            + self.eta_norm_sq(k + 2, AgeWeight::G)
            + 2.0 * self.tau * self.cross(&self.z, &self.v, k + 2))
    }

    pub fn f1(&self, kappa: usize) -> f64 {
        self.cross(&self.a, &self.bb, kappa as i32 + 1)
    }

    pub fn f2(&self, kappa: usize) -> f64 {
        -self.tau * self.cross(&self.v, &self.bb, kappa as i32 + 1)
    }

    pub fn f3(&self, kappa: usize) -> f64 {
        -self.tau * self.cross(&self.z, &self.v, kappa as i32 + 1)
    }

    pub fn f4(&self, kappa: usize) -> f64 {
        -self.tau * self.cross(&self.z, &self.v, kappa as i32 + 2)
    }

    /// R^(1)_κ(∇^κφ) = Σρ^{2κ}Re(F̂φ̂*); zero for linear runs.
    pub fn r1(&self, kappa: usize, phi: &[C]) -> f64 {
        self.f.as_ref().map_or(0.0, |f| self.cross(f, phi, kappa as i32))
    }

    /// R^(2)_κ(∇^κφ) = Σρ^{2κ+2}Re(F̂φ̂*); zero for linear runs.
    pub fn r2(&self, kappa: usize, phi: &[C]) -> f64 {
        self.f.as_ref().map_or(0.0, |f| self.cross(f, phi, kappa as i32 + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeWeight {
    G,
    NegDg,
    D2g,
}

/// ⌊(2s−n)/4⌋.
pub fn s0_index(s: usize, n: usize) -> i64 {
    (2 * s as i64 - n as i64).div_euclid(4)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub s: usize,
    pub triple_norm_sq: f64,
    pub seminorm_sq: f64,
    /// 𝐄^(κ) for κ = 0..s−1.
    pub e_bold: Vec<f64>,
    /// 𝐃^(κ) for κ = 0..s−1.
    pub d_bold: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
    pub f4: Vec<f64>,
    /// 𝓕^(κ), empty without Lyapunov coefficients.
    pub lyapunov: Vec<f64>,
    pub w_norm_sq: f64,
    /// ‖∇ʲU‖² for j = 0..=s₀.
    pub u_norms: Vec<f64>,
    /// ‖∇ʲΨ‖²_H for j = 0..=s₀.
    pub h_norm_sq: Vec<f64>,
}

impl EnergyReport {
    /// Flat (name, value) list for trajectory CSV columns.
    pub fn columns(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("triple_norm_sq".to_string(), self.triple_norm_sq),
            ("seminorm_sq".to_string(), self.seminorm_sq),
            ("w_norm_sq".to_string(), self.w_norm_sq),
        ];
        let lists: [(&str, &Vec<f64>); 11] = [
            ("E_bold", &self.e_bold),
            ("D_bold", &self.d_bold),
            ("E1", &self.e1),
            ("E2", &self.e2),
            ("F1", &self.f1),
            ("F2", &self.f2),
            ("F3", &self.f3),
            ("F4", &self.f4),
            ("lyapunov", &self.lyapunov),
            ("U_norm_sq", &self.u_norms),
            ("H_norm_sq", &self.h_norm_sq),
        ];
        for (name, v) in lists {
            for (k, x) in v.iter().enumerate() {
                out.push((format!("{name}_{k}"), *x));
            }
        }
        out
    }
}

/// Every norm and functional of a snapshot at regularity s.
pub fn sobolev_suite(ctx: &EnergyContext<'_>, state: &StateField, s: usize) -> Result<EnergyReport> {
    if s == 0 {
        return Err(Error::Index("regularity index s must be ≥ 1".into()));
    }
    let sp = spectra(ctx, state)?;
    let frac = sp.unresolved_fraction(s);
    if frac > RESOLUTION_FRACTION {
        return Err(Error::Resolution(format!(
            "{:.2e} of the H^{s} norm lies outside the dealiased band",
            frac
        )));
    }
    Ok(report_from(ctx, &sp, s))
}

fn report_from(ctx: &EnergyContext<'_>, sp: &Spectra, s: usize) -> EnergyReport {
    let ks = 0..s;
    let s0 = s0_index(s, ctx.grid.dim);
    let js = 0..=(s0.max(-1));
    EnergyReport {
        s,
        triple_norm_sq: sp.triple_norm_sq(s, 0),
        seminorm_sq: sp.seminorm_sq(s, 0),
        e_bold: ks.clone().map(|k| sp.e_bold(k)).collect(),
        d_bold: ks.clone().map(|k| sp.d_bold(k)).collect(),
        e1: ks.clone().map(|k| sp.e1(k)).collect(),
        e2: ks.clone().map(|k| sp.e2(k)).collect(),
        f1: ks.clone().map(|k| sp.f1(k)).collect(),
        f2: ks.clone().map(|k| sp.f2(k)).collect(),
        f3: ks.clone().map(|k| sp.f3(k)).collect(),
        f4: ks.clone().map(|k| sp.f4(k)).collect(),
        lyapunov: match &ctx.lyapunov {
            Some(c) => ks.map(|k| lyapunov_of(ctx, sp, k, c)).collect(),
            None => vec![],
        },
        w_norm_sq: sp.field_norm_sq(&sp.w, 0),
        u_norms: js.clone().map(|j| sp.u_norm_sq(j as usize)).collect(),
        h_norm_sq: js.map(|j| sp.h_norm_sq(j as usize)).collect(),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AuxFunctionals {
    pub e1: f64,
    pub e2: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

/// E₁, E₂, F₁..F₄ of order κ. For the reduced representation E₁ and E₂ are
/// NaN (the age moments do not exist); F₃ and F₄ use ẑ directly.
pub fn aux_functionals(ctx: &EnergyContext<'_>, state: &StateField, kappa: usize) -> Result<AuxFunctionals> {
    let sp = spectra(ctx, state)?;
    Ok(AuxFunctionals {
        e1: sp.e1(kappa),
        e2: sp.e2(kappa),
        f1: sp.f1(kappa),
        f2: sp.f2(kappa),
        f3: sp.f3(kappa),
        f4: sp.f4(kappa),
    })
}

fn lyapunov_of(ctx: &EnergyContext<'_>, sp: &Spectra, kappa: usize, c: &LyapunovCoeffs) -> f64 {
    let tau = ctx.params.tau;
    let f3k = match ctx.f3_order {
        F3Order::Literal => 0,
        F3Order::Matched => kappa,
    };
    c.n0 * (sp.e1(kappa)
        + sp.e2(kappa)
        + sp.e2(kappa + 1)
        + c.epsilon * tau * sp.field_norm_sq(&sp.w, kappa as i32))
        + sp.f1(kappa)
        + 2.0 * sp.f2(kappa)
        + ctx.f3_sign * c.n1 * (sp.f3(f3k) + sp.f4(kappa))
}

/// 𝓕^(κ) with the given coefficients.
pub fn lyapunov(ctx: &EnergyContext<'_>, state: &StateField, kappa: usize, coeffs: &LyapunovCoeffs) -> Result<f64> {
    let sp = spectra(ctx, state)?;
    Ok(lyapunov_of(ctx, &sp, kappa, coeffs))
}

/// Coefficients of the Lyapunov functional and the resulting constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovCoeffs {
    /// ε₀..ε₆.
    pub eps: [f64; 7],
    pub n0: f64,
    pub n1: f64,
    pub epsilon: f64,
    pub lambda0: f64,
    pub lambda0_formula: f64,
    /// Twice the probe-measured Λ₀.
    pub lambda0_probe: f64,
    pub lambda1: f64,
    /// C in the ε-terms.
    pub c_eps: f64,
    /// Largest measured ‖·‖²_g/‖·‖²_{−g′} over the probe set.
    pub probe_ratio: f64,
    /// C_η, C_w, C_(ψ+τv), C_(v+τw), C_(∇v), C_(Δv) as used.
    pub constants: Vec<(String, f64)>,
    /// The same list in the printed form.
    pub literal_constants: Vec<(String, f64)>,
}

impl LyapunovCoeffs {
    pub fn constant(&self, name: &str) -> f64 {
        self.constants
            .iter()
            .find(|(n, _)| n == name)
            .map_or(f64::NAN, |x| x.1)
    }
}

/// Largest ∫g f/∫(−g′) f over 20 seeded nonnegative age profiles.
pub fn probe_ratio(kernel: &MemoryKernel) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let rmax = kernel.horizon();
    let mut best = 0.0f64;
    for _ in 0..20 {
        let bumps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.1..1.0),
                    rng.random_range(0.0..rmax),
                    rng.random_range(0.05..0.5) * rmax,
                )
            })
            .collect();
        let prof = |r: f64| -> f64 {
            bumps
                .iter()
                .map(|(a, c, w)| a * (-(r - c).powi(2) / (2.0 * w * w)).exp())
                .sum()
        };
        let num = adaptive_quad(|r| kernel.g(r) * prof(r), 0.0, rmax, 1e-12);
        let den = adaptive_quad(|r| kernel.neg_dg(r) * prof(r), 0.0, rmax, 1e-12);
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    best
}

/// Parameter chain of the Lyapunov proof, each strict inequality met with
/// safety factor ½.
pub fn select_lyapunov_coeffs(params: &MediumParams, kernel: &MemoryKernel) -> Result<LyapunovCoeffs> {
    let kc = KernelConstants::new(kernel, params)?;
    let (tau, cg2, big_g, g0) = (params.tau, kc.cg2, kc.big_g, kc.g0);
    let fail = |m: String| Err(Error::NoAdmissibleCoefficients(m));
    if !(big_g > 1e-14) {
        return fail(format!(
            "memory mass c² − c_g² = {big_g:.3e}; without memory the critical problem has no dissipation for ∇v and Δv"
        ));
    }
    if !(cg2 > 0.0) {
        return fail(format!("c_g² = {cg2:.3e} must be positive"));
    }
    if params.b < tau * params.c * params.c * (1.0 - 1e-12) {
        return fail("supercritical parameters (b < τc²)".into());
    }
    let zeta = kernel.zeta;
    let inv_z = 1.0 / zeta;

    let e1 = 0.5 * cg2 / (1.0 + big_g);
    let e0 = e1;
    let e2 = 0.5 * (cg2 - e0 * (1.0 + big_g)) / 2.0;
    let e4 = 0.5 * tau * big_g / (g0 + big_g);
    let e6 = e4;
    let e3: f64 = 0.125;
    let c_e0 = tau * tau * big_g * big_g / (4.0 * e0);
    let c_e1 = 1.0 / (4.0 * e1);
    let c_e23 = (1.0 / (4.0 * e3)).max(tau * tau * cg2 * cg2 / (4.0 * e2) + 1.5 * tau * tau * big_g);
    let c_e4 = tau * tau / (4.0 * e4);
    let x3 = tau * big_g - e4 * g0 - e6 * big_g;
    let n1 = 2.0 * (c_e0 + 2.0 * c_e23) / (tau * big_g - e4 * (g0 + big_g));
    let e5 = 0.5 * (1.0 - e3) / (2.0 * n1 * big_g);
    let c_e5 = 1.0 / (4.0 * e5);
    let c_e6 = 1.0 / (4.0 * e6);
    let c_e56 = c_e5 + c_e6;

    let lambda_with = |r: f64| {
        (n1 * (c_e4 + c_e56 * r))
            .max(c_e1 * r + r + n1 * (c_e4 + c_e6 * r))
            .max(n1 * c_e5 * r)
    };
    let lambda0_formula = lambda_with(inv_z);
    let pr = probe_ratio(kernel);
    let lambda0_probe = 2.0 * lambda_with(pr);
    let lambda0 = lambda0_formula.max(lambda0_probe);
    let n0 = 4.0 * lambda0;
    let delta_g = params.b - tau * cg2;
    let c_eps = 3.0 * (cg2 * cg2).max(delta_g * delta_g).max(big_g * inv_z);
    let a_core = cg2 - e0 - big_g * e1;
    let epsilon = 0.5
        * ((n0 - 2.0 * lambda0) / (2.0 * c_eps * n0))
            .min((n1 * x3 - 2.0 * c_e23 - c_e0) / (c_eps * n0))
            .min((a_core - 2.0 * e2) / (c_eps * n0));
    let constants = vec![
        ("C_eta".to_string(), n0 * (0.5 - c_eps * epsilon) - lambda0),
        ("C_w".to_string(), n0 * epsilon),
        ("C_psi_tau_v".to_string(), a_core - c_eps * n0 * epsilon - 2.0 * e2),
        ("C_v_tau_w".to_string(), 1.0 - 2.0 * e3 - 2.0 * n1 * e5 * big_g),
        ("C_grad_v".to_string(), n1 * x3 - 2.0 * c_e23),
        ("C_lap_v".to_string(), n1 * x3 - 2.0 * c_e23 - c_e0 - c_eps * n0 * epsilon),
    ];
    let literal_constants = vec![
        ("C_eta".to_string(), n0 * (0.5 - c_eps * epsilon) - lambda0),
        ("C_w".to_string(), 0.5 * n0 * epsilon),
        ("C_psi_tau_v".to_string(), a_core - c_eps * n0 * epsilon - 2.0 * e2),
        ("C_v_tau_w".to_string(), (1.0 - e3) - 2.0 * n1 * e5 * big_g),
        ("C_grad_v".to_string(), n1 * x3 - 4.0 * c_e23),
        ("C_lap_v".to_string(), n1 * x3 - 2.0 * c_e23 - c_e0 - c_eps * n0 * epsilon),
    ];
    for (name, v) in constants.iter().chain(&literal_constants) {
        if !(*v > 0.0) {
            return fail(format!("{name} = {v:.3e} is not positive"));
        }
    }
    Ok(LyapunovCoeffs {
        eps: [e0, e1, e2, e3, e4, e5, e6],
        n0,
        n1,
        epsilon,
        lambda0,
        lambda0_formula,
        lambda0_probe,
        lambda1: n0.max(2.0),
        c_eps,
        probe_ratio: pr,
        constants,
        literal_constants,
    })
}

/// Quantities of one snapshot needed by the time-weighted norms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedSample {
    pub t: f64,
    /// |||∇ⁱΨ|||²_{H^{s−2i}} for i = 0..=⌊(s−1)/2⌋.
    pub triple: Vec<f64>,
    /// |∇ⁱΨ|²_{H^{s−2i}}.
    pub semi: Vec<f64>,
    /// ‖∇ʲU‖_{L²} for j = 0..=s₀.
    pub u_l2: Vec<f64>,
    /// ‖∇ʲv‖_{L²}, ‖∇ʲw‖_{L²} for j = 0..s₀.
    pub v_l2: Vec<f64>,
    pub w_l2: Vec<f64>,
    /// ‖∇ʲU‖_∞, j = 0, 1.
    pub u_inf: [f64; 2],
    /// ‖∇ʲv‖_∞, j = 0, 1.
    pub v_inf: [f64; 2],
}

/// Pointwise Euclidean norm over components, then the maximum over x.
fn sup_of_components(grid: &Grid, comps: &[Vec<C>]) -> f64 {
    let mut acc = vec![0.0; grid.len()];
    for c in comps {
        let f = grid.inverse(c);
        acc.iter_mut().zip(&f).for_each(|(a, x)| *a += x * x);
    }
    sup_norm(&acc).sqrt()
}

fn gradient(grid: &Grid, f: &[C]) -> Vec<Vec<C>> {
    (0..grid.dim).map(|a| grid.derivative(f, a)).collect()
}

fn hessian(grid: &Grid, f: &[C]) -> Vec<Vec<C>> {
    gradient(grid, f).iter().flat_map(|g| gradient(grid, g)).collect()
}

pub fn weighted_sample(ctx: &EnergyContext<'_>, state: &StateField, s: usize, t: f64) -> Result<WeightedSample> {
    let sp = spectra(ctx, state)?;
    Ok(weighted_sample_from(ctx.grid, &sp, s, t))
}

fn weighted_sample_from(grid: &Grid, sp: &Spectra, s: usize, t: f64) -> WeightedSample {
    let imax = (s - 1) / 2;
    let s0 = s0_index(s, grid.dim);
    let triple = (0..=imax).map(|i| sp.triple_norm_sq(s - 2 * i, i)).collect();
    let semi = (0..=imax).map(|i| sp.seminorm_sq(s - 2 * i, i)).collect();
    let u_l2 = (0..=s0.max(-1)).map(|j| sp.u_norm_sq(j as usize).sqrt()).collect();
    let v_l2 = (0..s0.max(0)).map(|j| sp.field_norm_sq(&sp.v, j as i32).sqrt()).collect();
    let w_l2 = (0..s0.max(0)).map(|j| sp.field_norm_sq(&sp.w, j as i32).sqrt()).collect();
    let mut u0 = vec![sp.bb.clone()];
    u0.extend(gradient(grid, &sp.a));
    u0.extend(gradient(grid, &sp.v));
    let mut u1 = gradient(grid, &sp.bb);
    u1.extend(hessian(grid, &sp.a));
    u1.extend(hessian(grid, &sp.v));
    WeightedSample {
        t,
        triple,
        semi,
        u_l2,
        v_l2,
        w_l2,
        u_inf: [sup_of_components(grid, &u0), sup_of_components(grid, &u1)],
        v_inf: [
            sup_of_components(grid, &[sp.v.clone()]),
            sup_of_components(grid, &gradient(grid, &sp.v)),
        ],
    }
}

/// Running time-weighted norms; entry k covers samples 0..=k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedNorms {
    pub s: usize,
    pub s0: i64,
    pub n: usize,
    pub t: Vec<f64>,
    /// ‖Ψ‖²_{𝔼,t}.
    pub e_weighted: Vec<f64>,
    /// ‖Ψ‖²_{𝔻,t}.
    pub d_weighted: Vec<f64>,
    pub m0_u: Vec<f64>,
    pub m1_u: Vec<f64>,
    pub m0_v: Vec<f64>,
    pub m1_v: Vec<f64>,
    /// 𝓜[v, w, U].
    pub m_cal: Vec<f64>,
}

/// Time-weighted norms from snapshot samples (time-ordered).
pub fn weighted_norms_from(samples: &[WeightedSample], s: usize, n: usize) -> Result<WeightedNorms> {
    let s0 = s0_index(s, n);
    if s0 < 1 {
        return Err(Error::Index(format!(
            "s₀ = ⌊(2s−n)/4⌋ = {s0} for s = {s}, n = {n}; need s₀ ≥ 1"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Config("no samples".into()));
    }
    let imax = (s - 1) / 2;
    let nn = n as f64;
    let mut out = WeightedNorms {
        s,
        s0,
        n,
        t: vec![],
        e_weighted: vec![],
        d_weighted: vec![],
        m0_u: vec![],
        m1_u: vec![],
        m0_v: vec![],
        m1_v: vec![],
        m_cal: vec![],
    };
    let mut sup_e = vec![0.0f64; imax + 1];
    let mut sup_u = vec![0.0f64; s0 as usize + 1];
    let mut sup_vw = vec![0.0f64; s0 as usize];
    let mut m = [0.0f64; 4];
    let mut d_int = 0.0;
    let integrand = |x: &WeightedSample| -> f64 {
        (0..=imax)
            .map(|i| {
                let i_f = i as f64;
                (1.0 + x.t).powf(i_f - 0.5) * x.semi[i] + (1.0 + x.t).powf(i_f - 1.5) * x.triple[i]
            })
            .sum()
    };
    for (k, x) in samples.iter().enumerate() {
        let w = 1.0 + x.t;
        for i in 0..=imax {
            sup_e[i] = sup_e[i].max(w.powf(i as f64 - 0.5) * x.triple[i]);
        }
        if k > 0 {
            let p = &samples[k - 1];
            d_int += 0.5 * (x.t - p.t) * (integrand(p) + integrand(x));
        }
        for j in 0..=s0 as usize {
            sup_u[j] = sup_u[j].max(w.powf(nn / 4.0 + j as f64 / 2.0) * x.u_l2[j]);
        }
        for j in 0..s0 as usize {
            let jf = j as f64;
            let val = w.powf(nn / 4.0 + jf / 2.0) * x.v_l2[j] + w.powf(nn / 4.0 + 0.5 + jf / 2.0) * x.w_l2[j];
            sup_vw[j] = sup_vw[j].max(val);
        }
        m[0] = m[0].max(w.powf(nn / 2.0) * x.u_inf[0]);
        m[1] = m[1].max(w.powf((nn + 1.0) / 2.0) * x.u_inf[1]);
        m[2] = m[2].max(w.powf(nn / 2.0) * x.v_inf[0]);
        m[3] = m[3].max(w.powf((nn + 1.0) / 2.0) * x.v_inf[1]);
        out.t.push(x.t);
        out.e_weighted.push(sup_e.iter().sum());
        out.d_weighted.push(d_int);
        out.m0_u.push(m[0]);
        out.m1_u.push(m[1]);
        out.m0_v.push(m[2]);
        out.m1_v.push(m[3]);
        out.m_cal.push(sup_u.iter().sum::<f64>() + sup_vw.iter().sum::<f64>());
    }
    Ok(out)
}

/// Time-weighted norms of a trajectory recorded with full states.
pub fn weighted_norms(ctx: &EnergyContext<'_>, traj: &Trajectory, s: usize) -> Result<WeightedNorms> {
    for pair in traj.records.windows(2) {
        if pair[1].step - pair[0].step > 100 {
            return Err(Error::Config("snapshots are more than 100 steps apart".into()));
        }
    }
    let samples = traj
        .records
        .par_iter()
        .map(|r| {
            let st = r
                .state
                .as_ref()
                .ok_or_else(|| Error::Config("trajectory records carry no states".into()))?;
            weighted_sample(ctx, st, s, r.t)
        })
        .collect::<Result<Vec<_>>>()?;
    weighted_norms_from(&samples, s, ctx.grid.dim)
}

/// Ratio |||∇Ψ|||_{H^{s−2}} / |Ψ|_{H^s} for one state.
pub fn embedding_ratio(ctx: &EnergyContext<'_>, state: &StateField, s: usize) -> Result<f64> {
    if s < 3 {
        return Err(Error::Index("embedding ratio needs s ≥ 3".into()));
    }
    let sp = spectra(ctx, state)?;
    Ok((sp.triple_norm_sq(s - 2, 1) / sp.seminorm_sq(s, 0)).sqrt())
}

/// Σ|ξ|^{2α}|f̂|² scaled to L² units (fractional homogeneous norm).
pub fn fractional_norm_sq(grid: &Grid, hat: &[C], alpha: f64) -> f64 {
    grid.weighted_norm_sq(hat, |r2| if r2 > 0.0 { r2.powf(alpha) } else { 0.0 })
}

/// Terms of the energy inequalities at one snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSample {
    pub t: f64,
    pub e1: f64,
    pub e2: f64,
    /// ‖∇^κ w‖².
    pub w_sq: f64,
    /// ‖∇^{κ+1}η‖²_{−g′}, ‖Δ∇^κη‖²_{−g′}.
    pub eta1_ng: f64,
    pub eta2_ng: f64,
    /// Right side of the w inequality without R: K_w(‖Δ∇^κa‖² + ‖Δ∇^κv‖² + ‖Δ∇^κη‖²_g).
    pub w_bound: f64,
    /// |R^(1)_κ(∇^κ b)|, |R^(2)_κ(∇^κ b)|, |R^(1)_κ(∇^κ w)|.
    pub r1_bb: f64,
    pub r2_bb: f64,
    pub r1_w: f64,
    /// 𝓕^(0) and its pieces (κ = 0 only).
    pub lyap: Option<LyapSample>,
    /// F₃^(κ), F₄^(κ) inequality pieces (with coefficients).
    pub aux: Option<AuxSample>,
}

/// F₃, F₄ with their exact rates and the pieces of their Young-inequality
/// estimates. Rates are NaN for non-exponential kernels, estimate pieces NaN
/// without Lyapunov coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuxSample {
    pub f3: f64,
    pub f4: f64,
    pub f3_rate: f64,
    pub f4_rate: f64,
    pub f3_diss: f64,
    pub f3_bound: f64,
    pub f4_diss: f64,
    pub f4_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapSample {
    pub value: f64,
    /// Σ C_i·D_i.
    pub dissipation: f64,
    /// Weighted sum of the R terms on the right.
    pub rhs: f64,
    pub e_bold0: f64,
}

/// K_w = 3 max(c_g⁴, (b−τc_g²)², G) / (2τ(2−τ)).
pub fn w_inequality_constant(params: &MediumParams, kc: &KernelConstants) -> Result<f64> {
    let tau = params.tau;
    if tau >= 2.0 {
        return Err(Error::Domain(format!("the w inequality constant needs τ < 2, got {tau}")));
    }
    let dg = params.b - tau * kc.cg2;
    Ok(3.0 * (kc.cg2 * kc.cg2).max(dg * dg).max(kc.big_g) / (2.0 * tau * (2.0 - tau)))
}

pub fn residual_sample(ctx: &EnergyContext<'_>, state: &StateField, kappa: usize, t: f64) -> Result<ResidualSample> {
    if state.history().is_none() {
        return Err(Error::UnsupportedRepresentation(
            "energy inequalities need the history representation".into(),
        ));
    }
    let kw = w_inequality_constant(&ctx.params, &ctx.kc)?;
    let sp = spectra(ctx, state)?;
    let k = kappa as i32;
    let lyap = match (&ctx.lyapunov, kappa) {
        (Some(c), 0) => {
            let tau = ctx.params.tau;
            let d = c.constant("C_eta")
                * (sp.eta_norm_sq(1, AgeWeight::NegDg)
                    + sp.eta_norm_sq(2, AgeWeight::NegDg)
                    + sp.eta_norm_sq(3, AgeWeight::NegDg))
                + c.constant("C_psi_tau_v") * sp.field_norm_sq(&sp.a, 2)
                + c.constant("C_v_tau_w") * sp.field_norm_sq(&sp.bb, 1)
                + c.constant("C_grad_v") * sp.field_norm_sq(&sp.v, 1)
                + c.constant("C_lap_v") * sp.field_norm_sq(&sp.v, 2)
                + c.constant("C_w") * sp.field_norm_sq(&sp.w, 0);
            let tv: Vec<C> = sp.v.iter().map(|x| x * tau).collect();
            let rhs = c.n0 * (sp.r1(0, &sp.bb).abs() + sp.r2(0, &sp.bb).abs() + sp.r2(1, &sp.bb).abs())
                + 2.0 * c.n0 * c.epsilon * sp.r1(0, &sp.w).abs()
                + sp.r2(0, &sp.a).abs()
                + 2.0 * sp.r2(0, &tv).abs();
            Some(LyapSample {
                value: lyapunov_of(ctx, &sp, 0, c),
                dissipation: d,
                rhs,
                e_bold0: sp.e_bold(0),
            })
        }
        _ => None,
    };
    let tau = ctx.params.tau;
    // z_t = Gv − z/τ_g for exponential kernels, so
    // dF₃/dt = −τG‖∇^{κ+1}v‖² + (τ/τ_g)(∇^{κ+1}z, ∇^{κ+1}v) − τ(∇^{κ+1}z, ∇^{κ+1}w).
    let rate = |p: i32| match ctx.kernel.exponential_params() {
        Some((_, tau_g)) => {
            -tau * ctx.kc.big_g * sp.field_norm_sq(&sp.v, p) + tau / tau_g * sp.cross(&sp.z, &sp.v, p)
                - tau * sp.cross(&sp.z, &sp.w, p)
        }
        None => f64::NAN,
    };
    let mut aux = AuxSample {
        f3: ctx.f3_sign * sp.f3(kappa),
        f4: ctx.f3_sign * sp.f4(kappa),
        f3_rate: rate(k + 1),
        f4_rate: rate(k + 2),
        f3_diss: f64::NAN,
        f3_bound: f64::NAN,
        f4_diss: f64::NAN,
        f4_bound: f64::NAN,
    };
    if let Some(c) = &ctx.lyapunov {
        let (g0, big_g) = (ctx.kc.g0, ctx.kc.big_g);
        let e = &c.eps;
        let x3 = tau * big_g - e[4] * g0 - e[6] * big_g;
        let (c4, c5, c6) = (tau * tau / (4.0 * e[4]), 1.0 / (4.0 * e[5]), 1.0 / (4.0 * e[6]));
        let ng = |q| sp.eta_norm_sq(q, AgeWeight::NegDg);
        let gg = |q| sp.eta_norm_sq(q, AgeWeight::G);
        let bb1 = e[5] * big_g * sp.field_norm_sq(&sp.bb, k + 1);
        aux.f3_diss = x3 * sp.field_norm_sq(&sp.v, k + 1);
        aux.f3_bound = bb1 + c4 * ng(k + 1) + (c5 + c6) * gg(k + 1);
        aux.f4_diss = x3 * sp.field_norm_sq(&sp.v, k + 2);
        aux.f4_bound = bb1 + c4 * ng(k + 2) + c5 * gg(k + 3) + c6 * gg(k + 2);
    }
    let aux = Some(aux);
    Ok(ResidualSample {
        aux,
        t,
        e1: sp.e1(kappa),
        e2: sp.e2(kappa),
        w_sq: sp.field_norm_sq(&sp.w, k),
        eta1_ng: sp.eta_norm_sq(k + 1, AgeWeight::NegDg),
        eta2_ng: sp.eta_norm_sq(k + 2, AgeWeight::NegDg),
        w_bound: kw
            * (sp.field_norm_sq(&sp.a, k + 2)
                + sp.field_norm_sq(&sp.v, k + 2)
                + sp.eta_norm_sq(k + 2, AgeWeight::G)),
        r1_bb: sp.r1(kappa, &sp.bb).abs(),
        r2_bb: sp.r2(kappa, &sp.bb).abs(),
        r1_w: sp.r1(kappa, &sp.w).abs(),
        lyap,
    })
}

/// Slack (right side minus left side) of each inequality at interior
/// samples, with centered differences for d/dt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kappa: usize,
    pub t: Vec<f64>,
    /// d/dt E₁^(κ) + ½‖∇^{κ+1}η‖²_{−g′} ≤ |R^(1)_κ(∇^κ b)|.
    pub slack_e1: Vec<f64>,
    /// d/dt E₂^(κ) + ½‖Δ∇^κη‖²_{−g′} ≤ |R^(2)_κ(∇^κ b)|.
    pub slack_e2: Vec<f64>,
    /// ½ d/dt‖∇^κw‖² + ½‖∇^κw‖² ≤ K_w(…) + |R^(1)_κ(∇^κ w)|/τ.
    pub slack_w: Vec<f64>,
    /// d/dt 𝓕^(0) + Σ C_i D_i ≤ R-terms (κ = 0 with coefficients).
    pub slack_lyap: Vec<f64>,
    /// d/dt F₃^(κ) + X₃‖∇^{κ+1}v‖² ≤ ε₅G‖∇^{κ+1}b‖² + C(ε₄)‖∇^{κ+1}η‖²_{−g′} + C(ε₅,ε₆)‖∇^{κ+1}η‖²_g.
    pub slack_f3: Vec<f64>,
    /// The analogous F₄^(κ) inequality one derivative higher.
    pub slack_f4: Vec<f64>,
    /// Measured d/dt F₃^(κ), F₄^(κ) minus the exact rate (exponential kernels).
    pub defect_f3: Vec<f64>,
    pub defect_f4: Vec<f64>,
    /// Tolerance 10·Δt²·scale per sample, with the scale taken from the
    /// magnitudes entering each group of checks: E₁, E₂, w.
    pub tol: Vec<f64>,
    /// The same for the Lyapunov inequality.
    pub tol_lyap: Vec<f64>,
    /// The same for the F₃, F₄ checks.
    pub tol_aux: Vec<f64>,
    /// 𝓕^(0)/𝐄^(0) over all samples.
    pub lyap_ratio: Vec<f64>,
}

impl ResidualReport {
    /// Smallest margin per check: slack + tol for inequalities, tol − |defect|
    /// for identities. Everything holds iff all are ≥ 0.
    pub fn worst(&self) -> [f64; 8] {
        let w = |v: &Vec<f64>, tol: &Vec<f64>| {
            v.iter()
                .zip(tol)
                .map(|(s, t)| s + t)
                .fold(f64::INFINITY, f64::min)
        };
        let d = |v: &Vec<f64>| {
            v.iter()
                .zip(&self.tol_aux)
                .map(|(s, t)| t - s.abs())
                .fold(f64::INFINITY, f64::min)
        };
        [
            w(&self.slack_e1, &self.tol),
            w(&self.slack_e2, &self.tol),
            w(&self.slack_w, &self.tol),
            w(&self.slack_lyap, &self.tol_lyap),
            w(&self.slack_f3, &self.tol_aux),
            w(&self.slack_f4, &self.tol_aux),
            d(&self.defect_f3),
            d(&self.defect_f4),
        ]
    }

    pub fn all_within_tolerance(&self) -> bool {
        self.worst().iter().all(|x| *x >= 0.0)
    }
}

pub fn residual_report(samples: &[ResidualSample], kappa: usize, tau: f64) -> Result<ResidualReport> {
    if samples.len() < 3 {
        return Err(Error::Config("need at least three samples for centered differences".into()));
    }
    let mut r = ResidualReport {
        kappa,
        t: vec![],
        slack_e1: vec![],
        slack_e2: vec![],
        slack_w: vec![],
        slack_lyap: vec![],
        slack_f3: vec![],
        slack_f4: vec![],
        defect_f3: vec![],
        defect_f4: vec![],
        tol: vec![],
        tol_lyap: vec![],
        tol_aux: vec![],
        lyap_ratio: samples
            .iter()
            .filter_map(|s| s.lyap.as_ref().map(|l| l.value / l.e_bold0))
            .collect(),
    };
    for k in 1..samples.len() - 1 {
        let (p, x, q) = (&samples[k - 1], &samples[k], &samples[k + 1]);
        let h = q.t - p.t;
        let d = |f: &dyn Fn(&ResidualSample) -> f64| (f(q) - f(p)) / h;
        let de1 = d(&|s| s.e1);
        let de2 = d(&|s| s.e2);
        let dw = d(&|s| s.w_sq);
        let lhs1 = de1 + 0.5 * x.eta1_ng;
        let lhs2 = de2 + 0.5 * x.eta2_ng;
        let lhsw = 0.5 * dw + 0.5 * x.w_sq;
        let rhsw = x.w_bound + x.r1_w / tau;
        let tol = |scale: f64| 2.5 * h * h * scale;
        let scale = [x.e1, x.e2, x.w_sq, x.eta1_ng, x.eta2_ng, x.w_bound, x.r1_bb, x.r2_bb]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        r.slack_e1.push(x.r1_bb - lhs1);
        r.slack_e2.push(x.r2_bb - lhs2);
        r.slack_w.push(rhsw - lhsw);
        if let (Some(lp), Some(lx), Some(lq)) = (&p.lyap, &x.lyap, &q.lyap) {
            let df = (lq.value - lp.value) / h;
            r.slack_lyap.push(lx.rhs - df - lx.dissipation);
            let sl = lx.value.abs().max(lx.dissipation.abs()).max(lx.rhs.abs());
            r.tol_lyap.push(tol(sl));
        }
        if let (Some(ap), Some(ax), Some(aq)) = (&p.aux, &x.aux, &q.aux) {
            let d3 = (aq.f3 - ap.f3) / h;
            let d4 = (aq.f4 - ap.f4) / h;
            if ax.f3_bound.is_finite() {
                r.slack_f3.push(ax.f3_bound - d3 - ax.f3_diss);
                r.slack_f4.push(ax.f4_bound - d4 - ax.f4_diss);
            }
            if ax.f3_rate.is_finite() {
                r.defect_f3.push(d3 - ax.f3_rate);
                r.defect_f4.push(d4 - ax.f4_rate);
            }
            let sa = [ax.f3, ax.f4, ax.f3_rate, ax.f4_rate, ax.f3_diss, ax.f4_diss, ax.f3_bound, ax.f4_bound]
                .iter()
                .filter(|v| v.is_finite())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            r.tol_aux.push(tol(sa));
        }
        r.t.push(x.t);
        r.tol.push(tol(scale));
    }
    Ok(r)
}

/// Inequality slacks along a trajectory recorded with full states.
pub fn energy_residuals(ctx: &EnergyContext<'_>, traj: &Trajectory, kappa: usize) -> Result<ResidualReport> {
    let samples = traj
        .records
        .par_iter()
        .map(|r| {
            let st = r
                .state
                .as_ref()
                .ok_or_else(|| Error::Config("trajectory records carry no states".into()))?;
            residual_sample(ctx, st, kappa, r.t)
        })
        .collect::<Result<Vec<_>>>()?;
    residual_report(&samples, kappa, ctx.params.tau)
}

/// Random band-limited state with a random history on the age grid, for
/// identity and scaling checks.
pub fn random_history_state(
    grid: &Grid,
    params: &MediumParams,
    kernel: &MemoryKernel,
    n_r: usize,
    r_max: f64,
    seed: u64,
) -> Result<StateField> {
    use crate::history_state::{init_state, InitialData, MemoryRepr, Profile};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_max = (grid.n / 4).max(1) as i64;
    let mut prof = |amp: f64| Profile::BandLimitedRandom {
        amplitude: amp,
        k_max,
        decay: 2.0,
        seed: rng.random(),
    };
    let data = InitialData {
        psi0: prof(1.0),
        psi1: prof(0.7),
        psi2: prof(0.4),
    };
    let mut st = init_state(grid, &data, params, kernel, MemoryRepr::History { n_r, r_max })?;
    let jump: usize = rng.random_range(0..=n_r + 1);
    let field_seeds: Vec<u64> = (0..=n_r).map(|_| rng.random()).collect();
    if let Memory::History(h) = &mut st.memory {
        h.jump = jump;
        for (j, seed) in field_seeds.into_iter().enumerate() {
            let f = Profile::BandLimitedRandom {
                amplitude: 0.5,
                k_max,
                decay: 2.0,
                seed,
            }
            .sample(grid);
            let n = grid.len();
            h.eta[j * n..(j + 1) * n].copy_from_slice(&f);
        }
    }
    Ok(st)
}
