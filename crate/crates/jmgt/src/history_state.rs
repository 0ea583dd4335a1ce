//! State Ψ = (ψ, v, w, η) on a periodic grid, initial profiles, and the
//! memory representation: the reduced field z or the age-grid history η.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium_kernel::{effective_speed_sq, MediumParams, MemoryKernel};
use crate::numerics::{gauss_legendre_unit, lagrange_basis};
pub use crate::spectral::Grid;

/// Named analytic field generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// amplitude·exp(−|x−x₀|²/width²), centred in the box unless given.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Option<[f64; 3]>,
    },
    /// amplitude·sin(2π k·x/L).
    FourierMode { amplitude: f64, k: [i64; 3] },
    /// Random coefficients on |k_i| ≤ k_max with spectrum (1+|k|²)^(−decay/2),
    /// scaled to root-mean-square `amplitude`.
    BandLimitedRandom {
        amplitude: f64,
        k_max: i64,
        #[serde(default)]
        decay: f64,
        seed: u64,
    },
}

impl Profile {
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let n = grid.len();
        match self {
            Profile::Zero => vec![0.0; n],
            Profile::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let c = center.unwrap_or([0.5 * grid.l; 3]);
                (0..n)
                    .map(|i| {
                        let x = grid.coords(i);
                        let r2: f64 = (0..grid.dim).map(|a| (x[a] - c[a]).powi(2)).sum();
                        amplitude * (-r2 / (width * width)).exp()
                    })
                    .collect()
            }
            Profile::FourierMode { amplitude, k } => (0..n)
                .map(|i| {
                    let x = grid.coords(i);
                    let ph: f64 = (0..grid.dim).map(|a| k[a] as f64 * x[a]).sum();
                    amplitude * (2.0 * PI * ph / grid.l).sin()
                })
                .collect(),
            Profile::BandLimitedRandom {
                amplitude,
                k_max,
                decay,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let hat: Vec<Complex64> = grid
                    .kint
                    .iter()
                    .map(|k| {
                        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        if k.iter().all(|x| x.abs() <= *k_max) {
                            let k2: i64 = k.iter().map(|x| x * x).sum();
                            Complex64::new(a, b) * (1.0 + k2 as f64).powf(-0.5 * decay)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                let f = grid.inverse(&hat);
                let rms = (f.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
                if rms == 0.0 {
                    f
                } else {
                    f.iter().map(|x| x * amplitude / rms).collect()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub psi0: Profile,
    pub psi1: Profile,
    pub psi2: Profile,
}

impl InitialData {
    pub fn zero() -> Self {
        InitialData {
            psi0: Profile::Zero,
            psi1: Profile::Zero,
            psi2: Profile::Zero,
        }
    }

    /// Multiplies every profile amplitude by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let sc = |p: &Profile| match p.clone() {
            Profile::Zero => Profile::Zero,
            Profile::Gaussian {
                amplitude,
                width,
                center,
            } => Profile::Gaussian {
                amplitude: amplitude * s,
                width,
                center,
            },
            Profile::FourierMode { amplitude, k } => Profile::FourierMode {
                amplitude: amplitude * s,
                k,
            },
            Profile::BandLimitedRandom {
                amplitude,
                k_max,
                decay,
                seed,
            } => Profile::BandLimitedRandom {
                amplitude: amplitude * s,
                k_max,
                decay,
                seed,
            },
        };
        InitialData {
            psi0: sc(&self.psi0),
            psi1: sc(&self.psi1),
            psi2: sc(&self.psi2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryRepr {
    ReducedZ,
    /// Uniform age grid r_j = j·r_max/n_r, j = 0..n_r.
    History { n_r: usize, r_max: f64 },
}

impl MemoryRepr {
    /// Age grid whose spacing equals `dt`, with r_max rounded to a multiple of dt.
    pub fn history_for_dt(dt: f64, r_max: f64) -> Self {
        let n_r = (r_max / dt).round().max(1.0) as usize;
        MemoryRepr::History {
            n_r,
            r_max: n_r as f64 * dt,
        }
    }
}

/// Weights of the jump-aware age quadrature:
/// ∫₀^∞ g η dr ≈ Σ_j coeffs[j]·η_j + right·ψ₀.
#[derive(Debug, Clone)]
pub struct AgeRule {
    pub coeffs: Vec<f64>,
    /// Weight of the jump ψ₀ carried by the right limit at the jump node.
    pub right: f64,
}

/// Product quadrature of g against piecewise cubic interpolants of η.
/// Stencils never straddle the kink r = t (the image of the initial jump).
#[derive(Debug)]
pub struct AgeQuadrature {
    pub n_r: usize,
    pub dr: f64,
    /// h·w_i·g(r_j + h·x_i) per interval j and Gauss node i.
    gw: Vec<[f64; 10]>,
    /// Lagrange basis values at the Gauss nodes, indexed by [npts−1][−start].
    basis: Vec<Vec<Vec<[f64; 10]>>>,
    tail: f64,
}

impl AgeQuadrature {
    /// Quadrature for the weight g.
    pub fn new(kernel: &MemoryKernel, n_r: usize, r_max: f64) -> Result<Self> {
        Self::with_weight(|r| kernel.g(r), kernel.tail_integral(r_max), n_r, r_max)
    }

    /// Quadrature for a general weight with tail ∫_{r_max}^∞ weight = `tail`.
    pub fn with_weight<F: Fn(f64) -> f64>(weight: F, tail: f64, n_r: usize, r_max: f64) -> Result<Self> {
        if n_r < 4 || !(r_max > 0.0) {
            return Err(Error::Config("age grid needs n_r ≥ 4 and r_max > 0".into()));
        }
        let h = r_max / n_r as f64;
        let (x, w) = gauss_legendre_unit(10);
        let gw = (0..n_r)
            .map(|j| {
                let mut a = [0.0; 10];
                for i in 0..10 {
                    a[i] = h * w[i] * weight((j as f64 + x[i]) * h);
                }
                a
            })
            .collect();
        let mut basis = Vec::new();
        for npts in 1..=4usize {
            let mut per_start = Vec::new();
            for s in 0..npts {
                let nodes: Vec<f64> = (0..npts).map(|k| k as f64 - s as f64).collect();
                let vals = (0..npts)
                    .map(|k| {
                        let mut a = [0.0; 10];
                        for i in 0..10 {
                            a[i] = lagrange_basis(&nodes, k, x[i]);
                        }
                        a
                    })
                    .collect();
                per_start.push(vals);
            }
            basis.push(per_start);
        }
        Ok(AgeQuadrature {
            n_r,
            dr: h,
            gw,
            basis,
            tail,
        })
    }

    /// Rule for a history whose kink sits at node `jump` (jump > n_r: none).
    pub fn rule(&self, jump: usize) -> AgeRule {
        let n = self.n_r;
        let mut coeffs = vec![0.0; n + 1];
        let mut right = 0.0;
        let segs: Vec<(usize, usize, bool)> = if jump < n {
            vec![(0, jump, false), (jump, n, true)]
        } else {
            vec![(0, n, false)]
        };
        for (lo, hi, second) in segs {
            if hi == lo {
                continue;
            }
            let npts = 4.min(hi - lo + 1);
            for j in lo..hi {
                let start = (j as i64 - 1).clamp(lo as i64, (hi + 1 - npts) as i64) as usize;
                let b = &self.basis[npts - 1][j - start];
                for k in 0..npts {
                    let wk: f64 = (0..10).map(|i| self.gw[j][i] * b[k][i]).sum();
                    let s = start + k;
                    coeffs[s] += wk;
                    if second && s == jump {
                        right += wk;
                    }
                }
            }
        }
        coeffs[n] += self.tail;
        if jump == n {
            right += self.tail;
        }
        AgeRule { coeffs, right }
    }

    pub fn r_max(&self) -> f64 {
        self.dr * self.n_r as f64
    }
}

/// History variable on the age grid, stored age-major: eta[j·npts + x].
#[derive(Debug, Clone)]
pub struct HistoryField {
    pub eta: Vec<f64>,
    /// Steps taken since t = 0, saturating at n_r + 1; the kink sits at node `jump`.
    pub jump: usize,
    /// ψ₀, the jump carried by the history's right limit at r = t.
    pub psi0: Vec<f64>,
    pub quad: Arc<AgeQuadrature>,
}

impl HistoryField {
    pub fn n_r(&self) -> usize {
        self.quad.n_r
    }

    pub fn npts(&self) -> usize {
        self.psi0.len()
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.npts();
        &self.eta[j * n..(j + 1) * n]
    }

    /// η(·, r_j) with the right limit at the kink node.
    pub fn right_limit(&self, j: usize) -> Vec<f64> {
        let s = self.slice(j);
        if j == self.jump && j <= self.n_r() {
            s.iter().zip(&self.psi0).map(|(a, b)| a + b).collect()
        } else {
            s.to_vec()
        }
    }

    /// Shift one age cell: η(r_j) ← η(r_{j−1}), η(r_0) = 0.
    pub fn shift(&mut self) {
        let n = self.npts();
        let len = self.eta.len();
        self.eta.copy_within(0..len - n, n);
        self.eta[..n].iter_mut().for_each(|x| *x = 0.0);
        self.jump = (self.jump + 1).min(self.n_r() + 1);
    }

    /// η(r_j) += dψ for j ≥ 1.
    pub fn add_increment(&mut self, dpsi: &[f64]) {
        let n = self.npts();
        for row in self.eta[n..].chunks_mut(n) {
            row.iter_mut().zip(dpsi).for_each(|(e, d)| *e += d);
        }
    }

    pub fn apply_rule(&self, rule: &AgeRule) -> Vec<f64> {
        let mut z: Vec<f64> = self.psi0.iter().map(|p| rule.right * p).collect();
        for (j, c) in rule.coeffs.iter().enumerate() {
            if *c != 0.0 {
                z.iter_mut().zip(self.slice(j)).for_each(|(zi, e)| *zi += c * e);
            }
        }
        z
    }
}

#[derive(Debug, Clone)]
pub enum Memory {
    ReducedZ { z: Vec<f64> },
    History(HistoryField),
}

#[derive(Debug, Clone)]
pub struct StateField {
    pub psi: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub memory: Memory,
}

impl StateField {
    pub fn is_finite(&self) -> bool {
        let mem_ok = match &self.memory {
            Memory::ReducedZ { z } => z.iter().all(|x| x.is_finite()),
            Memory::History(h) => h.eta.iter().all(|x| x.is_finite()),
        };
        mem_ok && [&self.psi, &self.v, &self.w].iter().all(|f| f.iter().all(|x| x.is_finite()))
    }

    pub fn history(&self) -> Option<&HistoryField> {
        match &self.memory {
            Memory::History(h) => Some(h),
            _ => None,
        }
    }

    /// Largest |·| over ψ, v, w.
    pub fn sup(&self) -> f64 {
        [&self.psi, &self.v, &self.w]
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

pub fn init_state(
    grid: &Grid,
    data: &InitialData,
    params: &MediumParams,
    kernel: &MemoryKernel,
    repr: MemoryRepr,
) -> Result<StateField> {
    let psi = data.psi0.sample(grid);
    let v = data.psi1.sample(grid);
    let w = data.psi2.sample(grid);
    let memory = match repr {
        MemoryRepr::ReducedZ => {
            if !kernel.is_exponential() {
                return Err(Error::UnsupportedRepresentation(
                    "reduced memory field requires an exponential kernel".into(),
                ));
            }
            let big_g = params.c * params.c - effective_speed_sq(kernel, params)?;
            Memory::ReducedZ {
                z: psi.iter().map(|p| big_g * p).collect(),
            }
        }
        MemoryRepr::History { n_r, r_max } => {
            let quad = Arc::new(AgeQuadrature::new(kernel, n_r, r_max)?);
            let n = grid.len();
            let mut eta = vec![0.0; (n_r + 1) * n];
            for row in eta[n..].chunks_mut(n) {
                row.copy_from_slice(&psi);
            }
            Memory::History(HistoryField {
                eta,
                jump: 0,
                psi0: psi.clone(),
                quad,
            })
        }
    };
    Ok(StateField { psi, v, w, memory })
}

/// Shift-then-source transport update η(r+dt) ← η(r) + dt·v, η(0) = 0.
pub fn advance_history(state: &mut StateField, v_field: &[f64], dt: f64) -> Result<()> {
    let h = match &mut state.memory {
        Memory::History(h) => h,
        _ => {
            return Err(Error::UnsupportedRepresentation(
                "advance_history needs the history representation".into(),
            ))
        }
    };
    if (dt - h.quad.dr).abs() > 1e-12 * h.quad.dr {
        return Err(Error::Config(format!(
            "time step {dt} differs from age spacing {}",
            h.quad.dr
        )));
    }
    let inc: Vec<f64> = v_field.iter().map(|v| v * dt).collect();
    h.shift();
    h.add_increment(&inc);
    Ok(())
}

/// z = ∫₀^∞ g η dr from the age grid.
pub fn reduce_history(state: &StateField) -> Result<Vec<f64>> {
    match &state.memory {
        Memory::History(h) => Ok(h.apply_rule(&h.quad.rule(h.jump))),
        Memory::ReducedZ { .. } => Err(Error::UnsupportedRepresentation(
            "reduce_history needs the history representation".into(),
        )),
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"JMGTSNAP";

/// Flat little-endian snapshot:
/// magic[8], version u32, dim u32, N u32, L f64, N_r u32 (0 for the reduced
/// field), jump u64, then ψ, v, w and either z or (ψ₀, η_0..η_{N_r}) as f64.
pub fn write_snapshot(grid: &Grid, state: &StateField) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(grid.dim as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n as u32).to_le_bytes());
    out.extend_from_slice(&grid.l.to_le_bytes());
    let (n_r, jump) = match &state.memory {
        Memory::ReducedZ { .. } => (0u32, 0u64),
        Memory::History(h) => (h.n_r() as u32, h.jump as u64),
    };
    out.extend_from_slice(&n_r.to_le_bytes());
    out.extend_from_slice(&jump.to_le_bytes());
    let mut put = |f: &[f64]| f.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(&state.psi);
    put(&state.v);
    put(&state.w);
    match &state.memory {
        Memory::ReducedZ { z } => put(z),
        Memory::History(h) => {
            put(&h.psi0);
            put(&h.eta);
        }
    }
    out
}

/// Inverse of [`write_snapshot`]; the kernel rebuilds the age quadrature.
pub fn read_snapshot(bytes: &[u8], kernel: &MemoryKernel) -> Result<(Grid, StateField)> {
    let bad = |m: &str| Error::Config(format!("snapshot: {m}"));
    if bytes.len() < 40 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad("bad header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if u32_at(8) != 1 {
        return Err(bad("unsupported version"));
    }
    let dim = u32_at(12) as usize;
    let n = u32_at(16) as usize;
    let l = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let n_r = u32_at(28) as usize;
    let jump = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
    let grid = Grid::new(dim, n, l)?;
    let np = grid.len();
    let body = &bytes[40..];
    let want = if n_r == 0 { 4 * np } else { 4 * np + (n_r + 1) * np } * 8;
    if body.len() != want {
        return Err(bad("length mismatch"));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = |k: usize| vals[k * np..(k + 1) * np].to_vec();
    let memory = if n_r == 0 {
        Memory::ReducedZ { z: field(3) }
    } else {
        // r_max is not stored: it is n_r times the age spacing, which the
        // kernel horizon fixes.
        let r_max = kernel.horizon();
        Memory::History(HistoryField {
            eta: vals[4 * np..].to_vec(),
            jump,
            psi0: field(3),
            quad: Arc::new(AgeQuadrature::new(kernel, n_r, r_max)?),
        })
    };
    Ok((
        grid,
        StateField {
            psi: field(0),
            v: field(1),
            w: field(2),
            memory,
        },
    ))
}

/// CSV of the line through the origin along the first axis:
/// x, psi, v, w[, z].
pub fn slice_csv(grid: &Grid, state: &StateField) -> String {
    let z = match &state.memory {
        Memory::ReducedZ { z } => Some(z.clone()),
        Memory::History(_) => reduce_history(state).ok(),
    };
    let stride = grid.n.pow(grid.dim as u32 - 1);
    let mut s = String::from("x,psi,v,w,z\n");
    for i in 0..grid.n {
        let idx = i * stride;
        s.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            i as f64 * grid.dx(),
            state.psi[idx],
            state.v[idx],
            state.w[idx],
            z.as_ref().map_or(f64::NAN, |z| z[idx])
        ));
    }
    s
}
