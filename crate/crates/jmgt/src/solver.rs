//! Time integration: per-mode matrix exponentials for the linear block,
//! exponential time differencing for the nonlinearity, and the age-grid
//! history scheme.

use std::collections::VecDeque;

use nalgebra::{DMatrix, Matrix3, Matrix4, SMatrix, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_mode::reduced_generator;
use crate::history_state::{reduce_history, HistoryField, Memory, StateField};
use crate::linalg::expm;
use crate::medium_kernel::{KernelConstants, MediumParams, MemoryKernel};
use crate::spectral::{sup_norm, Grid};

type C = Complex64;
const ZERO: C = C { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Linear part only; the nonlinearity is switched off.
    ExactLinear,
    Etd2,
    Etd4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityForm {
    /// (2/τ)(k·v·w + ∇ψ·∇v).
    #[default]
    DefF,
    /// (2k/τ)(v·w + ∇ψ·∇v).
    MainSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    /// Steps between stored records.
    pub snapshot_stride: usize,
    #[serde(default)]
    pub nonlinearity_form: NonlinearityForm,
    /// Keep full states in trajectory records.
    #[serde(default)]
    pub keep_states: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64, scheme: Scheme) -> Self {
        SolverConfig {
            dt,
            t_end,
            scheme,
            dealias: true,
            snapshot_stride: 1,
            nonlinearity_form: NonlinearityForm::DefF,
            keep_states: false,
        }
    }

    pub fn validate(&self, params: &MediumParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be ≥ 0, got {}", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be ≥ 1".into()));
        }
        if self.scheme == Scheme::ExactLinear && params.k != 0.0 {
            return Err(Error::Config("ExactLinear requires k = 0".into()));
        }
        Ok(())
    }

    /// Number of steps: t_end/dt rounded up (tolerating round-off).
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Nonlinear forcing of the w equation from spectral ψ̂, v̂, ŵ; products are
/// formed pointwise and the 2/3 mask is applied to the result.
pub fn nonlinear_hat(
    grid: &Grid,
    params: &MediumParams,
    form: NonlinearityForm,
    dealias: bool,
    psi: &[C],
    v: &[C],
    w: &[C],
) -> Result<Vec<C>> {
    let vr = grid.inverse(v);
    let wr = grid.inverse(w);
    let mut dot = vec![0.0; grid.len()];
    for a in 0..grid.dim {
        let gp = grid.inverse(&grid.derivative(psi, a));
        let gv = grid.inverse(&grid.derivative(v, a));
        dot.iter_mut().zip(gp.iter().zip(&gv)).for_each(|(d, (x, y))| *d += x * y);
    }
    let (kt, tau) = (params.k, params.tau);
    let prod: Vec<f64> = match form {
        NonlinearityForm::DefF => (0..grid.len())
            .map(|i| 2.0 / tau * (kt * vr[i] * wr[i] + dot[i]))
            .collect(),
        NonlinearityForm::MainSystem => (0..grid.len())
            .map(|i| 2.0 * kt / tau * (vr[i] * wr[i] + dot[i]))
            .collect(),
    };
    if prod.iter().any(|x| !x.is_finite()) {
        return Err(Error::BlowUp {
            t: f64::NAN,
            detail: "non-finite nonlinear product".into(),
        });
    }
    let mut hat = grid.forward(&prod);
    if dealias {
        grid.apply_dealias(&mut hat);
    }
    Ok(hat)
}

/// Real-space w increment rate of the nonlinearity for a state.
pub fn rhs_nonlinear(
    grid: &Grid,
    state: &StateField,
    params: &MediumParams,
    form: NonlinearityForm,
    dealias: bool,
) -> Result<Vec<f64>> {
    let h = nonlinear_hat(
        grid,
        params,
        form,
        dealias,
        &grid.forward(&state.psi),
        &grid.forward(&state.v),
        &grid.forward(&state.w),
    )?;
    Ok(grid.inverse(&h))
}

struct ReducedOps {
    e: Matrix4<f64>,
    e_half: Matrix4<f64>,
    /// (h/2)·φ₁(Lh/2)e₃.
    p_half: Vector4<f64>,
    /// ETD weight vectors on e₃ (ETDRK2 uses q1, q2; ETDRK4 all three).
    q1: Vector4<f64>,
    q2: Vector4<f64>,
    q3: Vector4<f64>,
}

struct HistoryOps {
    e: Matrix3<f64>,
    /// Response of (ψ, v, w) to w-forcing s^k/k!, k = 0..3, over one step.
    r: SMatrix<f64, 3, 4>,
}

/// [φ₁(M)e₃, φ₂(M)e₃, φ₃(M)e₃] from the augmented exponential.
fn phi_e3(m: &Matrix4<f64>) -> Result<[Vector4<f64>; 3]> {
    let mut a = DMatrix::<f64>::zeros(7, 7);
    for i in 0..4 {
        for j in 0..4 {
            a[(i, j)] = m[(i, j)];
        }
    }
    a[(2, 4)] = 1.0;
    a[(4, 5)] = 1.0;
    a[(5, 6)] = 1.0;
    let e = expm(&a)?;
    let col = |c: usize| Vector4::new(e[(0, c)], e[(1, c)], e[(2, c)], e[(3, c)]);
    Ok([col(4), col(5), col(6)])
}

enum MemState {
    Reduced {
        /// Per-mode (ψ̂, v̂, ŵ, ẑ).
        u: Vec<[C; 4]>,
        ops: Vec<ReducedOps>,
    },
    History {
        u: Vec<[C; 3]>,
        ops: Vec<HistoryOps>,
        hist: HistoryField,
        /// Last ẑ values, oldest first.
        zs: VecDeque<Vec<C>>,
        /// Last nonlinear forcings, oldest first.
        ns: VecDeque<Vec<C>>,
    },
}

pub struct Solver {
    pub grid: Grid,
    pub params: MediumParams,
    pub kernel: MemoryKernel,
    pub config: SolverConfig,
    shell_of: Vec<usize>,
    shell_rho_sq: Vec<f64>,
    mem: MemState,
    t: f64,
    steps: usize,
    init_sup: f64,
}

fn vandermonde_inv(ts: &[f64]) -> DMatrix<f64> {
    let n = ts.len();
    let mut v = DMatrix::<f64>::zeros(n, n);
    for (i, &t) in ts.iter().enumerate() {
        let mut p = 1.0;
        for k in 0..n {
            if k > 0 {
                p *= t / k as f64;
            }
            v[(i, k)] = p;
        }
    }
    v.try_inverse().expect("distinct nodes")
}

impl Solver {
    pub fn new(
        grid: &Grid,
        state: &StateField,
        params: &MediumParams,
        kernel: &MemoryKernel,
        config: &SolverConfig,
    ) -> Result<Self> {
        config.validate(params)?;
        let kc = KernelConstants::new(kernel, params)?;
        let (shell_rho_sq, shell_of) = grid.shells();
        let h = config.dt;
        let tau = params.tau;
        let to_hat = |f: &[f64]| grid.forward(f);
        let (ph, vh, wh) = (to_hat(&state.psi), to_hat(&state.v), to_hat(&state.w));
        let mem = match &state.memory {
            Memory::ReducedZ { z } => {
                if !kernel.is_exponential() {
                    return Err(Error::UnsupportedRepresentation(
                        "reduced memory field requires an exponential kernel".into(),
                    ));
                }
                let ops = shell_rho_sq
                    .par_iter()
                    .map(|&r2| {
                        let l = reduced_generator(params, &kc, r2);
                        let l4 = Matrix4::from_iterator(l.iter().copied());
                        let lh = l4 * h;
                        let e = expm(&lh)?;
                        let e_half = expm(&(lh * 0.5))?;
                        let [p1h, _, _] = phi_e3(&(lh * 0.5))?;
                        let [p1, p2, p3] = phi_e3(&lh)?;
                        let (q1, q2, q3) = match config.scheme {
                            Scheme::Etd4 => (
                                (p1 - p2 * 3.0 + p3 * 4.0) * h,
                                (p2 - p3 * 2.0) * (2.0 * h),
                                (p3 * 4.0 - p2) * h,
                            ),
                            _ => (p1 * h, p2 * h, Vector4::zeros()),
                        };
                        Ok(ReducedOps {
                            e,
                            e_half,
                            p_half: p1h * (0.5 * h),
                            q1,
                            q2,
                            q3,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let zh = to_hat(z);
                let u = (0..grid.len()).map(|i| [ph[i], vh[i], wh[i], zh[i]]).collect();
                MemState::Reduced { u, ops }
            }
            Memory::History(hf) => {
                if (hf.quad.dr - h).abs() > 1e-12 * h {
                    return Err(Error::Config(format!(
                        "time step {h} differs from age spacing {}",
                        hf.quad.dr
                    )));
                }
                let ops = shell_rho_sq
                    .par_iter()
                    .map(|&r2| {
                        let mut a = DMatrix::<f64>::zeros(7, 7);
                        a[(0, 1)] = 1.0;
                        a[(1, 2)] = 1.0;
                        a[(2, 0)] = -kc.cg2 * r2 / tau;
                        a[(2, 1)] = -params.b * r2 / tau;
                        a[(2, 2)] = -1.0 / tau;
                        a[(2, 3)] = 1.0;
                        a[(3, 4)] = 1.0;
                        a[(4, 5)] = 1.0;
                        a[(5, 6)] = 1.0;
                        let ea = expm(&(a * h))?;
                        Ok(HistoryOps {
                            e: Matrix3::from_fn(|i, j| ea[(i, j)]),
                            r: SMatrix::<f64, 3, 4>::from_fn(|i, j| ea[(i, 3 + j)]),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let z0 = to_hat(&reduce_history(state)?);
                let u = (0..grid.len()).map(|i| [ph[i], vh[i], wh[i]]).collect();
                MemState::History {
                    u,
                    ops,
                    hist: hf.clone(),
                    zs: VecDeque::from(vec![z0]),
                    ns: VecDeque::new(),
                }
            }
        };
        let mut s = Solver {
            grid: grid.clone(),
            params: *params,
            kernel: kernel.clone(),
            config: *config,
            shell_of,
            shell_rho_sq,
            mem,
            t: 0.0,
            steps: 0,
            init_sup: state.sup(),
        };
        if s.is_nonlinear() {
            if let MemState::History { u, .. } = &s.mem {
                let n0 = s.nl_of3(u)?;
                if let MemState::History { ns, .. } = &mut s.mem {
                    ns.push_back(n0);
                }
            }
        }
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn is_nonlinear(&self) -> bool {
        self.config.scheme != Scheme::ExactLinear
    }

    fn nl(&self, psi: &[C], v: &[C], w: &[C]) -> Result<Vec<C>> {
        nonlinear_hat(
            &self.grid,
            &self.params,
            self.config.nonlinearity_form,
            self.config.dealias,
            psi,
            v,
            w,
        )
        .map_err(|e| self.stamp(e))
    }

    fn nl_of4(&self, u: &[[C; 4]]) -> Result<Vec<C>> {
        let col = |k: usize| u.iter().map(|x| x[k]).collect::<Vec<C>>();
        self.nl(&col(0), &col(1), &col(2))
    }

    fn nl_of3(&self, u: &[[C; 3]]) -> Result<Vec<C>> {
        let col = |k: usize| u.iter().map(|x| x[k]).collect::<Vec<C>>();
        self.nl(&col(0), &col(1), &col(2))
    }

    fn stamp(&self, e: Error) -> Error {
        match e {
            Error::BlowUp { detail, .. } => Error::BlowUp { t: self.t, detail },
            other => other,
        }
    }

    /// Spectral (ψ̂, v̂, ŵ, ẑ) of every mode.
    pub fn spectral_state(&self) -> Vec<[C; 4]> {
        match &self.mem {
            MemState::Reduced { u, .. } => u.clone(),
            MemState::History { u, zs, .. } => {
                let z = zs.back().unwrap();
                u.iter().zip(z).map(|(x, &zz)| [x[0], x[1], x[2], zz]).collect()
            }
        }
    }

    /// Current state in real space.
    pub fn state(&self) -> StateField {
        let g = &self.grid;
        let col4 = |u: &[[C; 4]], k: usize| g.inverse(&u.iter().map(|x| x[k]).collect::<Vec<C>>());
        match &self.mem {
            MemState::Reduced { u, .. } => StateField {
                psi: col4(u, 0),
                v: col4(u, 1),
                w: col4(u, 2),
                memory: Memory::ReducedZ { z: col4(u, 3) },
            },
            MemState::History { u, hist, .. } => {
                let col = |k: usize| g.inverse(&u.iter().map(|x| x[k]).collect::<Vec<C>>());
                StateField {
                    psi: col(0),
                    v: col(1),
                    w: col(2),
                    memory: Memory::History(hist.clone()),
                }
            }
        }
    }

    pub fn step(&mut self) -> Result<()> {
        match self.mem {
            MemState::Reduced { .. } => self.step_reduced()?,
            MemState::History { .. } => self.step_history()?,
        }
        self.steps += 1;
        self.t = self.steps as f64 * self.config.dt;
        self.check_blowup()
    }

    fn check_blowup(&self) -> Result<()> {
        let st = self.spectral_state();
        let g = &self.grid;
        let mut sup = 0.0f64;
        for k in 0..3 {
            let f = g.inverse(&st.iter().map(|x| x[k]).collect::<Vec<C>>());
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::BlowUp {
                    t: self.t,
                    detail: "non-finite field".into(),
                });
            }
            sup = sup.max(sup_norm(&f));
        }
        let limit = 1e6 * self.init_sup.max(f64::MIN_POSITIVE);
        if sup > limit {
            return Err(Error::BlowUp {
                t: self.t,
                detail: format!("sup norm {sup:.3e} exceeds 1e6 × initial {:.3e}", self.init_sup),
            });
        }
        Ok(())
    }

    fn step_reduced(&mut self) -> Result<()> {
        let scheme = self.config.scheme;
        let (u, ops) = match &self.mem {
            MemState::Reduced { u, ops } => (u, ops),
            _ => unreachable!(),
        };
        let shell = &self.shell_of;
        let apply = |m: &Matrix4<f64>, x: &[C; 4]| -> [C; 4] {
            let mut y = [ZERO; 4];
            for i in 0..4 {
                for j in 0..4 {
                    y[i] += x[j] * m[(i, j)];
                }
            }
            y
        };
        let axpy = |y: &mut [C; 4], a: &Vector4<f64>, s: C| {
            for i in 0..4 {
                y[i] += s * a[i];
            }
        };
        let new_u: Vec<[C; 4]> = match scheme {
            Scheme::ExactLinear => u
                .par_iter()
                .enumerate()
                .map(|(i, x)| apply(&ops[shell[i]].e, x))
                .collect(),
            Scheme::Etd2 => {
                let nu = self.nl_of4(u)?;
                let a: Vec<[C; 4]> = u
                    .par_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let o = &ops[shell[i]];
                        let mut y = apply(&o.e, x);
                        axpy(&mut y, &o.q1, nu[i]);
                        y
                    })
                    .collect();
                let na = self.nl_of4(&a)?;
                a.par_iter()
                    .enumerate()
                    .map(|(i, y0)| {
                        let mut y = *y0;
                        axpy(&mut y, &ops[shell[i]].q2, na[i] - nu[i]);
                        y
                    })
                    .collect()
            }
            Scheme::Etd4 => {
                let nu = self.nl_of4(u)?;
                let half = |src: &[[C; 4]], f: &(dyn Fn(usize) -> C + Sync)| -> Vec<[C; 4]> {
                    src.par_iter()
                        .enumerate()
                        .map(|(i, x)| {
                            let o = &ops[shell[i]];
                            let mut y = apply(&o.e_half, x);
                            axpy(&mut y, &o.p_half, f(i));
                            y
                        })
                        .collect()
                };
                let a = half(u, &|i| nu[i]);
                let na = self.nl_of4(&a)?;
                let b = half(u, &|i| na[i]);
                let nb = self.nl_of4(&b)?;
                let c = half(&a, &|i| nb[i] * 2.0 - nu[i]);
                let nc = self.nl_of4(&c)?;
                u.par_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let o = &ops[shell[i]];
                        let mut y = apply(&o.e, x);
                        axpy(&mut y, &o.q1, nu[i]);
                        axpy(&mut y, &o.q2, na[i] + nb[i]);
                        axpy(&mut y, &o.q3, nc[i]);
                        y
                    })
                    .collect()
            }
        };
        if let MemState::Reduced { u, .. } = &mut self.mem {
            *u = new_u;
        }
        Ok(())
    }

    fn step_history(&mut self) -> Result<()> {
        let h = self.config.dt;
        let tau = self.params.tau;
        let npts_nl = match self.config.scheme {
            Scheme::ExactLinear => 0,
            Scheme::Etd2 => 2,
            Scheme::Etd4 => 4,
        };
        let grid = self.grid.clone();
        let (u, ops, hist, zs, ns) = match &mut self.mem {
            MemState::History {
                u,
                ops,
                hist,
                zs,
                ns,
            } => (u, ops, hist, zs, ns),
            _ => unreachable!(),
        };
        hist.shift();
        let rule = hist.quad.rule(hist.jump);
        let s_hat = grid.forward(&hist.apply_rule(&rule));
        let wsum: f64 = rule.coeffs[1..].iter().sum();

        let q = zs.len().min(3);
        let tz: Vec<f64> = (0..=q).map(|i| (i as f64 - q as f64 + 1.0) * h).collect();
        let vz = vandermonde_inv(&tz);
        let p = ns.len().min(npts_nl);
        let vn = if p > 0 {
            let tn: Vec<f64> = (0..p).map(|i| (i as f64 - p as f64 + 1.0) * h).collect();
            Some(vandermonde_inv(&tn))
        } else {
            None
        };
        // per-shell weights: columns of R·V⁻¹
        let shell_w: Vec<(Vec<[f64; 3]>, Vec<[f64; 3]>)> = ops
            .iter()
            .map(|o| {
                let mul = |vinv: &DMatrix<f64>| -> Vec<[f64; 3]> {
                    let n = vinv.nrows();
                    (0..n)
                        .map(|c| {
                            let mut col = [0.0; 3];
                            for (i, ci) in col.iter_mut().enumerate() {
                                *ci = (0..n).map(|k| o.r[(i, k)] * vinv[(k, c)]).sum();
                            }
                            col
                        })
                        .collect()
                };
                (mul(&vz), vn.as_ref().map_or(vec![], mul))
            })
            .collect();
        let zlen = zs.len();
        let nlen = ns.len();
        let zs_ref: Vec<&Vec<C>> = zs.iter().skip(zlen - q).collect();
        let ns_ref: Vec<&Vec<C>> = ns.iter().skip(nlen - p).collect();
        let shell = &self.shell_of;
        let rho = &self.shell_rho_sq;
        let results: Vec<([C; 3], C)> = u
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let s = shell[i];
                let o = &ops[s];
                let (wz, wn) = &shell_w[s];
                let k = -rho[s] / tau;
                let mut base = [ZERO; 3];
                for r in 0..3 {
                    for c in 0..3 {
                        base[r] += x[c] * o.e[(r, c)];
                    }
                    for (j, zj) in zs_ref.iter().enumerate() {
                        base[r] += zj[i] * (k * wz[j][r]);
                    }
                    for (j, nj) in ns_ref.iter().enumerate() {
                        base[r] += nj[i] * wn[j][r];
                    }
                }
                let last = wz[q];
                let a = last[0];
                let psi1 = (base[0] + (s_hat[i] - x[0] * wsum) * (a * k)) / (1.0 - a * k * wsum);
                let z1 = s_hat[i] + (psi1 - x[0]) * wsum;
                let f1 = z1 * k;
                let mut y = [ZERO; 3];
                for r in 0..3 {
                    y[r] = base[r] + f1 * last[r];
                }
                y[0] = psi1;
                (y, z1)
            })
            .collect();
        let dpsi_hat: Vec<C> = results.iter().zip(u.iter()).map(|(r, x)| r.0[0] - x[0]).collect();
        hist.add_increment(&grid.inverse(&dpsi_hat));
        let (nu, nz): (Vec<[C; 3]>, Vec<C>) = results.into_iter().unzip();
        *u = nu;
        zs.push_back(nz);
        while zs.len() > 3 {
            zs.pop_front();
        }
        if npts_nl > 0 {
            let u_now = u.clone();
            let n1 = self.nl_of3(&u_now)?;
            if let MemState::History { ns, .. } = &mut self.mem {
                ns.push_back(n1);
                while ns.len() > npts_nl {
                    ns.pop_front();
                }
            }
        }
        Ok(())
    }
}

/// One stored sample of a run.
#[derive(Debug, Clone)]
pub struct Record {
    pub t: f64,
    pub step: usize,
    /// Named diagnostic values from the hook.
    pub values: Vec<(String, f64)>,
    pub state: Option<StateField>,
}

#[derive(Debug)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// Set when the run stopped early; the records up to that point are kept.
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Values of diagnostic `name` across records.
    pub fn series(&self, name: &str) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| {
                r.values
                    .iter()
                    .find(|(n, _)| n == name)
                    .map_or(f64::NAN, |(_, v)| *v)
            })
            .collect()
    }

    /// CSV: t, then the diagnostic columns of the first record.
    pub fn to_csv(&self) -> String {
        let names: Vec<String> = self
            .records
            .first()
            .map(|r| r.values.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        let mut s = String::from("t");
        for n in &names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{:.17e}", r.t));
            for n in &names {
                let v = r.values.iter().find(|(m, _)| m == n).map_or(f64::NAN, |x| x.1);
                s.push_str(&format!(",{v:.17e}"));
            }
            s.push('\n');
        }
        s
    }
}

pub type Diagnostics<'a> = dyn FnMut(&Solver) -> Vec<(String, f64)> + 'a;

/// Runs to `config.t_end`, recording every `snapshot_stride` steps (and
/// the final step). Step failures end the run with a partial trajectory.
pub fn run(
    grid: &Grid,
    init: &StateField,
    params: &MediumParams,
    kernel: &MemoryKernel,
    config: &SolverConfig,
    diagnostics: &mut Diagnostics<'_>,
) -> Result<Trajectory> {
    let mut solver = Solver::new(grid, init, params, kernel, config)?;
    let mut records = Vec::new();
    let record = |s: &Solver, diag: &mut Diagnostics<'_>| Record {
        t: s.time(),
        step: s.steps(),
        values: diag(s),
        state: if config.keep_states { Some(s.state()) } else { None },
    };
    records.push(record(&solver, diagnostics));
    let n = config.n_steps();
    for k in 1..=n {
        if let Err(e) = solver.step() {
            return Ok(Trajectory {
                records,
                failure: Some(e),
            });
        }
        if k % config.snapshot_stride == 0 || k == n {
            records.push(record(&solver, diagnostics));
        }
    }
    Ok(Trajectory {
        records,
        failure: None,
    })
}

/// Single step from `state`; multistep history schemes start at low order.
pub fn step(
    grid: &Grid,
    state: &StateField,
    params: &MediumParams,
    kernel: &MemoryKernel,
    config: &SolverConfig,
) -> Result<StateField> {
    let mut s = Solver::new(grid, state, params, kernel, config)?;
    s.step()?;
    Ok(s.state())
}
