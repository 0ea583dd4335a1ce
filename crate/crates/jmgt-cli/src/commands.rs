//! The five subcommands. Each returns a JSON report, the files it wrote and
//! an exit code.

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use jmgt::decay_lab::{
    fit_decay, radial_field_evolution, regularity_loss_experiment, series_csv, verify_appendix_inequalities,
    w_and_v_decay, AppendixSpec, DecayFit, Field,
};
use jmgt::energy::{energy_residuals, select_lyapunov_coeffs, sobolev_suite, EnergyContext};
use jmgt::fourier_mode::{
    abscissa_sweep, assemble_mode_system, propagate_mode, reduced_char_poly, routh_hurwitz_no_memory, Representation,
    Stability,
};
use jmgt::history_state::{init_state, write_snapshot};
use jmgt::medium_kernel::{classify_regime, validate_assumptions, KernelConstants, Regime};
use jmgt::numerics::logspace;
use jmgt::oracle::{expm_eigen, poly_roots};
use jmgt::solver::{run, Scheme, Solver, SolverConfig};
use jmgt::spectral::{sup_norm, Grid};
use jmgt::{Error, MediumParams};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::{exit, CliError};

pub struct Outcome {
    pub report: Value,
    pub files: Vec<PathBuf>,
    pub code: i32,
}

fn write(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let p = dir.join(name);
    std::fs::write(&p, bytes).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
    files.push(p);
    Ok(())
}

fn has_memory(cfg: &ExperimentConfig) -> bool {
    !(cfg.kernel.kind == crate::config::KernelKindCfg::Exponential && cfg.kernel.m == 0.0)
}

/// Checks the kernel assumptions; exit 2 when any fails.
pub fn validate_kernel(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let kernel = cfg.kernel()?;
    let report = validate_assumptions(&kernel, &params)?;
    let pass = report.all_pass();
    Ok(Outcome {
        report: json!({ "assumptions": report, "pass": pass }),
        files: vec![],
        code: if pass { exit::OK } else { exit::KERNEL },
    })
}

/// Spectral abscissa sweep and regime classification.
pub fn symbol(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let kernel = cfg.kernel()?;
    let a = &cfg.analysis;
    let class = classify_regime(&params, &kernel);
    let mut files = vec![];
    let (summary, curve) = if has_memory(cfg) {
        let rho = logspace(a.rho_min, a.rho_max, a.rho_points);
        let curve = abscissa_sweep(&params, &kernel, &rho)?;
        let stable = curve.samples.iter().all(|s| s.converged && s.abscissa < 0.0);
        let summary = match (class.regime, stable) {
            (Regime::Critical, true) => {
                let scaling = (curve.low_slope - 2.0).abs() < 0.1 && (curve.high_slope + 2.0).abs() < 0.1;
                if scaling {
                    "Critical; stabilized by memory; regularity-loss scaling confirmed".to_string()
                } else {
                    format!(
                        "Critical; stabilized by memory; high-frequency slope {:.3} differs from -2",
                        curve.high_slope
                    )
                }
            }
            (Regime::Subcritical, true) => "Subcritical; uniformly damped".to_string(),
            (_, false) => format!("{:?}; unstable modes present", class.regime),
            (Regime::SupercriticalChiNegative, true) => "SupercriticalChiNegative; stable on the sampled grid".into(),
        };
        write(dir, "symbol.csv", curve.to_csv().as_bytes(), &mut files)?;
        (summary, Some(curve))
    } else {
        let summary = match routh_hurwitz_no_memory(&params, 1.0)? {
            Stability::AsymptoticallyStable => "AsymptoticallyStable".to_string(),
            Stability::Marginal => "Marginal (undamped oscillatory modes)".to_string(),
            Stability::Unstable => "Unstable".to_string(),
        };
        (summary, None)
    };
    let fit = curve.as_ref().map(|c| {
        json!({
            "low_coef": c.low_coef, "high_coef": c.high_coef,
            "low_slope": c.low_slope, "high_slope": c.high_slope, "high_limit": c.high_limit,
        })
    });
    Ok(Outcome {
        report: json!({ "classification": class, "summary": summary, "abscissa_fit": fit }),
        files,
        code: exit::OK,
    })
}

/// Time integration with energy diagnostics; exit 3 on blow-up.
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let kernel = cfg.kernel()?;
    let grid = cfg.grid()?;
    let scfg = cfg.solver_config(&params)?;
    let init = init_state(&grid, &cfg.initial_data(), &params, &kernel, cfg.memory_repr())?;
    let mut ctx = EnergyContext::new(&grid, &params, &kernel)?;
    if scfg.scheme != Scheme::ExactLinear {
        ctx = ctx.with_nonlinearity(scfg.nonlinearity_form, scfg.dealias);
    }
    if let Ok(c) = select_lyapunov_coeffs(&params, &kernel) {
        ctx = ctx.with_lyapunov(c);
    }
    let s = cfg.analysis.s;
    let (energy_names, energy_note) = match sobolev_suite(&ctx, &init, s) {
        Ok(r) => (r.columns().into_iter().map(|(k, _)| k).collect::<Vec<_>>(), None),
        Err(e) => (vec![], Some(e.to_string())),
    };
    let snap_dir = dir.join("snapshots");
    if cfg.output.snapshots {
        std::fs::create_dir_all(&snap_dir).map_err(|e| CliError::Usage(format!("{}: {e}", snap_dir.display())))?;
    }
    let io_error = RefCell::new(None::<String>);
    let energy_warning = RefCell::new(None::<String>);
    let snapshots = RefCell::new(Vec::new());
    let mut hook = |sv: &Solver| {
        let st = sv.state();
        let mut cols = vec![
            ("sup_psi".to_string(), sup_norm(&st.psi)),
            ("sup_v".to_string(), sup_norm(&st.v)),
            ("sup_w".to_string(), sup_norm(&st.w)),
        ];
        if energy_note.is_none() {
            match sobolev_suite(&ctx, &st, s) {
                Ok(r) => cols.extend(r.columns()),
                Err(e) => {
                    cols.extend(energy_names.iter().map(|k| (k.clone(), f64::NAN)));
                    energy_warning
                        .borrow_mut()
                        .get_or_insert_with(|| format!("t = {}: {e}", sv.time()));
                }
            }
        }
        if cfg.output.snapshots {
            let p = snap_dir.join(format!("step_{:08}.bin", sv.steps()));
            match std::fs::write(&p, write_snapshot(&grid, &st)) {
                Ok(()) => snapshots.borrow_mut().push(p),
                Err(e) => *io_error.borrow_mut() = Some(format!("{}: {e}", p.display())),
            }
        }
        cols
    };
    let traj = run(&grid, &init, &params, &kernel, &scfg, &mut hook)?;
    if let Some(e) = io_error.into_inner() {
        return Err(CliError::Usage(e));
    }
    let mut files = vec![];
    write(dir, "trajectory.csv", traj.to_csv().as_bytes(), &mut files)?;
    files.extend(snapshots.into_inner());
    let last = traj.records.last();
    let (failure, code) = match &traj.failure {
        None => (Value::Null, exit::OK),
        Some(Error::BlowUp { t, detail }) => (json!({ "kind": "blow_up", "t": t, "detail": detail }), exit::BLOW_UP),
        Some(e) => return Err(CliError::Lib(Error::NoConvergence(e.to_string()))),
    };
    Ok(Outcome {
        report: json!({
            "records": traj.records.len(),
            "final_time": last.map(|r| r.t),
            "final_step": last.map(|r| r.step),
            "final_values": last.map(|r| r.values.iter().map(|(k, v)| (k.clone(), json!(finite_or_null(*v)))).collect::<serde_json::Map<String, Value>>()),
            "energy_columns": energy_note.is_none(),
            "energy_note": energy_note,
            "energy_warning": energy_warning.into_inner(),
            "failure": failure,
        }),
        files,
        code,
    })
}

/// Radial decay experiments; exit 5 when a fit misses its target.
pub fn decay(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let kernel = cfg.kernel()?;
    let a = &cfg.analysis;
    let dc = cfg.decay_config();
    let mut files = vec![];
    if a.regularity_loss {
        let r = regularity_loss_experiment(&params, &kernel, a.decay_n, a.s_data, &dc)?;
        write(dir, "decay_series.csv", series_csv(&r.series).as_bytes(), &mut files)?;
        let mut v = serde_json::to_value(&r).expect("report serializes");
        v.as_object_mut().expect("object").remove("series");
        return Ok(Outcome {
            report: json!({ "regularity_loss": v }),
            files,
            code: exit::OK,
        });
    }
    let profile = cfg.profile();
    let n = a.decay_n as f64;
    let requests: Vec<(Field, usize)> = a.decay_j.iter().map(|&j| (Field::U, j)).collect();
    let series = radial_field_evolution(&profile, &params, &kernel, &requests, &dc.times())?;
    let mut fits: Vec<(String, DecayFit)> = series
        .iter()
        .map(|s| {
            let target = -0.25 * n - 0.5 * s.j as f64;
            let f = fit_decay(&s.times, &s.values, dc.window)?.against(target, dc.tol);
            Ok((format!("U_j{}", s.j), f))
        })
        .collect::<jmgt::Result<_>>()?;
    let mut all = series;
    if a.w_and_v {
        let (w, v) = w_and_v_decay(&profile, &params, &kernel, 0, &dc)?;
        fits.push(("w_j0".into(), w));
        fits.push(("v_j0".into(), v));
    }
    if a.w_and_v {
        let extra = radial_field_evolution(&profile, &params, &kernel, &[(Field::W, 0), (Field::V, 0)], &dc.times())?;
        all.extend(extra);
    }
    write(dir, "decay_series.csv", series_csv(&all).as_bytes(), &mut files)?;
    let pass = fits.iter().all(|(_, f)| f.pass);
    let warnings: Vec<String> = fits
        .iter()
        .filter(|(_, f)| !f.power_law)
        .map(|(name, f)| format!("{name}: r2 = {:.6} below the power-law threshold", f.r2))
        .collect();
    Ok(Outcome {
        report: json!({
            "profile": profile,
            "fits": fits.iter().map(|(k, f)| json!({ "series": k, "fit": f })).collect::<Vec<_>>(),
            "warnings": warnings,
            "pass": pass,
        }),
        files,
        code: if pass { exit::OK } else { exit::FIT },
    })
}

/// Residual, auxiliary-inequality and oracle checks; exit 4 on a violation.
pub fn verify(cfg: &ExperimentConfig, dir: &Path, mis_signed_f3: bool) -> Result<Outcome, CliError> {
    let base = cfg.params()?;
    let params = MediumParams::new(base.tau, base.c, base.b, 0.0)?;
    let kernel = cfg.kernel()?;
    let a = &cfg.analysis;
    let grid = Grid::new(1, a.verify_points, cfg.grid.length)?;
    let init = init_state(&grid, &cfg.initial_data(), &params, &kernel, cfg.memory_repr())?;
    let mut scfg = SolverConfig::new(cfg.solver.dt, a.verify_t_end, Scheme::ExactLinear);
    scfg.snapshot_stride = 1;
    scfg.keep_states = true;
    let traj = run(&grid, &init, &params, &kernel, &scfg, &mut |_: &Solver| vec![])?;
    if let Some(e) = traj.failure {
        return Err(CliError::Lib(e));
    }
    let mut ctx = EnergyContext::new(&grid, &params, &kernel)?;
    let lyap_note = match select_lyapunov_coeffs(&params, &kernel) {
        Ok(c) => {
            ctx = ctx.with_lyapunov(c);
            None
        }
        Err(e) => Some(e.to_string()),
    };
    if mis_signed_f3 {
        ctx.f3_sign = -1.0;
    }
    const CHECKS: [&str; 8] = ["E1", "E2", "w", "lyapunov", "F3", "F4", "F3_identity", "F4_identity"];
    let mut files = vec![];
    let mut residuals = vec![];
    let mut csv = String::from("kappa,t,slack_e1,slack_e2,slack_w,slack_lyap,slack_f3,slack_f4,tol,tol_lyap,tol_aux\n");
    let mut pass = true;
    for &kappa in &a.kappa {
        let r = energy_residuals(&ctx, &traj, kappa)?;
        for i in 0..r.t.len() {
            let get = |v: &Vec<f64>| v.get(i).copied().unwrap_or(f64::NAN);
            csv.push_str(&format!(
                "{kappa},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.t[i],
                get(&r.slack_e1),
                get(&r.slack_e2),
                get(&r.slack_w),
                get(&r.slack_lyap),
                get(&r.slack_f3),
                get(&r.slack_f4),
                get(&r.tol),
                get(&r.tol_lyap),
                get(&r.tol_aux),
            ));
        }
        let worst = r.worst();
        let ok = r.all_within_tolerance();
        pass &= ok;
        let margins: serde_json::Map<String, Value> =
            CHECKS.iter().zip(worst).map(|(k, m)| (k.to_string(), json!(finite_or_null(m)))).collect();
        residuals.push(json!({ "kappa": kappa, "worst_margin": margins, "pass": ok }));
    }
    write(dir, "residuals.csv", csv.as_bytes(), &mut files)?;
    let appendix = if a.appendix {
        let r = verify_appendix_inequalities(&AppendixSpec {
            seed: cfg.seed,
            ..AppendixSpec::default()
        })?;
        pass &= r.pass;
        Some(r)
    } else {
        None
    };
    let oracle = if a.oracle {
        let o = oracle_checks(&params, &kernel)?;
        pass &= o["pass"].as_bool().unwrap_or(false);
        Some(o)
    } else {
        None
    };
    Ok(Outcome {
        report: json!({
            "residuals": residuals,
            "lyapunov_note": lyap_note,
            "f3_sign": ctx.f3_sign,
            "appendix": appendix,
            "oracle": oracle,
            "pass": pass,
        }),
        files,
        code: if pass { exit::OK } else { exit::VIOLATION },
    })
}

fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Mode propagator against the eigen-expansion exponential, and the mode
/// spectrum against the roots of the characteristic polynomial.
fn oracle_checks(params: &MediumParams, kernel: &jmgt::MemoryKernel) -> Result<Value, CliError> {
    let kc = KernelConstants::new(kernel, params)?;
    let mut worst_prop: f64 = 0.0;
    let mut worst_root: f64 = 0.0;
    for rho_sq in logspace(1e-2, 1e2, 9) {
        let sys = assemble_mode_system(params, kernel, rho_sq, Representation::Reduced)?;
        let x0 = sys.initial_state(1.0, 0.5, 0.0);
        for t in [0.5, 2.0] {
            let reference = &expm_eigen(&sys.generator, t)?.value * &x0;
            let got = propagate_mode(&sys, &x0, t)?;
            worst_prop = worst_prop.max((&got - &reference).norm() / reference.norm());
        }
        let roots = poly_roots(&reduced_char_poly(params, &kc, rho_sq))?.value;
        let ev = sys.eigenvalues()?;
        for r in &roots {
            let d = ev.iter().map(|e| (e - r).norm()).fold(f64::INFINITY, f64::min);
            worst_root = worst_root.max(d / (1.0 + r.norm()));
        }
    }
    let pass = worst_prop <= 1e-9 && worst_root <= 1e-8;
    Ok(json!({
        "propagator_rel_error": worst_prop,
        "propagator_tol": 1e-9,
        "eigenvalue_rel_error": worst_root,
        "eigenvalue_tol": 1e-8,
        "pass": pass,
    }))
}
