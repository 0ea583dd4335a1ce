//! Acceptance suite: one PASS/FAIL line per criterion, each with a
//! runtime budget. Exits non-zero when any criterion fails.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use jmgt::decay_lab::{
    fit_decay, radial_field_evolution, regularity_loss_experiment, verify_appendix_inequalities, w_and_v_decay,
    AppendixSpec, DecayConfig, Field, RadialProfile,
};
use jmgt::energy::{
    energy_residuals, random_history_state, select_lyapunov_coeffs, sobolev_suite, weighted_norms_from,
    weighted_sample, EnergyContext,
};
use jmgt::fourier_mode::{
    abscissa_sweep, assemble_mode_system, no_memory_cubic, no_memory_roots, routh_hurwitz_no_memory, Representation,
    Stability,
};
use jmgt::history_state::{init_state, reduce_history, InitialData, MemoryRepr, Profile};
use jmgt::medium_kernel::effective_speed_sq;
use jmgt::numerics::logspace;
use jmgt::oracle::{direct_convolution, poly_eval, poly_roots};
use jmgt::solver::{run, NonlinearityForm, Scheme, Solver, SolverConfig};
use jmgt::spectral::{l2_norm, Grid};
use jmgt::{Error, MediumParams, MemoryKernel, Result};
use num_complex::Complex64;

type Check = Result<(bool, String)>;

fn critical() -> (MediumParams, MemoryKernel) {
    (
        MediumParams::critical(1.0, 1.0, 0.0).unwrap(),
        MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap(),
    )
}

fn abscissa(p: &MediumParams, k: &MemoryKernel, rho: f64) -> Result<f64> {
    let ev = assemble_mode_system(p, k, rho * rho, Representation::Reduced)?.eigenvalues()?;
    Ok(ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

fn spread(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Routh–Hurwitz and root-finding agree on the memory-free cubic.
fn stability_dichotomy() -> Check {
    let rhos = logspace(1e-3, 1e3, 40);
    let mut worst_residual: f64 = 0.0;
    let mut disagreements = 0;
    for b in [0.5, 1.0, 1.5] {
        let p = MediumParams::new(1.0, 1.0, b, 0.0)?;
        let expected = if b > 1.0 {
            Stability::AsymptoticallyStable
        } else if b == 1.0 {
            Stability::Marginal
        } else {
            Stability::Unstable
        };
        for &rho in &rhos {
            let cubic = no_memory_cubic(&p, rho * rho);
            let roots = no_memory_roots(&p, rho * rho)?;
            let direct = poly_roots(&cubic)?.value;
            for r in roots.iter().chain(&direct) {
                let scale: f64 = cubic.iter().rev().enumerate().map(|(k, a)| a.abs() * r.norm().powi(k as i32)).sum();
                worst_residual = worst_residual.max(poly_eval(&cubic, *r).norm() / scale);
            }
            let top = direct.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let size = direct.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let from_roots = if top.abs() <= 1e-9 * size {
                // marginal only with a purely imaginary conjugate pair
                let imag = direct.iter().filter(|z| z.re.abs() <= 1e-9 * size && z.im.abs() > 0.0).count();
                if imag == 2 {
                    Stability::Marginal
                } else {
                    Stability::Unstable
                }
            } else if top < 0.0 {
                Stability::AsymptoticallyStable
            } else {
                Stability::Unstable
            };
            let rh = routh_hurwitz_no_memory(&p, rho * rho)?;
            if rh != expected || from_roots != expected {
                disagreements += 1;
            }
        }
    }
    let p = MediumParams::new(1.0, 1.0, 1.0, 0.0)?;
    let mut r = poly_roots(&no_memory_cubic(&p, 1.0))?.value;
    r.sort_by(|a, b| a.im.total_cmp(&b.im));
    let exact = [Complex64::new(0.0, -1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0)];
    let exact_err = r.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok((
        disagreements == 0 && worst_residual <= 1e-10 && exact_err <= 1e-12,
        format!(
            "{disagreements} disagreements over 120 cases, max relative residual {worst_residual:.1e}, \
             roots of λ³+λ²+λ+1 within {exact_err:.1e} of {{-1, ±i}}"
        ),
    ))
}

fn memory_stabilizes() -> Check {
    let (p, k) = critical();
    let c = abscissa_sweep(&p, &k, &logspace(1e-3, 1e3, 40))?;
    let max = c.samples.iter().map(|s| s.abscissa).fold(f64::NEG_INFINITY, f64::max);
    let ok = c.samples.iter().all(|s| s.converged && s.abscissa < 0.0);
    Ok((ok, format!("max abscissa {max:.3e} over 40 frequencies")))
}

fn regularity_loss_scaling() -> Check {
    let (p, k) = critical();
    let hi = [abscissa(&p, &k, 1e2)? * 1e4, abscissa(&p, &k, 1e3)? * 1e6];
    let lo = [abscissa(&p, &k, 1e-2)? / 1e-4, abscissa(&p, &k, 1e-3)? / 1e-6];
    let sub = MediumParams::new(1.0, 1.0, 1.5, 0.0)?;
    let s = [abscissa(&sub, &k, 1e2)?, abscissa(&sub, &k, 1e3)?];
    let mean = 0.5 * (s[0] + s[1]);
    let sub_dev = s.iter().map(|x| (x - mean).abs() / mean.abs()).fold(0.0, f64::max);
    let ok = spread(hi[0], hi[1]) <= 0.1 && spread(lo[0], lo[1]) <= 0.1 && mean < 0.0 && sub_dev <= 0.05;
    Ok((
        ok,
        format!(
            "abscissa·ρ² = {:.4}, {:.4}; abscissa/ρ² = {:.4}, {:.4}; subcritical {:.4}, {:.4}",
            hi[0], hi[1], lo[0], lo[1], s[0], s[1]
        ),
    ))
}

fn decay_exponents() -> Check {
    let (p, k) = critical();
    let cfg = DecayConfig::default();
    let series = radial_field_evolution(
        &RadialProfile::gaussian(3),
        &p,
        &k,
        &[(Field::U, 0), (Field::U, 1)],
        &cfg.times(),
    )?;
    let mut fits = vec![];
    for (s, target) in series.iter().zip([-0.75, -1.25]) {
        fits.push((format!("U j={}", s.j), fit_decay(&s.times, &s.values, cfg.window)?.against(target, cfg.tol)));
    }
    let fast = MediumParams::critical(0.1, 1.0, 0.0)?;
    let (w, v) = w_and_v_decay(&RadialProfile::gaussian(3), &fast, &k, 0, &cfg)?;
    fits.push(("w".into(), w));
    fits.push(("v".into(), v));
    let ok = fits.iter().all(|(_, f)| f.pass);
    let detail = fits
        .iter()
        .map(|(n, f)| format!("{n}: {:.4}", f.exponent))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, detail))
}

fn decay_degradation() -> Check {
    let (p, k) = critical();
    let r = regularity_loss_experiment(&p, &k, 3, 0.0, &DecayConfig::default())?;
    let ok = r.critical_limited.exponent >= -0.5 && (r.subcritical_limited.exponent + 0.75).abs() <= 0.05;
    Ok((
        ok,
        format!(
            "β = {}: critical {:.4}, subcritical {:.4}, Gaussian critical {:.4}",
            r.beta, r.critical_limited.exponent, r.subcritical_limited.exponent, r.critical_gaussian.exponent
        ),
    ))
}

fn representation_equivalence() -> Check {
    let (p, k) = critical();
    let l = 40.0;
    let grid = Grid::new(1, 256, l)?;
    let data = InitialData {
        psi0: Profile::Gaussian {
            amplitude: 1.0,
            width: l / 20.0,
            center: None,
        },
        psi1: Profile::Gaussian {
            amplitude: -0.5,
            width: l / 15.0,
            center: None,
        },
        psi2: Profile::Zero,
    };
    let dt = 0.01;
    let cfg = SolverConfig::new(dt, 10.0, Scheme::ExactLinear);
    let a = init_state(&grid, &data, &p, &k, MemoryRepr::ReducedZ)?;
    let b = init_state(&grid, &data, &p, &k, MemoryRepr::history_for_dt(dt, 25.0 * 1.0))?;
    let mut sa = Solver::new(&grid, &a, &p, &k, &cfg)?;
    let mut sb = Solver::new(&grid, &b, &p, &k, &cfg)?;
    let mut times = vec![0.0];
    let mut hist = vec![sb.state().psi];
    for _ in 0..cfg.n_steps() {
        sa.step()?;
        sb.step()?;
        times.push(sb.time());
        hist.push(sb.state().psi);
    }
    let (xa, xb) = (sa.state(), sb.state());
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in [(&xb.psi, &xa.psi), (&xb.v, &xa.v), (&xb.w, &xa.w)] {
        let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        num += l2_norm(&grid, &d).powi(2);
        den += l2_norm(&grid, y).powi(2);
    }
    let repr_err = (num / den).sqrt();
    // ∫₀^∞ gη dr = Gψ(t) − ∫₀ᵗ gψ(t−r) dr
    let big_g = p.c * p.c - effective_speed_sq(&k, &p)?;
    let z = reduce_history(&xb)?;
    let conv = direct_convolution(&times, &hist, &k)?;
    let rebuilt: Vec<f64> = xb.psi.iter().zip(&conv.value).map(|(a, b)| big_g * a - b).collect();
    let diff: Vec<f64> = z.iter().zip(&rebuilt).map(|(a, b)| a - b).collect();
    let oracle_err = l2_norm(&grid, &diff) / l2_norm(&grid, &rebuilt);
    Ok((
        repr_err <= 1e-6 && oracle_err <= 1e-6,
        format!("History vs ReducedZ {repr_err:.2e}, history vs direct convolution {oracle_err:.2e}"),
    ))
}

fn energy_machinery() -> Check {
    let (p, k) = critical();
    let grid = Grid::new(2, 16, 12.0)?;
    let ctx = EnergyContext::new(&grid, &p, &k)?;
    let mut worst_identity: f64 = 0.0;
    for seed in 0..100 {
        let st = random_history_state(&grid, &p, &k, 32, 16.0, seed)?;
        let r = sobolev_suite(&ctx, &st, 3)?;
        let se: f64 = r.e_bold.iter().sum();
        let sd: f64 = r.d_bold.iter().sum();
        worst_identity = worst_identity
            .max((se - r.triple_norm_sq).abs() / r.triple_norm_sq)
            .max((sd - r.seminorm_sq).abs() / r.seminorm_sq);
    }
    let l = 40.0;
    let grid = Grid::new(1, 64, l)?;
    let data = InitialData {
        psi0: Profile::Gaussian {
            amplitude: 1.0,
            width: l / 12.0,
            center: None,
        },
        psi1: Profile::Gaussian {
            amplitude: -0.5,
            width: l / 10.0,
            center: None,
        },
        psi2: Profile::Zero,
    };
    let dt = 0.02;
    let st = init_state(&grid, &data, &p, &k, MemoryRepr::history_for_dt(dt, 25.0))?;
    let mut cfg = SolverConfig::new(dt, 6.0, Scheme::ExactLinear);
    cfg.snapshot_stride = 1;
    cfg.keep_states = true;
    let traj = run(&grid, &st, &p, &k, &cfg, &mut |_: &Solver| vec![])?;
    let ctx = EnergyContext::new(&grid, &p, &k)?.with_lyapunov(select_lyapunov_coeffs(&p, &k)?);
    let mut slack_ok = true;
    let mut margins = vec![];
    let mut ratio = (f64::INFINITY, 0.0f64);
    for kappa in 0..2 {
        let r = energy_residuals(&ctx, &traj, kappa)?;
        slack_ok &= r.all_within_tolerance();
        margins.push(r.worst().iter().cloned().fold(f64::INFINITY, f64::min));
        if kappa == 0 {
            for x in &r.lyap_ratio {
                ratio = (ratio.0.min(*x), ratio.1.max(*x));
            }
        }
    }
    let ok = worst_identity <= 1e-10 && slack_ok && ratio.0 > 0.0 && ratio.1.is_finite();
    Ok((
        ok,
        format!(
            "identities {worst_identity:.1e}, smallest margin κ=0 {:.2e}, κ=1 {:.2e}, 𝓕/𝐄 in [{:.4}, {:.4}]",
            margins[0], margins[1], ratio.0, ratio.1
        ),
    ))
}

fn lyapunov_chain() -> Check {
    let (p, k) = critical();
    let c = select_lyapunov_coeffs(&p, &k)?;
    let positive = c.constants.iter().chain(&c.literal_constants).all(|x| x.1 > 0.0);
    let no_mem = MemoryKernel::exponential(0.0, 1.0, 1.0)?;
    let fails = matches!(select_lyapunov_coeffs(&p, &no_mem), Err(Error::NoAdmissibleCoefficients(_)));
    let smallest = c.constants.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    Ok((
        positive && fails,
        format!("smallest constant {smallest:.3e}, memoryless selection rejected: {fails}"),
    ))
}

/// Small-data nonlinear run on a 32³ torus with band-limited data.
fn nonlinear_small_data() -> Check {
    let p = MediumParams::critical(1.0, 1.0, 1.0)?;
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0)?;
    // flat spectrum on |k_i| ≤ 8 with band edge ρ_c = 0.5
    let (band, rho_c) = (8, 0.5);
    let l = 2.0 * PI * band as f64 / rho_c;
    let grid = Grid::new(3, 32, l)?;
    let profile = |a: f64| Profile::BandLimitedRandom {
        amplitude: a,
        k_max: band,
        decay: 0.0,
        seed: 9,
    };
    let data = InitialData {
        psi0: profile(1.0),
        psi1: Profile::Zero,
        psi2: profile(1.0 / p.tau),
    }
    .scaled(1e-3);
    let dt = 0.2;
    let mut st = init_state(&grid, &data, &p, &k, MemoryRepr::history_for_dt(dt, 25.0))?;
    // the zero mode of v + τw is conserved by the linear flow
    for f in [&mut st.v, &mut st.w] {
        let m = f.iter().sum::<f64>() / f.len() as f64;
        f.iter_mut().for_each(|x| *x -= m);
    }
    let ctx = EnergyContext::new(&grid, &p, &k)?.with_nonlinearity(NonlinearityForm::DefF, true);
    let mut cfg = SolverConfig::new(dt, 200.0, Scheme::Etd4);
    cfg.snapshot_stride = 5;
    let s = 4;
    let samples = RefCell::new(vec![]);
    let failure = RefCell::new(None);
    let mut traj = run(&grid, &st, &p, &k, &cfg, &mut |sv: &Solver| {
        let state = sv.state();
        match weighted_sample(&ctx, &state, s, sv.time()) {
            Ok(w) => samples.borrow_mut().push(w),
            Err(e) => *failure.borrow_mut() = Some(e),
        }
        vec![("v_l2".into(), l2_norm(&grid, &state.v))]
    })?;
    if let Some(e) = failure.into_inner().or(traj.failure.take()) {
        return Ok((false, format!("run stopped: {e}")));
    }
    let samples = samples.into_inner();
    let e0 = samples[0].triple[0].sqrt();
    let energy_ratio = samples
        .iter()
        .filter(|x| x.t >= 10.0)
        .map(|x| x.triple[0].sqrt() / e0)
        .fold(0.0, f64::max);
    // 𝓜 is a running sup; after its first plateau it must stay flat
    let m = weighted_norms_from(&samples, s, 3)?.m_cal;
    let lag = 10;
    let plateau = (0..m.len() - lag).find(|&i| m[i + lag] <= m[i] * 1.001);
    let m_growth = plateau.map(|i| m[m.len() - 1] / m[i] - 1.0);
    // torus decay of ‖v‖ between the diffusive and the wrap-around time
    let lambda_low = -abscissa(&p, &k, 1e-2)? / 1e-4;
    let c_g = effective_speed_sq(&k, &p)?.sqrt();
    let window = (2.0 / (lambda_low * rho_c * rho_c), l / (2.0 * c_g));
    // recurrence ripples keep r² below the power-law gate; only the exponent is tested
    let fit = fit_decay(&traj.times(), &traj.series("v_l2"), window)?;
    let ok = energy_ratio <= 1.01 && m_growth.is_some_and(|g| g <= 1e-2) && (fit.exponent + 0.75).abs() <= 0.15;
    let plateau_t = plateau.map_or(f64::NAN, |i| samples[i].t);
    Ok((
        ok,
        format!(
            "no blow-up; max |||Ψ(t)|||/|||Ψ(0)||| for t ≥ 10: {energy_ratio:.4}; 𝓜 plateau at t = {plateau_t:.0}, \
             later growth {:.1e}; ‖v‖ exponent {:.4} (r² {:.3}) on [{:.1}, {:.1}]",
            m_growth.unwrap_or(f64::NAN),
            fit.exponent,
            fit.r2,
            window.0,
            window.1
        ),
    ))
}

fn appendix_verifiers() -> Check {
    let r = verify_appendix_inequalities(&AppendixSpec::default())?;
    let ok = r.suites.iter().all(|s| s.pass && s.cases.iter().all(|c| c.finite && c.stable))
        && r.strauss.max_iterate < 0.2;
    let names = r
        .suites
        .iter()
        .map(|s| format!("{} {}", s.name, if s.pass { "ok" } else { "FAILED" }))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, format!("{names}; Strauss max iterate {:.4}", r.strauss.max_iterate)))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Check); 10] = [
        ("Stability dichotomy without memory", 1, stability_dichotomy),
        ("Memory stabilizes the critical case", 5, memory_stabilizes),
        ("Regularity-loss scaling of the critical symbol", 10, regularity_loss_scaling),
        ("Decay exponents, n = 3, Gaussian data", 120, decay_exponents),
        ("Regularity-loss decay degradation", 120, decay_degradation),
        ("Representation equivalence", 30, representation_equivalence),
        ("Energy machinery", 60, energy_machinery),
        ("Lyapunov coefficient chain", 1, lyapunov_chain),
        ("Nonlinear small-data global behavior", 600, nonlinear_small_data),
        ("Auxiliary inequality verifiers", 10, appendix_verifiers),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && in_budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name} ({:.2} s of {budget} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
