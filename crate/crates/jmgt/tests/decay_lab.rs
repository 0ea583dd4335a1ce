use jmgt::decay_lab::{
    fit_decay, radial_field_evolution, radial_norm_evolution, regularity_loss_experiment, sphere_area,
    strauss_iteration, verify_appendix_inequalities, w_and_v_decay, AppendixSpec, DecayConfig, Field, RadialProfile,
};
use jmgt::error::Error;
use jmgt::fourier_mode::{assemble_mode_system, propagate_mode, Representation};
use jmgt::numerics::{gauss_legendre, logspace};
use jmgt::{MediumParams, MemoryKernel};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn critical() -> (MediumParams, MemoryKernel) {
    (
        MediumParams::critical(1.0, 1.0, 0.0).unwrap(),
        MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap(),
    )
}

/// ‖∇ʲU(t)‖ from the matrix-exponential evolution with 32-point
/// Gauss–Legendre on unit panels, which resolves every oscillation of the
/// integrand for t ≤ 5.
fn brute_force_norm(profile: &RadialProfile, p: &MediumParams, k: &MemoryKernel, j: usize, t: f64, r: f64) -> f64 {
    let n = profile.n;
    let integrand = |rho: f64| {
        let sys = assemble_mode_system(p, k, rho * rho, Representation::Reduced).unwrap();
        let d = profile.mode_data(rho, p.tau);
        let x = propagate_mode(&sys, &sys.initial_state(d[0], d[1], d[2]), t).unwrap();
        let u2 = (x[1] + p.tau * x[2]).powi(2) + rho * rho * ((x[0] + p.tau * x[1]).powi(2) + x[1] * x[1]);
        rho.powi((2 * j + n - 1) as i32) * u2
    };
    let (x, w) = gauss_legendre(32);
    let total: f64 = (0..r.ceil() as usize)
        .flat_map(|i| x.iter().zip(&w).map(move |(x, w)| (i as f64 + 0.5 * (x + 1.0), 0.5 * w)))
        .map(|(rho, w)| w * integrand(rho))
        .sum();
    (sphere_area(n) * total).sqrt()
}

#[test]
fn gaussian_norm_at_zero_matches_closed_form() {
    let (p, k) = critical();
    for n in 1..=3 {
        for j in 0..=2 {
            let s = radial_norm_evolution(&RadialProfile::gaussian(n), &p, &k, j, &[0.0]).unwrap();
            let exact = (sphere_area(n) * gamma(j as f64 + 0.5 * n as f64) / 2.0).sqrt();
            assert!(
                (s.values[0] - exact).abs() <= 1e-10 * exact,
                "n={n} j={j}: {} vs {exact}",
                s.values[0]
            );
        }
    }
}

#[test]
fn windowed_quadrature_matches_resolved_quadrature() {
    let (p, k) = critical();
    let cases = [
        (RadialProfile::sobolev_limited(1, 3.0), 0, 120.0),
        (RadialProfile::gaussian(3), 1, 12.0),
    ];
    for (profile, j, r) in cases {
        let times = [0.5, 2.0, 5.0];
        let s = radial_norm_evolution(&profile, &p, &k, j, &times).unwrap();
        for (t, v) in times.iter().zip(&s.values) {
            let reference = brute_force_norm(&profile, &p, &k, j, *t, r);
            assert!(
                (v - reference).abs() <= 1e-8 * reference,
                "{profile:?} j={j} t={t}: {v} vs {reference}"
            );
        }
    }
}

#[test]
fn fit_recovers_exact_power_law() {
    let t = logspace(1e2, 1e4, 30);
    let v: Vec<f64> = t.iter().map(|t| 3.0 * (1.0 + t).powf(-0.75)).collect();
    let f = fit_decay(&t, &v, (1e2, 1e4)).unwrap().against(-0.75, 0.05);
    assert!((f.exponent + 0.75).abs() < 1e-12);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
    assert!(f.power_law && f.pass);
    assert_eq!(f.samples, 30);
}

#[test]
fn fit_flags_exponential_decay() {
    let t = logspace(10.0, 100.0, 30);
    let v: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
    let f = fit_decay(&t, &v, (10.0, 100.0)).unwrap().against(-0.75, 0.05);
    assert!(f.exponent < -2.0);
    assert!(!f.power_law, "r2 = {}", f.r2);
    assert!(!f.pass);
}

#[test]
fn fit_of_constant_has_zero_exponent() {
    let t = logspace(1e2, 1e4, 20);
    let f = fit_decay(&t, &vec![2.0; 20], (1e2, 1e4)).unwrap();
    assert!(f.exponent.abs() < 1e-12);
    assert!(!f.against(-0.75, 0.05).pass);
}

#[test]
fn fit_rejects_bad_input() {
    let t = logspace(1.0, 10.0, 9);
    let v = vec![1.0; 9];
    assert!(matches!(fit_decay(&t, &v, (1.0, 10.0)), Err(Error::Fit(_))));
    let t = logspace(1.0, 10.0, 12);
    let mut v = vec![1.0; 12];
    v[4] = 0.0;
    assert!(matches!(fit_decay(&t, &v, (1.0, 10.0)), Err(Error::Fit(_))));
}

#[test]
fn critical_gaussian_rates_in_three_dimensions() {
    let (p, k) = critical();
    let cfg = DecayConfig::default();
    let s = radial_field_evolution(
        &RadialProfile::gaussian(3),
        &p,
        &k,
        &[(Field::U, 0), (Field::U, 1)],
        &cfg.times(),
    )
    .unwrap();
    for (series, target) in s.iter().zip([-0.75, -1.25]) {
        let f = fit_decay(&series.times, &series.values, cfg.window)
            .unwrap()
            .against(target, cfg.tol);
        assert!(f.pass, "j={}: {f:?}", series.j);
    }
}

#[test]
fn w_rate_does_not_depend_on_initial_acceleration() {
    let p = MediumParams::critical(0.1, 1.0, 0.0).unwrap();
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    let cfg = DecayConfig::default();
    let (w0, v0) = w_and_v_decay(&RadialProfile::gaussian(3), &p, &k, 0, &cfg).unwrap();
    let (w1, v1) = w_and_v_decay(&RadialProfile::gaussian(3).with_psi2(3.0), &p, &k, 0, &cfg).unwrap();
    assert!(w0.pass && v0.pass && w1.pass && v1.pass);
    assert!((w0.exponent - w1.exponent).abs() < 0.02);
}

#[test]
fn extending_the_window_approaches_the_target() {
    let (p, k) = critical();
    let times = logspace(1e2, 1e4, 60);
    let s = radial_norm_evolution(&RadialProfile::gaussian(3), &p, &k, 0, &times).unwrap();
    let target = -0.75;
    let mut last = f64::INFINITY;
    for t_max in [1e3, 3e3, 1e4] {
        let f = fit_decay(&s.times, &s.values, (1e2, t_max)).unwrap();
        let gap = f.exponent - target;
        assert!(gap.abs() <= last + 1e-3, "t_max={t_max}: {}", f.exponent);
        assert!(gap.abs() <= 0.05);
        last = gap.abs();
    }
}

#[test]
fn memoryless_subcritical_rate() {
    let p = MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap();
    let k = MemoryKernel::exponential(0.0, 1.0, 1.0).unwrap();
    let cfg = DecayConfig::default();
    let s = radial_norm_evolution(&RadialProfile::gaussian(3), &p, &k, 0, &cfg.times()).unwrap();
    let f = fit_decay(&s.times, &s.values, cfg.window).unwrap().against(-0.75, cfg.tol);
    assert!(f.pass, "{f:?}");
}

#[test]
fn limited_data_degrade_only_in_the_critical_case() {
    let (p, k) = critical();
    let r = regularity_loss_experiment(&p, &k, 3, 0.0, &DecayConfig::default()).unwrap();
    assert!(r.critical_gaussian.pass);
    assert!(r.critical_limited.exponent >= -0.5, "{:?}", r.critical_limited);
    assert!((r.critical_limited.exponent - r.predicted_limited).abs() < 0.05);
    assert!(r.degraded && r.below_threshold);
    assert!(r.subcritical_limited.pass, "{:?}", r.subcritical_limited);
    assert!(r.subcritical_delta > 0.0);
}

#[test]
fn smooth_limited_data_keep_the_full_rate() {
    let (p, k) = critical();
    let r = regularity_loss_experiment(&p, &k, 3, 3.0, &DecayConfig::default()).unwrap();
    assert!(!r.degraded);
    assert!(r.critical_limited.pass);
}

#[test]
fn invalid_requests_are_rejected() {
    let (p, k) = critical();
    let times = [0.0, 1.0];
    // (1+ρ²)^{-1} has infinite L² norm against ρ² dρ
    let r = radial_norm_evolution(&RadialProfile::sobolev_limited(3, 1.5), &p, &k, 0, &times);
    assert!(matches!(r, Err(Error::InvalidParams(_))));
    // finite norm for U but not for ∇U
    let r = radial_norm_evolution(&RadialProfile::sobolev_limited(3, 2.0), &p, &k, 1, &times);
    assert!(matches!(r, Err(Error::InvalidParams(_))));
    let tab = MemoryKernel::tabulated(vec![0.0, 1.0, 2.0, 40.0], vec![0.5, 0.2, 0.08, 0.0], 1.0).unwrap();
    let r = radial_norm_evolution(&RadialProfile::gaussian(3), &p, &tab, 0, &times);
    assert!(matches!(r, Err(Error::UnsupportedRepresentation(_))));
    let sub = MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap();
    assert!(regularity_loss_experiment(&sub, &k, 3, 0.0, &DecayConfig::default()).is_err());
}

#[test]
fn strauss_iteration_reference_values() {
    let s = strauss_iteration(0.1, 1.0, 2.0, 1000);
    assert!(s.condition_holds && s.stays_below);
    assert!((s.bound - 0.2).abs() < 1e-15);
    // smaller root of M = 0.1 + M²
    assert!((s.max_iterate - (1.0 - 0.6f64.sqrt()) / 2.0).abs() < 1e-12);
    let s = strauss_iteration(0.3, 1.0, 2.0, 1000);
    assert!(!s.condition_holds && !s.stays_below);
}

#[test]
fn appendix_inequalities_have_finite_stable_constants() {
    let r = verify_appendix_inequalities(&AppendixSpec::default()).unwrap();
    for s in &r.suites {
        assert!(s.pass, "{s:?}");
    }
    assert!(r.pass);
    // sup_t (1+t)^{3/2}∫₀ᵗ(1+t−s)^{-3/2}(1+s)^{-3/2}ds → 2∫₀^∞(1+s)^{-3/2}ds = 4
    let c = &r.suites[0].cases[1];
    assert!((c.refined - 4.0).abs() < 2e-3, "{c:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_random_power_laws(p in -3.0f64..0.5, c in 0.01f64..100.0) {
        let t = logspace(10.0, 1e3, 25);
        let v: Vec<f64> = t.iter().map(|t| c * (1.0 + t).powf(p)).collect();
        let f = fit_decay(&t, &v, (10.0, 1e3)).unwrap();
        prop_assert!((f.exponent - p).abs() < 1e-10);
    }

    #[test]
    fn strauss_iterates_stay_below_bound_when_condition_holds(c1 in 0.001f64..1.0, c2 in 0.01f64..5.0, kappa in 1.2f64..4.0) {
        let s = strauss_iteration(c1, c2, kappa, 5000);
        if s.condition_holds {
            prop_assert!(s.stays_below, "{s:?}");
        }
    }
}
