use jmgt::fourier_mode::{assemble_mode_system, propagate_mode, reduced_char_poly, Representation};
use jmgt::history_state::{init_state, reduce_history, InitialData, MemoryRepr, Profile};
use jmgt::medium_kernel::{effective_speed_sq, KernelConstants};
use jmgt::oracle::{
    direct_convolution, direct_convolution_memory, expm_eigen, fd_derivative, fd_laplacian, poly_eval, poly_roots,
};
use jmgt::solver::{Scheme, Solver, SolverConfig};
use jmgt::spectral::{l2_norm, Grid};
use jmgt::{Error, MediumParams, MemoryKernel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn critical() -> (MediumParams, MemoryKernel) {
    (
        MediumParams::critical(1.0, 1.0, 0.0).unwrap(),
        MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap(),
    )
}

#[test]
fn expm_of_diagonal_is_elementwise() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0, 0.5]));
    let r = expm_eigen(&a, 1.5).unwrap();
    assert!(!r.fallback);
    for (i, l) in [1.0f64, -2.0, 0.5].iter().enumerate() {
        assert!((r.value[(i, i)] - (1.5 * l).exp()).abs() < 1e-13 * (1.5 * l).exp());
    }
    assert!(r.value.iter().enumerate().all(|(k, x)| k % 4 == 0 || x.abs() < 1e-14));
}

#[test]
fn expm_of_nilpotent_falls_back() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let r = expm_eigen(&a, 1.0).unwrap();
    assert!(r.fallback);
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!((r.value - expected).amax() < 1e-15);
}

#[test]
fn expm_agrees_with_mode_propagator() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (p, k) = critical();
    for _ in 0..10 {
        let rho_sq: f64 = rng.random_range(0.01..20.0);
        let t: f64 = rng.random_range(0.1..5.0);
        let sys = assemble_mode_system(&p, &k, rho_sq, Representation::Reduced).unwrap();
        let x0 = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let reference = expm_eigen(&sys.generator, t).unwrap();
        assert!(!reference.fallback);
        let want = &reference.value * &x0;
        let got = propagate_mode(&sys, &x0, t).unwrap();
        assert!((&got - &want).norm() <= 1e-9 * want.norm(), "ρ²={rho_sq}, t={t}");
    }
}

#[test]
fn expm_agrees_on_random_dense_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let r = expm_eigen(&a, 1.0).unwrap();
        // e^{A}e^{-A} = I
        let inv = expm_eigen(&(-&a), 1.0).unwrap();
        let id = &r.value * &inv.value;
        assert!((id - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
    }
}

#[test]
fn roots_of_factored_cubic() {
    let r = poly_roots(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    let mut expected = vec![C::new(-1.0, 0.0), C::new(0.0, 1.0), C::new(0.0, -1.0)];
    for root in &r.value {
        let i = expected
            .iter()
            .position(|e| (e - root).norm() < 1e-12)
            .unwrap_or_else(|| panic!("unexpected root {root}"));
        expected.remove(i);
    }
    assert!(r.residuals.iter().all(|x| *x < 1e-13));
}

#[test]
fn wilkinson_residuals() {
    let mut coeffs = vec![1.0];
    for k in 1..=10 {
        // multiply by (x − k)
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= k as f64 * c;
        }
        coeffs = next;
    }
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    let r = poly_roots(&coeffs).unwrap();
    assert_eq!(r.value.len(), 10);
    assert!(r.residuals.iter().all(|x| *x <= 1e-8 * norm), "{:?}", r.residuals);
    let mut re: Vec<f64> = r.value.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    for (k, x) in re.iter().enumerate() {
        assert!((x - (k + 1) as f64).abs() < 1e-6);
    }
}

#[test]
fn critical_quartic_matches_mode_spectrum() {
    let (p, k) = critical();
    let kc = KernelConstants::new(&k, &p).unwrap();
    let r = poly_roots(&reduced_char_poly(&p, &kc, 1.0)).unwrap();
    let sys = assemble_mode_system(&p, &k, 1.0, Representation::Reduced).unwrap();
    let ev = sys.eigenvalues().unwrap();
    for root in &r.value {
        let d = ev.iter().map(|e| (e - root).norm()).fold(f64::INFINITY, f64::min);
        assert!(d < 1e-10, "{root}");
    }
}

#[test]
fn zero_leading_coefficient_is_rejected() {
    assert!(matches!(poly_roots(&[0.0, 1.0]), Err(Error::InvalidParams(_))));
}

#[test]
fn convolution_of_constant_history() {
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
    let hist = vec![vec![2.0, -1.0]; times.len()];
    let r = direct_convolution(&times, &hist, &k).unwrap();
    let t = 10.0f64;
    let int_g = 0.5 * (1.0 - (-t).exp());
    // Simpson-order error h⁴·t·max|g⁗|/180 ≈ 2e-7
    assert!((r.value[0] - 2.0 * int_g).abs() < 1e-6);
    assert!((r.value[1] + int_g).abs() < 1e-6);
    assert!((r.value[0] - 2.0 * int_g).abs() <= r.error_bound);
}

#[test]
fn convolution_of_linear_history() {
    // ψ(s) = s: ∫₀ᵗ m e^{−r}(t−r) dr = m(t − 1 + e^{−t})
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    for n in [100usize, 101] {
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * 0.04).collect();
        let hist: Vec<Vec<f64>> = times.iter().map(|t| vec![*t]).collect();
        let t = times[n];
        let exact = 0.5 * (t - 1.0 + (-t).exp());
        let r = direct_convolution(&times, &hist, &k).unwrap();
        assert!((r.value[0] - exact).abs() < 1e-7 * exact, "n={n}");
    }
}

#[test]
fn nonuniform_trajectory_is_unsupported() {
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    let times = [0.0, 0.1, 0.25];
    let hist = vec![vec![1.0]; 3];
    assert!(matches!(
        direct_convolution(&times, &hist, &k),
        Err(Error::UnsupportedRepresentation(_))
    ));
}

#[test]
fn finite_differences_of_trigonometric_fields() {
    let (n, l) = (64usize, 2.0 * PI);
    let h = l / n as f64;
    let f: Vec<f64> = (0..n * n)
        .map(|i| {
            let (x, y) = ((i / n) as f64 * h, (i % n) as f64 * h);
            (2.0 * x).sin() * (3.0 * y).cos()
        })
        .collect();
    let lap = fd_laplacian(&f, 2, n, l).unwrap();
    let dy = fd_derivative(&f, 2, n, l, 1).unwrap();
    for i in 0..n * n {
        let (x, y) = ((i / n) as f64 * h, (i % n) as f64 * h);
        assert!((lap[i] + 13.0 * f[i]).abs() < 1e-6);
        assert!((dy[i] + 3.0 * (2.0 * x).sin() * (3.0 * y).sin()).abs() < 1e-6);
    }
}

#[test]
fn finite_differences_match_spectral_derivatives() {
    let grid = Grid::new(1, 128, 20.0).unwrap();
    let f: Vec<f64> = (0..128)
        .map(|i| {
            let x = grid.coords(i)[0] - 10.0;
            (-x * x / 2.0).exp()
        })
        .collect();
    let hat = grid.forward(&f);
    let spectral = grid.inverse(&grid.derivative(&grid.derivative(&hat, 0), 0));
    let fd = fd_laplacian(&f, 1, 128, 20.0).unwrap();
    let diff: Vec<f64> = fd.iter().zip(&spectral).map(|(a, b)| a - b).collect();
    assert!(l2_norm(&grid, &diff) < 1e-4 * l2_norm(&grid, &spectral));
}

#[test]
fn history_run_matches_direct_convolution() {
    let (p, k) = critical();
    let l = 40.0;
    let grid = Grid::new(1, 256, l).unwrap();
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
    let st = init_state(&grid, &data, &p, &k, MemoryRepr::history_for_dt(dt, 25.0)).unwrap();
    let cfg = SolverConfig::new(dt, 10.0, Scheme::ExactLinear);
    let mut s = Solver::new(&grid, &st, &p, &k, &cfg).unwrap();
    let mut times = vec![0.0];
    let mut hist = vec![s.state().psi];
    for _ in 0..cfg.n_steps() {
        s.step().unwrap();
        times.push(s.time());
        hist.push(s.state().psi);
    }
    let state = s.state();
    let big_g = p.c * p.c - effective_speed_sq(&k, &p).unwrap();
    // ∫₀^∞ gη dr = Gψ(t) − ∫₀ᵗ gψ(t−r) dr
    let z = reduce_history(&state).unwrap();
    let conv = direct_convolution(&times, &hist, &k).unwrap();
    let rebuilt: Vec<f64> = state.psi.iter().zip(&conv.value).map(|(a, b)| big_g * a - b).collect();
    let diff: Vec<f64> = z.iter().zip(&rebuilt).map(|(a, b)| a - b).collect();
    let rel = l2_norm(&grid, &diff) / l2_norm(&grid, &rebuilt);
    assert!(rel <= 1e-6, "memory moment {rel:e}");
    // the same identity with the Laplacian applied
    let lap_conv = direct_convolution_memory(&times, &hist, &k, 1, 256, l).unwrap();
    let lap_z = fd_laplacian(&z, 1, 256, l).unwrap();
    let lap_psi = fd_laplacian(&state.psi, 1, 256, l).unwrap();
    let rebuilt: Vec<f64> = lap_psi.iter().zip(&lap_conv.value).map(|(a, b)| big_g * a - b).collect();
    let diff: Vec<f64> = lap_z.iter().zip(&rebuilt).map(|(a, b)| a - b).collect();
    let rel = l2_norm(&grid, &diff) / l2_norm(&grid, &rebuilt);
    assert!(rel <= 1e-6, "memory term {rel:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roots_have_small_residuals(c in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
        let mut coeffs = vec![1.0];
        coeffs.extend(c);
        let r = poly_roots(&coeffs).unwrap();
        let scale: f64 = coeffs.iter().map(|x| x.abs()).sum();
        for root in &r.value {
            let m = root.norm().max(1.0).powi(coeffs.len() as i32 - 1);
            prop_assert!(poly_eval(&coeffs, *root).norm() <= 1e-9 * scale * m);
        }
    }

    #[test]
    fn expm_semigroup(seed in 0u64..1000, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let ab = expm_eigen(&a, s + t).unwrap().value;
        let prod = expm_eigen(&a, s).unwrap().value * expm_eigen(&a, t).unwrap().value;
        prop_assert!((ab - prod).amax() <= 1e-9 * (1.0 + (2.0 * 3.0 * (s + t)).exp()));
    }
}
