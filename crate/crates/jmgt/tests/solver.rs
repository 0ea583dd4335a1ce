use jmgt::fourier_mode::{assemble_mode_system, propagate_mode, Representation};
use jmgt::history_state::{init_state, InitialData, MemoryRepr, Profile};
use jmgt::solver::{rhs_nonlinear, run, NonlinearityForm, Scheme, Solver, SolverConfig};
use jmgt::spectral::{l2_norm, Grid};
use jmgt::{MediumParams, MemoryKernel};
use nalgebra::DVector;

fn critical() -> (MediumParams, MemoryKernel) {
    (
        MediumParams::critical(1.0, 1.0, 0.0).unwrap(),
        MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap(),
    )
}

fn gaussian_data(l: f64) -> InitialData {
    InitialData {
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
    }
}

fn rel_l2(grid: &Grid, a: &[&Vec<f64>], b: &[&Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d: Vec<f64> = x.iter().zip(y.iter()).map(|(p, q)| p - q).collect();
        num += l2_norm(grid, &d).powi(2);
        den += l2_norm(grid, y).powi(2);
    }
    (num / den).sqrt()
}

#[test]
fn linear_single_mode_matches_mode_propagator() {
    let (p, k) = critical();
    let grid = Grid::new(1, 16, 2.0 * std::f64::consts::PI).unwrap();
    let data = InitialData {
        psi0: Profile::FourierMode {
            amplitude: 1.0,
            k: [3, 0, 0],
        },
        psi1: Profile::Zero,
        psi2: Profile::Zero,
    };
    let st = init_state(&grid, &data, &p, &k, MemoryRepr::ReducedZ).unwrap();
    let cfg = SolverConfig::new(0.05, 2.0, Scheme::ExactLinear);
    let mut s = Solver::new(&grid, &st, &p, &k, &cfg).unwrap();
    let u0 = s.spectral_state();
    for _ in 0..40 {
        s.step().unwrap();
    }
    let u = s.spectral_state();
    let sys = assemble_mode_system(&p, &k, 9.0, Representation::Reduced).unwrap();
    let x0 = DVector::from_iterator(4, u0[3].iter().map(|c| c.im));
    let x = propagate_mode(&sys, &x0, 2.0).unwrap();
    for r in 0..4 {
        assert!((u[3][r].im - x[r]).abs() <= 1e-12 * x0.norm(), "row {r}");
        assert!(u[3][r].re.abs() <= 1e-12 * x0.norm());
    }
}

#[test]
fn history_and_reduced_representations_agree() {
    let (p, k) = critical();
    let l = 40.0;
    let grid = Grid::new(1, 256, l).unwrap();
    let data = gaussian_data(l);
    let dt = 0.01;
    let a = init_state(&grid, &data, &p, &k, MemoryRepr::ReducedZ).unwrap();
    let b = init_state(&grid, &data, &p, &k, MemoryRepr::history_for_dt(dt, 25.0)).unwrap();
    let cfg = SolverConfig::new(dt, 10.0, Scheme::ExactLinear);
    let mut sa = Solver::new(&grid, &a, &p, &k, &cfg).unwrap();
    let mut sb = Solver::new(&grid, &b, &p, &k, &cfg).unwrap();
    for _ in 0..cfg.n_steps() {
        sa.step().unwrap();
        sb.step().unwrap();
    }
    let (xa, xb) = (sa.state(), sb.state());
    let err = rel_l2(&grid, &[&xb.psi, &xb.v, &xb.w], &[&xa.psi, &xa.v, &xa.w]);
    assert!(err <= 1e-6, "relative L2 difference {err:e}");
}

#[test]
fn zero_data_stays_zero_nonlinear() {
    let p = MediumParams::critical(1.0, 1.0, 1.0).unwrap();
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    let grid = Grid::new(2, 16, 10.0).unwrap();
    let st = init_state(&grid, &InitialData::zero(), &p, &k, MemoryRepr::ReducedZ).unwrap();
    let cfg = SolverConfig::new(0.1, 1.0, Scheme::Etd4);
    let traj = run(&grid, &st, &p, &k, &cfg, &mut |s: &Solver| {
        vec![("sup".into(), s.state().sup())]
    })
    .unwrap();
    assert!(traj.failure.is_none());
    assert!(traj.series("sup").iter().all(|&x| x == 0.0));
}

#[test]
fn single_mode_product_matches_closed_form() {
    let p = MediumParams::critical(0.5, 1.0, 1.0).unwrap();
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    let l = 2.0 * std::f64::consts::PI;
    let grid = Grid::new(1, 32, l).unwrap();
    let xi = 2.0;
    let data = InitialData {
        psi0: Profile::FourierMode {
            amplitude: 1.0,
            k: [2, 0, 0],
        },
        psi1: Profile::Zero,
        psi2: Profile::Zero,
    };
    let mut st = init_state(&grid, &data, &p, &k, MemoryRepr::ReducedZ).unwrap();
    st.v = (0..32).map(|i| (xi * grid.coords(i)[0]).cos()).collect();
    let r = rhs_nonlinear(&grid, &st, &p, NonlinearityForm::DefF, true).unwrap();
    for i in 0..32 {
        let x = grid.coords(i)[0];
        let want = 2.0 / p.tau * (-xi * xi * (xi * x).sin() * (xi * x).cos());
        assert!((r[i] - want).abs() < 1e-10);
    }
}

fn etd_error(scheme: Scheme, dt: f64, reference: &[f64]) -> f64 {
    let p = MediumParams::critical(1.0, 1.0, 1.0).unwrap();
    let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
    let grid = Grid::new(1, 32, 20.0).unwrap();
    let data = gaussian_data(20.0).scaled(0.3);
    let st = init_state(&grid, &data, &p, &k, MemoryRepr::ReducedZ).unwrap();
    let cfg = SolverConfig::new(dt, 2.0, scheme);
    let mut s = Solver::new(&grid, &st, &p, &k, &cfg).unwrap();
    for _ in 0..cfg.n_steps() {
        s.step().unwrap();
    }
    let v = s.state().v;
    if reference.is_empty() {
        return f64::NAN;
    }
    v.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn etd_schemes_converge_at_their_order() {
    for (scheme, order) in [(Scheme::Etd2, 2.0), (Scheme::Etd4, 4.0)] {
        let p = MediumParams::critical(1.0, 1.0, 1.0).unwrap();
        let k = MemoryKernel::exponential(0.5, 1.0, 1.0).unwrap();
        let grid = Grid::new(1, 32, 20.0).unwrap();
        let data = gaussian_data(20.0).scaled(0.3);
        let st = init_state(&grid, &data, &p, &k, MemoryRepr::ReducedZ).unwrap();
        let dt0 = 0.1;
        let cfg = SolverConfig::new(dt0 / 8.0, 2.0, scheme);
        let mut s = Solver::new(&grid, &st, &p, &k, &cfg).unwrap();
        for _ in 0..cfg.n_steps() {
            s.step().unwrap();
        }
        let reference = s.state().v;
        let e1 = etd_error(scheme, dt0, &reference);
        let e2 = etd_error(scheme, dt0 / 2.0, &reference);
        let rate = (e1 / e2).log2();
        assert!(rate >= order - 0.5, "{scheme:?}: observed order {rate:.2}");
    }
}
