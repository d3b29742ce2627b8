use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::material::MaterialSpec;
use crate::meso::{init_lagrangian, run, MesoSampler};

fn standard() -> MaterialTable {
    MaterialTable::new(MaterialSpec::default()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn standard_macro(n: usize) -> (PeriodicMassGrid, MacroLagState) {
    init_macro(
        &MacroSampler {
            alpha0: &|x| 0.5 + 0.25 * (2.0 * PI * x).sin(),
            rho0_plus: &|_| 1.0,
            rho0_minus: &|_| 2.0,
            u0: &|x| 0.1 * (2.0 * PI * x).sin(),
            theta0: &|x| 1.0 + 0.2 * (2.0 * PI * x).cos(),
        },
        n,
    )
    .unwrap()
}

#[test]
fn init_examples() {
    let (_, s) = init_macro(
        &MacroSampler {
            alpha0: &|_| 1.0,
            rho0_plus: &|_| 1.5,
            rho0_minus: &|_| 3.0,
            u0: &|_| 0.0,
            theta0: &|_| 1.0,
        },
        8,
    )
    .unwrap();
    assert!(s.y_plus.iter().all(|&y| y == 1.0));
    assert!(s.v.iter().all(|&v| (1.0 / v - 1.5).abs() < 1e-15));

    let (_, s) = init_macro(
        &MacroSampler {
            alpha0: &|_| 0.5,
            rho0_plus: &|_| 1.0,
            rho0_minus: &|_| 3.0,
            u0: &|_| 0.0,
            theta0: &|_| 1.0,
        },
        8,
    )
    .unwrap();
    assert!(s.v.iter().all(|&v| (1.0 / v - 2.0).abs() < 1e-15));
    assert!(s.y_plus.iter().all(|&y| (y - 0.25).abs() < 1e-15));

    let alpha = |x: f64| 0.3 + 0.2 * (2.0 * PI * x).cos();
    let (_, s) = init_macro(
        &MacroSampler {
            alpha0: &alpha,
            rho0_plus: &|_| 1.7,
            rho0_minus: &|_| 1.7,
            u0: &|_| 0.0,
            theta0: &|_| 1.0,
        },
        16,
    )
    .unwrap();
    for (y, a) in s.y_plus.iter().zip(&s.alpha_plus) {
        assert!((y - a).abs() < 1e-15);
    }
}

#[test]
fn init_rejects_bad_fraction() {
    let r = init_macro(
        &MacroSampler {
            alpha0: &|_| 1.2,
            rho0_plus: &|_| 1.0,
            rho0_minus: &|_| 1.0,
            u0: &|_| 0.0,
            theta0: &|_| 1.0,
        },
        8,
    );
    assert!(r.is_err());
}

#[test]
fn alpha_rhs_examples() {
    let spec = MaterialSpec {
        mu_plus: 1.0,
        ..MaterialSpec::default()
    };
    let table = MaterialTable::new(spec).unwrap();
    let r = table.plus(Coefficient::R);
    assert_eq!(alpha_rhs(0.0, 1.0, 1.0, 3.0, 0.2, &table), 0.0);
    // phase stress equal to mixture stress
    let (rho, theta, dxu) = (1.3, 0.7, 0.4);
    let sigma = dxu - r * rho * theta;
    assert!(alpha_rhs(0.6, rho, theta, sigma, dxu, &table).abs() < 1e-15);
    // R+ rho+ theta = 1
    let rhs = alpha_rhs(0.5, 1.0 / r, 1.0, 2.0, 1.0, &table);
    assert!((rhs - 1.0).abs() < 1e-15);
}

fn random_cancellation(alpha: f64, rp: f64, rm: f64, theta: f64, dxu: f64, table: &MaterialTable) -> (f64, f64) {
    let eff = table.effective(alpha, rp, rm, theta).unwrap();
    let sigma = eff.mu_eff * dxu - eff.p_eff;
    let a = alpha_rhs(alpha, rp, theta, sigma, dxu, table);
    let b = alpha_rhs_minus(1.0 - alpha, rm, theta, sigma, dxu, table);
    (a + b, a.abs().max(b.abs()).max(1.0))
}

#[test]
fn cancellation_on_ten_thousand_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let table = MaterialTable::new(MaterialSpec {
            mu_plus: rng.gen_range(0.1..10.0),
            mu_minus: rng.gen_range(0.1..10.0),
            cv_plus: rng.gen_range(0.5..3.0),
            cv_minus: rng.gen_range(0.5..3.0),
            gamma_plus: rng.gen_range(1.05..2.0),
            gamma_minus: rng.gen_range(1.05..2.0),
            kappa_plus: rng.gen_range(0.1..5.0),
            kappa_minus: rng.gen_range(0.1..5.0),
        })
        .unwrap();
        let (sum, scale) = random_cancellation(
            rng.gen_range(0.0..=1.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(-5.0..5.0),
            &table,
        );
        worst = worst.max(sum.abs() / scale);
    }
    assert!(worst <= 1e-12, "worst {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn cancellation_property(
        alpha in 0.0f64..=1.0,
        rp in 0.1f64..10.0,
        rm in 0.1f64..10.0,
        theta in 0.1f64..5.0,
        dxu in -5.0f64..5.0,
        mu_p in 0.1f64..10.0,
        mu_m in 0.1f64..10.0,
    ) {
        let table = MaterialTable::new(MaterialSpec { mu_plus: mu_p, mu_minus: mu_m, ..MaterialSpec::default() }).unwrap();
        let (sum, scale) = random_cancellation(alpha, rp, rm, theta, dxu, &table);
        prop_assert!(sum.abs() <= 1e-12 * scale);
    }

    #[test]
    fn relaxation_form_agrees_for_equal_viscosity(
        alpha in 0.0f64..=1.0,
        rp in 0.1f64..10.0,
        rm in 0.1f64..10.0,
        theta in 0.1f64..5.0,
        dxu in -5.0f64..5.0,
    ) {
        let table = MaterialTable::new(MaterialSpec { mu_plus: 1.3, mu_minus: 1.3, ..MaterialSpec::default() }).unwrap();
        let eff = table.effective(alpha, rp, rm, theta).unwrap();
        let sigma = eff.mu_eff * dxu - eff.p_eff;
        let a = alpha_rhs(alpha, rp, theta, sigma, dxu, &table);
        let b = alpha_rhs_relaxation(alpha, rp, rm, theta, &table);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn identical_phases_reduce_to_single_fluid() {
    let table = MaterialTable::single_fluid(1.2, 1.5, 1.4, 0.8).unwrap();
    let rho = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).sin();
    let u0 = |x: f64| 0.2 * (2.0 * PI * x).cos();
    let th0 = |x: f64| 1.0 + 0.1 * (4.0 * PI * x).sin();
    let alpha = |x: f64| 0.5 + 0.4 * (2.0 * PI * x).cos();
    let (g_macro, s_macro) = init_macro(
        &MacroSampler {
            alpha0: &alpha,
            rho0_plus: &rho,
            rho0_minus: &rho,
            u0: &u0,
            theta0: &th0,
        },
        128,
    )
    .unwrap();
    let (g_meso, s_meso) = init_lagrangian(
        &MesoSampler {
            c0: &alpha,
            rho0: &rho,
            u0: &u0,
            theta0: &th0,
        },
        128,
    )
    .unwrap();
    for (a, b) in g_macro.cell_mass().iter().zip(g_meso.cell_mass()) {
        assert!((a - b).abs() < 1e-15);
    }
    let cfg = MesoConfig {
        final_time: 0.2,
        dt_max: 5e-4,
        ..MesoConfig::default()
    }
    .with_uniform_snapshots(4);
    let a = run_macro(&g_macro, &s_macro, &cfg, &table).unwrap();
    let b = run(&g_meso, &s_meso, &cfg, &table).unwrap();
    assert_eq!(a.dt_history.len(), b.dt_history.len());
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        assert!(max_diff(&x.state.u, &y.state.u) < 1e-8);
        assert!(max_diff(&x.state.v, &y.state.v) < 1e-8);
        assert!(max_diff(&x.state.theta, &y.state.theta) < 1e-8);
        assert!(max_diff(&x.derived.sigma, &y.derived.sigma) < 1e-8);
    }
}

#[test]
fn pure_plus_phase_stays_pure() {
    let table = standard();
    let (grid, s) = init_macro(
        &MacroSampler {
            alpha0: &|_| 1.0,
            rho0_plus: &|x| 1.0 + 0.2 * (2.0 * PI * x).sin(),
            rho0_minus: &|_| 2.0,
            u0: &|x| 0.1 * (2.0 * PI * x).sin(),
            theta0: &|_| 1.0,
        },
        64,
    )
    .unwrap();
    let traj = run_macro(
        &grid,
        &s,
        &MesoConfig {
            final_time: 0.1,
            ..MesoConfig::default()
        },
        &table,
    )
    .unwrap();
    assert!(traj.last().state.alpha_plus.iter().all(|&a| (a - 1.0).abs() < 1e-14));
}

#[test]
fn pressure_equilibrium_is_stationary() {
    let table = standard();
    let (rp, rm) = (1.0, table.plus(Coefficient::R) / table.minus(Coefficient::R));
    let (grid, s) = init_macro(
        &MacroSampler {
            alpha0: &|x| 0.5 + 0.3 * (2.0 * PI * x).sin(),
            rho0_plus: &|_| rp,
            rho0_minus: &|_| rm,
            u0: &|_| 0.0,
            theta0: &|_| 1.3,
        },
        64,
    )
    .unwrap();
    let cfg = MesoConfig {
        final_time: 1.0,
        dt_max: 1e-3,
        ..MesoConfig::default()
    };
    let traj = run_macro(&grid, &s, &cfg, &table).unwrap();
    assert!(traj.dt_history.len() >= 1000);
    let e = &traj.last().state;
    assert!(max_diff(&e.alpha_plus, &s.alpha_plus) < 1e-10);
    assert!(max_diff(&e.v, &s.v) < 1e-10);
    assert!(max_diff(&e.theta, &s.theta) < 1e-10);
    assert!(e.u.iter().all(|u| u.abs() < 1e-10));
}

#[test]
fn zero_final_time() {
    let table = standard();
    let (grid, s) = standard_macro(32);
    let traj = run_macro(
        &grid,
        &s,
        &MesoConfig {
            final_time: 0.0,
            ..MesoConfig::default()
        },
        &table,
    )
    .unwrap();
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.snapshots[0].state, s);
}

#[test]
fn standard_run_invariants() {
    let table = standard();
    let (grid, s) = standard_macro(256);
    let cfg = MesoConfig {
        final_time: 0.5,
        ..MesoConfig::default()
    }
    .with_uniform_snapshots(5);
    let mut steps = 0;
    let traj = run_macro_observed(&grid, &s, &cfg, &table, &mut |prev, next, fields, _| {
        steps += 1;
        assert_eq!(prev.y_plus, next.y_plus);
        assert_eq!(fields.sigma.len(), next.n_cells());
    })
    .unwrap();
    assert_eq!(steps, traj.dt_history.len());
    let m = grid.cell_mass();
    for snap in &traj.snapshots {
        let st = &snap.state;
        assert_eq!(st.y_plus, s.y_plus);
        assert!(st.alpha_plus.iter().all(|&a| (-ALPHA_TOLERANCE..=1.0 + ALPHA_TOLERANCE).contains(&a)));
        let mom: f64 = grid.node_mass().iter().zip(&st.u).map(|(m, u)| m * u).sum();
        assert!(mom.abs() < 1e-12);
        // stress from the two-Dirac moments
        for i in 0..st.n_cells() {
            let (rp, rm) = st.phase_densities(i);
            let a = st.alpha_plus[i];
            let inv_mu = a / table.plus(Coefficient::Mu) + (1.0 - a) / table.minus(Coefficient::Mu);
            let r_rho_mu = a * table.plus(Coefficient::R) * rp / table.plus(Coefficient::Mu)
                + (1.0 - a) * table.minus(Coefficient::R) * rm / table.minus(Coefficient::Mu);
            let dxu = (st.u[(i + 1) % st.n_cells()] - st.u[i]) / (m[i] * st.v[i]);
            let sigma = dxu / inv_mu - r_rho_mu / inv_mu * st.theta[i];
            assert!((sigma - snap.derived.sigma[i]).abs() < 1e-12 * sigma.abs().max(1.0));
            let inv_kappa = a / table.plus(Coefficient::Kappa) + (1.0 - a) / table.minus(Coefficient::Kappa);
            assert!((1.0 / inv_kappa - snap.derived.kappa_eff[i]).abs() < 1e-12);
        }
    }
    // the two volume-fraction sources differ when mu+ != mu-
    assert!(alpha_source_discrepancy(&grid, traj.last(), &table) > 0.0);
    let e = macro_eulerian_resample(&traj, 512).unwrap();
    let mass = e.last().unwrap().get("rho").unwrap().iter().sum::<f64>() / 512.0;
    assert!((mass - grid.total_mass()).abs() < 1e-12);
}

#[test]
fn alpha_escape_aborts() {
    // a huge step drives alpha out of range instead of clamping
    let table = MaterialTable::new(MaterialSpec {
        mu_plus: 0.01,
        ..MaterialSpec::default()
    })
    .unwrap();
    let (grid, mut s) = standard_macro(16);
    s.theta.iter_mut().for_each(|t| *t = 50.0);
    let r = step_macro(&grid, &s, 0.5, &table, 1e-10);
    assert!(r.is_err());
}
