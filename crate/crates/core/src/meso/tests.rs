use std::f64::consts::PI;

use super::*;
use crate::material::MaterialSpec;

fn standard() -> MaterialTable {
    MaterialTable::new(MaterialSpec::default()).unwrap()
}

fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Layered state in pressure equilibrium at rest: `R(c) rho` uniform.
fn equilibrium(table: &MaterialTable, n: usize, layers: usize) -> (PeriodicMassGrid, MesoLagState) {
    let color = move |x: f64| if (x * layers as f64).fract() < 0.4 { 1.0 } else { 0.0 };
    let rho = |x: f64| 1.3 / table.mix_unchecked(Coefficient::R, color(x));
    init_lagrangian(
        &MesoSampler {
            c0: &color,
            rho0: &rho,
            u0: &|_| 0.0,
            theta0: &|_| 1.7,
        },
        n,
    )
    .unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn smooth_layered(table: &MaterialTable, n: usize) -> (PeriodicMassGrid, MesoLagState) {
    let _ = table;
    let alpha = |x: f64| 0.5 + 0.25 * (2.0 * PI * x).sin();
    let color = move |x: f64| if (x * 4.0).fract() < alpha(x) { 1.0 } else { 0.0 };
    let rho = move |x: f64| color(x) * 1.0 + (1.0 - color(x)) * 2.0;
    init_lagrangian(
        &MesoSampler {
            c0: &color,
            rho0: &rho,
            u0: &|x| 0.1 * (2.0 * PI * x).sin(),
            theta0: &|x| 1.0 + 0.2 * (2.0 * PI * x).cos(),
        },
        n,
    )
    .unwrap()
}

#[test]
fn init_uniform_at_rest() {
    let (grid, s) = init_lagrangian(
        &MesoSampler {
            c0: &|_| 1.0,
            rho0: &|_| 1.0,
            u0: &|_| 0.0,
            theta0: &|_| 1.0,
        },
        64,
    )
    .unwrap();
    assert!(grid.cell_mass().iter().all(|&m| m == 1.0 / 64.0));
    assert_eq!(s.galilean_shift, 0.0);
}

#[test]
fn init_removes_uniform_momentum() {
    let (_, s) = init_lagrangian(
        &MesoSampler {
            c0: &|_| 0.0,
            rho0: &|_| 1.0,
            u0: &|_| 3.0,
            theta0: &|_| 1.0,
        },
        32,
    )
    .unwrap();
    assert!((s.galilean_shift + 3.0).abs() < 1e-14);
    assert!(s.u.iter().all(|u| u.abs() < 1e-14));
}

#[test]
fn init_zero_discrete_momentum() {
    let (grid, s) = init_lagrangian(
        &MesoSampler {
            c0: &|_| 0.5,
            rho0: &|x| 1.0 + 0.5 * (2.0 * PI * x).sin(),
            u0: &|x| (2.0 * PI * x).cos(),
            theta0: &|_| 1.0,
        },
        100,
    )
    .unwrap();
    let p: f64 = grid.node_mass().iter().zip(&s.u).map(|(m, u)| m * u).sum();
    assert!(p.abs() < 1e-14, "{p}");
}

#[test]
fn init_rejects_bad_samples() {
    let bad_rho = MesoSampler {
        c0: &|_| 0.5,
        rho0: &|x| x - 0.5,
        u0: &|_| 0.0,
        theta0: &|_| 1.0,
    };
    assert!(init_lagrangian(&bad_rho, 16).is_err());
    let bad_c = MesoSampler {
        c0: &|_| 1.5,
        rho0: &|_| 1.0,
        u0: &|_| 0.0,
        theta0: &|_| 1.0,
    };
    assert!(init_lagrangian(&bad_c, 16).is_err());
}

#[test]
fn stable_dt_cap_binds_at_rest() {
    let table = standard();
    let (grid, s) = equilibrium(&table, 16, 1);
    assert_eq!(stable_dt(&grid, &s, &MesoConfig::default(), &table), 1e-3);
}

#[test]
fn stable_dt_scales_with_width() {
    let table = standard();
    let (grid, s) = equilibrium(&table, 16, 2);
    let cfg = MesoConfig {
        dt_max: 1.0,
        ..MesoConfig::default()
    };
    let half = PeriodicMassGrid::new(grid.cell_mass().iter().map(|m| 0.5 * m).collect()).unwrap();
    let a = stable_dt(&grid, &s, &cfg, &table);
    let b = stable_dt(&half, &s, &cfg, &table);
    assert!((b - 0.5 * a).abs() < 1e-15 * a);
}

#[test]
fn stable_dt_respects_compression_limiter() {
    let table = standard();
    let (grid, mut s) = init_lagrangian(
        &MesoSampler {
            c0: &|_| 1.0,
            rho0: &|_| 1.0,
            u0: &|_| 0.0,
            theta0: &|_| 1.0,
        },
        10,
    )
    .unwrap();
    // (u_4 - u_3) / m_3 = -1e3
    s.u[3] = 50.0;
    s.u[4] = -50.0;
    let cfg = MesoConfig {
        dt_max: 1.0,
        cfl_factor: 1.0,
        ..MesoConfig::default()
    };
    let dt = stable_dt(&grid, &s, &cfg, &table);
    let cv = table.plus(Coefficient::Cv);
    let r = table.plus(Coefficient::R);
    assert!(dt <= 0.5 * cv / (r * 1e3));
    assert!(dt > 0.0);
}

#[test]
fn equilibrium_is_stationary_per_step() {
    let table = standard();
    let (grid, s) = equilibrium(&table, 40, 5);
    let next = step(&grid, &s, 1e-3, &table, 1e-10).unwrap();
    assert!(max_diff(&next.v, &s.v) < 1e-12);
    assert!(max_diff(&next.theta, &s.theta) < 1e-12);
    assert!(next.u.iter().all(|u| u.abs() < 1e-12));
    assert_eq!(next.c, s.c);
}

#[test]
fn uniform_single_fluid_is_stationary() {
    let table = MaterialTable::single_fluid(1.0, 1.0, 1.4, 1.0).unwrap();
    let (grid, s) = init_lagrangian(
        &MesoSampler {
            c0: &|_| 0.3,
            rho0: &|_| 2.0,
            u0: &|_| 0.0,
            theta0: &|_| 0.5,
        },
        12,
    )
    .unwrap();
    let next = step(&grid, &s, 1e-2, &table, 1e-10).unwrap();
    assert!(max_diff(&next.v, &s.v) < 1e-15);
    assert!(max_diff(&next.theta, &s.theta) < 1e-15);
}

#[test]
fn four_cell_step_matches_dense_oracle() {
    let table = standard();
    let n = 4;
    let grid = PeriodicMassGrid::new(vec![0.2, 0.3, 0.25, 0.35]).unwrap();
    let s = MesoLagState {
        c: vec![1.0, 0.0, 0.3, 1.0],
        v: vec![1.1, 0.8, 1.0, 0.9],
        theta: vec![1.0, 1.2, 0.9, 1.1],
        u: vec![0.1, -0.2, 0.05, 0.0],
        time: 0.0,
        x0: 0.0,
        galilean_shift: 0.0,
    };
    let dt = 0.01;
    let m = grid.cell_mass().to_vec();
    let node_m: Vec<f64> = (0..n).map(|j| 0.5 * (m[(j + n - 1) % n] + m[j])).collect();
    let f = |k, i: usize| table.mix_unchecked(k, s.c[i]);

    // momentum: assemble cell stresses into node equations
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for j in 0..n {
        a[j][j] += node_m[j] / dt;
        b[j] += node_m[j] / dt * s.u[j];
    }
    for i in 0..n {
        let r = (i + 1) % n;
        let k = f(Coefficient::Mu, i) / (m[i] * s.v[i]);
        let p = f(Coefficient::R, i) * s.theta[i] / s.v[i];
        // stress of cell i acts on its left node (+) and right node (-)
        for (node, sign) in [(i, 1.0), (r, -1.0)] {
            a[node][r] -= sign * k;
            a[node][i] += sign * k;
            b[node] -= sign * p;
        }
    }
    let u_star = dense_solve(a, b);

    let v_new: Vec<f64> = (0..n).map(|i| s.v[i] + dt * (u_star[(i + 1) % n] - u_star[i]) / m[i]).collect();

    // temperature
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let du = u_star[(i + 1) % n] - u_star[i];
        let cv = f(Coefficient::Cv, i);
        a[i][i] += m[i] * cv / dt + f(Coefficient::R, i) * du / v_new[i];
        b[i] += m[i] * cv / dt * s.theta[i] + f(Coefficient::Mu, i) * du * du / (m[i] * v_new[i]);
    }
    for i in 0..n {
        let r = (i + 1) % n;
        let resist = m[i] * v_new[i] / f(Coefficient::Kappa, i) + m[r] * v_new[r] / f(Coefficient::Kappa, r);
        let g = 2.0 / resist;
        // flux g (theta_r - theta_i) enters cell i, leaves cell r
        a[i][i] += g;
        a[i][r] -= g;
        a[r][r] += g;
        a[r][i] -= g;
    }
    let theta_new = dense_solve(a, b);

    let next = step(&grid, &s, dt, &table, 1e-12).unwrap();
    assert!(max_diff(&next.u, &u_star) < 1e-13);
    assert!(max_diff(&next.v, &v_new) < 1e-13);
    assert!(max_diff(&next.theta, &theta_new) < 1e-13);
}

#[test]
fn zero_final_time_returns_initial() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 32);
    let cfg = MesoConfig {
        final_time: 0.0,
        ..MesoConfig::default()
    };
    let traj = run(&grid, &s, &cfg, &table).unwrap();
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.snapshots[0].state, s);
    assert!(traj.dt_history.is_empty());
}

#[test]
fn equilibrium_survives_thousand_steps() {
    let table = standard();
    let (grid, s) = equilibrium(&table, 64, 8);
    let cfg = MesoConfig {
        final_time: 1.0,
        dt_max: 1e-3,
        ..MesoConfig::default()
    }
    .with_uniform_snapshots(4);
    let traj = run(&grid, &s, &cfg, &table).unwrap();
    assert!(traj.dt_history.len() >= 1000);
    for snap in &traj.snapshots {
        assert!(max_diff(&snap.state.v, &s.v) < 1e-10);
        assert!(max_diff(&snap.state.theta, &s.theta) < 1e-10);
        assert!(snap.state.u.iter().all(|u| u.abs() < 1e-10));
    }
}

#[test]
fn snapshot_times_are_hit_exactly() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 32);
    let cfg = MesoConfig {
        final_time: 0.05,
        snapshot_times: vec![0.0, 0.0123, 0.03],
        ..MesoConfig::default()
    };
    let traj = run(&grid, &s, &cfg, &table).unwrap();
    let times: Vec<f64> = traj.snapshots.iter().map(|s| s.time()).collect();
    assert_eq!(times, vec![0.0, 0.0123, 0.03, 0.05]);
}

#[test]
fn relabeling_symmetry() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 48);
    let mut flipped = s.clone();
    flipped.c.iter_mut().for_each(|c| *c = 1.0 - *c);
    let cfg = MesoConfig {
        final_time: 0.05,
        ..MesoConfig::default()
    };
    let a = run(&grid, &s, &cfg, &table).unwrap();
    let b = run(&grid, &flipped, &cfg, &table.swapped()).unwrap();
    let (sa, sb) = (&a.last().state, &b.last().state);
    assert!(max_diff(&sa.u, &sb.u) < 1e-12);
    assert!(max_diff(&sa.v, &sb.v) < 1e-12);
    assert!(max_diff(&sa.theta, &sb.theta) < 1e-12);
}

#[test]
fn deterministic_runs() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 40);
    let cfg = MesoConfig {
        final_time: 0.02,
        ..MesoConfig::default()
    };
    let a = run(&grid, &s, &cfg, &table).unwrap();
    let b = run(&grid, &s, &cfg, &table).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.dt_history, b.dt_history);
}

#[test]
fn conservation_over_a_run() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 128);
    let cfg = MesoConfig {
        final_time: 0.1,
        ..MesoConfig::default()
    }
    .with_uniform_snapshots(5);
    let traj = run(&grid, &s, &cfg, &table).unwrap();
    let mc = |st: &MesoLagState| grid.cell_mass().iter().zip(&st.c).map(|(m, c)| m * c).sum::<f64>();
    let mom = |st: &MesoLagState| grid.node_mass().iter().zip(&st.u).map(|(m, u)| m * u).sum::<f64>();
    let length = |st: &MesoLagState| grid.widths(&st.v).iter().sum::<f64>();
    for snap in &traj.snapshots {
        assert_eq!(mc(&snap.state), mc(&s));
        assert!(mom(&snap.state).abs() < 1e-12);
        assert!((length(&snap.state) - 1.0).abs() < 1e-12);
        assert!(snap.state.v.iter().all(|&v| v > 0.0));
        assert!(snap.state.theta.iter().all(|&t| t > 0.0));
    }
}

#[test]
fn energy_drift_is_first_order() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 128);
    let energy = |st: &MesoLagState| {
        let d = derived(&grid, st, &table);
        grid.cell_mass().iter().zip(&d.e_total).map(|(m, e)| m * e).sum::<f64>()
    };
    let drift = |dt: f64| {
        let cfg = MesoConfig {
            final_time: 0.2,
            dt_max: dt,
            ..MesoConfig::default()
        };
        let traj = run(&grid, &s, &cfg, &table).unwrap();
        assert!(traj.dt_history.iter().all(|&d| (d - dt).abs() < 1e-12));
        (energy(&traj.last().state) - energy(&s)).abs()
    };
    let ratio = drift(1e-3) / drift(5e-4);
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn sigma_plus_p_is_viscous_stress() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 32);
    let d = derived(&grid, &s, &table);
    let grad = grid.cell_gradient(&s.u);
    for i in 0..32 {
        let mu = table.mix_unchecked(Coefficient::Mu, s.c[i]);
        let visc = mu * grad[i] / s.v[i];
        assert!((d.sigma[i] + d.p[i] - visc).abs() < 1e-14);
        assert!(d.p[i] > 0.0);
    }
}

#[test]
fn resample_uniform_and_mass() {
    let table = standard();
    let (grid, s) = equilibrium(&table, 16, 1);
    let uniform = MesoLagState {
        c: vec![1.0; 16],
        v: vec![1.0; 16],
        ..s.clone()
    };
    let grid_u = PeriodicMassGrid::new(vec![1.0 / 16.0; 16]).unwrap();
    let cfg = MesoConfig {
        final_time: 0.0,
        ..MesoConfig::default()
    };
    let traj = run(&grid_u, &uniform, &cfg, &table).unwrap();
    let e = eulerian_resample(&traj, 64).unwrap();
    assert!(e[0].get("rho").unwrap().iter().all(|r| (r - 1.0).abs() < 1e-14));
    assert!(e[0].get("theta").unwrap().iter().all(|t| (t - 1.7).abs() < 1e-14));

    let (grid2, s2) = smooth_layered(&table, 64);
    let traj = run(
        &grid2,
        &s2,
        &MesoConfig {
            final_time: 0.05,
            ..MesoConfig::default()
        },
        &table,
    )
    .unwrap();
    let e = eulerian_resample(&traj, 256).unwrap();
    for snap in &e {
        let mass = snap.get("rho").unwrap().iter().sum::<f64>() / 256.0;
        assert!((mass - grid2.total_mass()).abs() < 1e-12 * grid2.total_mass());
    }
    assert!(eulerian_resample(&traj, 32).is_err());
    let _ = grid;
}

#[test]
fn initial_ramp_grows_geometrically_up_to_the_limit() {
    let table = standard();
    let (grid, s) = smooth_layered(&table, 32);
    let dt0 = 1e-6;
    let cfg = MesoConfig {
        final_time: 0.01,
        initial_dt: Some(dt0),
        ..MesoConfig::default()
    };
    let traj = run(&grid, &s, &cfg, &table).unwrap();
    let h = &traj.dt_history;
    assert_eq!(h[0], dt0);
    assert!((h[1] - 1.1 * dt0).abs() <= 1e-15 * dt0);
    // never above the ramp cap, and the ramp eventually hands over to the stability limit
    for (k, &dt) in h.iter().enumerate() {
        assert!(dt <= dt0 * 1.1f64.powi(k as i32) * (1.0 + 1e-12));
    }
    let free = run(&grid, &s, &MesoConfig { final_time: 0.01, ..MesoConfig::default() }, &table).unwrap();
    assert!(h.len() > free.dt_history.len());
    assert!(h[h.len() - 2] > 100.0 * dt0);
}
