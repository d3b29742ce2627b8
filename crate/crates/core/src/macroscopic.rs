//! Lagrangian integrator for the homogenized two-phase (Baer-Nunziato type)
//! limit system.
//!
//! The mixture shares one velocity and one temperature. Each cell carries the
//! volume fraction `alpha+` and the phase mass fractions `Y+`, `Y- = 1 - Y+`,
//! which are Lagrangian invariants. Phase densities are recovered as
//! `rho± = Y± / (v alpha±)` instead of being evolved.

use serde::{Deserialize, Serialize};

use crate::eulerian::{CellGeometry, EulerianSnapshot};
use crate::error::{invalid, Error, Result};
use crate::grid::{sample_cell_masses, PeriodicMassGrid};
use crate::material::{Coefficient, EffectiveCoefficients, MaterialTable, VANISHED_PHASE};
use crate::meso::{galilean_normalize, MesoConfig};
use crate::scheme::{dt_limits, face_conductance, momentum_solve, temperature_solve, volume_update, TemperatureTerms};

/// Admissible excursion of `alpha+` outside `[0, 1]`.
pub const ALPHA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroLagState {
    pub alpha_plus: Vec<f64>,
    pub y_plus: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    pub time: f64,
    pub x0: f64,
    pub galilean_shift: f64,
}

impl MacroLagState {
    pub fn n_cells(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn y_minus(&self, i: usize) -> f64 {
        1.0 - self.y_plus[i]
    }

    pub fn geometry(&self, grid: &PeriodicMassGrid) -> CellGeometry {
        CellGeometry::new(self.x0, grid.widths(&self.v))
    }

    /// `(rho+, rho-)` of cell `i`; a vanished phase reports 0.
    #[inline]
    pub fn phase_densities(&self, i: usize) -> (f64, f64) {
        phase_densities(self.alpha_plus[i], self.y_plus[i], self.v[i])
    }

    fn check(&self, grid: &PeriodicMassGrid) -> Result<()> {
        let n = grid.n_cells();
        if [self.alpha_plus.len(), self.y_plus.len(), self.v.len(), self.theta.len(), self.u.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(invalid("state length differs from the grid"));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn phase_densities(alpha_plus: f64, y_plus: f64, v: f64) -> (f64, f64) {
    let alpha_minus = 1.0 - alpha_plus;
    let rp = if alpha_plus > VANISHED_PHASE { y_plus / (v * alpha_plus) } else { 0.0 };
    let rm = if alpha_minus > VANISHED_PHASE { (1.0 - y_plus) / (v * alpha_minus) } else { 0.0 };
    (rp, rm)
}

/// Volume-fraction source of the `+` phase:
/// `(alpha+ / mu+) (sigma - mu+ dxu + R+ rho+ theta)`.
#[inline]
pub fn alpha_rhs(alpha_plus: f64, rho_plus: f64, theta: f64, sigma: f64, dxu: f64, table: &MaterialTable) -> f64 {
    let mu = table.plus(Coefficient::Mu);
    alpha_plus / mu * (sigma - mu * dxu + table.plus(Coefficient::R) * rho_plus * theta)
}

/// The `-` phase counterpart of [`alpha_rhs`].
#[inline]
pub fn alpha_rhs_minus(alpha_minus: f64, rho_minus: f64, theta: f64, sigma: f64, dxu: f64, table: &MaterialTable) -> f64 {
    let mu = table.minus(Coefficient::Mu);
    alpha_minus / mu * (sigma - mu * dxu + table.minus(Coefficient::R) * rho_minus * theta)
}

/// Pressure-relaxation form of the volume-fraction source,
/// `alpha+ alpha- / mu_eff (R+ rho+ - R- rho-) theta`. Agrees with
/// [`alpha_rhs`] under the effective stress law only when `mu+ = mu-`.
pub fn alpha_rhs_relaxation(alpha_plus: f64, rho_plus: f64, rho_minus: f64, theta: f64, table: &MaterialTable) -> f64 {
    let alpha_minus = 1.0 - alpha_plus;
    let mu_eff = 1.0 / (alpha_plus / table.plus(Coefficient::Mu) + alpha_minus / table.minus(Coefficient::Mu));
    alpha_plus * alpha_minus / mu_eff
        * (table.plus(Coefficient::R) * rho_plus - table.minus(Coefficient::R) * rho_minus)
        * theta
}

/// Per-cell effective coefficients of a state with volume `v`.
fn cell_effective(table: &MaterialTable, alpha: &[f64], y_plus: &[f64], v: &[f64], theta: &[f64]) -> Vec<EffectiveCoefficients> {
    (0..v.len())
        .map(|i| {
            let (rp, rm) = phase_densities(alpha[i], y_plus[i], v[i]);
            table.effective_unchecked(alpha[i], rp, rm, theta[i])
        })
        .collect()
}

fn mass_heat_capacity(table: &MaterialTable, y_plus: &[f64]) -> Vec<f64> {
    y_plus
        .iter()
        .map(|&y| y * table.plus(Coefficient::Cv) + (1.0 - y) * table.minus(Coefficient::Cv))
        .collect()
}

/// Derived fields of a macroscopic snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroDerived {
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
    pub p_eff: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mu_eff: Vec<f64>,
    pub kappa_eff: Vec<f64>,
    pub cv_eff: Vec<f64>,
    /// Effective heat flux `kappa_eff dtheta/dx` at the left node of each cell.
    pub heat_flux: Vec<f64>,
}

pub fn macro_derived(grid: &PeriodicMassGrid, state: &MacroLagState, table: &MaterialTable) -> MacroDerived {
    let n = grid.n_cells();
    let m = grid.cell_mass();
    let eff = cell_effective(table, &state.alpha_plus, &state.y_plus, &state.v, &state.theta);
    let kappa: Vec<f64> = eff.iter().map(|e| e.kappa_eff).collect();
    let g = face_conductance(&grid.widths(&state.v), &kappa);
    let mut d = MacroDerived {
        rho_plus: Vec::with_capacity(n),
        rho_minus: Vec::with_capacity(n),
        p_eff: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        mu_eff: Vec::with_capacity(n),
        kappa_eff: kappa,
        cv_eff: Vec::with_capacity(n),
        heat_flux: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (rp, rm) = state.phase_densities(i);
        let dxu = (state.u[(i + 1) % n] - state.u[i]) / (m[i] * state.v[i]);
        d.rho_plus.push(rp);
        d.rho_minus.push(rm);
        d.p_eff.push(eff[i].p_eff);
        d.sigma.push(eff[i].mu_eff * dxu - eff[i].p_eff);
        d.mu_eff.push(eff[i].mu_eff);
        d.cv_eff.push(eff[i].cv_eff);
        let left = (i + n - 1) % n;
        d.heat_flux.push(g[left] * (state.theta[i] - state.theta[left]));
    }
    d
}

/// Initial data of the limit system.
pub struct MacroSampler<'a> {
    pub alpha0: &'a dyn Fn(f64) -> f64,
    pub rho0_plus: &'a dyn Fn(f64) -> f64,
    pub rho0_minus: &'a dyn Fn(f64) -> f64,
    pub u0: &'a dyn Fn(f64) -> f64,
    pub theta0: &'a dyn Fn(f64) -> f64,
}

pub fn init_macro(sampler: &MacroSampler<'_>, n_cells: usize) -> Result<(PeriodicMassGrid, MacroLagState)> {
    if n_cells < 3 {
        return Err(invalid(format!("need at least 3 cells, got {n_cells}")));
    }
    let h = 1.0 / n_cells as f64;
    let mut alpha = Vec::with_capacity(n_cells);
    let mut y_plus = Vec::with_capacity(n_cells);
    let mut v = Vec::with_capacity(n_cells);
    let mut theta = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        let x = (i as f64 + 0.5) * h;
        let a = (sampler.alpha0)(x);
        if !(0.0..=1.0).contains(&a) {
            return Err(invalid(format!("alpha0({x}) = {a} outside [0, 1]")));
        }
        let (rp, rm) = ((sampler.rho0_plus)(x), (sampler.rho0_minus)(x));
        if !(rp > 0.0 && rm > 0.0 && rp.is_finite() && rm.is_finite()) {
            return Err(invalid(format!("phase densities at {x} must be positive, got {rp}, {rm}")));
        }
        let th = (sampler.theta0)(x);
        if !(th > 0.0 && th.is_finite()) {
            return Err(invalid(format!("theta0({x}) = {th} is not positive")));
        }
        let rho = a * rp + (1.0 - a) * rm;
        alpha.push(a);
        y_plus.push(a * rp / rho);
        v.push(1.0 / rho);
        theta.push(th);
    }
    let rho0 = |x: f64| {
        let a = (sampler.alpha0)(x);
        a * (sampler.rho0_plus)(x) + (1.0 - a) * (sampler.rho0_minus)(x)
    };
    let grid = PeriodicMassGrid::new(sample_cell_masses(n_cells, rho0))?;
    let u: Vec<f64> = (0..n_cells).map(|j| (sampler.u0)(j as f64 * h)).collect();
    let (u, shift) = galilean_normalize(&grid, u);
    Ok((
        grid,
        MacroLagState {
            alpha_plus: alpha,
            y_plus,
            v,
            theta,
            u,
            time: 0.0,
            x0: 0.0,
            galilean_shift: shift,
        },
    ))
}

pub fn stable_dt_macro(grid: &PeriodicMassGrid, state: &MacroLagState, config: &MesoConfig, table: &MaterialTable) -> f64 {
    let n = grid.n_cells();
    let eff = cell_effective(table, &state.alpha_plus, &state.y_plus, &state.v, &state.theta);
    let cv = mass_heat_capacity(table, &state.y_plus);
    let mut sound = Vec::with_capacity(n);
    let mut cv_over_r = Vec::with_capacity(n);
    for i in 0..n {
        // effective gas constant: p v / theta
        let r_eff = eff[i].p_eff * state.v[i] / state.theta[i];
        let gamma = 1.0 + r_eff / cv[i];
        sound.push((gamma * r_eff * state.theta[i]).sqrt());
        cv_over_r.push(cv[i] / r_eff);
    }
    let lim = dt_limits(grid, &state.v, &state.u, &sound, &cv_over_r, config.cfl_factor);
    lim.acoustic.min(lim.positivity).min(config.dt_max)
}

/// End-of-step fields that drive the volume-fraction update.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroStepFields {
    /// Mixture stress used by the volume-fraction update.
    pub sigma: Vec<f64>,
}

/// One step: momentum, geometry, temperature, then volume fraction.
pub fn step_macro(grid: &PeriodicMassGrid, state: &MacroLagState, dt: f64, table: &MaterialTable, tol: f64) -> Result<MacroLagState> {
    step_macro_with_fields(grid, state, dt, table, tol).map(|(s, _)| s)
}

pub fn step_macro_with_fields(
    grid: &PeriodicMassGrid,
    state: &MacroLagState,
    dt: f64,
    table: &MaterialTable,
    tol: f64,
) -> Result<(MacroLagState, MacroStepFields)> {
    state.check(grid)?;
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let n = grid.n_cells();
    let m = grid.cell_mass();
    let eff = cell_effective(table, &state.alpha_plus, &state.y_plus, &state.v, &state.theta);
    let mu: Vec<f64> = eff.iter().map(|e| e.mu_eff).collect();
    let kappa: Vec<f64> = eff.iter().map(|e| e.kappa_eff).collect();
    let pressure: Vec<f64> = eff.iter().map(|e| e.p_eff).collect();
    let visc: Vec<f64> = (0..n).map(|i| mu[i] / state.v[i]).collect();

    let u_new = momentum_solve(grid, &state.u, &visc, &pressure, dt, tol).map_err(|e| match e {
        Error::LinearSolve(reason) => Error::StepRejected {
            time: state.time,
            dt,
            reason: format!("momentum solve: {reason}"),
        },
        other => other,
    })?;
    let v_new = volume_update(grid, &state.v, &u_new, dt, state.time)?;

    // pressure per unit temperature at the new volume, old volume fraction
    let work: Vec<f64> = (0..n)
        .map(|i| {
            let (rp, rm) = phase_densities(state.alpha_plus[i], state.y_plus[i], v_new[i]);
            table.effective_unchecked(state.alpha_plus[i], rp, rm, 1.0).p_eff
        })
        .collect();
    let cv = mass_heat_capacity(table, &state.y_plus);
    let conductance = face_conductance(&grid.widths(&v_new), &kappa);
    let theta_new = temperature_solve(
        grid,
        &state.theta,
        &v_new,
        &u_new,
        &TemperatureTerms {
            heat_capacity: &cv,
            viscosity: &mu,
            work: &work,
            conductance: &conductance,
        },
        dt,
        tol,
        state.time,
    )?;

    let mut sigma = Vec::with_capacity(n);
    let mut alpha_new = Vec::with_capacity(n);
    for i in 0..n {
        let dxu = (u_new[(i + 1) % n] - u_new[i]) / (m[i] * v_new[i]);
        let s = mu[i] * dxu - theta_new[i] * work[i];
        let a = advance_alpha(state.alpha_plus[i], state.y_plus[i], v_new[i], theta_new[i], s, dxu, dt, table);
        if !(a >= -ALPHA_TOLERANCE && a <= 1.0 + ALPHA_TOLERANCE) {
            return Err(Error::RunAborted {
                time: state.time,
                reason: format!("volume fraction {a:.12} left [0, 1] in cell {i} (alpha_n = {})", state.alpha_plus[i]),
                dump: String::new(),
            });
        }
        sigma.push(s);
        alpha_new.push(a);
    }

    Ok((
        MacroLagState {
            alpha_plus: alpha_new,
            y_plus: state.y_plus.clone(),
            v: v_new,
            theta: theta_new,
            x0: state.x0 + dt * u_new[0],
            u: u_new,
            time: state.time + dt,
            galilean_shift: state.galilean_shift,
        },
        MacroStepFields { sigma },
    ))
}

/// Explicit midpoint on [`alpha_rhs`] with frozen `sigma`, `dxu`, `theta` and
/// `rho+` recomputed from `(Y+, v, alpha+)` at each stage.
#[inline]
pub(crate) fn advance_alpha(alpha: f64, y_plus: f64, v: f64, theta: f64, sigma: f64, dxu: f64, dt: f64, table: &MaterialTable) -> f64 {
    let rhs = |a: f64| {
        let (rp, _) = phase_densities(a, y_plus, v);
        alpha_rhs(a, rp, theta, sigma, dxu, table)
    };
    let half = alpha + 0.5 * dt * rhs(alpha);
    alpha + dt * rhs(half)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSnapshot {
    pub state: MacroLagState,
    pub derived: MacroDerived,
}

#[derive(Debug, Clone)]
pub struct MacroTrajectory {
    pub grid: PeriodicMassGrid,
    pub table: MaterialTable,
    pub snapshots: Vec<MacroSnapshot>,
    pub dt_history: Vec<f64>,
    pub galilean_shift: f64,
}

impl MacroTrajectory {
    pub fn initial(&self) -> &MacroSnapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &MacroSnapshot {
        self.snapshots.last().expect("trajectory has an initial snapshot")
    }
}

pub fn run_macro(grid: &PeriodicMassGrid, state: &MacroLagState, config: &MesoConfig, table: &MaterialTable) -> Result<MacroTrajectory> {
    run_macro_observed(grid, state, config, table, &mut |_: &MacroLagState, _: &MacroLagState, _: &MacroStepFields, _: f64| {})
}

/// As [`crate::meso::run_observed`], for the limit system. The observer also
/// receives the stress that drove the volume-fraction update.
pub fn run_macro_observed(
    grid: &PeriodicMassGrid,
    state: &MacroLagState,
    config: &MesoConfig,
    table: &MaterialTable,
    observer: &mut dyn FnMut(&MacroLagState, &MacroLagState, &MacroStepFields, f64),
) -> Result<MacroTrajectory> {
    config.validate()?;
    state.check(grid)?;
    let snapshot = |s: &MacroLagState| MacroSnapshot {
        derived: macro_derived(grid, s, table),
        state: s.clone(),
    };
    let mut traj = MacroTrajectory {
        grid: grid.clone(),
        table: *table,
        snapshots: vec![snapshot(state)],
        dt_history: Vec::new(),
        galilean_shift: state.galilean_shift,
    };
    let mut current = state.clone();
    let mut ramp = config.ramp();
    for target in config.schedule() {
        while current.time < target {
            let remaining = target - current.time;
            let mut dt = ramp.limit(stable_dt_macro(grid, &current, config, table));
            let hits = remaining <= dt * (1.0 + 1e-6);
            if hits {
                dt = remaining;
            }
            let attempt = |dt: f64| step_macro_with_fields(grid, &current, dt, table, config.linear_tol);
            let ((mut next, fields), taken) = match attempt(dt) {
                Ok(r) => (r, dt),
                Err(first) => match attempt(0.5 * dt) {
                    Ok(r) => (r, 0.5 * dt),
                    Err(second) => {
                        return Err(Error::RunAborted {
                            time: current.time,
                            reason: format!("{first}; retry at dt/2: {second}"),
                            dump: serde_json::to_string(&current).unwrap_or_default(),
                        })
                    }
                },
            };
            if hits && taken == dt {
                next.time = target;
            }
            observer(&current, &next, &fields, taken);
            traj.dt_history.push(taken);
            ramp.advance();
            current = next;
        }
        traj.snapshots.push(snapshot(&current));
    }
    Ok(traj)
}

/// Uniform-grid fields `alpha_plus, rho, rho_plus, rho_minus, u, theta, sigma`.
///
/// `rho_plus`/`rho_minus` are volume-fraction weighted partial densities
/// `alpha± rho±`, which remap conservatively.
pub fn macro_eulerian_resample(traj: &MacroTrajectory, n_samples: usize) -> Result<Vec<EulerianSnapshot>> {
    let n_cells = traj.grid.n_cells();
    if n_samples < n_cells {
        return Err(invalid(format!("{n_samples} samples for {n_cells} cells")));
    }
    traj.snapshots
        .iter()
        .map(|snap| {
            let s = &snap.state;
            let geom = s.geometry(&traj.grid);
            let rho: Vec<f64> = s.v.iter().map(|v| 1.0 / v).collect();
            let partial_plus: Vec<f64> = (0..n_cells).map(|i| s.y_plus[i] / s.v[i]).collect();
            let partial_minus: Vec<f64> = (0..n_cells).map(|i| s.y_minus(i) / s.v[i]).collect();
            Ok(EulerianSnapshot {
                time: s.time,
                fields: vec![
                    ("alpha_plus".into(), geom.remap_cells(&s.alpha_plus, n_samples)?),
                    ("rho".into(), geom.remap_cells(&rho, n_samples)?),
                    ("partial_plus".into(), geom.remap_cells(&partial_plus, n_samples)?),
                    ("partial_minus".into(), geom.remap_cells(&partial_minus, n_samples)?),
                    ("u".into(), geom.sample_nodes(&s.u, n_samples)?),
                    ("theta".into(), geom.remap_cells(&s.theta, n_samples)?),
                    ("sigma".into(), geom.remap_cells(&snap.derived.sigma, n_samples)?),
                ],
            })
        })
        .collect()
}

/// Largest gap between the two volume-fraction sources over a snapshot.
pub fn alpha_source_discrepancy(grid: &PeriodicMassGrid, snap: &MacroSnapshot, table: &MaterialTable) -> f64 {
    let s = &snap.state;
    let d = &snap.derived;
    let n = grid.n_cells();
    let m = grid.cell_mass();
    (0..n)
        .map(|i| {
            let dxu = (s.u[(i + 1) % n] - s.u[i]) / (m[i] * s.v[i]);
            let a = alpha_rhs(s.alpha_plus[i], d.rho_plus[i], s.theta[i], d.sigma[i], dxu, table);
            let b = alpha_rhs_relaxation(s.alpha_plus[i], d.rho_plus[i], d.rho_minus[i], s.theta[i], table);
            (a - b).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;
