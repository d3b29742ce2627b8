//! Semi-implicit Lagrangian integrator for the layered (mesoscopic) mixture.
//!
//! Velocities live on nodes, everything else on cells. The color `c` of each
//! cell is set once at initialization and never touched again, so the
//! material coefficients `f(c)` are exactly transported.

use serde::{Deserialize, Serialize};

use crate::eulerian::{CellGeometry, EulerianSnapshot};
use crate::error::{invalid, Error, Result};
use crate::grid::{sample_cell_masses, PeriodicMassGrid};
use crate::material::{Coefficient, MaterialTable, COLOR_TOLERANCE};
use crate::scheme::{dt_limits, face_conductance, momentum_solve, temperature_solve, volume_update, TemperatureTerms};

/// Time-integration settings shared by both solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoConfig {
    pub final_time: f64,
    pub cfl_factor: f64,
    pub dt_max: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    pub linear_tol: f64,
    /// Cap on the first step. Later caps grow by `dt_growth` per step, so an
    /// initial layer is resolved before the stability limits take over.
    #[serde(default)]
    pub initial_dt: Option<f64>,
    #[serde(default = "default_growth")]
    pub dt_growth: f64,
}

fn default_growth() -> f64 {
    1.1
}

impl Default for MesoConfig {
    fn default() -> Self {
        MesoConfig {
            final_time: 0.5,
            cfl_factor: 0.5,
            dt_max: 1e-3,
            snapshot_times: Vec::new(),
            linear_tol: 1e-10,
            initial_dt: None,
            dt_growth: default_growth(),
        }
    }
}

impl MesoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return Err(invalid(format!("final_time must be >= 0, got {}", self.final_time)));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(invalid(format!("cfl_factor must lie in (0, 1], got {}", self.cfl_factor)));
        }
        if !(self.dt_max > 0.0) {
            return Err(invalid("dt_max must be positive"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(invalid("linear_tol must be positive"));
        }
        if let Some(dt0) = self.initial_dt {
            if !(dt0 > 0.0) {
                return Err(invalid(format!("initial_dt must be positive, got {dt0}")));
            }
            if !(self.dt_growth > 1.0 && self.dt_growth.is_finite()) {
                return Err(invalid(format!("dt_growth must exceed 1, got {}", self.dt_growth)));
            }
        }
        let mut prev = -1.0;
        for &t in &self.snapshot_times {
            if !(t >= 0.0 && t <= self.final_time) {
                return Err(invalid(format!("snapshot time {t} outside [0, {}]", self.final_time)));
            }
            if t <= prev {
                return Err(invalid("snapshot times must be strictly increasing"));
            }
            prev = t;
        }
        Ok(())
    }

    /// Snapshot schedule actually used by a run: the requested times with
    /// `t = 0` removed and `final_time` appended when missing.
    pub fn schedule(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.snapshot_times.iter().copied().filter(|&t| t > 0.0).collect();
        if self.final_time > 0.0 && out.last().map_or(true, |&t| t < self.final_time) {
            out.push(self.final_time);
        }
        out
    }

    /// Step-cap sequence of the initial ramp.
    pub(crate) fn ramp(&self) -> StepRamp {
        StepRamp {
            cap: self.initial_dt.unwrap_or(f64::INFINITY),
            growth: self.dt_growth,
        }
    }

    /// `count` equally spaced snapshot times ending at `final_time`.
    pub fn with_uniform_snapshots(mut self, count: usize) -> Self {
        self.snapshot_times = (1..=count).map(|k| self.final_time * k as f64 / count as f64).collect();
        self
    }
}

pub(crate) struct StepRamp {
    cap: f64,
    growth: f64,
}

impl StepRamp {
    pub fn limit(&self, dt: f64) -> f64 {
        dt.min(self.cap)
    }

    pub fn advance(&mut self) {
        if self.cap.is_finite() {
            self.cap *= self.growth;
        }
    }
}

/// Lagrangian state of the layered mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoLagState {
    pub c: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Velocity at the left node of each cell.
    pub u: Vec<f64>,
    pub time: f64,
    /// Position of the left node of cell 0.
    pub x0: f64,
    /// Constant velocity added at initialization to zero the total momentum.
    pub galilean_shift: f64,
}

impl MesoLagState {
    pub fn n_cells(&self) -> usize {
        self.c.len()
    }

    pub fn geometry(&self, grid: &PeriodicMassGrid) -> CellGeometry {
        CellGeometry::new(self.x0, grid.widths(&self.v))
    }

    fn check(&self, grid: &PeriodicMassGrid) -> Result<()> {
        let n = grid.n_cells();
        if self.c.len() != n || self.v.len() != n || self.theta.len() != n || self.u.len() != n {
            return Err(invalid("state length differs from the grid"));
        }
        Ok(())
    }
}

/// Quantities derived pointwise from a state.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFields {
    pub p: Vec<f64>,
    pub sigma: Vec<f64>,
    pub e: Vec<f64>,
    /// `(u_l^2 + u_r^2) / 4 + e` per cell.
    pub e_total: Vec<f64>,
    pub s: Vec<f64>,
    /// `kappa dtheta/dx` at the left node of each cell.
    pub heat_flux: Vec<f64>,
}

/// Evaluated material coefficients per cell.
pub(crate) struct CellCoefficients {
    pub mu: Vec<f64>,
    pub cv: Vec<f64>,
    pub gamma: Vec<f64>,
    pub r: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl CellCoefficients {
    pub fn new(table: &MaterialTable, c: &[f64]) -> Self {
        let eval = |f| c.iter().map(|&ci| table.mix_unchecked(f, ci)).collect();
        CellCoefficients {
            mu: eval(Coefficient::Mu),
            cv: eval(Coefficient::Cv),
            gamma: eval(Coefficient::Gamma),
            r: eval(Coefficient::R),
            kappa: eval(Coefficient::Kappa),
        }
    }
}

pub fn derived(grid: &PeriodicMassGrid, state: &MesoLagState, table: &MaterialTable) -> DerivedFields {
    let n = grid.n_cells();
    let coef = CellCoefficients::new(table, &state.c);
    let m = grid.cell_mass();
    let widths = grid.widths(&state.v);
    let g = face_conductance(&widths, &coef.kappa);
    let mut out = DerivedFields {
        p: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        e_total: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        heat_flux: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (ul, ur) = (state.u[i], state.u[(i + 1) % n]);
        let (v, th) = (state.v[i], state.theta[i]);
        let p = coef.r[i] * th / v;
        let e = coef.cv[i] * th;
        out.p.push(p);
        out.sigma.push(coef.mu[i] * (ur - ul) / (m[i] * v) - p);
        out.e.push(e);
        out.e_total.push(0.25 * (ul * ul + ur * ur) + e);
        out.s.push(coef.cv[i] * th.ln() + coef.r[i] * v.ln());
        let left = (i + n - 1) % n;
        out.heat_flux.push(g[left] * (th - state.theta[left]));
    }
    out
}

/// Initial data as functions on the torus `[0, 1)`.
pub struct MesoSampler<'a> {
    pub c0: &'a dyn Fn(f64) -> f64,
    pub rho0: &'a dyn Fn(f64) -> f64,
    pub u0: &'a dyn Fn(f64) -> f64,
    pub theta0: &'a dyn Fn(f64) -> f64,
}

/// Samples the initial data on `n_cells` uniform cells and removes the mean
/// momentum by a Galilean shift.
pub fn init_lagrangian(sampler: &MesoSampler<'_>, n_cells: usize) -> Result<(PeriodicMassGrid, MesoLagState)> {
    if n_cells < 3 {
        return Err(invalid(format!("need at least 3 cells, got {n_cells}")));
    }
    let h = 1.0 / n_cells as f64;
    let mid = |i: usize| (i as f64 + 0.5) * h;
    let mut c = Vec::with_capacity(n_cells);
    let mut v = Vec::with_capacity(n_cells);
    let mut theta = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        let x = mid(i);
        let ci = (sampler.c0)(x);
        if !(ci >= -COLOR_TOLERANCE && ci <= 1.0 + COLOR_TOLERANCE) {
            return Err(invalid(format!("c0({x}) = {ci} outside [0, 1]")));
        }
        let rho = (sampler.rho0)(x);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("rho0({x}) = {rho} is not positive")));
        }
        let th = (sampler.theta0)(x);
        if !(th > 0.0 && th.is_finite()) {
            return Err(invalid(format!("theta0({x}) = {th} is not positive")));
        }
        c.push(ci.clamp(0.0, 1.0));
        v.push(1.0 / rho);
        theta.push(th);
    }
    let grid = PeriodicMassGrid::new(sample_cell_masses(n_cells, sampler.rho0))?;
    let u: Vec<f64> = (0..n_cells).map(|j| (sampler.u0)(j as f64 * h)).collect();
    let (u, shift) = galilean_normalize(&grid, u);
    let state = MesoLagState {
        c,
        v,
        theta,
        u,
        time: 0.0,
        x0: 0.0,
        galilean_shift: shift,
    };
    Ok((grid, state))
}

/// Subtracts the mass-weighted mean velocity; returns the shifted field and
/// the shift that was added.
pub(crate) fn galilean_normalize(grid: &PeriodicMassGrid, mut u: Vec<f64>) -> (Vec<f64>, f64) {
    let momentum: f64 = grid.node_mass().iter().zip(&u).map(|(m, u)| m * u).sum();
    let shift = -momentum / grid.total_mass();
    u.iter_mut().for_each(|x| *x += shift);
    (u, shift)
}

/// Largest admissible step for the next update, capped by `dt_max`.
pub fn stable_dt(grid: &PeriodicMassGrid, state: &MesoLagState, config: &MesoConfig, table: &MaterialTable) -> f64 {
    let coef = CellCoefficients::new(table, &state.c);
    let sound: Vec<f64> = (0..grid.n_cells())
        .map(|i| (coef.gamma[i] * coef.r[i] * state.theta[i]).sqrt())
        .collect();
    let cv_over_r: Vec<f64> = coef.cv.iter().zip(&coef.r).map(|(a, b)| a / b).collect();
    let lim = dt_limits(grid, &state.v, &state.u, &sound, &cv_over_r, config.cfl_factor);
    lim.acoustic.min(lim.positivity).min(config.dt_max)
}

/// One semi-implicit step: momentum, geometry, temperature.
pub fn step(grid: &PeriodicMassGrid, state: &MesoLagState, dt: f64, table: &MaterialTable, tol: f64) -> Result<MesoLagState> {
    state.check(grid)?;
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let n = grid.n_cells();
    let coef = CellCoefficients::new(table, &state.c);
    let pressure: Vec<f64> = (0..n).map(|i| coef.r[i] * state.theta[i] / state.v[i]).collect();
    let visc: Vec<f64> = (0..n).map(|i| coef.mu[i] / state.v[i]).collect();

    let u_new = momentum_solve(grid, &state.u, &visc, &pressure, dt, tol).map_err(|e| reject(e, state.time, dt))?;
    let v_new = volume_update(grid, &state.v, &u_new, dt, state.time)?;

    let widths = grid.widths(&v_new);
    let conductance = face_conductance(&widths, &coef.kappa);
    let work: Vec<f64> = (0..n).map(|i| coef.r[i] / v_new[i]).collect();
    let theta_new = temperature_solve(
        grid,
        &state.theta,
        &v_new,
        &u_new,
        &TemperatureTerms {
            heat_capacity: &coef.cv,
            viscosity: &coef.mu,
            work: &work,
            conductance: &conductance,
        },
        dt,
        tol,
        state.time,
    )?;

    Ok(MesoLagState {
        c: state.c.clone(),
        v: v_new,
        theta: theta_new,
        x0: state.x0 + dt * u_new[0],
        u: u_new,
        time: state.time + dt,
        galilean_shift: state.galilean_shift,
    })
}

fn reject(e: Error, time: f64, dt: f64) -> Error {
    match e {
        Error::LinearSolve(reason) => Error::StepRejected {
            time,
            dt,
            reason: format!("momentum solve: {reason}"),
        },
        other => other,
    }
}

/// A recorded snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MesoSnapshot {
    pub state: MesoLagState,
    pub derived: DerivedFields,
}

impl MesoSnapshot {
    pub fn time(&self) -> f64 {
        self.state.time
    }
}

#[derive(Debug, Clone)]
pub struct MesoTrajectory {
    pub grid: PeriodicMassGrid,
    pub table: MaterialTable,
    pub snapshots: Vec<MesoSnapshot>,
    pub dt_history: Vec<f64>,
    pub galilean_shift: f64,
}

impl MesoTrajectory {
    pub fn initial(&self) -> &MesoSnapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &MesoSnapshot {
        self.snapshots.last().expect("trajectory has an initial snapshot")
    }
}

/// Integrates to `config.final_time`; see [`run_observed`].
pub fn run(grid: &PeriodicMassGrid, state: &MesoLagState, config: &MesoConfig, table: &MaterialTable) -> Result<MesoTrajectory> {
    run_observed(grid, state, config, table, &mut |_: &MesoLagState, _: &MesoLagState, _: f64| {})
}

/// Integrates to `config.final_time`, calling `observer(prev, next, dt)` after
/// every accepted step.
///
/// A rejected step is retried once with half the step; a second rejection
/// aborts the run.
pub fn run_observed(
    grid: &PeriodicMassGrid,
    state: &MesoLagState,
    config: &MesoConfig,
    table: &MaterialTable,
    observer: &mut dyn FnMut(&MesoLagState, &MesoLagState, f64),
) -> Result<MesoTrajectory> {
    config.validate()?;
    state.check(grid)?;
    let snapshot = |s: &MesoLagState| MesoSnapshot {
        derived: derived(grid, s, table),
        state: s.clone(),
    };
    let mut traj = MesoTrajectory {
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
            let mut dt = ramp.limit(stable_dt(grid, &current, config, table));
            let hits = remaining <= dt * (1.0 + 1e-6);
            if hits {
                dt = remaining;
            }
            let (next, taken) = match step(grid, &current, dt, table, config.linear_tol) {
                Ok(next) => (next, dt),
                Err(first) => match step(grid, &current, 0.5 * dt, table, config.linear_tol) {
                    Ok(next) => (next, 0.5 * dt),
                    Err(second) => {
                        return Err(Error::RunAborted {
                            time: current.time,
                            reason: format!("{first}; retry at dt/2: {second}"),
                            dump: crate::io::meso_state_csv(grid, &current, table),
                        })
                    }
                },
            };
            let mut next = next;
            if hits && taken == dt {
                next.time = target;
            }
            observer(&current, &next, taken);
            traj.dt_history.push(taken);
            ramp.advance();
            current = next;
        }
        traj.snapshots.push(snapshot(&current));
    }
    Ok(traj)
}

/// Uniform-grid fields `c, rho, u, theta, sigma, p` for every snapshot.
pub fn eulerian_resample(traj: &MesoTrajectory, n_samples: usize) -> Result<Vec<EulerianSnapshot>> {
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
            Ok(EulerianSnapshot {
                time: s.time,
                fields: vec![
                    ("c".into(), geom.remap_cells(&s.c, n_samples)?),
                    ("rho".into(), geom.remap_cells(&rho, n_samples)?),
                    ("u".into(), geom.sample_nodes(&s.u, n_samples)?),
                    ("theta".into(), geom.remap_cells(&s.theta, n_samples)?),
                    ("sigma".into(), geom.remap_cells(&snap.derived.sigma, n_samples)?),
                    ("p".into(), geom.remap_cells(&snap.derived.p, n_samples)?),
                ],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
