//! Sub-steps shared by the mesoscopic and macroscopic integrators.
//!
//! Both systems advance the same staggered Lagrangian skeleton: an implicit
//! viscous momentum solve with explicit pressure, a volume update from the new
//! velocity, and a temperature solve that is linear in the new temperature.
//! Only the coefficients differ, so the solvers pass them in per cell.

use crate::error::{Error, Result};
use crate::grid::PeriodicMassGrid;
use crate::tridiag::cyclic_tridiag_solve_checked;

/// Implicit momentum sub-step.
///
/// Solves `M_j (u*_j - u_j) = dt [s*_j - s*_{j-1}]` with the cell stress
/// `s_i = visc_i (u*_{i+1} - u*_i) / m_i - p_i`, where `visc_i = mu_i / v_i`.
pub(crate) fn momentum_solve(
    grid: &PeriodicMassGrid,
    u: &[f64],
    visc: &[f64],
    pressure: &[f64],
    dt: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let m = grid.cell_mass();
    let node_m = grid.node_mass();
    let a: Vec<f64> = (0..n).map(|i| dt * visc[i] / m[i]).collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let left = (j + n - 1) % n;
        lower[j] = -a[left];
        upper[j] = -a[j];
        diag[j] = node_m[j] + a[j] + a[left];
        rhs[j] = node_m[j] * u[j] - dt * (pressure[j] - pressure[left]);
    }
    cyclic_tridiag_solve_checked(&lower, &diag, &upper, &rhs, tol)
}

/// `v_i + dt (u_{i+1} - u_i) / m_i`, rejecting non-positive volumes.
pub(crate) fn volume_update(grid: &PeriodicMassGrid, v: &[f64], u_new: &[f64], dt: f64, time: f64) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let m = grid.cell_mass();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let vi = v[i] + dt * (u_new[(i + 1) % n] - u_new[i]) / m[i];
        if !(vi > 0.0) {
            return Err(Error::StepRejected {
                time,
                dt,
                reason: format!("specific volume {vi:.3e} in cell {i}"),
            });
        }
        out.push(vi);
    }
    Ok(out)
}

/// Face conductances `2 / (dx_i / k_i + dx_{i+1} / k_{i+1})` at the right face
/// of each cell: the series (harmonic) combination of the two half cells.
pub(crate) fn face_conductance(widths: &[f64], kappa: &[f64]) -> Vec<f64> {
    let n = widths.len();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            2.0 / (widths[i] / kappa[i] + widths[j] / kappa[j])
        })
        .collect()
}

/// Coefficients of the temperature sub-step, per cell.
pub(crate) struct TemperatureTerms<'a> {
    /// Heat capacity per unit mass (`cv(c)` or the mass-weighted mixture value).
    pub heat_capacity: &'a [f64],
    /// Viscosity entering the heating term `mu (du)^2 / (m v)`.
    pub viscosity: &'a [f64],
    /// Pressure per unit temperature at the new volume: `p = theta * work_i`.
    pub work: &'a [f64],
    /// Conductance at the right face of each cell.
    pub conductance: &'a [f64],
}

/// Implicit temperature sub-step.
///
/// Per cell, multiplied by `m_i`:
/// `m cv (th' - th) = dt mu du^2 / (m v') - dt work du th' + dt [G+ (th'_{+} - th') - G- (th' - th'_{-})]`
/// with `du = u*_{i+1} - u*_i`.
pub(crate) fn temperature_solve(
    grid: &PeriodicMassGrid,
    theta: &[f64],
    v_new: &[f64],
    u_new: &[f64],
    terms: &TemperatureTerms<'_>,
    dt: f64,
    tol: f64,
    time: f64,
) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let m = grid.cell_mass();
    let g = terms.conductance;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let left = (i + n - 1) % n;
        let du = u_new[(i + 1) % n] - u_new[i];
        let cap = m[i] * terms.heat_capacity[i];
        lower[i] = -dt * g[left];
        upper[i] = -dt * g[i];
        diag[i] = cap + dt * terms.work[i] * du + dt * (g[i] + g[left]);
        rhs[i] = cap * theta[i] + dt * terms.viscosity[i] * du * du / (m[i] * v_new[i]);
    }
    let theta_new = cyclic_tridiag_solve_checked(&lower, &diag, &upper, &rhs, tol).map_err(|e| match e {
        Error::LinearSolve(reason) => Error::StepRejected {
            time,
            dt,
            reason: format!("temperature solve: {reason}"),
        },
        other => other,
    })?;
    if let Some((i, th)) = theta_new.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(Error::StepRejected {
            time,
            dt,
            reason: format!("temperature {th:.3e} in cell {i}"),
        });
    }
    Ok(theta_new)
}

/// Acoustic and positivity limits shared by both solvers.
pub(crate) struct DtLimits {
    pub acoustic: f64,
    pub positivity: f64,
}

/// `cfl * dx_i / (|u|_loc + c_i)` and the compression limiter
/// `0.5 min(cv v / (R s), v / s)` with `s = max(0, -(du / m))`.
pub(crate) fn dt_limits(
    grid: &PeriodicMassGrid,
    v: &[f64],
    u: &[f64],
    sound_speed: &[f64],
    cv_over_r: &[f64],
    cfl: f64,
) -> DtLimits {
    const TINY: f64 = 1e-300;
    let n = grid.n_cells();
    let m = grid.cell_mass();
    let mut acoustic = f64::INFINITY;
    let mut positivity = f64::INFINITY;
    for i in 0..n {
        let ur = u[(i + 1) % n];
        let ul = u[i];
        let width = m[i] * v[i];
        acoustic = acoustic.min(cfl * width / (ul.abs().max(ur.abs()) + sound_speed[i]));
        let compression = (-(ur - ul) / m[i]).max(0.0);
        let lim = 0.5 * v[i] * cv_over_r[i].min(1.0) / (compression + TINY);
        positivity = positivity.min(lim);
    }
    DtLimits { acoustic, positivity }
}
