//! Two-Dirac candidate Young measure and its moments.
//!
//! The candidate measure puts weight `alpha+` on the state `(c = 1, rho+)` and
//! `alpha- = 1 - alpha+` on `(c = 0, rho-)`. It is evolved per Lagrangian cell,
//! where the characteristics of the kinetic equation are the cells themselves.

use std::fmt::Write as _;

use crate::calculus::{coarse_grain, midpoints};
use crate::eulerian::CellGeometry;
use crate::error::{invalid, Error, Result};
use crate::grid::PeriodicMassGrid;
use crate::macroscopic::{advance_alpha, alpha_rhs, phase_densities, MacroLagState, ALPHA_TOLERANCE};
use crate::material::{phase_weights, Coefficient, MaterialTable};
use crate::scheme::volume_update;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoDiracMeasure {
    pub alpha_plus: Vec<f64>,
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
}

impl TwoDiracMeasure {
    pub fn n_cells(&self) -> usize {
        self.alpha_plus.len()
    }

    /// The measure carried by a macroscopic state.
    pub fn from_macro(state: &MacroLagState) -> Self {
        let n = state.n_cells();
        let mut m = TwoDiracMeasure {
            alpha_plus: state.alpha_plus.clone(),
            rho_plus: Vec::with_capacity(n),
            rho_minus: Vec::with_capacity(n),
        };
        for i in 0..n {
            let (rp, rm) = state.phase_densities(i);
            m.rho_plus.push(rp);
            m.rho_minus.push(rm);
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells();
        if self.rho_plus.len() != n || self.rho_minus.len() != n {
            return Err(invalid("measure fields differ in length"));
        }
        for i in 0..n {
            let a = self.alpha_plus[i];
            if !(a >= -ALPHA_TOLERANCE && a <= 1.0 + ALPHA_TOLERANCE) {
                return Err(invalid(format!("weight {a} outside [0, 1] in cell {i}")));
            }
            let (wp, wm) = phase_weights(a);
            if (wp > 0.0 && !(self.rho_plus[i] > 0.0)) || (wm > 0.0 && !(self.rho_minus[i] > 0.0)) {
                return Err(invalid(format!("non-positive Dirac location in cell {i}")));
            }
        }
        Ok(())
    }

    /// Whether every charged Dirac location lies in `[rho_lo, rho_hi]`.
    pub fn within_box(&self, rho_lo: f64, rho_hi: f64) -> bool {
        (0..self.n_cells()).all(|i| {
            let (wp, wm) = phase_weights(self.alpha_plus[i]);
            let inside = |r: f64| r >= rho_lo && r <= rho_hi;
            (wp == 0.0 || inside(self.rho_plus[i])) && (wm == 0.0 || inside(self.rho_minus[i]))
        })
    }
}

/// Test functions `beta(c, rho)` on the state box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beta {
    One,
    Color,
    Rho,
    ColorRho,
    RhoSquared,
    InvMu,
    GasRhoOverMu,
    CvRho,
    InvKappa,
}

impl Beta {
    pub const ALL: [Beta; 9] = [
        Beta::One,
        Beta::Color,
        Beta::Rho,
        Beta::ColorRho,
        Beta::RhoSquared,
        Beta::InvMu,
        Beta::GasRhoOverMu,
        Beta::CvRho,
        Beta::InvKappa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Beta::One => "one",
            Beta::Color => "c",
            Beta::Rho => "rho",
            Beta::ColorRho => "c_rho",
            Beta::RhoSquared => "rho2",
            Beta::InvMu => "inv_mu",
            Beta::GasRhoOverMu => "r_rho_over_mu",
            Beta::CvRho => "cv_rho",
            Beta::InvKappa => "inv_kappa",
        }
    }

    #[inline]
    pub fn eval(self, c: f64, rho: f64, table: &MaterialTable) -> f64 {
        let f = |k| table.mix_unchecked(k, c);
        match self {
            Beta::One => 1.0,
            Beta::Color => c,
            Beta::Rho => rho,
            Beta::ColorRho => c * rho,
            Beta::RhoSquared => rho * rho,
            Beta::InvMu => 1.0 / f(Coefficient::Mu),
            Beta::GasRhoOverMu => f(Coefficient::R) * rho / f(Coefficient::Mu),
            Beta::CvRho => f(Coefficient::Cv) * rho,
            Beta::InvKappa => 1.0 / f(Coefficient::Kappa),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentFamily {
    pub betas: Vec<Beta>,
}

impl Default for MomentFamily {
    fn default() -> Self {
        MomentFamily { betas: Beta::ALL.to_vec() }
    }
}

/// Moment values, one field per test function.
#[derive(Debug, Clone, PartialEq)]
pub struct YoungMoments {
    pub fields: Vec<(Beta, Vec<f64>)>,
}

impl YoungMoments {
    pub fn get(&self, beta: Beta) -> Result<&[f64]> {
        self.fields
            .iter()
            .find(|(b, _)| *b == beta)
            .map(|(_, f)| f.as_slice())
            .ok_or_else(|| invalid(format!("{} is not in the moment family", beta.name())))
    }

    fn map(&self, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<YoungMoments> {
        Ok(YoungMoments {
            fields: self.fields.iter().map(|(b, v)| Ok((*b, f(v)?))).collect::<Result<_>>()?,
        })
    }
}

/// `<nu, beta> = alpha+ beta(1, rho+) + alpha- beta(0, rho-)` per cell.
pub fn moments(measure: &TwoDiracMeasure, family: &MomentFamily, table: &MaterialTable) -> YoungMoments {
    let n = measure.n_cells();
    YoungMoments {
        fields: family
            .betas
            .iter()
            .map(|&b| {
                let vals = (0..n)
                    .map(|i| {
                        let (wp, wm) = phase_weights(measure.alpha_plus[i]);
                        let mut acc = 0.0;
                        if wp > 0.0 {
                            acc += wp * b.eval(1.0, measure.rho_plus[i], table);
                        }
                        if wm > 0.0 {
                            acc += wm * b.eval(0.0, measure.rho_minus[i], table);
                        }
                        acc
                    })
                    .collect();
                (b, vals)
            })
            .collect(),
    }
}

/// Candidate moments remapped onto `n_samples` uniform bins and coarse
/// grained with `window`.
pub fn candidate_moments(
    measure: &TwoDiracMeasure,
    geometry: &CellGeometry,
    family: &MomentFamily,
    table: &MaterialTable,
    n_samples: usize,
    window: f64,
) -> Result<YoungMoments> {
    if geometry.widths.len() != measure.n_cells() {
        return Err(Error::FrameMismatch("measure and geometry differ in cell count".into()));
    }
    moments(measure, family, table).map(|f| coarse_grain(&geometry.remap_cells(f, n_samples)?, window))
}

/// Coarse-grained `beta(c, rho)` of a mesoscopic field.
///
/// `beta` is evaluated per cell before the conservative remap, so bins that
/// straddle a phase interface average `beta` rather than its arguments.
pub fn empirical_moments(
    c: &[f64],
    rho: &[f64],
    geometry: &CellGeometry,
    family: &MomentFamily,
    table: &MaterialTable,
    n_samples: usize,
    window: f64,
) -> Result<YoungMoments> {
    if c.len() != rho.len() || c.len() != geometry.widths.len() {
        return Err(Error::FrameMismatch("field lengths differ from the geometry".into()));
    }
    let fields = family
        .betas
        .iter()
        .map(|&b| {
            let vals: Vec<f64> = c.iter().zip(rho).map(|(&c, &r)| b.eval(c, r, table)).collect();
            Ok((b, coarse_grain(&geometry.remap_cells(&vals, n_samples)?, window)?))
        })
        .collect::<Result<_>>()?;
    Ok(YoungMoments { fields })
}

/// Errors of one test function.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentError {
    pub l1: f64,
    pub linf: f64,
    /// `l1` divided by the L1 norm of the empirical moment.
    pub rel_l1: f64,
}

pub fn moment_compare(candidate: &YoungMoments, empirical: &YoungMoments) -> Result<Vec<(Beta, MomentError)>> {
    let mut out = Vec::with_capacity(candidate.fields.len());
    for (b, cand) in &candidate.fields {
        let emp = empirical.get(*b)?;
        if emp.len() != cand.len() {
            return Err(Error::FrameMismatch(format!("{} sampled on different grids", b.name())));
        }
        let n = cand.len() as f64;
        let l1 = cand.iter().zip(emp).map(|(a, e)| (a - e).abs()).sum::<f64>() / n;
        let linf = cand.iter().zip(emp).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        let norm = emp.iter().map(|e| e.abs()).sum::<f64>() / n;
        let rel_l1 = if norm > 0.0 { l1 / norm } else { l1 };
        out.push((*b, MomentError { l1, linf, rel_l1 }));
    }
    Ok(out)
}

/// Rows `time,x,beta_name,candidate,empirical,abs_error`, without the header.
pub fn moment_rows(time: f64, candidate: &YoungMoments, empirical: &YoungMoments, out: &mut String) -> Result<()> {
    for (b, cand) in &candidate.fields {
        let emp = empirical.get(*b)?;
        for ((x, a), e) in midpoints(cand.len()).iter().zip(cand).zip(emp) {
            let _ = writeln!(out, "{time},{x},{},{a},{e},{}", b.name(), (a - e).abs());
        }
    }
    Ok(())
}

/// How the Dirac locations are advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityClosure {
    /// `rho± = Y± / (v alpha±)` with the phase mass fractions fixed at
    /// their initial values; reproduces the macroscopic solver.
    MassFraction,
    /// Explicit midpoint on `d rho± / dt = -rho± (sigma + R± rho± theta) / mu±`,
    /// coupled to the weight equation.
    Characteristic,
}

/// Fields driving one step of the measure.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFrame {
    /// End-of-step node velocity.
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Step-by-step integrator of the candidate measure.
///
/// The specific volume is advanced from the supplied velocities with the same
/// update the solvers use, so `dxu = (u_{i+1} - u_i) / (m_i v_i)` matches.
#[derive(Debug, Clone)]
pub struct MeasureEvolver {
    grid: PeriodicMassGrid,
    table: MaterialTable,
    closure: DensityClosure,
    v: Vec<f64>,
    y_plus: Vec<f64>,
    measure: TwoDiracMeasure,
    time: f64,
}

impl MeasureEvolver {
    pub fn new(
        grid: &PeriodicMassGrid,
        v0: &[f64],
        initial: &TwoDiracMeasure,
        table: &MaterialTable,
        closure: DensityClosure,
    ) -> Result<Self> {
        initial.validate()?;
        if v0.len() != grid.n_cells() || initial.n_cells() != grid.n_cells() {
            return Err(Error::FrameMismatch("measure, volume and grid differ in cell count".into()));
        }
        let y_plus = (0..grid.n_cells())
            .map(|i| {
                let (wp, _) = phase_weights(initial.alpha_plus[i]);
                wp * initial.rho_plus[i] * v0[i]
            })
            .collect();
        Ok(MeasureEvolver {
            grid: grid.clone(),
            table: *table,
            closure,
            v: v0.to_vec(),
            y_plus,
            measure: initial.clone(),
            time: 0.0,
        })
    }

    /// Phase mass fractions used by [`DensityClosure::MassFraction`].
    pub fn with_mass_fractions(mut self, y_plus: &[f64]) -> Result<Self> {
        if y_plus.len() != self.grid.n_cells() {
            return Err(Error::FrameMismatch("mass fractions differ in cell count".into()));
        }
        self.y_plus = y_plus.to_vec();
        Ok(self)
    }

    pub fn measure(&self) -> &TwoDiracMeasure {
        &self.measure
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn advance(&mut self, u: &[f64], sigma: &[f64], theta: &[f64], dt: f64) -> Result<()> {
        let n = self.grid.n_cells();
        if u.len() != n || sigma.len() != n || theta.len() != n {
            return Err(Error::FrameMismatch("field frame differs from the grid".into()));
        }
        let m = self.grid.cell_mass();
        let v_new = volume_update(&self.grid, &self.v, u, dt, self.time)?;
        let t = &self.table;
        for i in 0..n {
            let dxu = (u[(i + 1) % n] - u[i]) / (m[i] * v_new[i]);
            let (s, th) = (sigma[i], theta[i]);
            let a = self.measure.alpha_plus[i];
            let a_new = match self.closure {
                DensityClosure::MassFraction => {
                    let a_new = advance_alpha(a, self.y_plus[i], v_new[i], th, s, dxu, dt, t);
                    let (rp, rm) = phase_densities(a_new, self.y_plus[i], v_new[i]);
                    self.measure.rho_plus[i] = rp;
                    self.measure.rho_minus[i] = rm;
                    a_new
                }
                DensityClosure::Characteristic => {
                    let drho = |r: f64, mu: f64, gas: f64| -r * (s + gas * r * th) / mu;
                    let (mp, gp) = (t.plus(Coefficient::Mu), t.plus(Coefficient::R));
                    let (mm, gm) = (t.minus(Coefficient::Mu), t.minus(Coefficient::R));
                    let (rp, rm) = (self.measure.rho_plus[i], self.measure.rho_minus[i]);
                    let a_half = a + 0.5 * dt * alpha_rhs(a, rp, th, s, dxu, t);
                    let rp_half = rp + 0.5 * dt * drho(rp, mp, gp);
                    let rm_half = rm + 0.5 * dt * drho(rm, mm, gm);
                    self.measure.rho_plus[i] = rp + dt * drho(rp_half, mp, gp);
                    self.measure.rho_minus[i] = rm + dt * drho(rm_half, mm, gm);
                    a + dt * alpha_rhs(a_half, rp_half, th, s, dxu, t)
                }
            };
            if !(a_new >= -ALPHA_TOLERANCE && a_new <= 1.0 + ALPHA_TOLERANCE) {
                return Err(Error::RunAborted {
                    time: self.time,
                    reason: format!("measure weight {a_new:.12} left [0, 1] in cell {i} (was {a})"),
                    dump: String::new(),
                });
            }
            self.measure.alpha_plus[i] = a_new;
        }
        self.v = v_new;
        self.time += dt;
        Ok(())
    }
}

/// Evolves `initial` through the whole field series; entry `k` of the result
/// is the measure after `k` steps (entry 0 is `initial`).
pub fn evolve_measure(
    grid: &PeriodicMassGrid,
    v0: &[f64],
    initial: &TwoDiracMeasure,
    frames: &[FieldFrame],
    dts: &[f64],
    table: &MaterialTable,
    closure: DensityClosure,
) -> Result<Vec<TwoDiracMeasure>> {
    if frames.len() != dts.len() {
        return Err(Error::FrameMismatch(format!("{} frames for {} steps", frames.len(), dts.len())));
    }
    let mut ev = MeasureEvolver::new(grid, v0, initial, table, closure)?;
    let mut out = Vec::with_capacity(frames.len() + 1);
    out.push(initial.clone());
    for (f, &dt) in frames.iter().zip(dts) {
        ev.advance(&f.u, &f.sigma, &f.theta, dt)?;
        out.push(ev.measure().clone());
    }
    Ok(out)
}
