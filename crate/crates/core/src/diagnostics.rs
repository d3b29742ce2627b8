//! Conservation, entropy dissipation, Hoff functionals and the explicit a
//! priori bounds, evaluated on Lagrangian frames of either solver.
//!
//! Integrals over the torus are Lagrangian sums: `int f dx = sum m_i v_i f_i`
//! for cell fields and `sum M_j v_j f_j` style node sums for velocities.
//! Time integrals are accumulated step by step by [`StepMonitor`].

use serde::Serialize;

use crate::calculus::{antiderivative_faces, face_difference};
use crate::error::{invalid, Result};
use crate::grid::PeriodicMassGrid;
use crate::macroscopic::{macro_derived, MacroLagState, MacroTrajectory};
use crate::material::{Coefficient, MaterialTable};
use crate::meso::{derived, CellCoefficients, MesoLagState, MesoTrajectory};
use crate::scheme::face_conductance;

/// Multiplicative slack applied to every certificate bound.
pub const CERTIFICATE_SLACK: f64 = 1.02;

/// Solver-independent view of one Lagrangian state.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub m: Vec<f64>,
    pub node_m: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Heat capacity per unit mass.
    pub cv: Vec<f64>,
    /// Mass fraction of the `+` material (the color for the layered system).
    pub y: Vec<f64>,
}

impl Frame {
    pub fn from_meso(grid: &PeriodicMassGrid, state: &MesoLagState, table: &MaterialTable) -> Frame {
        let d = derived(grid, state, table);
        let coef = CellCoefficients::new(table, &state.c);
        Frame {
            time: state.time,
            m: grid.cell_mass().to_vec(),
            node_m: grid.node_mass().to_vec(),
            v: state.v.clone(),
            u: state.u.clone(),
            theta: state.theta.clone(),
            sigma: d.sigma,
            p: d.p,
            mu: coef.mu,
            kappa: coef.kappa,
            cv: coef.cv,
            y: state.c.clone(),
        }
    }

    pub fn from_macro(grid: &PeriodicMassGrid, state: &MacroLagState, table: &MaterialTable) -> Frame {
        let d = macro_derived(grid, state, table);
        let cv = state
            .y_plus
            .iter()
            .map(|&y| y * table.plus(Coefficient::Cv) + (1.0 - y) * table.minus(Coefficient::Cv))
            .collect();
        Frame {
            time: state.time,
            m: grid.cell_mass().to_vec(),
            node_m: grid.node_mass().to_vec(),
            v: state.v.clone(),
            u: state.u.clone(),
            theta: state.theta.clone(),
            sigma: d.sigma,
            p: d.p_eff,
            mu: d.mu_eff,
            kappa: d.kappa_eff,
            cv,
            y: state.y_plus.clone(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.m.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.m.iter().zip(&self.v).map(|(m, v)| m * v).collect()
    }

    /// Eulerian velocity gradient per cell.
    pub fn dxu(&self) -> Vec<f64> {
        let n = self.n_cells();
        (0..n).map(|i| (self.u[(i + 1) % n] - self.u[i]) / (self.m[i] * self.v[i])).collect()
    }

    /// Specific volume at node `j`, from the two adjacent cell widths.
    fn node_width(&self, j: usize) -> f64 {
        let n = self.n_cells();
        let l = (j + n - 1) % n;
        0.5 * (self.m[l] * self.v[l] + self.m[j] * self.v[j])
    }
}

pub fn meso_frames(traj: &MesoTrajectory) -> Vec<Frame> {
    traj.snapshots
        .iter()
        .map(|s| Frame::from_meso(&traj.grid, &s.state, &traj.table))
        .collect()
}

pub fn macro_frames(traj: &MacroTrajectory) -> Vec<Frame> {
    traj.snapshots
        .iter()
        .map(|s| Frame::from_macro(&traj.grid, &s.state, &traj.table))
        .collect()
}

/// Conserved integrals at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conserved {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub rho_c_mass: f64,
    pub momentum: f64,
}

pub fn conserved_at(f: &Frame) -> Conserved {
    let n = f.n_cells();
    let mut out = Conserved {
        time: f.time,
        mass: 0.0,
        energy: 0.0,
        rho_c_mass: 0.0,
        momentum: 0.0,
    };
    for i in 0..n {
        let width = f.m[i] * f.v[i];
        let rho = 1.0 / f.v[i];
        let (ul, ur) = (f.u[i], f.u[(i + 1) % n]);
        out.mass += width * rho;
        out.rho_c_mass += width * rho * f.y[i];
        out.energy += f.m[i] * (0.25 * (ul * ul + ur * ur) + f.cv[i] * f.theta[i]);
        out.momentum += f.node_m[i] * f.u[i];
    }
    out
}

/// Conserved integrals of every frame.
pub fn conserved(frames: &[Frame]) -> Vec<Conserved> {
    frames.iter().map(conserved_at).collect()
}

/// `h(x) = x - 1 - ln x`, the nonnegative function of the entropy bound.
fn h(x: f64) -> f64 {
    x - 1.0 - x.ln()
}

/// Supremum of the convex `h` over `[a, b]`.
fn sup_h(a: f64, b: f64) -> f64 {
    h(a).max(h(b))
}

/// Extremes of the initial data entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialExtremes {
    pub total_mass: f64,
    pub energy: f64,
    pub rho0_min: f64,
    pub rho0_max: f64,
    pub theta0_min: f64,
    pub theta0_max: f64,
}

impl InitialExtremes {
    pub fn from_frame(f: &Frame) -> Self {
        let c = conserved_at(f);
        let rho = f.v.iter().map(|v| 1.0 / v);
        InitialExtremes {
            total_mass: f.m.iter().sum(),
            energy: c.energy,
            rho0_min: rho.clone().fold(f64::INFINITY, f64::min),
            rho0_max: rho.fold(0.0, f64::max),
            theta0_min: f.theta.iter().copied().fold(f64::INFINITY, f64::min),
            theta0_max: f.theta.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Closed-form constants of the a priori estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCertificates {
    pub total_mass: f64,
    pub energy: f64,
    pub horizon: f64,
    pub rho0_min: f64,
    pub rho0_max: f64,
    pub theta0_min: f64,
    pub theta0_max: f64,
    /// Bound on the time-integrated entropy dissipation.
    pub h1: f64,
    /// Bound on the time antiderivative of the stress.
    pub h2: f64,
    pub rho_upper: f64,
    pub theta_lower: f64,
    /// `(gamma_max - 1) E`.
    pub pressure_cap: f64,
    /// `sqrt(2 M E)`.
    pub momentum_cap: f64,
}

pub fn certificates(x: &InitialExtremes, table: &MaterialTable, horizon: f64) -> Result<BoundCertificates> {
    use Coefficient::*;
    let positive = [x.total_mass, x.energy, x.rho0_min, x.rho0_max, x.theta0_min, x.theta0_max];
    if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(horizon >= 0.0) {
        return Err(invalid(format!("initial extremes must be positive: {x:?}")));
    }
    let (m, e) = (x.total_mass, x.energy);
    let h1 = (e
        + table.max(R)
        + table.max(Cv) * m * sup_h(x.theta0_min, x.theta0_max)
        + table.max(R) * m * sup_h(1.0 / x.rho0_max, 1.0 / x.rho0_min))
        / table.min(Mu).min(table.min(Kappa));
    let momentum_cap = (2.0 * m * e).sqrt();
    let h2 = 2.0 * momentum_cap + table.max(Mu) + horizon * (table.max(Gamma) + 1.0) * e;
    let rho_upper = x.rho0_max * (h2 / table.min(Mu)).exp();
    let theta_lower = 1.0
        / (1.0 / x.theta0_min
            + horizon * table.max(R).powi(2) * rho_upper / (4.0 * table.min(Mu) * table.min(Cv)));
    Ok(BoundCertificates {
        total_mass: m,
        energy: e,
        horizon,
        rho0_min: x.rho0_min,
        rho0_max: x.rho0_max,
        theta0_min: x.theta0_min,
        theta0_max: x.theta0_max,
        h1,
        h2,
        rho_upper,
        theta_lower,
        pressure_cap: (table.max(Gamma) - 1.0) * e,
        momentum_cap,
    })
}

/// Pointwise functionals of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FrameFunctionals {
    pub time: f64,
    pub int_sigma3: f64,
    pub int_dxu3: f64,
    pub int_dxtheta2: f64,
    pub int_dxsigma2: f64,
    pub int_dxflux2: f64,
    pub sup_sigma: f64,
    pub sup_dxu: f64,
    pub sup_u2: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub int_p: f64,
    pub int_kinetic: f64,
    pub int_abs_momentum: f64,
    /// `int (dxu)^2 / theta + (dxtheta)^2 / theta^2`.
    pub dissipation: f64,
    /// `int mu (dxu)^2 / theta + kappa (dxtheta)^2 / theta^2`.
    pub dissipation_weighted: f64,
}

pub fn frame_functionals(f: &Frame) -> FrameFunctionals {
    let n = f.n_cells();
    let w = f.widths();
    let dxu = f.dxu();
    let dsigma = face_difference(&f.sigma, &w);
    let dtheta = face_difference(&f.theta, &w);
    let g = face_conductance(&w, &f.kappa);
    let mut r = FrameFunctionals {
        time: f.time,
        rho_min: f64::INFINITY,
        theta_min: f64::INFINITY,
        ..Default::default()
    };
    for i in 0..n {
        let j = (i + 1) % n;
        let l = (i + n - 1) % n;
        let face = 0.5 * (w[i] + w[j]);
        let rho = 1.0 / f.v[i];
        r.int_sigma3 += w[i] * f.sigma[i].abs().powi(3);
        r.int_dxu3 += w[i] * dxu[i].abs().powi(3);
        r.int_dxtheta2 += face * dtheta[i] * dtheta[i];
        r.int_dxsigma2 += face * dsigma[i] * dsigma[i];
        let dflux = (g[i] * (f.theta[j] - f.theta[i]) - g[l] * (f.theta[i] - f.theta[l])) / w[i];
        r.int_dxflux2 += w[i] * dflux * dflux;
        r.sup_sigma = r.sup_sigma.max(f.sigma[i].abs());
        r.sup_dxu = r.sup_dxu.max(dxu[i].abs());
        r.sup_u2 = r.sup_u2.max(f.u[i] * f.u[i]);
        r.rho_min = r.rho_min.min(rho);
        r.rho_max = r.rho_max.max(rho);
        r.theta_min = r.theta_min.min(f.theta[i]);
        r.theta_max = r.theta_max.max(f.theta[i]);
        r.int_p += w[i] * f.p[i];
        r.int_kinetic += 0.5 * f.node_m[i] * f.u[i] * f.u[i];
        r.int_abs_momentum += f.node_m[i] * f.u[i].abs();
        let th_face = 0.5 * (f.theta[i] + f.theta[j]);
        let visc = w[i] * dxu[i] * dxu[i] / f.theta[i];
        let cond = face * dtheta[i] * dtheta[i] / (th_face * th_face);
        r.dissipation += visc + cond;
        let kappa_face = g[i] * face;
        r.dissipation_weighted += f.mu[i] * visc + kappa_face * cond;
    }
    r
}

/// `int (d_t u)^2` and `int (d_t theta)^2` over one step, with the Eulerian
/// derivative `d_t f = D_t f - u d_x f` and `D_t` the per-cell difference.
pub fn time_derivative_norms(prev: &Frame, next: &Frame, dt: f64) -> (f64, f64) {
    let n = next.n_cells();
    let w = next.widths();
    let dxu = next.dxu();
    let dtheta = face_difference(&next.theta, &w);
    let mut du2 = 0.0;
    let mut dth2 = 0.0;
    for i in 0..n {
        let l = (i + n - 1) % n;
        let j = (i + 1) % n;
        let u_grad = 0.5 * (dxu[l] + dxu[i]);
        let dtu = (next.u[i] - prev.u[i]) / dt - next.u[i] * u_grad;
        du2 += next.node_width(i) * dtu * dtu;
        let th_grad = 0.5 * (dtheta[l] + dtheta[i]);
        let u_cell = 0.5 * (next.u[i] + next.u[j]);
        let dtth = (next.theta[i] - prev.theta[i]) / dt - u_cell * th_grad;
        dth2 += w[i] * dtth * dtth;
    }
    (du2, dth2)
}

/// Hoff-type energy functionals of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HoffReport {
    pub sup_int_sigma3: f64,
    pub sup_int_dxu3: f64,
    pub sup_int_dxtheta2: f64,
    pub int_dxsigma2: f64,
    pub int_dxflux2: f64,
    pub int_dtu2: f64,
    pub int_dttheta2: f64,
    pub int_sup_sigma3: f64,
    pub int_sup_dxu3: f64,
    pub sup_u2: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl HoffReport {
    /// The ten functionals, by name.
    pub fn functionals(&self) -> [(&'static str, f64); 10] {
        [
            ("sup_sigma3", self.sup_int_sigma3),
            ("sup_dxu3", self.sup_int_dxu3),
            ("sup_dxtheta2", self.sup_int_dxtheta2),
            ("int_dxsigma2", self.int_dxsigma2),
            ("int_dxflux2", self.int_dxflux2),
            ("int_dtu2", self.int_dtu2),
            ("int_dttheta2", self.int_dttheta2),
            ("int_supsigma3", self.int_sup_sigma3),
            ("int_supdxu3", self.int_sup_dxu3),
            ("sup_u2", self.sup_u2),
        ]
    }
}

/// Cumulative values at a sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoffSample {
    pub time: f64,
    pub int_sigma3: f64,
    pub int_dxu3: f64,
    pub int_dxtheta2: f64,
    pub cum_dxsigma2: f64,
    pub cum_dxflux2: f64,
    pub cum_dtu2: f64,
    pub cum_dttheta2: f64,
    pub cum_sup_sigma3: f64,
    pub cum_sup_dxu3: f64,
    pub sup_u2: f64,
    pub entropy_dissipation: f64,
    pub max_abs_dtinv_sigma: f64,
}

/// One certificate comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn upper(value: f64, bound: f64) -> Check {
        Check {
            value,
            bound,
            pass: value <= CERTIFICATE_SLACK * bound,
        }
    }

    fn lower(value: f64, bound: f64) -> Check {
        Check {
            value,
            bound,
            pass: value >= bound / CERTIFICATE_SLACK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateChecks {
    pub pressure: Check,
    pub kinetic: Check,
    pub momentum: Check,
    pub dtinv_sigma: Check,
    pub rho_upper: Check,
    pub theta_lower: Check,
    pub entropy: Check,
}

impl CertificateChecks {
    pub fn all(&self) -> [(&'static str, Check); 7] {
        [
            ("pressure", self.pressure),
            ("kinetic", self.kinetic),
            ("momentum", self.momentum),
            ("dtinv_sigma", self.dtinv_sigma),
            ("rho_upper", self.rho_upper),
            ("theta_lower", self.theta_lower),
            ("entropy", self.entropy),
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.all().iter().all(|(_, c)| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub mass_drift_rel: f64,
    pub rho_c_drift_rel: f64,
    pub momentum_drift: f64,
    pub energy_drift_rel: f64,
    pub series: Vec<Conserved>,
}

/// Everything measured over one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub constants: BoundCertificates,
    pub checks: CertificateChecks,
    pub hoff: HoffReport,
    pub entropy_dissipation: f64,
    pub entropy_dissipation_weighted: f64,
    pub max_abs_dtinv_sigma: f64,
    pub conservation: ConservationReport,
    pub samples: Vec<HoffSample>,
    /// Largest error of the discrete `d^{-1} d sigma = sigma - mean` identity,
    /// relative to `max |sigma|`.
    pub staggered_identity_error: f64,
    /// Largest `max(sigma^2) / (|sigma|_2^2 + 2 |sigma|_2 |d_x sigma|_2)`.
    pub gagliardo_nirenberg_ratio: f64,
}

/// Accumulates the time integrals of a run one accepted step at a time.
///
/// `int_0^T int |.|^2` style integrals use the value at the end of each step,
/// matching the implicit integrators; the entropy dissipation and the stress
/// antiderivative use the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct StepMonitor {
    prev: Frame,
    prev_fun: FrameFunctionals,
    initial: Conserved,
    sample_times: Vec<f64>,
    next_sample: usize,
    hoff: HoffReport,
    entropy: f64,
    entropy_weighted: f64,
    dtinv: Vec<f64>,
    max_dtinv: f64,
    sup_p: f64,
    sup_kinetic: f64,
    sup_momentum: f64,
    drift: [f64; 4],
    series: Vec<Conserved>,
    samples: Vec<HoffSample>,
    identity_error: f64,
    gn_ratio: f64,
}

impl StepMonitor {
    /// `sample_times` selects when cumulative values and conserved integrals
    /// are recorded; the initial frame is always recorded.
    pub fn new(initial: &Frame, sample_times: &[f64]) -> Self {
        let fun = frame_functionals(initial);
        let c0 = conserved_at(initial);
        let mut mon = StepMonitor {
            prev: initial.clone(),
            prev_fun: fun,
            initial: c0,
            sample_times: sample_times.iter().copied().filter(|&t| t > initial.time).collect(),
            next_sample: 0,
            hoff: HoffReport {
                sup_int_sigma3: fun.int_sigma3,
                sup_int_dxu3: fun.int_dxu3,
                sup_int_dxtheta2: fun.int_dxtheta2,
                sup_u2: fun.sup_u2,
                rho_min: fun.rho_min,
                rho_max: fun.rho_max,
                theta_min: fun.theta_min,
                theta_max: fun.theta_max,
                ..Default::default()
            },
            entropy: 0.0,
            entropy_weighted: 0.0,
            dtinv: vec![0.0; initial.n_cells()],
            max_dtinv: 0.0,
            sup_p: fun.int_p,
            sup_kinetic: fun.int_kinetic,
            sup_momentum: fun.int_abs_momentum,
            drift: [0.0; 4],
            series: vec![c0],
            samples: Vec::new(),
            identity_error: 0.0,
            gn_ratio: 0.0,
        };
        mon.check_sigma(initial, &fun);
        mon.push_sample(fun);
        mon
    }

    fn check_sigma(&mut self, f: &Frame, fun: &FrameFunctionals) {
        let w = f.widths();
        let back = antiderivative_faces(&face_difference(&f.sigma, &w), &w);
        let total: f64 = w.iter().sum();
        let mean = f.sigma.iter().zip(&w).map(|(s, w)| s * w).sum::<f64>() / total;
        let err = back
            .iter()
            .zip(&f.sigma)
            .map(|(b, s)| (b - (s - mean)).abs())
            .fold(0.0, f64::max);
        self.identity_error = self.identity_error.max(err / fun.sup_sigma.max(f64::MIN_POSITIVE));
        let l2 = f.sigma.iter().zip(&w).map(|(s, w)| w * s * s).sum::<f64>();
        let rhs = l2 + 2.0 * l2.sqrt() * fun.int_dxsigma2.sqrt();
        if rhs > 0.0 {
            self.gn_ratio = self.gn_ratio.max(fun.sup_sigma * fun.sup_sigma / rhs);
        }
    }

    fn push_sample(&mut self, fun: FrameFunctionals) {
        self.samples.push(HoffSample {
            time: fun.time,
            int_sigma3: fun.int_sigma3,
            int_dxu3: fun.int_dxu3,
            int_dxtheta2: fun.int_dxtheta2,
            cum_dxsigma2: self.hoff.int_dxsigma2,
            cum_dxflux2: self.hoff.int_dxflux2,
            cum_dtu2: self.hoff.int_dtu2,
            cum_dttheta2: self.hoff.int_dttheta2,
            cum_sup_sigma3: self.hoff.int_sup_sigma3,
            cum_sup_dxu3: self.hoff.int_sup_dxu3,
            sup_u2: fun.sup_u2,
            entropy_dissipation: self.entropy,
            max_abs_dtinv_sigma: self.max_dtinv,
        });
    }

    pub fn observe(&mut self, next: &Frame, dt: f64) {
        let fun = frame_functionals(next);
        let hf = &mut self.hoff;
        hf.sup_int_sigma3 = hf.sup_int_sigma3.max(fun.int_sigma3);
        hf.sup_int_dxu3 = hf.sup_int_dxu3.max(fun.int_dxu3);
        hf.sup_int_dxtheta2 = hf.sup_int_dxtheta2.max(fun.int_dxtheta2);
        hf.int_dxsigma2 += dt * fun.int_dxsigma2;
        hf.int_dxflux2 += dt * fun.int_dxflux2;
        let (du2, dth2) = time_derivative_norms(&self.prev, next, dt);
        hf.int_dtu2 += dt * du2;
        hf.int_dttheta2 += dt * dth2;
        hf.int_sup_sigma3 += dt * fun.sup_sigma.powi(3);
        hf.int_sup_dxu3 += dt * fun.sup_dxu.powi(3);
        hf.sup_u2 = hf.sup_u2.max(fun.sup_u2);
        hf.rho_min = hf.rho_min.min(fun.rho_min);
        hf.rho_max = hf.rho_max.max(fun.rho_max);
        hf.theta_min = hf.theta_min.min(fun.theta_min);
        hf.theta_max = hf.theta_max.max(fun.theta_max);

        self.entropy += 0.5 * dt * (self.prev_fun.dissipation + fun.dissipation);
        self.entropy_weighted += 0.5 * dt * (self.prev_fun.dissipation_weighted + fun.dissipation_weighted);
        for ((acc, a), b) in self.dtinv.iter_mut().zip(&self.prev.sigma).zip(&next.sigma) {
            *acc += 0.5 * dt * (a + b);
            self.max_dtinv = self.max_dtinv.max(acc.abs());
        }
        self.sup_p = self.sup_p.max(fun.int_p);
        self.sup_kinetic = self.sup_kinetic.max(fun.int_kinetic);
        self.sup_momentum = self.sup_momentum.max(fun.int_abs_momentum);

        let c = conserved_at(next);
        let c0 = self.initial;
        let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
        self.drift[0] = self.drift[0].max(rel(c.mass, c0.mass));
        self.drift[1] = self.drift[1].max(rel(c.rho_c_mass, c0.rho_c_mass));
        self.drift[2] = self.drift[2].max((c.momentum - c0.momentum).abs());
        self.drift[3] = self.drift[3].max(rel(c.energy, c0.energy));

        self.check_sigma(next, &fun);
        let mut sampled = false;
        while self.next_sample < self.sample_times.len() && next.time >= self.sample_times[self.next_sample] {
            self.next_sample += 1;
            sampled = true;
        }
        if sampled {
            self.series.push(c);
            self.push_sample(fun);
        }
        self.prev = next.clone();
        self.prev_fun = fun;
    }

    /// Current per-cell time antiderivative of the stress.
    pub fn dtinv_sigma(&self) -> &[f64] {
        &self.dtinv
    }

    pub fn finish(self, constants: &BoundCertificates) -> RunDiagnostics {
        let hf = self.hoff;
        let checks = CertificateChecks {
            pressure: Check::upper(self.sup_p, constants.pressure_cap),
            kinetic: Check::upper(self.sup_kinetic, constants.energy),
            momentum: Check::upper(self.sup_momentum, constants.momentum_cap),
            dtinv_sigma: Check::upper(self.max_dtinv, constants.h2),
            rho_upper: Check::upper(hf.rho_max, constants.rho_upper),
            theta_lower: Check::lower(hf.theta_min, constants.theta_lower),
            entropy: Check::upper(self.entropy, constants.h1),
        };
        let mut series = self.series;
        let last = conserved_at(&self.prev);
        if series.last().map_or(true, |c| c.time < last.time) {
            series.push(last);
        }
        RunDiagnostics {
            constants: *constants,
            checks,
            hoff: hf,
            entropy_dissipation: self.entropy,
            entropy_dissipation_weighted: self.entropy_weighted,
            max_abs_dtinv_sigma: self.max_dtinv,
            conservation: ConservationReport {
                mass_drift_rel: self.drift[0],
                rho_c_drift_rel: self.drift[1],
                momentum_drift: self.drift[2],
                energy_drift_rel: self.drift[3],
                series,
            },
            samples: self.samples,
            staggered_identity_error: self.identity_error,
            gagliardo_nirenberg_ratio: self.gn_ratio,
        }
    }
}

/// Diagnostics of a run given only its snapshots; time integrals then use the
/// snapshot spacing as the step.
pub fn analyze_frames(frames: &[Frame], table: &MaterialTable, horizon: f64) -> Result<RunDiagnostics> {
    let first = frames.first().ok_or_else(|| invalid("no frames"))?;
    let constants = certificates(&InitialExtremes::from_frame(first), table, horizon)?;
    let times: Vec<f64> = frames.iter().map(|f| f.time).collect();
    let mut mon = StepMonitor::new(first, &times);
    for w in frames.windows(2) {
        let dt = w[1].time - w[0].time;
        if !(dt > 0.0) {
            return Err(invalid("frame times must increase"));
        }
        if w[1].n_cells() != first.n_cells() {
            return Err(crate::error::Error::FrameMismatch("frames differ in cell count".into()));
        }
        mon.observe(&w[1], dt);
    }
    Ok(mon.finish(&constants))
}

/// Entropy dissipation of a snapshot series and its comparison with `H1`.
pub fn entropy_dissipation(frames: &[Frame], table: &MaterialTable, horizon: f64) -> Result<Check> {
    if frames.len() < 2 {
        return Err(invalid("entropy dissipation needs at least two frames"));
    }
    Ok(analyze_frames(frames, table, horizon)?.checks.entropy)
}

/// Per-cell `D_t^{-1} sigma` at every frame (trapezoidal in time).
pub fn dtinv_sigma(frames: &[Frame]) -> Vec<Vec<f64>> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.n_cells()];
    let mut out = vec![acc.clone()];
    for w in frames.windows(2) {
        let dt = w[1].time - w[0].time;
        for ((a, s0), s1) in acc.iter_mut().zip(&w[0].sigma).zip(&w[1].sigma) {
            *a += 0.5 * dt * (s0 + s1);
        }
        out.push(acc.clone());
    }
    out
}

/// Hoff-type functionals of a snapshot series.
pub fn hoff_report(frames: &[Frame], table: &MaterialTable, horizon: f64) -> Result<HoffReport> {
    if frames.len() < 2 {
        return Err(invalid("Hoff functionals need at least two frames"));
    }
    Ok(analyze_frames(frames, table, horizon)?.hoff)
}

/// JSON report with keys `certificates`, `hoff` and `conservation`.
pub fn report_json(diag: &RunDiagnostics) -> serde_json::Value {
    serde_json::json!({
        "certificates": {
            "constants": diag.constants,
            "checks": diag.checks,
            "all_pass": diag.checks.all_pass(),
        },
        "hoff": {
            "functionals": diag.hoff,
            "entropy_dissipation": diag.entropy_dissipation,
            "entropy_dissipation_weighted": diag.entropy_dissipation_weighted,
            "max_abs_dtinv_sigma": diag.max_abs_dtinv_sigma,
            "staggered_identity_error": diag.staggered_identity_error,
            "gagliardo_nirenberg_ratio": diag.gagliardo_nirenberg_ratio,
            "series": diag.samples,
        },
        "conservation": diag.conservation,
    })
}
