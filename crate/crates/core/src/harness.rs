//! Configuration, layered initial data, the epsilon sweep, scheme
//! self-convergence and the property suite behind `verify`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{coarse_grain, window_cells};
use crate::diagnostics::{certificates, report_json, Frame, HoffReport, InitialExtremes, RunDiagnostics, StepMonitor};
use crate::error::{invalid, Error, Result};
use crate::eulerian::{CellGeometry, EulerianSnapshot};
use crate::grid::PeriodicMassGrid;
use crate::io::{write_macro_trajectory, write_meso_trajectory, MOMENT_HEADER};
use crate::macroscopic::{
    alpha_rhs, alpha_rhs_minus, init_macro, run_macro, run_macro_observed, MacroLagState, MacroSampler, MacroTrajectory,
};
use crate::material::{Coefficient, MaterialSpec, MaterialTable};
use crate::meso::{init_lagrangian, run, run_observed, MesoConfig, MesoLagState, MesoSampler, MesoTrajectory};
use crate::young::{
    candidate_moments, empirical_moments, moment_compare, moment_rows, DensityClosure, MeasureEvolver, MomentFamily,
    TwoDiracMeasure, YoungMoments,
};

/// Analytic profile on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `mean + sin * sin(2 pi k x) + cos * cos(2 pi k x)`.
    Harmonic {
        mean: f64,
        #[serde(default)]
        sin: f64,
        #[serde(default)]
        cos: f64,
        #[serde(default = "one")]
        wavenumber: u32,
    },
}

fn one() -> u32 {
    1
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Harmonic { mean, sin, cos, wavenumber } => {
                let a = 2.0 * std::f64::consts::PI * wavenumber as f64 * x;
                mean + sin * a.sin() + cos * a.cos()
            }
        }
    }

    /// Shifted by a constant.
    pub fn offset(&self, c: f64) -> Profile {
        match *self {
            Profile::Constant { value } => Profile::Constant { value: value + c },
            Profile::Harmonic { mean, sin, cos, wavenumber } => Profile::Harmonic {
                mean: mean + c,
                sin,
                cos,
                wavenumber,
            },
        }
    }
}

/// Initial data of the two-phase problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profiles {
    pub alpha0: Profile,
    pub rho0_plus: Profile,
    pub rho0_minus: Profile,
    pub u0: Profile,
    pub theta0: Profile,
}

impl Default for Profiles {
    fn default() -> Self {
        let harmonic = |mean, sin, cos| Profile::Harmonic {
            mean,
            sin,
            cos,
            wavenumber: 1,
        };
        Profiles {
            alpha0: harmonic(0.5, 0.25, 0.0),
            rho0_plus: Profile::Constant { value: 1.0 },
            rho0_minus: Profile::Constant { value: 2.0 },
            u0: harmonic(0.0, 0.1, 0.0),
            theta0: harmonic(1.0, 0.0, 0.2),
        }
    }
}

/// Step control shared by every run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub cfl_factor: f64,
    pub dt_max: f64,
    pub linear_tol: f64,
    /// Start every run from a step that resolves the diffusive layer at the
    /// initial phase interfaces, growing by `dt_growth` per step.
    pub resolve_initial_layer: bool,
    pub dt_growth: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let m = MesoConfig::default();
        SolverSettings {
            cfl_factor: m.cfl_factor,
            dt_max: m.dt_max,
            linear_tol: m.linear_tol,
            resolve_initial_layer: true,
            dt_growth: m.dt_growth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Layer widths `1/k`, strictly decreasing.
    pub epsilons: Vec<f64>,
    pub cells_per_layer: usize,
    pub macro_cells: usize,
    pub final_time: f64,
    /// Coarse-graining width for color, density and moment comparisons.
    pub window: f64,
    /// Number of equal snapshot intervals over `[0, final_time]`.
    pub snapshot_intervals: usize,
    pub profiles: Profiles,
    pub material: MaterialSpec,
    pub solver: SolverSettings,
    /// Seed of the randomized property suites.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilons: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            cells_per_layer: 32,
            macro_cells: 4096,
            final_time: 0.5,
            window: 1.0 / 16.0,
            snapshot_intervals: 10,
            profiles: Profiles::default(),
            material: MaterialSpec::default(),
            solver: SolverSettings::default(),
            seed: 20240917,
        }
    }
}

/// `1/eps` as an integer layer count.
pub fn layer_count(epsilon: f64) -> Result<usize> {
    let k = 1.0 / epsilon;
    if !(epsilon > 0.0) || !k.is_finite() || (k - k.round()).abs() > 1e-9 * k || k.round() < 1.0 {
        return Err(invalid(format!("1/epsilon must be a positive integer, got epsilon = {epsilon}")));
    }
    Ok(k.round() as usize)
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn table(&self) -> Result<MaterialTable> {
        MaterialTable::new(self.material).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons is empty".into()));
        }
        for w in self.epsilons.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Config("epsilons must be strictly decreasing".into()));
            }
        }
        for &e in &self.epsilons {
            layer_count(e).map_err(cfg)?;
        }
        if self.cells_per_layer == 0 || self.macro_cells < 3 || self.snapshot_intervals == 0 {
            return Err(Error::Config(
                "cells_per_layer, macro_cells and snapshot_intervals must be positive".into(),
            ));
        }
        window_cells(self.window, self.n_samples()?).map_err(cfg)?;
        self.table()?;
        self.meso_config(0.0).validate().map_err(cfg)?;
        Ok(())
    }

    pub fn meso_cells(&self, epsilon: f64) -> Result<usize> {
        Ok(self.cells_per_layer * layer_count(epsilon)?)
    }

    /// Common uniform grid of every comparison.
    pub fn n_samples(&self) -> Result<usize> {
        let mut n = self.macro_cells;
        for &e in &self.epsilons {
            n = n.max(self.meso_cells(e)?);
        }
        Ok(n)
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let k = self.snapshot_intervals;
        if self.final_time == 0.0 {
            return Vec::new();
        }
        (1..=k).map(|i| self.final_time * i as f64 / k as f64).collect()
    }

    /// Step control with the given first-step cap (0 disables the ramp).
    pub fn meso_config(&self, initial_dt: f64) -> MesoConfig {
        let s = &self.solver;
        MesoConfig {
            final_time: self.final_time,
            cfl_factor: s.cfl_factor,
            dt_max: s.dt_max,
            snapshot_times: self.snapshot_times(),
            linear_tol: s.linear_tol,
            initial_dt: (s.resolve_initial_layer && initial_dt > 0.0).then_some(initial_dt),
            dt_growth: s.dt_growth,
        }
    }
}

/// `0.25 min_i dx_i^2 rho_i / mu_i`: the viscous time of the smallest cell.
pub fn initial_layer_dt(widths: &[f64], v: &[f64], mu: &[f64]) -> f64 {
    widths
        .iter()
        .zip(v)
        .zip(mu)
        .map(|((w, v), mu)| 0.25 * w * w / (v * mu))
        .fold(f64::INFINITY, f64::min)
}

/// Layered data with `k` layers: `c0 = 1` where `frac(k x) < alpha0(x)`.
#[derive(Debug, Clone, Copy)]
pub struct LayeredData<'a> {
    pub profiles: &'a Profiles,
    pub layers: usize,
}

pub fn layered_initial_data(profiles: &Profiles, epsilon: f64) -> Result<LayeredData<'_>> {
    Ok(LayeredData {
        profiles,
        layers: layer_count(epsilon)?,
    })
}

impl LayeredData<'_> {
    pub fn c0(&self, x: f64) -> f64 {
        if (self.layers as f64 * x).fract() < self.profiles.alpha0.eval(x) {
            1.0
        } else {
            0.0
        }
    }

    pub fn rho0(&self, x: f64) -> f64 {
        let c = self.c0(x);
        c * self.profiles.rho0_plus.eval(x) + (1.0 - c) * self.profiles.rho0_minus.eval(x)
    }

    pub fn init(&self, n_cells: usize) -> Result<(PeriodicMassGrid, MesoLagState)> {
        let h = 1.0 / n_cells as f64;
        for i in 0..n_cells {
            let x = (i as f64 + 0.5) * h;
            let a = self.profiles.alpha0.eval(x);
            if !(0.0..=1.0).contains(&a) {
                return Err(invalid(format!("alpha0({x}) = {a} outside [0, 1]")));
            }
        }
        let p = self.profiles;
        init_lagrangian(
            &MesoSampler {
                c0: &|x| self.c0(x),
                rho0: &|x| self.rho0(x),
                u0: &|x| p.u0.eval(x),
                theta0: &|x| p.theta0.eval(x),
            },
            n_cells,
        )
    }
}

pub fn init_macro_profiles(profiles: &Profiles, n_cells: usize) -> Result<(PeriodicMassGrid, MacroLagState)> {
    let p = profiles;
    init_macro(
        &MacroSampler {
            alpha0: &|x| p.alpha0.eval(x),
            rho0_plus: &|x| p.rho0_plus.eval(x),
            rho0_minus: &|x| p.rho0_minus.eval(x),
            u0: &|x| p.u0.eval(x),
            theta0: &|x| p.theta0.eval(x),
        },
        n_cells,
    )
}

/// Relative `L2(0,T; L2)` distance of field `name`, normalized by `b`.
///
/// Trapezoidal in time, midpoint in space on the common uniform grid. With a
/// single snapshot only the spatial norm is taken.
pub fn l2_spacetime_error(a: &[EulerianSnapshot], b: &[EulerianSnapshot], name: &str) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::FrameMismatch(format!("{} vs {} snapshots", a.len(), b.len())));
    }
    let mut sq = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        if (x.time - y.time).abs() > 1e-9 * x.time.abs().max(1.0) {
            return Err(Error::FrameMismatch(format!("times {} and {}", x.time, y.time)));
        }
        let (fa, fb) = match (x.get(name), y.get(name)) {
            (Some(fa), Some(fb)) if fa.len() == fb.len() => (fa, fb),
            _ => return Err(Error::FrameMismatch(format!("field {name} missing or on different grids"))),
        };
        let dx = 1.0 / fa.len() as f64;
        let diff: f64 = fa.iter().zip(fb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * dx;
        let norm: f64 = fb.iter().map(|q| q * q).sum::<f64>() * dx;
        sq.push((x.time, diff, norm));
    }
    let (diff, norm) = if sq.len() == 1 {
        (sq[0].1, sq[0].2)
    } else {
        sq.windows(2).fold((0.0, 0.0), |(d, n), w| {
            let dt = w[1].0 - w[0].0;
            (d + 0.5 * dt * (w[0].1 + w[1].1), n + 0.5 * dt * (w[0].2 + w[1].2))
        })
    };
    Ok(if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() })
}

/// Coarse-grains one field of every snapshot in place.
fn coarse_grain_field(series: &mut [EulerianSnapshot], name: &str, window: f64) -> Result<()> {
    for s in series {
        if let Some((_, f)) = s.fields.iter_mut().find(|(n, _)| n == name) {
            *f = coarse_grain(f, window)?;
        }
    }
    Ok(())
}

/// Geometry in the comparison frame, which moves with velocity `-frame`
/// relative to the lab: a run normalized by `shift` sits at `x0 - (shift - frame) t`.
///
/// Using the reference's own shift as `frame` makes every comparison invariant
/// under a constant offset of the initial velocity.
fn frame_geometry(grid: &PeriodicMassGrid, x0: f64, v: &[f64], shift: f64, frame: f64, time: f64) -> CellGeometry {
    CellGeometry::new(x0 - (shift - frame) * time, grid.widths(v))
}

/// Fields `c, rho, u, theta` of a mesoscopic state in the comparison frame.
fn meso_frame_snapshot(grid: &PeriodicMassGrid, s: &MesoLagState, frame: f64, n: usize) -> Result<EulerianSnapshot> {
    let geom = frame_geometry(grid, s.x0, &s.v, s.galilean_shift, frame, s.time);
    let rho: Vec<f64> = s.v.iter().map(|v| 1.0 / v).collect();
    let u: Vec<f64> = s.u.iter().map(|u| u - s.galilean_shift + frame).collect();
    Ok(EulerianSnapshot {
        time: s.time,
        fields: vec![
            ("c".into(), geom.remap_cells(&s.c, n)?),
            ("rho".into(), geom.remap_cells(&rho, n)?),
            ("u".into(), geom.sample_nodes(&u, n)?),
            ("theta".into(), geom.remap_cells(&s.theta, n)?),
        ],
    })
}

/// Comparison-frame fields with the meso names: `c` holds `alpha_plus`.
fn macro_frame_snapshot(grid: &PeriodicMassGrid, s: &MacroLagState, frame: f64, n: usize) -> Result<EulerianSnapshot> {
    let geom = frame_geometry(grid, s.x0, &s.v, s.galilean_shift, frame, s.time);
    let rho: Vec<f64> = s.v.iter().map(|v| 1.0 / v).collect();
    let u: Vec<f64> = s.u.iter().map(|u| u - s.galilean_shift + frame).collect();
    Ok(EulerianSnapshot {
        time: s.time,
        fields: vec![
            ("c".into(), geom.remap_cells(&s.alpha_plus, n)?),
            ("rho".into(), geom.remap_cells(&rho, n)?),
            ("u".into(), geom.sample_nodes(&u, n)?),
            ("theta".into(), geom.remap_cells(&s.theta, n)?),
        ],
    })
}

fn monitored_diagnostics(first: &Frame, table: &MaterialTable, cfg: &MesoConfig) -> Result<(StepMonitor, crate::diagnostics::BoundCertificates)> {
    let consts = certificates(&InitialExtremes::from_frame(first), table, cfg.final_time)?;
    Ok((StepMonitor::new(first, &cfg.snapshot_times), consts))
}

/// Macroscopic reference run with diagnostics and candidate moments.
#[derive(Debug, Clone)]
pub struct MacroRun {
    pub trajectory: MacroTrajectory,
    pub diagnostics: RunDiagnostics,
    /// Candidate measure at every snapshot, from the streaming evolver.
    pub measures: Vec<TwoDiracMeasure>,
}

pub fn run_macro_reference(config: &SweepConfig) -> Result<MacroRun> {
    let table = config.table()?;
    let (grid, s0) = init_macro_profiles(&config.profiles, config.macro_cells)?;
    let first = Frame::from_macro(&grid, &s0, &table);
    let cfg = config.meso_config(initial_layer_dt(&grid.widths(&s0.v), &s0.v, &first.mu));
    let (mut mon, consts) = monitored_diagnostics(&first, &table, &cfg)?;
    let init = TwoDiracMeasure::from_macro(&s0);
    let mut evolver =
        MeasureEvolver::new(&grid, &s0.v, &init, &table, DensityClosure::MassFraction)?.with_mass_fractions(&s0.y_plus)?;
    let mut measures = vec![init];
    let mut failure = None;
    let times = cfg.snapshot_times.clone();
    let trajectory = run_macro_observed(&grid, &s0, &cfg, &table, &mut |_, next, fields, dt| {
        mon.observe(&Frame::from_macro(&grid, next, &table), dt);
        if failure.is_some() {
            return;
        }
        match evolver.advance(&next.u, &fields.sigma, &next.theta, dt) {
            Ok(()) => {
                if times.iter().any(|t| (t - next.time).abs() <= 1e-12 * t.max(1.0)) {
                    measures.push(evolver.measure().clone());
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if measures.len() != trajectory.snapshots.len() {
        return Err(Error::FrameMismatch("candidate measures miss snapshot times".into()));
    }
    Ok(MacroRun {
        trajectory,
        diagnostics: mon.finish(&consts),
        measures,
    })
}

/// Mesoscopic run with diagnostics for layer width `epsilon`.
pub fn run_meso_layered(config: &SweepConfig, epsilon: f64) -> Result<(MesoTrajectory, RunDiagnostics)> {
    let table = config.table()?;
    let data = layered_initial_data(&config.profiles, epsilon)?;
    let (grid, s0) = data.init(config.meso_cells(epsilon)?)?;
    let first = Frame::from_meso(&grid, &s0, &table);
    let cfg = config.meso_config(initial_layer_dt(&grid.widths(&s0.v), &s0.v, &first.mu));
    let (mut mon, consts) = monitored_diagnostics(&first, &table, &cfg)?;
    let traj = run_observed(&grid, &s0, &cfg, &table, &mut |_, next, dt| {
        mon.observe(&Frame::from_meso(&grid, next, &table), dt);
    })?;
    Ok((traj, mon.finish(&consts)))
}

/// One line of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub n_cells: usize,
    pub err_u: f64,
    pub err_theta: f64,
    pub err_c: f64,
    pub err_rho: f64,
    /// Largest relative L1 moment error over the family and the snapshots.
    pub max_moment_err: f64,
    /// Per test function, largest over the snapshots.
    pub moment_errors: Vec<(String, f64)>,
    pub cert_pass: bool,
    pub hoff: HoffReport,
}

/// Result of one epsilon of a sweep.
#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub n_cells: usize,
    pub outcome: std::result::Result<EpsilonResult, String>,
}

#[derive(Debug, Clone)]
pub struct EpsilonResult {
    pub row: ConvergenceRow,
    pub trajectory: MesoTrajectory,
    pub diagnostics: RunDiagnostics,
    /// Moment comparison rows with header.
    pub moments_csv: String,
}

/// Everything a sweep produced, ordered as `config.epsilons`.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub config: SweepConfig,
    pub reference: MacroRun,
    pub runs: Vec<EpsilonRun>,
}

/// Macro fields on the common grid, shared by every epsilon.
struct Reference {
    frame: f64,
    fields: Vec<EulerianSnapshot>,
    moments: Vec<YoungMoments>,
}

fn prepare_reference(config: &SweepConfig, table: &MaterialTable, reference: &MacroRun) -> Result<Reference> {
    let n = config.n_samples()?;
    let traj = &reference.trajectory;
    let frame = traj.galilean_shift;
    let mut fields = traj
        .snapshots
        .iter()
        .map(|s| macro_frame_snapshot(&traj.grid, &s.state, frame, n))
        .collect::<Result<Vec<_>>>()?;
    coarse_grain_field(&mut fields, "c", config.window)?;
    coarse_grain_field(&mut fields, "rho", config.window)?;
    let family = MomentFamily::default();
    let moments = traj
        .snapshots
        .iter()
        .zip(&reference.measures)
        .map(|(s, m)| {
            let st = &s.state;
            let geom = frame_geometry(&traj.grid, st.x0, &st.v, st.galilean_shift, frame, st.time);
            candidate_moments(m, &geom, &family, table, n, config.window)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Reference { frame, fields, moments })
}

fn compare_epsilon(config: &SweepConfig, table: &MaterialTable, reference: &Reference, epsilon: f64) -> Result<EpsilonResult> {
    let (traj, diagnostics) = run_meso_layered(config, epsilon)?;
    let n = config.n_samples()?;
    let mut fields = traj
        .snapshots
        .iter()
        .map(|s| meso_frame_snapshot(&traj.grid, &s.state, reference.frame, n))
        .collect::<Result<Vec<_>>>()?;
    let err_u = l2_spacetime_error(&fields, &reference.fields, "u")?;
    let err_theta = l2_spacetime_error(&fields, &reference.fields, "theta")?;
    coarse_grain_field(&mut fields, "c", config.window)?;
    coarse_grain_field(&mut fields, "rho", config.window)?;
    let err_c = l2_spacetime_error(&fields, &reference.fields, "c")?;
    let err_rho = l2_spacetime_error(&fields, &reference.fields, "rho")?;

    let family = MomentFamily::default();
    let mut moments_csv = String::from(MOMENT_HEADER);
    moments_csv.push('\n');
    let mut per_beta: Vec<(String, f64)> = family.betas.iter().map(|b| (b.name().to_string(), 0.0)).collect();
    for (snap, cand) in traj.snapshots.iter().zip(&reference.moments) {
        let s = &snap.state;
        let geom = frame_geometry(&traj.grid, s.x0, &s.v, s.galilean_shift, reference.frame, s.time);
        let rho: Vec<f64> = s.v.iter().map(|v| 1.0 / v).collect();
        let emp = empirical_moments(&s.c, &rho, &geom, &family, table, n, config.window)?;
        for ((_, worst), (_, e)) in per_beta.iter_mut().zip(moment_compare(cand, &emp)?) {
            *worst = f64::max(*worst, e.rel_l1);
        }
        moment_rows(s.time, cand, &emp, &mut moments_csv)?;
    }
    let max_moment_err = per_beta.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let row = ConvergenceRow {
        epsilon,
        n_cells: traj.grid.n_cells(),
        err_u,
        err_theta,
        err_c,
        err_rho,
        max_moment_err,
        moment_errors: per_beta,
        cert_pass: diagnostics.checks.all_pass(),
        hoff: diagnostics.hoff,
    };
    Ok(EpsilonResult {
        row,
        trajectory: traj,
        diagnostics,
        moments_csv,
    })
}

/// Runs the macro reference once, then every epsilon on a pool of `jobs`
/// threads. A failing epsilon is recorded without stopping the others; the
/// output order does not depend on `jobs`.
pub fn sweep(config: &SweepConfig, jobs: usize) -> Result<SweepOutput> {
    config.validate()?;
    let table = config.table()?;
    let reference = run_macro_reference(config)?;
    let prepared = prepare_reference(config, &table, &reference)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    let runs = pool.install(|| {
        config
            .epsilons
            .par_iter()
            .map(|&epsilon| EpsilonRun {
                epsilon,
                n_cells: config.meso_cells(epsilon).unwrap_or(0),
                outcome: compare_epsilon(config, &table, &prepared, epsilon).map_err(|e| e.to_string()),
            })
            .collect()
    });
    Ok(SweepOutput {
        config: config.clone(),
        reference,
        runs,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != x.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Epsilon dependence of the uniform bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Uniformity {
    /// Slope of each functional against `1/eps`; `None` if a run failed or a
    /// value vanished.
    pub slopes: Vec<(String, Option<f64>)>,
    /// `|a - b| / max(a, b)` between the coarsest and finest epsilon.
    pub rho_min_variation: f64,
    pub theta_max_variation: f64,
}

impl SweepOutput {
    pub fn rows(&self) -> Vec<&ConvergenceRow> {
        self.runs.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| &o.row)).collect()
    }

    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(|r| r.outcome.is_ok())
    }

    pub fn certificates_pass(&self) -> bool {
        self.rows().iter().all(|r| r.cert_pass)
    }

    pub fn uniformity(&self) -> Uniformity {
        let rows = self.rows();
        let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.epsilon).collect();
        let complete = rows.len() == self.runs.len();
        let names = HoffReport::default().functionals().map(|(n, _)| n);
        let slopes = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let vals: Vec<f64> = rows.iter().map(|r| r.hoff.functionals()[k].1).collect();
                (name.to_string(), log_log_slope(&inv, &vals).filter(|_| complete))
            })
            .collect();
        let variation = |f: fn(&HoffReport) -> f64| match (rows.first(), rows.last()) {
            (Some(a), Some(b)) if complete => {
                let (a, b) = (f(&a.hoff), f(&b.hoff));
                (a - b).abs() / a.max(b)
            }
            _ => f64::NAN,
        };
        Uniformity {
            slopes,
            rho_min_variation: variation(|h| h.rho_min),
            theta_max_variation: variation(|h| h.theta_max),
        }
    }

    /// `convergence_table.csv`; failed runs keep their epsilon and cell count
    /// with empty metrics and the reason in `status`.
    pub fn table_csv(&self) -> String {
        let names = HoffReport::default().functionals().map(|(n, _)| n);
        let mut out = String::from("epsilon,n_cells,err_u,err_theta,err_c,err_rho,max_moment_err,cert_pass");
        for n in names {
            let _ = write!(out, ",hoff_{n}");
        }
        out.push_str(",rho_min,theta_max,status\n");
        for r in &self.runs {
            let _ = write!(out, "{},{}", r.epsilon, r.n_cells);
            match &r.outcome {
                Ok(res) => {
                    let w = &res.row;
                    let _ = write!(
                        out,
                        ",{},{},{},{},{},{}",
                        w.err_u, w.err_theta, w.err_c, w.err_rho, w.max_moment_err, w.cert_pass
                    );
                    for (_, v) in w.hoff.functionals() {
                        let _ = write!(out, ",{v}");
                    }
                    let _ = writeln!(out, ",{},{},ok", w.hoff.rho_min, w.hoff.theta_max);
                }
                Err(e) => {
                    out.push_str(&",".repeat(6 + names.len() + 2));
                    let _ = writeln!(out, ",\"failed: {}\"", e.replace('"', "'"));
                }
            }
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let runs: Vec<serde_json::Value> = self
            .runs
            .iter()
            .map(|r| match &r.outcome {
                Ok(res) => serde_json::json!({ "epsilon": r.epsilon, "n_cells": r.n_cells, "row": res.row }),
                Err(e) => serde_json::json!({ "epsilon": r.epsilon, "n_cells": r.n_cells, "error": e }),
            })
            .collect();
        serde_json::json!({
            "config": self.config,
            "runs": runs,
            "uniformity": self.uniformity(),
            "macro_certificates_pass": self.reference.diagnostics.checks.all_pass(),
            "certificates_pass": self.certificates_pass(),
        })
    }

    /// Writes the table, the summary and one directory per run holding
    /// snapshot CSVs and `report.json`.
    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out)?;
        fs::write(out.join("convergence_table.csv"), self.table_csv())?;
        fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&self.summary_json())?)?;
        let macro_dir = out.join("macro");
        write_macro_trajectory(&macro_dir, &self.reference.trajectory)?;
        write_report(&macro_dir, &self.reference.diagnostics)?;
        for r in &self.runs {
            if let Ok(res) = &r.outcome {
                let dir = out.join(format!("meso_k{}", layer_count(r.epsilon)?));
                write_meso_trajectory(&dir, &res.trajectory)?;
                write_report(&dir, &res.diagnostics)?;
                fs::write(dir.join("moments.csv"), &res.moments_csv)?;
            }
        }
        Ok(())
    }
}

pub fn write_report(dir: &Path, diag: &RunDiagnostics) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report_json(diag))?)?;
    Ok(())
}

/// Single-phase problems of the scheme verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothProblem {
    /// Uniform state at rest; every resolution reproduces it exactly.
    Uniform,
    /// `rho = 1`, `u = 0.1 sin(2 pi x)`, `theta = 1 + 0.2 cos(2 pi x)`.
    AcousticPulse,
}

impl SmoothProblem {
    pub fn init(self, n: usize) -> Result<(PeriodicMassGrid, MesoLagState)> {
        let (amp_u, amp_t) = match self {
            SmoothProblem::Uniform => (0.0, 0.0),
            SmoothProblem::AcousticPulse => (0.1, 0.2),
        };
        let tau = 2.0 * std::f64::consts::PI;
        init_lagrangian(
            &MesoSampler {
                c0: &|_| 1.0,
                rho0: &|_| 1.0,
                u0: &|x| amp_u * (tau * x).sin(),
                theta0: &|x| 1.0 + amp_t * (tau * x).cos(),
            },
            n,
        )
    }
}

/// Restriction of a state on `2n` cells to `n` cells: pairs of cells are
/// merged by mass, and even nodes kept.
pub fn restrict_pairs(grid: &PeriodicMassGrid, s: &MesoLagState) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = grid.n_cells();
    if n % 2 != 0 {
        return Err(invalid("restriction needs an even cell count"));
    }
    let m = grid.cell_mass();
    let mut v = Vec::with_capacity(n / 2);
    let mut theta = Vec::with_capacity(n / 2);
    let mut u = Vec::with_capacity(n / 2);
    for i in 0..n / 2 {
        let (a, b) = (2 * i, 2 * i + 1);
        let mass = m[a] + m[b];
        v.push((m[a] * s.v[a] + m[b] * s.v[b]) / mass);
        theta.push((m[a] * s.theta[a] + m[b] * s.theta[b]) / mass);
        u.push(s.u[a]);
    }
    Ok((v, theta, u))
}

/// Differences between successive resolutions and the resulting order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldOrder {
    pub field: String,
    /// `|f_N - f_2N|` in the mass-weighted discrete L2 norm, one per pair.
    pub differences: Vec<f64>,
    /// `log2` ratio of the last two differences; `None` when the differences
    /// are at roundoff, meaning the problem is reproduced exactly.
    pub order: Option<f64>,
}

impl FieldOrder {
    fn new(field: &str, differences: Vec<f64>) -> FieldOrder {
        const ROUNDOFF: f64 = 1e-12;
        let k = differences.len();
        let order = if differences.iter().all(|d| *d < ROUNDOFF) {
            None
        } else {
            Some((differences[k - 2] / differences[k - 1]).log2())
        };
        FieldOrder {
            field: field.into(),
            differences,
            order,
        }
    }

    /// Order met, counting an exact reproduction as passing.
    pub fn at_least(&self, p: f64) -> bool {
        self.order.map_or(true, |o| o >= p)
    }
}

fn weighted_diff(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    m.iter().zip(a).zip(b).map(|((m, a), b)| m * (a - b).powi(2)).sum::<f64>().sqrt()
}

fn fixed_step_config(final_time: f64, dt: f64) -> MesoConfig {
    MesoConfig {
        final_time,
        cfl_factor: 1.0,
        dt_max: dt,
        ..MesoConfig::default()
    }
}

fn fixed_step_run(problem: SmoothProblem, n: usize, final_time: f64, dt: f64, table: &MaterialTable) -> Result<(PeriodicMassGrid, MesoLagState)> {
    let (grid, s0) = problem.init(n)?;
    let traj = run(&grid, &s0, &fixed_step_config(final_time, dt), table)?;
    let steps = (final_time / dt).ceil() as usize;
    if traj.dt_history.len() != steps {
        return Err(invalid(format!("step {dt} is not the stable step on {n} cells")));
    }
    Ok((grid, traj.last().state.clone()))
}

/// Spatial orders of `v`, `theta`, `u` from runs on the dyadic `n_list` with
/// a common fixed step.
pub fn self_convergence(
    problem: SmoothProblem,
    n_list: &[usize],
    final_time: f64,
    dt: f64,
    table: &MaterialTable,
) -> Result<Vec<FieldOrder>> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(invalid("resolutions must be dyadic with at least three entries"));
    }
    let runs = n_list
        .par_iter()
        .map(|&n| fixed_step_run(problem, n, final_time, dt, table))
        .collect::<Result<Vec<_>>>()?;
    let mut diffs = [Vec::new(), Vec::new(), Vec::new()];
    for w in runs.windows(2) {
        let (coarse_grid, coarse) = &w[0];
        let (fine_grid, fine) = &w[1];
        let (v, theta, u) = restrict_pairs(fine_grid, fine)?;
        let m = coarse_grid.cell_mass();
        diffs[0].push(weighted_diff(m, &coarse.v, &v));
        diffs[1].push(weighted_diff(m, &coarse.theta, &theta));
        diffs[2].push(weighted_diff(coarse_grid.node_mass(), &coarse.u, &u));
    }
    let [dv, dth, du] = diffs;
    Ok(vec![FieldOrder::new("v", dv), FieldOrder::new("theta", dth), FieldOrder::new("u", du)])
}

/// Temporal orders at fixed `n` from the halving sequence `dts`.
pub fn temporal_convergence(
    problem: SmoothProblem,
    n: usize,
    final_time: f64,
    dts: &[f64],
    table: &MaterialTable,
) -> Result<Vec<FieldOrder>> {
    if dts.len() < 3 || dts.windows(2).any(|w| (w[1] - 0.5 * w[0]).abs() > 1e-15 * w[0]) {
        return Err(invalid("steps must halve with at least three entries"));
    }
    let runs = dts
        .par_iter()
        .map(|&dt| fixed_step_run(problem, n, final_time, dt, table))
        .collect::<Result<Vec<_>>>()?;
    let grid = &runs[0].0;
    let mut diffs = [Vec::new(), Vec::new(), Vec::new()];
    for w in runs.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        diffs[0].push(weighted_diff(grid.cell_mass(), &a.v, &b.v));
        diffs[1].push(weighted_diff(grid.cell_mass(), &a.theta, &b.theta));
        diffs[2].push(weighted_diff(grid.node_mass(), &a.u, &b.u));
    }
    let [dv, dth, du] = diffs;
    Ok(vec![FieldOrder::new("v", dv), FieldOrder::new("theta", dth), FieldOrder::new("u", du)])
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest change of any field after `steps` steps from a layered state at
/// rest with uniform pressure, for both solvers.
pub fn equilibrium_drift(table: &MaterialTable, steps: usize) -> Result<(f64, f64)> {
    let dt = 1e-3;
    let cfg = MesoConfig {
        final_time: dt * steps as f64,
        dt_max: dt,
        ..MesoConfig::default()
    };
    let theta = 1.3;
    let rho_minus = table.plus(Coefficient::R) / table.minus(Coefficient::R);
    let layered = |x: f64| if (8.0 * x).fract() < 0.5 { 1.0 } else { 0.0 };
    let (grid, s0) = init_lagrangian(
        &MesoSampler {
            c0: &layered,
            rho0: &|x| layered(x) + (1.0 - layered(x)) * rho_minus,
            u0: &|_| 0.0,
            theta0: &|_| theta,
        },
        64,
    )?;
    let e = run(&grid, &s0, &cfg, table)?.last().state.clone();
    let meso = [
        max_diff(&e.v, &s0.v),
        max_diff(&e.theta, &s0.theta),
        max_diff(&e.u, &s0.u),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let (grid, s0) = init_macro(
        &MacroSampler {
            alpha0: &|x| 0.5 + 0.3 * (2.0 * std::f64::consts::PI * x).sin(),
            rho0_plus: &|_| 1.0,
            rho0_minus: &|_| rho_minus,
            u0: &|_| 0.0,
            theta0: &|_| theta,
        },
        64,
    )?;
    let e = run_macro(&grid, &s0, &cfg, table)?.last().state.clone();
    let mac = [
        max_diff(&e.alpha_plus, &s0.alpha_plus),
        max_diff(&e.v, &s0.v),
        max_diff(&e.theta, &s0.theta),
        max_diff(&e.u, &s0.u),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok((meso, mac))
}

/// Largest difference between a macro run with identical phases and the
/// single-fluid meso run from the same data.
pub fn identical_phase_reduction(spec: &MaterialSpec) -> Result<f64> {
    let table = MaterialTable::single_fluid(spec.mu_plus, spec.cv_plus, spec.gamma_plus, spec.kappa_plus)?;
    let tau = 2.0 * std::f64::consts::PI;
    let rho = |x: f64| 1.0 + 0.3 * (tau * x).sin();
    let u0 = |x: f64| 0.2 * (tau * x).cos();
    let th0 = |x: f64| 1.0 + 0.1 * (2.0 * tau * x).sin();
    let alpha = |x: f64| 0.5 + 0.4 * (tau * x).cos();
    let (gm, sm) = init_macro(
        &MacroSampler {
            alpha0: &alpha,
            rho0_plus: &rho,
            rho0_minus: &rho,
            u0: &u0,
            theta0: &th0,
        },
        128,
    )?;
    let (gl, sl) = init_lagrangian(
        &MesoSampler {
            c0: &alpha,
            rho0: &rho,
            u0: &u0,
            theta0: &th0,
        },
        128,
    )?;
    let cfg = MesoConfig {
        final_time: 0.2,
        dt_max: 5e-4,
        ..MesoConfig::default()
    }
    .with_uniform_snapshots(4);
    let a = run_macro(&gm, &sm, &cfg, &table)?;
    let b = run(&gl, &sl, &cfg, &table)?;
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::FrameMismatch("snapshot counts differ".into()));
    }
    Ok(a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            [
                max_diff(&x.state.u, &y.state.u),
                max_diff(&x.state.v, &y.state.v),
                max_diff(&x.state.theta, &y.state.theta),
                max_diff(&x.derived.sigma, &y.derived.sigma),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max))
}

/// Worst `|rhs+ + rhs-| / max(1, |rhs+|, |rhs-|)` over random consistent states.
pub fn alpha_cancellation(seed: u64, samples: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let table = MaterialTable::new(MaterialSpec {
            mu_plus: rng.gen_range(0.1..10.0),
            mu_minus: rng.gen_range(0.1..10.0),
            cv_plus: rng.gen_range(0.5..3.0),
            cv_minus: rng.gen_range(0.5..3.0),
            gamma_plus: rng.gen_range(1.05..2.0),
            gamma_minus: rng.gen_range(1.05..2.0),
            kappa_plus: rng.gen_range(0.1..5.0),
            kappa_minus: rng.gen_range(0.1..5.0),
        })?;
        let alpha = rng.gen_range(0.0..=1.0);
        let (rp, rm) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let theta = rng.gen_range(0.1..5.0);
        let dxu = rng.gen_range(-5.0..5.0);
        let eff = table.effective(alpha, rp, rm, theta)?;
        let sigma = eff.mu_eff * dxu - eff.p_eff;
        let a = alpha_rhs(alpha, rp, theta, sigma, dxu, &table);
        let b = alpha_rhs_minus(1.0 - alpha, rm, theta, sigma, dxu, &table);
        worst = worst.max((a + b).abs() / a.abs().max(b.abs()).max(1.0));
    }
    Ok(worst)
}

/// Outcome of the `verify` suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub spatial: Vec<FieldOrder>,
    pub temporal: Vec<FieldOrder>,
    pub uniform_state: Vec<FieldOrder>,
    pub equilibrium_meso: f64,
    pub equilibrium_macro: f64,
    pub reduction: f64,
    pub cancellation: f64,
    pub pass: bool,
}

pub const SPATIAL_ORDER: f64 = 1.5;
pub const TEMPORAL_ORDER: f64 = 0.8;

/// Scheme verification and the property checks.
pub fn verify(config: &SweepConfig) -> Result<VerifyReport> {
    let table = config.table()?;
    let problem = SmoothProblem::AcousticPulse;
    let spatial = self_convergence(problem, &[256, 512, 1024], 0.25, 2e-4, &table)?;
    let temporal = temporal_convergence(problem, 256, 0.25, &[1e-3, 5e-4, 2.5e-4], &table)?;
    let uniform_state = self_convergence(SmoothProblem::Uniform, &[32, 64, 128], 0.25, 1e-3, &table)?;
    let (equilibrium_meso, equilibrium_macro) = equilibrium_drift(&table, 1000)?;
    let reduction = identical_phase_reduction(&config.material)?;
    let cancellation = alpha_cancellation(config.seed, 10_000)?;
    let pass = spatial.iter().all(|f| f.at_least(SPATIAL_ORDER))
        && temporal.iter().all(|f| f.at_least(TEMPORAL_ORDER))
        && uniform_state.iter().all(|f| f.order.is_none())
        && equilibrium_meso <= 1e-10
        && equilibrium_macro <= 1e-10
        && reduction <= 1e-8
        && cancellation <= 1e-12;
    Ok(VerifyReport {
        spatial,
        temporal,
        uniform_state,
        equilibrium_meso,
        equilibrium_macro,
        reduction,
        cancellation,
        pass,
    })
}
