//! Simulation of the one-dimensional heat-conducting two-fluid Navier-Stokes
//! system with layered coefficients and of its homogenized two-phase limit.

pub mod calculus;
pub mod diagnostics;
pub mod error;
pub mod eulerian;
pub mod grid;
pub mod harness;
pub mod io;
pub mod macroscopic;
pub mod material;
pub mod meso;
mod scheme;
pub mod tridiag;
pub mod young;

pub use error::{Error, Result};
pub use eulerian::{CellGeometry, EulerianSnapshot};
pub use diagnostics::{BoundCertificates, CertificateChecks, Frame, HoffReport, RunDiagnostics, StepMonitor};
pub use grid::PeriodicMassGrid;
pub use harness::{ConvergenceRow, Profile, Profiles, SolverSettings, SweepConfig, SweepOutput, VerifyReport};
pub use macroscopic::{MacroLagState, MacroSnapshot, MacroTrajectory};
pub use material::{Coefficient, EffectiveCoefficients, MaterialSpec, MaterialTable};
pub use meso::{MesoConfig, MesoLagState, MesoSnapshot, MesoTrajectory};
pub use young::{Beta, DensityClosure, MeasureEvolver, MomentFamily, TwoDiracMeasure};
